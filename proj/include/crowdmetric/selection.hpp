#pragma once

// Selection matrices: each row compares two items, +1 at p and -1 at q.
// Indices are 0-based in memory and 1-based in text files.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace crowdmetric {

using Rng = std::mt19937_64;

struct Pair {
  std::size_t p = 0;
  std::size_t q = 0;
  friend bool operator==(const Pair&, const Pair&) = default;
};

class SelectionMatrix {
 public:
  SelectionMatrix() = default;
  SelectionMatrix(std::size_t n, std::vector<Pair> rows);

  std::size_t n() const { return n_; }
  std::size_t m() const { return rows_.size(); }
  const std::vector<Pair>& rows() const { return rows_; }
  const Pair& row(std::size_t i) const { return rows_.at(i); }

  void append(Pair r);
  void append(const SelectionMatrix& other);
  SelectionMatrix subset(const std::vector<std::size_t>& idx) const;

  friend bool operator==(const SelectionMatrix&, const SelectionMatrix&) = default;

 private:
  std::size_t n_ = 2;
  std::vector<Pair> rows_;
};

// Per-user selection matrices. When split[k] is set, the first split[k] rows
// of users[k] form S_k^(1) and the remaining rows form S_k^(2).
struct UserScheme {
  std::size_t n = 0;
  std::vector<SelectionMatrix> users;
  std::vector<std::optional<std::size_t>> split;

  std::size_t K() const { return users.size(); }
  std::size_t total_rows() const;
  bool has_partition() const;
  SelectionMatrix first_block(std::size_t k) const;
  SelectionMatrix second_block(std::size_t k) const;
  // S^(2): all second blocks stacked in user order.
  SelectionMatrix stacked_second() const;
  SelectionMatrix stacked() const;
  void validate() const;
};

Eigen::MatrixXd to_dense(const SelectionMatrix& s);
SelectionMatrix stack(const SelectionMatrix& a, const SelectionMatrix& b);

// Exact rank by fraction-free elimination.
std::size_t exact_rank(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& a);
std::size_t selection_rank(const SelectionMatrix& s);

bool is_incremental(const SelectionMatrix& s);
// perm[i] is the original index of the row placed at position i.
std::optional<std::vector<std::size_t>> find_incremental_permutation(const SelectionMatrix& s);

SelectionMatrix complete_selection(std::size_t n);
SelectionMatrix sample_uniform_pairs(std::size_t n, std::size_t m, Rng& rng);

struct RankSampling {
  SelectionMatrix appended;
  std::size_t count = 0;
};
RankSampling sample_until_rank(const SelectionMatrix& s0, std::size_t target_r, Rng& rng);

struct RandRankBound {
  double expected = 0.0;
  double tail = 0.0;
};
RandRankBound randrank_bound(std::size_t r0, std::size_t r, std::size_t n, double delta);

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};
Rational newspan_probability(const SelectionMatrix& s);

UserScheme minimal_multiuser_construction(std::size_t d, std::size_t K);
UserScheme fixture_counterexample_necessary();
UserScheme fixture_counterexample_sufficiency();

void write_selection(std::ostream& os, const SelectionMatrix& s);
SelectionMatrix read_selection(std::istream& is);
void write_scheme(std::ostream& os, const UserScheme& scheme);
UserScheme read_scheme(std::istream& is);

}  // namespace crowdmetric
