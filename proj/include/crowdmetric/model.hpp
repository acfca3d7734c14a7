#pragma once

// Ground-truth crowd models, response simulation and the item/response CSV
// formats.

#include "crowdmetric/linalg.hpp"
#include "crowdmetric/selection.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace crowdmetric {

struct CrowdModel {
  MatrixXd X;       // d x n items
  SymMatrix M_star;
  MatrixXd U_star;  // d x K ideal points
  MatrixXd V_star;  // d x K, column k = -2 M u_k

  std::size_t d() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t K() const { return static_cast<std::size_t>(U_star.cols()); }
};

CrowdModel make_model(MatrixXd X, SymMatrix M, MatrixXd U);

class LinkFunction {
 public:
  enum class Kind { logistic, probit };

  static LinkFunction logistic(double beta);
  static LinkFunction probit();

  Kind kind() const { return kind_; }
  double beta() const { return beta_; }

  double f(double x) const;
  double derivative(double x) const;
  // log f(x), accurate far into the lower tail.
  double log_f(double x) const;
  // d/dx of -log f(x)
  double neg_log_derivative(double x) const;

 private:
  LinkFunction(Kind k, double beta) : kind_(k), beta_(beta) {}
  Kind kind_ = Kind::logistic;
  double beta_ = 1.0;
};

struct Record {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  int y = 1;
  friend bool operator==(const Record&, const Record&) = default;
};

struct ResponseDataset {
  std::size_t n = 0;
  std::size_t K = 0;
  std::size_t d = 0;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  void validate() const;
  std::vector<std::size_t> counts_per_user() const;
  // The subset of records belonging to user k, keeping their order.
  ResponseDataset for_user(std::size_t k) const;
};

MatrixXd gen_items_gaussian(std::size_t n, std::size_t d, Rng& rng);
MatrixXd gen_users_gaussian(std::size_t K, std::size_t d, Rng& rng);

enum class MetricMode { low_rank, full_rank };
SymMatrix gen_metric(std::size_t d, std::size_t r, Rng& rng, MetricMode mode);

double delta(const SymMatrix& M, const VectorXd& v, const VectorXd& xi, const VectorXd& xj);
// Same quantity from the ideal point: |xi - u|_M^2 - |xj - u|_M^2.
double delta_ideal(const SymMatrix& M, const VectorXd& u, const VectorXd& xi, const VectorXd& xj);

// P(y = -1) = f(-delta).
double response_prob(const LinkFunction& link, double delta_value);

// Uniform pair (presented with i < j), uniform user, label from the link.
ResponseDataset sample_dataset(const CrowdModel& model, const LinkFunction& link, std::size_t size, Rng& rng);
// `count` records for every user, grouped by user.
ResponseDataset sample_user_pools(const CrowdModel& model, const LinkFunction& link, std::size_t count, Rng& rng);

// Shuffles each user's records and puts the first train_per_user of them in
// the training set. Both outputs are grouped by user.
std::pair<ResponseDataset, ResponseDataset> split_blocked_by_user(const ResponseDataset& pools,
                                                                  std::size_t train_per_user, Rng& rng);
// First `count` records of every user, in their current order.
ResponseDataset take_per_user(const ResponseDataset& data, std::size_t count);

// Stable 64-bit stream derivation for (master, trial, tag).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial, std::uint64_t tag);
std::uint64_t hash_tag(const std::string& s);

MatrixXd read_items_csv(std::istream& is);
void write_items_csv(std::ostream& os, const MatrixXd& X);
ResponseDataset read_responses_csv(std::istream& is, std::size_t n, std::size_t d, std::size_t K = 0);
void write_responses_csv(std::ostream& os, const ResponseDataset& data);

MatrixXd center_items(const MatrixXd& X);
MatrixXd maxnorm_items(const MatrixXd& X);

}  // namespace crowdmetric
