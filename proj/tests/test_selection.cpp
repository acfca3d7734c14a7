#include <doctest.h>

#include "crowdmetric/linalg.hpp"
#include "crowdmetric/selection.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace crowdmetric;

namespace {

// rank of a selection matrix = n - (connected components of its graph)
std::size_t union_find_rank(const SelectionMatrix& s) {
  std::vector<std::size_t> parent(s.n());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::size_t r = 0;
  for (const auto& row : s.rows()) {
    auto a = find(row.p), b = find(row.q);
    if (a != b) {
      parent[a] = b;
      ++r;
    }
  }
  return r;
}

bool any_incremental_order(const SelectionMatrix& s) {
  std::vector<std::size_t> idx(s.m());
  std::iota(idx.begin(), idx.end(), 0);
  do {
    if (is_incremental(s.subset(idx))) return true;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return false;
}

SelectionMatrix sel(std::size_t n, std::vector<std::pair<int, int>> one_based) {
  std::vector<Pair> rows;
  for (auto [p, q] : one_based) rows.push_back({static_cast<std::size_t>(p - 1), static_cast<std::size_t>(q - 1)});
  return SelectionMatrix(n, rows);
}

// every matrix with m rows drawn from the ordered pairs of n items
void for_each_selection(std::size_t n, std::size_t m, const std::function<void(const SelectionMatrix&)>& fn) {
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q)
      if (p != q) pairs.push_back({p, q});
  std::vector<std::size_t> pick(m, 0);
  while (true) {
    std::vector<Pair> rows;
    for (auto i : pick) rows.push_back(pairs[i]);
    fn(SelectionMatrix(n, rows));
    std::size_t k = 0;
    while (k < m && ++pick[k] == pairs.size()) pick[k++] = 0;
    if (k == m) break;
  }
}

}  // namespace

TEST_CASE("dense form and validation") {
  CHECK(to_dense(sel(2, {{1, 2}})) == (MatrixXd(1, 2) << 1, -1).finished());
  CHECK(to_dense(sel(2, {{2, 1}})) == (MatrixXd(1, 2) << -1, 1).finished());
  CHECK_THROWS_AS(sel(3, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(sel(3, {{1, 4}}), std::invalid_argument);
  CHECK_THROWS_AS(SelectionMatrix(1, {}), std::invalid_argument);
}

TEST_CASE("incremental property") {
  CHECK(is_incremental(sel(5, {{1, 2}, {2, 3}, {3, 4}, {4, 5}})));
  CHECK_FALSE(is_incremental(sel(3, {{1, 2}, {1, 2}})));
  CHECK_FALSE(is_incremental(sel(3, {{1, 2}, {2, 3}, {1, 3}})));
  CHECK_FALSE(find_incremental_permutation(sel(3, {{1, 2}, {2, 3}, {1, 3}})));
  auto chain = sel(5, {{1, 2}, {2, 3}, {3, 4}});
  auto perm = find_incremental_permutation(chain);
  REQUIRE(perm);
  CHECK(is_incremental(chain.subset(*perm)));
}

TEST_CASE("rank agrees with union-find and floating rank; TFAE exhaustive") {
  std::size_t checked = 0, discrepancies = 0;
  for (std::size_t n = 2; n <= 5; ++n) {
    for (std::size_t m = 1; m <= 4; ++m) {
      for_each_selection(n, m, [&](const SelectionMatrix& s) {
        const std::size_t r = selection_rank(s);
        CHECK(r == union_find_rank(s));
        CHECK(r <= std::min(m, n - 1));
        const bool full = r == m;
        const auto perm = find_incremental_permutation(s);
        if (full != perm.has_value()) ++discrepancies;
        if (perm) {
          CHECK(is_incremental(s.subset(*perm)));
        }
        if (m <= 3 && n <= 4) {
          CHECK(full == any_incremental_order(s));
          CHECK(r == numeric_rank(to_dense(s)));
        }
        std::set<std::size_t> cols;
        for (const auto& row : s.rows()) cols.insert({row.p, row.q});
        CHECK(cols.size() >= r + 1);
        ++checked;
      });
    }
  }
  CHECK(discrepancies == 0);
  CHECK(checked > 10000);
}

TEST_CASE("exact rank on integer matrices") {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> a(3, 3);
  a << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  CHECK(exact_rank(a) == 2);
  a << 2, 0, 0, 0, 3, 0, 0, 0, 5;
  CHECK(exact_rank(a) == 3);
}

TEST_CASE("complete selection and centering identity") {
  CHECK(complete_selection(2).m() == 1);
  CHECK(complete_selection(3).m() == 3);
  CHECK(complete_selection(6).m() == 15);
  for (std::size_t n = 2; n <= 50; ++n) {
    MatrixXd s = to_dense(complete_selection(n));
    MatrixXd j = MatrixXd::Identity(n, n) * n - MatrixXd::Ones(n, n);
    CHECK(s.transpose() * s == j);
  }
}

TEST_CASE("uniform pair sampling") {
  Rng a(7), b(7);
  CHECK(sample_uniform_pairs(5, 0, a).m() == 0);
  CHECK(sample_uniform_pairs(5, 20, a) == sample_uniform_pairs(5, 20, b));
  Rng c(1);
  auto s = sample_uniform_pairs(4, 12000, c);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  for (const auto& r : s.rows()) ++counts[{r.p, r.q}];
  CHECK(counts.size() == 12);
  for (const auto& [k, v] : counts) CHECK(std::abs(v - 1000) < 150);
}

TEST_CASE("sample_until_rank") {
  Rng rng(3);
  auto s0 = sel(6, {{1, 2}});
  CHECK(sample_until_rank(s0, 1, rng).count == 0);
  auto res = sample_until_rank(s0, 4, rng);
  CHECK(selection_rank(stack(s0, res.appended)) == 4);
  CHECK(res.appended.m() == res.count);
  CHECK_THROWS_AS(sample_until_rank(s0, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_until_rank(s0, 6, rng), std::invalid_argument);
}

TEST_CASE("randrank bound") {
  CHECK(randrank_bound(1, 3, 6, 0.1).expected == doctest::Approx(30.0 / 28 + 30.0 / 24).epsilon(1e-12));
  CHECK(randrank_bound(3, 3, 6, 0.1).expected == 0.0);
  CHECK_THROWS_AS(randrank_bound(1, 3, 6, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(randrank_bound(4, 3, 6, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(randrank_bound(1, 7, 6, 0.5), std::invalid_argument);
}

TEST_CASE("newspan probability") {
  CHECK(newspan_probability(sel(3, {{1, 2}})) == Rational{1, 3});
  CHECK(newspan_probability(complete_selection(3)).value() == 1.0);
  CHECK(newspan_probability(SelectionMatrix(4, {})).num == 0);

  // Oracle: floating rank test over all unordered pairs.
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::size_t n = 3 + t % 4;
    auto s = sample_uniform_pairs(n, 1 + t % 3, rng);
    MatrixXd d = to_dense(s);
    std::size_t r = numeric_rank(d), inside = 0, total = 0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        MatrixXd aug(d.rows() + 1, n);
        aug << d, to_dense(SelectionMatrix(n, {{p, q}}));
        inside += numeric_rank(aug) == r;
        ++total;
      }
    }
    CHECK(newspan_probability(s).value() == doctest::Approx(static_cast<double>(inside) / total));
  }
}

TEST_CASE("constructions and fixtures") {
  auto m23 = minimal_multiuser_construction(2, 3);
  CHECK(m23.n == 6);
  for (const auto& u : m23.users) CHECK(u.m() == 3);
  auto m21 = minimal_multiuser_construction(2, 1);
  CHECK(m21.n == 6);
  CHECK(m21.users[0].m() == 5);
  auto m32 = minimal_multiuser_construction(3, 2);
  CHECK(m32.n == 10);
  for (const auto& u : m32.users) CHECK(u.m() == 6);
  CHECK_THROWS_AS(minimal_multiuser_construction(2, 2), std::invalid_argument);

  auto nec = fixture_counterexample_necessary();
  nec.validate();
  CHECK(nec.K() == 3);
  for (const auto& u : nec.users) CHECK(selection_rank(u) == 3);
  CHECK(selection_rank(nec.stacked()) == 5);

  auto suf = fixture_counterexample_sufficiency();
  suf.validate();
  CHECK(suf.n == 6);
  CHECK(suf.users[0].m() == 4);
  CHECK(suf.users[1].m() == 3);
}

TEST_CASE("text round trip") {
  auto s = sel(5, {{1, 2}, {4, 3}});
  std::stringstream ss;
  write_selection(ss, s);
  CHECK(ss.str().rfind("selection n=5", 0) == 0);
  CHECK(read_selection(ss) == s);

  for (const auto& scheme : {minimal_multiuser_construction(2, 3), fixture_counterexample_necessary()}) {
    std::stringstream st;
    write_scheme(st, scheme);
    auto back = read_scheme(st);
    CHECK(back.n == scheme.n);
    CHECK(back.users == scheme.users);
    CHECK(back.split == scheme.split);
  }
  std::stringstream bad("selection n=3\n1 1\n");
  CHECK_THROWS(read_selection(bad));
  std::stringstream junk("nonsense\n");
  CHECK_THROWS(read_selection(junk));
}
