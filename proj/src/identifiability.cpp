#include "crowdmetric/identifiability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;

void check_dims(const MatrixXd& X, const UserScheme& scheme) {
  scheme.validate();
  if (X.rows() < 1) throw std::invalid_argument("item matrix needs d >= 1");
  if (static_cast<std::size_t>(X.cols()) != scheme.n) {
    throw std::invalid_argument("item count does not match the scheme's n");
  }
}

MatrixXd select_rows(const SelectionMatrix& s, const MatrixXd& F) {
  MatrixXd out(static_cast<Index>(s.m()), F.cols());
  for (std::size_t i = 0; i < s.m(); ++i) {
    const auto& r = s.row(i);
    out.row(static_cast<Index>(i)) = F.row(static_cast<Index>(r.p)) - F.row(static_cast<Index>(r.q));
  }
  return out;
}

std::size_t rank_or_zero(const MatrixXd& a, double tol) { return a.size() == 0 ? 0 : numeric_rank(a, tol); }

std::size_t partition_dim(const UserScheme& scheme) {
  if (!scheme.has_partition()) throw std::invalid_argument("scheme has no partition into first and second blocks");
  const std::size_t d = *scheme.split.front();
  for (const auto& s : scheme.split) {
    if (*s != d) throw std::invalid_argument("all users must have the same first-block size");
  }
  if (d == 0) throw std::invalid_argument("first-block size must be >= 1");
  return d;
}

// Searches for an order of the pooled second-block rows such that each row
// brings an item unseen by every user's first block and the rows before it.
// Failed subsets are memoized, which makes the search exhaustive.
class OrderSearch {
 public:
  OrderSearch(std::vector<std::vector<bool>> base, std::vector<Pair> rows)
      : base_(std::move(base)), rows_(std::move(rows)) {}

  bool run() {
    std::vector<std::vector<bool>> seen = base_;
    return dfs(0, seen);
  }

 private:
  bool dfs(std::uint64_t used, std::vector<std::vector<bool>>& seen) {
    const std::size_t m = rows_.size();
    if (used == full_mask()) return true;
    if (failed_.count(used)) return false;
    for (std::size_t i = 0; i < m; ++i) {
      if (used & (std::uint64_t{1} << i)) continue;
      const Pair& r = rows_[i];
      bool ok = true;
      for (const auto& s : seen) {
        if (s[r.p] && s[r.q]) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      std::vector<std::pair<bool, bool>> saved;
      saved.reserve(seen.size());
      for (auto& s : seen) {
        saved.emplace_back(s[r.p], s[r.q]);
        s[r.p] = true;
        s[r.q] = true;
      }
      const bool found = dfs(used | (std::uint64_t{1} << i), seen);
      for (std::size_t k = 0; k < seen.size(); ++k) {
        seen[k][r.p] = saved[k].first;
        seen[k][r.q] = saved[k].second;
      }
      if (found) return true;
    }
    failed_.insert(used);
    return false;
  }

  std::uint64_t full_mask() const {
    return rows_.size() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << rows_.size()) - 1;
  }

  std::vector<std::vector<bool>> base_;
  std::vector<Pair> rows_;
  std::unordered_set<std::uint64_t> failed_;
};

}  // namespace

MatrixXd item_features(const MatrixXd& X) {
  const Index d = X.rows();
  const Index n = X.cols();
  const auto D = static_cast<Index>(half_dim(static_cast<std::size_t>(d)));
  MatrixXd F(n, D + d);
  for (Index i = 0; i < n; ++i) {
    const VectorXd x = X.col(i);
    F.row(i).head(D) = kron_sym(x).values.transpose();
    F.row(i).tail(d) = x.transpose();
  }
  return F;
}

GammaSystem assemble_gamma(const MatrixXd& X, const UserScheme& scheme) {
  check_dims(X, scheme);
  const Index d = X.rows();
  const auto D = static_cast<Index>(half_dim(static_cast<std::size_t>(d)));
  const auto K = static_cast<Index>(scheme.K());
  const MatrixXd F = item_features(X);
  MatrixXd gamma = MatrixXd::Zero(static_cast<Index>(scheme.total_rows()), D + d * K);
  Index row = 0;
  for (Index k = 0; k < K; ++k) {
    const MatrixXd block = select_rows(scheme.users[static_cast<std::size_t>(k)], F);
    gamma.block(row, 0, block.rows(), D) = block.leftCols(D);
    gamma.block(row, D + k * d, block.rows(), d) = block.rightCols(d);
    row += block.rows();
  }
  return GammaSystem{std::move(gamma), X, scheme};
}

bool is_identifiable(const MatrixXd& X, const UserScheme& scheme, double tol) {
  const GammaSystem g = assemble_gamma(X, scheme);
  if (g.gamma.rows() < g.gamma.cols()) return false;
  return numeric_rank(g.gamma, tol) == g.unknowns();
}

NecessaryReport check_necessary(const MatrixXd& X, const UserScheme& scheme, double tol) {
  check_dims(X, scheme);
  NecessaryReport r;
  r.d = static_cast<std::size_t>(X.rows());
  r.D = half_dim(r.d);
  r.K = scheme.K();
  r.n = scheme.n;
  const MatrixXd F = item_features(X);
  const MatrixXd Xt = X.transpose();

  r.total_rows = scheme.total_rows();
  r.rows_ok = r.total_rows >= r.D + r.d * r.K;

  r.cond_a = true;
  for (const auto& s : scheme.users) {
    const std::size_t sel = selection_rank(s);
    const std::size_t item = rank_or_zero(select_rows(s, Xt), tol);
    const std::size_t feat = rank_or_zero(select_rows(s, F), tol);
    r.selection_rank_k.push_back(sel);
    r.item_rank_k.push_back(item);
    r.feature_rank_k.push_back(feat);
    r.sum_selection_rank += sel;
    r.sum_feature_rank += feat;
    if (item != r.d || sel < r.d) r.cond_a = false;
  }
  const std::size_t unknowns = r.D + r.d * r.K;
  r.cond_b = r.sum_feature_rank >= unknowns && r.sum_selection_rank >= unknowns;

  const SelectionMatrix all = scheme.stacked();
  r.stacked_selection_rank = selection_rank(all);
  r.stacked_feature_rank = rank_or_zero(select_rows(all, F), tol);
  r.enough_items = r.n >= r.D + r.d + 1;
  r.cond_c = r.stacked_feature_rank == r.D + r.d && r.stacked_selection_rank >= r.D + r.d && r.enough_items;
  return r;
}

bool check_sufficient_incremental(const UserScheme& scheme) {
  scheme.validate();
  const std::size_t d = partition_dim(scheme);
  const std::size_t D = half_dim(d);
  const std::size_t K = scheme.K();
  if (scheme.total_rows() != D + d * K) return false;
  if (scheme.n < D + d + 1) return false;
  for (const auto& s : scheme.users) {
    if (s.m() <= d) return false;
  }

  // a rank-d first block always has an incremental order
  std::vector<std::vector<bool>> base;
  for (std::size_t k = 0; k < K; ++k) {
    const SelectionMatrix first = scheme.first_block(k);
    if (selection_rank(first) != d) return false;
    std::vector<bool> seen(scheme.n, false);
    for (const auto& r : first.rows()) {
      seen[r.p] = true;
      seen[r.q] = true;
    }
    base.push_back(std::move(seen));
  }
  const SelectionMatrix second = scheme.stacked_second();
  if (second.m() > 64) throw std::invalid_argument("second block too large for the order search (max 64 rows)");
  return OrderSearch(std::move(base), second.rows()).run();
}

bool check_conjectured(const UserScheme& scheme) {
  scheme.validate();
  const std::size_t d = partition_dim(scheme);
  const SelectionMatrix second = scheme.stacked_second();
  for (std::size_t k = 0; k < scheme.K(); ++k) {
    const SelectionMatrix first = scheme.first_block(k);
    if (selection_rank(first) != d) return false;
    const SelectionMatrix both = stack(first, second);
    if (selection_rank(both) != both.m()) return false;
  }
  return true;
}

SingleUserThresholds single_user_thresholds(std::size_t d, double delta) {
  if (d < 1) throw std::invalid_argument("single_user_thresholds: d must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("single_user_thresholds: delta must lie in (0,1)");
  const double phi = std::numbers::phi;
  const auto Dd = static_cast<double>(half_dim(d) + d);
  SingleUserThresholds t;
  t.n_min = static_cast<std::size_t>(std::ceil(phi * Dd)) + 1;
  t.m_min = static_cast<std::size_t>(std::ceil(phi * (1.0 + std::log(1.0 / delta)) * (Dd - 1.0))) + 1;
  return t;
}

}  // namespace crowdmetric
