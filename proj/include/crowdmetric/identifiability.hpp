#pragma once

// Linear measurement system for (M, v_1..v_K) and the rank conditions that
// decide whether it can be inverted.

#include "crowdmetric/linalg.hpp"
#include "crowdmetric/selection.hpp"

#include <cstddef>
#include <vector>

namespace crowdmetric {

// n x (D + d) matrix whose row i is [kron_sym(x_i)^T, x_i^T].
MatrixXd item_features(const MatrixXd& X);

struct GammaSystem {
  MatrixXd gamma;  // (sum m_k) x (D + dK), columns [nu(M) | v_1 | ... | v_K]
  MatrixXd X;
  UserScheme scheme;

  std::size_t d() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t unknowns() const { return static_cast<std::size_t>(gamma.cols()); }
};

GammaSystem assemble_gamma(const MatrixXd& X, const UserScheme& scheme);
bool is_identifiable(const MatrixXd& X, const UserScheme& scheme, double tol = kRankTol);

struct NecessaryReport {
  std::size_t d = 0;
  std::size_t D = 0;
  std::size_t K = 0;
  std::size_t n = 0;

  std::size_t total_rows = 0;
  bool rows_ok = false;  // sum m_k >= D + dK

  // (a) every user sees d independent item differences
  std::vector<std::size_t> selection_rank_k;
  std::vector<std::size_t> item_rank_k;  // rank(S_k X^T)
  bool cond_a = false;

  // (b) per-user ranks add up to the unknown count
  std::vector<std::size_t> feature_rank_k;  // rank(S_k [X_kron^T X^T])
  std::size_t sum_selection_rank = 0;
  std::size_t sum_feature_rank = 0;
  bool cond_b = false;

  // (c) the pooled system identifies a single metric and point
  std::size_t stacked_selection_rank = 0;
  std::size_t stacked_feature_rank = 0;
  bool enough_items = false;  // n >= D + d + 1
  bool cond_c = false;

  bool all() const { return rows_ok && cond_a && cond_b && cond_c; }
};

NecessaryReport check_necessary(const MatrixXd& X, const UserScheme& scheme, double tol = kRankTol);

// Requires every user to carry a partition with the same first-block size d.
bool check_sufficient_incremental(const UserScheme& scheme);
bool check_conjectured(const UserScheme& scheme);

struct SingleUserThresholds {
  std::size_t n_min = 0;
  std::size_t m_min = 0;
};
SingleUserThresholds single_user_thresholds(std::size_t d, double delta);

}  // namespace crowdmetric
