#pragma once

// Prediction and recovery metrics, exact population risks and the
// closed-form moment identities used by the recovery analysis.

#include "crowdmetric/estimation.hpp"
#include "crowdmetric/linalg.hpp"
#include "crowdmetric/model.hpp"

#include <optional>
#include <utility>

namespace crowdmetric {

// sign(delta_hat) with ties predicted as +1.
double test_accuracy(const SymMatrix& M_hat, const MatrixXd& V_hat, const ResponseDataset& test, const MatrixXd& X);

// nullopt marks a ratio whose denominator is zero.
struct MetricsReport {
  std::optional<double> test_accuracy;
  std::optional<double> rel_metric_error;
  std::optional<double> rel_ideal_point_error;
  std::optional<double> rel_pseudo_error;
};

MetricsReport relative_errors(const SymMatrix& M_hat, const MatrixXd& V_hat, const MatrixXd& U_hat,
                              const CrowdModel& model);

double kl_bernoulli(double p, double q);

// Expected loss over every pair i < j, every user and both labels.
double true_risk_exact(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model, const LinkFunction& link,
                       const Loss& loss);
// Mean over pairs and users of KL(f(-delta*) || f(-delta)).
double excess_risk_kl(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model, const LinkFunction& link);

// min over |x| <= gamma of f'(x), which is f'(gamma) for both links.
double c_f(const LinkFunction& link, double gamma);

// max |delta| over every pair and user, for the given parameters.
double max_abs_delta(const SymMatrix& M, const MatrixXd& V, const MatrixXd& X);

struct RecoveryBoundReport {
  double sigma_min_J = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double excess_risk = 0.0;
  double gamma = 0.0;
  double C_f = 0.0;
  double inequality_slack = 0.0;  // rhs - lhs
};

// gamma defaults to the largest |delta| of either the truth or the estimate.
RecoveryBoundReport recovery_bound_report(const SymMatrix& M_hat, const MatrixXd& V_hat, const CrowdModel& model,
                                          const LinkFunction& link, std::optional<double> gamma = std::nullopt);

// sigma_{D+d}(J [X_kron^T X^T]); zero when n <= D + d.
double sigma_min_centered(const MatrixXd& X);

struct SecondMoments {
  MatrixXd E_ZZt;  // d x d
  MatrixXd E_ZtZ;  // (d + K) x (d + K)
};
// Z = [x_i x_i^T - x_j x_j^T | (x_i - x_j) e_k^T] for a uniform pair and user.
SecondMoments expected_second_moments(const MatrixXd& X, std::size_t K);

}  // namespace crowdmetric
