#pragma once

// Exact recovery from unquantized measurements and constrained empirical
// risk minimization from one-bit responses.

#include "crowdmetric/identifiability.hpp"
#include "crowdmetric/linalg.hpp"
#include "crowdmetric/model.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace crowdmetric {

class Loss {
 public:
  enum class Kind { hinge, logistic, neg_log_likelihood };

  static Loss hinge();
  static Loss logistic(double beta);
  static Loss neg_log_likelihood(const LinkFunction& link);

  Kind kind() const { return kind_; }
  double beta() const { return beta_; }
  const std::optional<LinkFunction>& link() const { return link_; }
  std::string name() const;

  double value(double x) const;
  // Derivative in x; at the hinge kink this is 0.
  double slope(double x) const;

 private:
  Loss(Kind k, double beta, std::optional<LinkFunction> link) : kind_(k), beta_(beta), link_(std::move(link)) {}
  Kind kind_;
  double beta_ = 1.0;
  std::optional<LinkFunction> link_;
};

struct ConstraintScheme {
  enum class Kind { frobenius_metric, nuclear_full, nuclear_metric, nuclear_split, psd_only, fixed_identity };

  Kind kind = Kind::psd_only;
  double lambda_F = 0.0;     // frobenius_metric
  double lambda_v = 0.0;     // per-user l2 radius: frobenius_metric, nuclear_metric, fixed_identity
  double lambda_star = 0.0;  // nuclear_full on [M | V]; nuclear_metric on M
  double lambda_M = 0.0;     // nuclear_split
  double lambda_V = 0.0;     // nuclear_split

  static ConstraintScheme frobenius_metric(double lambda_F, double lambda_v);
  static ConstraintScheme nuclear_full(double lambda_star);
  static ConstraintScheme nuclear_metric(double lambda_star, double lambda_v);
  static ConstraintScheme nuclear_split(double lambda_M, double lambda_V);
  static ConstraintScheme psd_only();
  static ConstraintScheme fixed_identity(double lambda_v);

  std::string name() const;
  void validate() const;
};

ConstraintScheme::Kind scheme_kind_from_name(const std::string& name);
std::string scheme_kind_name(ConstraintScheme::Kind kind);

struct SolverConfig {
  double step_scale = 1.0;
  std::size_t max_iters = 5000;
  // Stop once the best objective is at or below this value.
  double tol_objective = 0.0;
  // Exact projection onto the nuclear ball intersected with {M PSD} for
  // nuclear_full, by Dykstra's alternating projections.
  bool dykstra = false;
  std::size_t dykstra_iters = 100;
};

struct Residual {
  std::string name;
  double value = 0.0;  // max(0, norm / radius - 1), or -min eigenvalue for PSD
};

struct FitResult {
  SymMatrix M_hat;
  MatrixXd V_hat;
  std::vector<double> objective_trace;  // objective at each iterate, starting point first
  std::vector<double> best_trace;       // running minimum of objective_trace
  std::size_t iterations = 0;
  std::size_t best_iteration = 0;
  double objective = 0.0;  // objective at the returned point
  ConstraintScheme scheme;
  std::vector<Residual> residuals;
};

struct UnquantizedSolution {
  SymMatrix M;
  MatrixXd V;
  double residual_norm = 0.0;
};

// delta_vectors[k] holds user k's measurements in the row order of S_k.
UnquantizedSolution solve_unquantized(const MatrixXd& X, const UserScheme& scheme,
                                      const std::vector<VectorXd>& delta_vectors);
// Exact measurement vectors for a model under a scheme.
std::vector<VectorXd> unquantized_measurements(const CrowdModel& model, const UserScheme& scheme);

MatrixXd recover_ideal_points(const SymMatrix& M_hat, const MatrixXd& V_hat, double alpha);
MatrixXd recover_ideal_points(const SymMatrix& M_hat, const MatrixXd& V_hat);

double empirical_risk(const SymMatrix& M, const MatrixXd& V, const ResponseDataset& data, const MatrixXd& X,
                      const Loss& loss);

struct RiskGradient {
  VectorXd d_nu;  // w.r.t. nu(M), HalfVec order
  MatrixXd d_M;   // same gradient as a symmetric matrix in the Frobenius pairing
  MatrixXd d_V;   // d x K
};
RiskGradient risk_subgradient(const SymMatrix& M, const MatrixXd& V, const ResponseDataset& data,
                              const MatrixXd& X, const Loss& loss);

// Projects (M, V) onto the scheme's feasible set.
void project_onto_scheme(MatrixXd& M, MatrixXd& V, const ConstraintScheme& scheme, const SolverConfig& cfg);
std::vector<Residual> constraint_residuals(const SymMatrix& M, const MatrixXd& V, const ConstraintScheme& scheme);

FitResult fit_erm(const ResponseDataset& data, const MatrixXd& X, const Loss& loss, const ConstraintScheme& scheme,
                  const SolverConfig& cfg = {});

ConstraintScheme oracle_hyperparameters(const CrowdModel& model, ConstraintScheme::Kind kind);
// Per-user radius ||[M*, -2 M* u_k]||_*.
std::vector<double> oracle_single_user_radii(const CrowdModel& model);

// One nuclear_full fit per user on that user's records; users without
// records are skipped (nullopt) with a warning on stderr. Each result has
// V_hat of width 1.
std::vector<std::optional<FitResult>> fit_single_user(const ResponseDataset& data, const MatrixXd& X,
                                                      const Loss& loss, const std::vector<double>& lambda_star,
                                                      const SolverConfig& cfg = {});

}  // namespace crowdmetric
