#include "crowdmetric/evaluation.hpp"

#include "crowdmetric/identifiability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;

constexpr std::size_t kMaxEnumerationItems = 60;

void check_model_dims(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model) {
  if (M.dim() != model.d() || V.rows() != static_cast<Index>(model.d()) ||
      V.cols() != static_cast<Index>(model.K())) {
    throw std::invalid_argument("estimate dimensions do not match the model");
  }
  if (model.n() > kMaxEnumerationItems) throw std::invalid_argument("exact enumeration needs n <= 60");
}

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

// Calls fn(delta_star, delta) for every pair i < j and user k.
template <class Fn>
void for_all_pairs(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model, Fn&& fn) {
  const MatrixXd& X = model.X;
  const VectorXd q_star = (X.array() * (model.M_star.matrix() * X).array()).colwise().sum().transpose();
  const VectorXd q = (X.array() * (M.matrix() * X).array()).colwise().sum().transpose();
  const MatrixXd P_star = model.V_star.transpose() * X;
  const MatrixXd P = V.transpose() * X;
  const auto n = X.cols();
  for (Index k = 0; k < P.rows(); ++k) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        fn(q_star(i) - q_star(j) + P_star(k, i) - P_star(k, j), q(i) - q(j) + P(k, i) - P(k, j));
      }
    }
  }
}

std::size_t pair_user_count(const CrowdModel& model) { return model.K() * model.n() * (model.n() - 1) / 2; }

}  // namespace

double test_accuracy(const SymMatrix& M_hat, const MatrixXd& V_hat, const ResponseDataset& test, const MatrixXd& X) {
  if (test.empty()) throw std::invalid_argument("test_accuracy: empty test set");
  if (X.rows() != static_cast<Index>(M_hat.dim()) || V_hat.rows() != X.rows() ||
      static_cast<std::size_t>(V_hat.cols()) != test.K || static_cast<std::size_t>(X.cols()) != test.n) {
    throw std::invalid_argument("test_accuracy: dimension mismatch");
  }
  test.validate();
  const MatrixXd& M = M_hat.matrix();
  const VectorXd q = (X.array() * (M * X).array()).colwise().sum().transpose();
  const MatrixXd P = V_hat.transpose() * X;
  std::size_t correct = 0;
  for (const auto& r : test.records) {
    const auto i = static_cast<Index>(r.i);
    const auto j = static_cast<Index>(r.j);
    const auto k = static_cast<Index>(r.k);
    const double dv = q(i) - q(j) + P(k, i) - P(k, j);
    const int pred = dv < 0.0 ? -1 : 1;
    if (pred == r.y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

MetricsReport relative_errors(const SymMatrix& M_hat, const MatrixXd& V_hat, const MatrixXd& U_hat,
                              const CrowdModel& model) {
  if (M_hat.dim() != model.d() || V_hat.rows() != U_hat.rows() || V_hat.cols() != model.V_star.cols() ||
      U_hat.cols() != model.U_star.cols() || U_hat.rows() != model.U_star.rows()) {
    throw std::invalid_argument("relative_errors: dimension mismatch");
  }
  const MatrixXd& Ms = model.M_star.matrix();
  const MatrixXd target_U = pseudoinverse(Ms) * Ms * model.U_star;
  MetricsReport r;
  r.rel_metric_error = ratio((M_hat.matrix() - Ms).norm(), Ms.norm());
  r.rel_ideal_point_error = ratio((U_hat - target_U).norm(), target_U.norm());
  r.rel_pseudo_error = ratio((V_hat - model.V_star).norm(), model.V_star.norm());
  return r;
}

double kl_bernoulli(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("kl_bernoulli: p and q must lie strictly inside (0,1)");
  }
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

double true_risk_exact(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model, const LinkFunction& link,
                       const Loss& loss) {
  check_model_dims(M, V, model);
  if (model.n() < 2) throw std::invalid_argument("true_risk_exact needs n >= 2");
  double total = 0.0;
  for_all_pairs(M, V, model, [&](double ds, double dh) {
    const double p_neg = link.f(-ds);
    const double p_pos = link.f(ds);
    total += p_neg * loss.value(-dh) + p_pos * loss.value(dh);
  });
  return total / static_cast<double>(pair_user_count(model));
}

double excess_risk_kl(const SymMatrix& M, const MatrixXd& V, const CrowdModel& model, const LinkFunction& link) {
  check_model_dims(M, V, model);
  if (model.n() < 2) throw std::invalid_argument("excess_risk_kl needs n >= 2");
  double total = 0.0;
  for_all_pairs(M, V, model, [&](double ds, double dh) {
    // KL in log space
    const double lp = link.log_f(-ds);
    const double lp1 = link.log_f(ds);
    const double lq = link.log_f(-dh);
    const double lq1 = link.log_f(dh);
    total += std::exp(lp) * (lp - lq) + std::exp(lp1) * (lp1 - lq1);
  });
  return total / static_cast<double>(pair_user_count(model));
}

double c_f(const LinkFunction& link, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("c_f: gamma must be >= 0");
  return link.derivative(gamma);
}

double max_abs_delta(const SymMatrix& M, const MatrixXd& V, const MatrixXd& X) {
  const VectorXd q = (X.array() * (M.matrix() * X).array()).colwise().sum().transpose();
  const MatrixXd P = V.transpose() * X;
  double best = 0.0;
  for (Index k = 0; k < P.rows(); ++k) {
    for (Index i = 0; i < X.cols(); ++i) {
      for (Index j = i + 1; j < X.cols(); ++j) {
        best = std::max(best, std::abs(q(i) - q(j) + P(k, i) - P(k, j)));
      }
    }
  }
  return best;
}

double sigma_min_centered(const MatrixXd& X) {
  const MatrixXd F = item_features(X);
  const MatrixXd JF = F.rowwise() - F.colwise().mean();
  if (JF.rows() <= JF.cols()) return 0.0;
  const VectorXd s = singular_values(JF);
  return s(JF.cols() - 1);
}

RecoveryBoundReport recovery_bound_report(const SymMatrix& M_hat, const MatrixXd& V_hat, const CrowdModel& model,
                                          const LinkFunction& link, std::optional<double> gamma) {
  check_model_dims(M_hat, V_hat, model);
  RecoveryBoundReport r;
  r.sigma_min_J = sigma_min_centered(model.X);
  const double dM = (M_hat.matrix() - model.M_star.matrix()).squaredNorm();
  const double dV = (V_hat - model.V_star).squaredNorm() / static_cast<double>(model.K());
  r.lhs = r.sigma_min_J * r.sigma_min_J * (dM + dV) / static_cast<double>(model.n());
  r.excess_risk = excess_risk_kl(M_hat, V_hat, model, link);
  r.gamma = gamma ? *gamma
                  : std::max(max_abs_delta(model.M_star, model.V_star, model.X), max_abs_delta(M_hat, V_hat, model.X));
  r.C_f = c_f(link, r.gamma);
  r.rhs = r.excess_risk / (4.0 * r.C_f * r.C_f);
  r.inequality_slack = r.rhs - r.lhs;
  return r;
}

SecondMoments expected_second_moments(const MatrixXd& X, std::size_t K) {
  const Index d = X.rows();
  const Index n = X.cols();
  if (n < 2) throw std::invalid_argument("expected_second_moments needs n >= 2");
  if (K < 1) throw std::invalid_argument("expected_second_moments needs K >= 1");
  const double nn = static_cast<double>(n);
  const double Kd = static_cast<double>(K);
  const double scale = 2.0 / (nn * (nn - 1.0));
  const VectorXd sq = X.colwise().squaredNorm().transpose();
  const MatrixXd G = X.transpose() * X;
  const VectorXd xbar = X.rowwise().mean();
  const MatrixXd core = X * (nn * MatrixXd(sq.asDiagonal()) - G) * X.transpose();

  SecondMoments out;
  out.E_ZZt = scale * (core + nn * X * X.transpose() - nn * nn * xbar * xbar.transpose());

  VectorXd cross = VectorXd::Zero(d);
  for (Index l = 0; l < n; ++l) cross += (X.col(l) - xbar).dot(X.col(l)) * X.col(l);
  cross *= nn / Kd;
  const double corner = (nn / Kd) * (X.squaredNorm() - nn * xbar.squaredNorm());

  const auto Ki = static_cast<Index>(K);
  out.E_ZtZ = MatrixXd::Zero(d + Ki, d + Ki);
  out.E_ZtZ.topLeftCorner(d, d) = core;
  out.E_ZtZ.topRightCorner(d, Ki) = cross.replicate(1, Ki);
  out.E_ZtZ.bottomLeftCorner(Ki, d) = cross.transpose().replicate(Ki, 1);
  out.E_ZtZ.bottomRightCorner(Ki, Ki) = corner * MatrixXd::Identity(Ki, Ki);
  out.E_ZtZ *= scale;
  return out;
}

}  // namespace crowdmetric
