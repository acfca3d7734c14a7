#include "crowdmetric/estimation.hpp"

#include "crowdmetric/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;

constexpr double kRadiusFloor = 1e-12;

void check_inputs(const SymMatrix& M, const MatrixXd& V, const ResponseDataset& data, const MatrixXd& X) {
  const auto d = static_cast<Index>(M.dim());
  if (X.rows() != d || V.rows() != d) throw std::invalid_argument("dimension mismatch between M, V and items");
  if (static_cast<std::size_t>(X.cols()) != data.n) throw std::invalid_argument("item count does not match dataset");
  if (static_cast<std::size_t>(V.cols()) != data.K) throw std::invalid_argument("V must have one column per user");
  data.validate();
}

// delta for every record: q_i - q_j + <v_k, x_i - x_j>
VectorXd all_deltas(const MatrixXd& M, const MatrixXd& V, const ResponseDataset& data, const MatrixXd& X) {
  const VectorXd q = (X.array() * (M * X).array()).colwise().sum().transpose();
  const MatrixXd P = V.transpose() * X;  // K x n
  VectorXd out(static_cast<Index>(data.size()));
  for (std::size_t t = 0; t < data.size(); ++t) {
    const Record& r = data.records[t];
    const auto i = static_cast<Index>(r.i);
    const auto j = static_cast<Index>(r.j);
    const auto k = static_cast<Index>(r.k);
    out(static_cast<Index>(t)) = q(i) - q(j) + P(k, i) - P(k, j);
  }
  return out;
}

struct Evaluation {
  double objective = 0.0;
  MatrixXd d_M;
  MatrixXd d_V;
};

Evaluation evaluate(const MatrixXd& M, const MatrixXd& V, const ResponseDataset& data, const MatrixXd& X,
                    const Loss& loss, bool with_gradient) {
  Evaluation e;
  const auto n = X.cols();
  const auto K = V.cols();
  if (data.empty()) {
    if (with_gradient) {
      e.d_M = MatrixXd::Zero(M.rows(), M.cols());
      e.d_V = MatrixXd::Zero(V.rows(), V.cols());
    }
    return e;
  }
  const VectorXd deltas = all_deltas(M, V, data, X);
  const double inv = 1.0 / static_cast<double>(data.size());
  VectorXd c = VectorXd::Zero(n);
  MatrixXd C = MatrixXd::Zero(n, K);
  double total = 0.0;
  for (std::size_t t = 0; t < data.size(); ++t) {
    const Record& r = data.records[t];
    const double y = r.y;
    const double x = y * deltas(static_cast<Index>(t));
    total += loss.value(x);
    if (with_gradient) {
      const double g = inv * y * loss.slope(x);
      if (g != 0.0) {
        c(static_cast<Index>(r.i)) += g;
        c(static_cast<Index>(r.j)) -= g;
        C(static_cast<Index>(r.i), static_cast<Index>(r.k)) += g;
        C(static_cast<Index>(r.j), static_cast<Index>(r.k)) -= g;
      }
    }
  }
  e.objective = total * inv;
  if (with_gradient) {
    const MatrixXd G = X * c.asDiagonal() * X.transpose();
    e.d_M = 0.5 * (G + G.transpose());
    e.d_V = X * C;
  }
  return e;
}

void project_columns(MatrixXd& V, double lambda) {
  for (Index k = 0; k < V.cols(); ++k) V.col(k) = l2_ball_project(V.col(k), lambda);
}

MatrixXd psd_block(const MatrixXd& M) { return psd_project(SymMatrix::symmetrized(M)).matrix(); }

void rescale_into_nuclear_ball(MatrixXd& B, double lambda) {
  const double nn = nuclear_norm(B);
  if (nn > lambda) B *= lambda / nn;
}

void project_nuclear_full(MatrixXd& M, MatrixXd& V, double lambda, const SolverConfig& cfg) {
  const Index d = M.rows();
  MatrixXd B(d, d + V.cols());
  B << M, V;
  if (!cfg.dykstra) {
    B = nuclear_ball_project(B, lambda);
    B.leftCols(d) = psd_block(B.leftCols(d));
  } else {
    MatrixXd x = B;
    MatrixXd p = MatrixXd::Zero(B.rows(), B.cols());
    MatrixXd q = MatrixXd::Zero(B.rows(), B.cols());
    for (std::size_t it = 0; it < cfg.dykstra_iters; ++it) {
      const MatrixXd y = nuclear_ball_project(x + p, lambda);
      p = x + p - y;
      MatrixXd z = y + q;
      z.leftCols(d) = psd_block(z.leftCols(d));
      q = y + q - z;
      x = std::move(z);
    }
    B = x;
  }
  // radial shrink back into the ball after the PSD clip
  rescale_into_nuclear_ball(B, lambda);
  M = SymMatrix::symmetrized(B.leftCols(d)).matrix();
  V = B.rightCols(V.cols());
}

double relative_excess(double value, double radius) { return std::max(0.0, value / radius - 1.0); }

}  // namespace

Loss Loss::hinge() { return Loss(Kind::hinge, 1.0, std::nullopt); }

Loss Loss::logistic(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("logistic loss needs beta > 0");
  return Loss(Kind::logistic, beta, std::nullopt);
}

Loss Loss::neg_log_likelihood(const LinkFunction& link) { return Loss(Kind::neg_log_likelihood, link.beta(), link); }

std::string Loss::name() const {
  switch (kind_) {
    case Kind::hinge:
      return "hinge";
    case Kind::logistic:
      return "logistic";
    case Kind::neg_log_likelihood:
      return link_->kind() == LinkFunction::Kind::logistic ? "nll_logistic" : "nll_probit";
  }
  return "unknown";
}

double Loss::value(double x) const {
  switch (kind_) {
    case Kind::hinge:
      return std::max(0.0, 1.0 - x);
    case Kind::logistic: {
      const double t = -beta_ * x;
      return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    case Kind::neg_log_likelihood:
      return -link_->log_f(x);
  }
  return 0.0;
}

double Loss::slope(double x) const {
  switch (kind_) {
    case Kind::hinge:
      return x < 1.0 ? -1.0 : 0.0;
    case Kind::logistic: {
      const double t = -beta_ * x;
      const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
      return -beta_ * s;
    }
    case Kind::neg_log_likelihood:
      return link_->neg_log_derivative(x);
  }
  return 0.0;
}

ConstraintScheme ConstraintScheme::frobenius_metric(double lambda_F, double lambda_v) {
  ConstraintScheme s;
  s.kind = Kind::frobenius_metric;
  s.lambda_F = lambda_F;
  s.lambda_v = lambda_v;
  s.validate();
  return s;
}

ConstraintScheme ConstraintScheme::nuclear_full(double lambda_star) {
  ConstraintScheme s;
  s.kind = Kind::nuclear_full;
  s.lambda_star = lambda_star;
  s.validate();
  return s;
}

ConstraintScheme ConstraintScheme::nuclear_metric(double lambda_star, double lambda_v) {
  ConstraintScheme s;
  s.kind = Kind::nuclear_metric;
  s.lambda_star = lambda_star;
  s.lambda_v = lambda_v;
  s.validate();
  return s;
}

ConstraintScheme ConstraintScheme::nuclear_split(double lambda_M, double lambda_V) {
  ConstraintScheme s;
  s.kind = Kind::nuclear_split;
  s.lambda_M = lambda_M;
  s.lambda_V = lambda_V;
  s.validate();
  return s;
}

ConstraintScheme ConstraintScheme::psd_only() { return ConstraintScheme{}; }

ConstraintScheme ConstraintScheme::fixed_identity(double lambda_v) {
  ConstraintScheme s;
  s.kind = Kind::fixed_identity;
  s.lambda_v = lambda_v;
  s.validate();
  return s;
}

std::string ConstraintScheme::name() const { return scheme_kind_name(kind); }

void ConstraintScheme::validate() const {
  auto need = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be > 0");
  };
  switch (kind) {
    case Kind::frobenius_metric:
      need(lambda_F, "lambda_F");
      need(lambda_v, "lambda_v");
      break;
    case Kind::nuclear_full:
      need(lambda_star, "lambda_star");
      break;
    case Kind::nuclear_metric:
      need(lambda_star, "lambda_star");
      need(lambda_v, "lambda_v");
      break;
    case Kind::nuclear_split:
      need(lambda_M, "lambda_M");
      need(lambda_V, "lambda_V");
      break;
    case Kind::psd_only:
      break;
    case Kind::fixed_identity:
      need(lambda_v, "lambda_v");
      break;
  }
}

std::string scheme_kind_name(ConstraintScheme::Kind kind) {
  switch (kind) {
    case ConstraintScheme::Kind::frobenius_metric:
      return "frobenius_metric";
    case ConstraintScheme::Kind::nuclear_full:
      return "nuclear_full";
    case ConstraintScheme::Kind::nuclear_metric:
      return "nuclear_metric";
    case ConstraintScheme::Kind::nuclear_split:
      return "nuclear_split";
    case ConstraintScheme::Kind::psd_only:
      return "psd_only";
    case ConstraintScheme::Kind::fixed_identity:
      return "identity_metric";
  }
  return "unknown";
}

ConstraintScheme::Kind scheme_kind_from_name(const std::string& name) {
  using K = ConstraintScheme::Kind;
  for (K k : {K::frobenius_metric, K::nuclear_full, K::nuclear_metric, K::nuclear_split, K::psd_only,
              K::fixed_identity}) {
    if (scheme_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown constraint scheme '" + name + "'");
}

std::vector<VectorXd> unquantized_measurements(const CrowdModel& model, const UserScheme& scheme) {
  if (scheme.n != model.n() || scheme.K() != model.K()) {
    throw std::invalid_argument("scheme does not match the model's n and K");
  }
  std::vector<VectorXd> out;
  for (std::size_t k = 0; k < scheme.K(); ++k) {
    const auto& s = scheme.users[k];
    VectorXd dv(static_cast<Index>(s.m()));
    for (std::size_t t = 0; t < s.m(); ++t) {
      dv(static_cast<Index>(t)) =
          delta(model.M_star, model.V_star.col(static_cast<Index>(k)), model.X.col(static_cast<Index>(s.row(t).p)),
                model.X.col(static_cast<Index>(s.row(t).q)));
    }
    out.push_back(std::move(dv));
  }
  return out;
}

UnquantizedSolution solve_unquantized(const MatrixXd& X, const UserScheme& scheme,
                                      const std::vector<VectorXd>& delta_vectors) {
  const GammaSystem g = assemble_gamma(X, scheme);
  if (delta_vectors.size() != scheme.K()) throw std::invalid_argument("need one measurement vector per user");
  VectorXd rhs(g.gamma.rows());
  Index at = 0;
  for (std::size_t k = 0; k < scheme.K(); ++k) {
    if (static_cast<std::size_t>(delta_vectors[k].size()) != scheme.users[k].m()) {
      throw std::invalid_argument("measurement vector length does not match the user's rows");
    }
    rhs.segment(at, delta_vectors[k].size()) = delta_vectors[k];
    at += delta_vectors[k].size();
  }
  const std::size_t rank = g.gamma.rows() == 0 ? 0 : numeric_rank(g.gamma);
  if (rank < g.unknowns()) throw UnidentifiableError(rank, g.unknowns());

  const VectorXd theta = g.gamma.colPivHouseholderQr().solve(rhs);
  const std::size_t d = g.d();
  const auto D = static_cast<Index>(half_dim(d));
  UnquantizedSolution sol;
  sol.M = nu_inverse(HalfVec(d, theta.head(D)));
  sol.V = MatrixXd(static_cast<Index>(d), static_cast<Index>(scheme.K()));
  for (Index k = 0; k < sol.V.cols(); ++k) {
    sol.V.col(k) = theta.segment(D + k * static_cast<Index>(d), static_cast<Index>(d));
  }
  sol.residual_norm = (g.gamma * theta - rhs).norm();
  return sol;
}

MatrixXd recover_ideal_points(const SymMatrix& M_hat, const MatrixXd& V_hat, double alpha) {
  const auto d = static_cast<Index>(M_hat.dim());
  if (V_hat.rows() != d) throw std::invalid_argument("recover_ideal_points: dimension mismatch");
  if (!(alpha >= 0.0)) throw std::invalid_argument("recover_ideal_points: alpha must be >= 0");
  const MatrixXd& M = M_hat.matrix();
  if (alpha == 0.0) return -0.5 * pseudoinverse(M) * V_hat;
  const MatrixXd A = 4.0 * M * M + alpha * MatrixXd::Identity(d, d);
  return -2.0 * A.llt().solve(M.transpose() * V_hat);
}

MatrixXd recover_ideal_points(const SymMatrix& M_hat, const MatrixXd& V_hat) {
  return recover_ideal_points(M_hat, V_hat, static_cast<double>(M_hat.dim()));
}

double empirical_risk(const SymMatrix& M, const MatrixXd& V, const ResponseDataset& data, const MatrixXd& X,
                      const Loss& loss) {
  check_inputs(M, V, data, X);
  return evaluate(M.matrix(), V, data, X, loss, false).objective;
}

RiskGradient risk_subgradient(const SymMatrix& M, const MatrixXd& V, const ResponseDataset& data,
                              const MatrixXd& X, const Loss& loss) {
  check_inputs(M, V, data, X);
  Evaluation e = evaluate(M.matrix(), V, data, X, loss, true);
  RiskGradient g;
  g.d_nu = sym_vec_upper(e.d_M).values;
  g.d_M = std::move(e.d_M);
  g.d_V = std::move(e.d_V);
  return g;
}

void project_onto_scheme(MatrixXd& M, MatrixXd& V, const ConstraintScheme& scheme, const SolverConfig& cfg) {
  using K = ConstraintScheme::Kind;
  switch (scheme.kind) {
    case K::frobenius_metric:
      M = frobenius_ball_project(psd_project(SymMatrix::symmetrized(M)), scheme.lambda_F).matrix();
      project_columns(V, scheme.lambda_v);
      break;
    case K::nuclear_full:
      project_nuclear_full(M, V, scheme.lambda_star, cfg);
      break;
    case K::nuclear_metric:
      M = psd_trace_ball_project(SymMatrix::symmetrized(M), scheme.lambda_star).matrix();
      project_columns(V, scheme.lambda_v);
      break;
    case K::nuclear_split:
      M = psd_trace_ball_project(SymMatrix::symmetrized(M), scheme.lambda_M).matrix();
      V = nuclear_ball_project(V, scheme.lambda_V);
      break;
    case K::psd_only:
      M = psd_block(M);
      break;
    case K::fixed_identity:
      M = MatrixXd::Identity(M.rows(), M.cols());
      project_columns(V, scheme.lambda_v);
      break;
  }
}

std::vector<Residual> constraint_residuals(const SymMatrix& M, const MatrixXd& V, const ConstraintScheme& scheme) {
  using K = ConstraintScheme::Kind;
  std::vector<Residual> out;
  out.push_back({"psd", std::max(0.0, -M.min_eigenvalue())});
  auto v_cols = [&] {
    double worst = 0.0;
    for (Index k = 0; k < V.cols(); ++k) worst = std::max(worst, relative_excess(V.col(k).norm(), scheme.lambda_v));
    out.push_back({"v_l2", worst});
  };
  switch (scheme.kind) {
    case K::frobenius_metric:
      out.push_back({"frobenius", relative_excess(M.frobenius_norm(), scheme.lambda_F)});
      v_cols();
      break;
    case K::nuclear_full: {
      MatrixXd B(M.matrix().rows(), M.matrix().cols() + V.cols());
      B << M.matrix(), V;
      out.push_back({"nuclear_joint", relative_excess(nuclear_norm(B), scheme.lambda_star)});
      break;
    }
    case K::nuclear_metric:
      out.push_back({"nuclear_metric", relative_excess(nuclear_norm(M.matrix()), scheme.lambda_star)});
      v_cols();
      break;
    case K::nuclear_split:
      out.push_back({"nuclear_metric", relative_excess(nuclear_norm(M.matrix()), scheme.lambda_M)});
      out.push_back({"nuclear_points", relative_excess(nuclear_norm(V), scheme.lambda_V)});
      break;
    case K::psd_only:
      break;
    case K::fixed_identity:
      out.push_back({"identity", (M.matrix() - MatrixXd::Identity(M.matrix().rows(), M.matrix().cols())).norm()});
      v_cols();
      break;
  }
  return out;
}

FitResult fit_erm(const ResponseDataset& data, const MatrixXd& X, const Loss& loss, const ConstraintScheme& scheme,
                  const SolverConfig& cfg) {
  scheme.validate();
  if (data.empty()) throw std::invalid_argument("fit_erm: dataset is empty");
  if (!(cfg.step_scale > 0.0)) throw std::invalid_argument("fit_erm: step_scale must be > 0");
  const Index d = X.rows();
  const auto K = static_cast<Index>(data.K);
  MatrixXd M = MatrixXd::Zero(d, d);
  if (scheme.kind == ConstraintScheme::Kind::fixed_identity) M.setIdentity();
  MatrixXd V = MatrixXd::Zero(d, K);
  check_inputs(SymMatrix::symmetrized(M), V, data, X);

  FitResult res;
  res.scheme = scheme;
  MatrixXd best_M = M;
  MatrixXd best_V = V;
  double best = std::numeric_limits<double>::infinity();
  const bool learn_metric = scheme.kind != ConstraintScheme::Kind::fixed_identity;

  for (std::size_t t = 0;; ++t) {
    Evaluation e = evaluate(M, V, data, X, loss, t < cfg.max_iters);
    if (!std::isfinite(e.objective)) {
      throw SolverError("non-finite objective at iteration " + std::to_string(t), res.objective_trace);
    }
    res.objective_trace.push_back(e.objective);
    if (e.objective < best) {
      best = e.objective;
      best_M = M;
      best_V = V;
      res.best_iteration = t;
    }
    res.best_trace.push_back(best);
    if (best <= cfg.tol_objective || t >= cfg.max_iters) break;

    const double eta = cfg.step_scale / std::sqrt(static_cast<double>(t + 1));
    if (learn_metric) M -= eta * e.d_M;
    V -= eta * e.d_V;
    if (!M.allFinite() || !V.allFinite()) {
      throw SolverError("non-finite iterate at iteration " + std::to_string(t + 1), res.objective_trace);
    }
    try {
      project_onto_scheme(M, V, scheme, cfg);
    } catch (const NumericalError& err) {
      throw SolverError(std::string(err.what()) + " at iteration " + std::to_string(t + 1), res.objective_trace);
    }
    res.iterations = t + 1;
  }

  res.M_hat = psd_project(SymMatrix::symmetrized(best_M));
  res.V_hat = best_V;
  res.objective = res.M_hat.matrix() == best_M ? best
                                                : evaluate(res.M_hat.matrix(), best_V, data, X, loss, false).objective;
  res.residuals = constraint_residuals(res.M_hat, res.V_hat, scheme);
  return res;
}

ConstraintScheme oracle_hyperparameters(const CrowdModel& model, ConstraintScheme::Kind kind) {
  using K = ConstraintScheme::Kind;
  const MatrixXd& M = model.M_star.matrix();
  const MatrixXd& V = model.V_star;
  double lambda_v = 0.0;
  for (Index k = 0; k < V.cols(); ++k) lambda_v = std::max(lambda_v, V.col(k).norm());
  lambda_v = std::max(lambda_v, kRadiusFloor);
  auto floor = [](double x) { return std::max(x, kRadiusFloor); };
  switch (kind) {
    case K::frobenius_metric:
      return ConstraintScheme::frobenius_metric(floor(M.norm()), lambda_v);
    case K::nuclear_full: {
      MatrixXd B(M.rows(), M.cols() + V.cols());
      B << M, V;
      return ConstraintScheme::nuclear_full(floor(nuclear_norm(B)));
    }
    case K::nuclear_metric:
      return ConstraintScheme::nuclear_metric(floor(nuclear_norm(M)), lambda_v);
    case K::nuclear_split:
      return ConstraintScheme::nuclear_split(floor(nuclear_norm(M)), floor(nuclear_norm(V)));
    case K::psd_only:
      return ConstraintScheme::psd_only();
    case K::fixed_identity:
      return ConstraintScheme::fixed_identity(lambda_v);
  }
  throw std::invalid_argument("unknown scheme kind");
}

std::vector<double> oracle_single_user_radii(const CrowdModel& model) {
  const MatrixXd& M = model.M_star.matrix();
  std::vector<double> out;
  for (Index k = 0; k < model.V_star.cols(); ++k) {
    MatrixXd B(M.rows(), M.cols() + 1);
    B << M, model.V_star.col(k);
    out.push_back(std::max(nuclear_norm(B), kRadiusFloor));
  }
  return out;
}

std::vector<std::optional<FitResult>> fit_single_user(const ResponseDataset& data, const MatrixXd& X,
                                                      const Loss& loss, const std::vector<double>& lambda_star,
                                                      const SolverConfig& cfg) {
  if (lambda_star.size() != data.K) throw std::invalid_argument("fit_single_user: need one radius per user");
  std::vector<std::optional<FitResult>> out;
  for (std::size_t k = 0; k < data.K; ++k) {
    ResponseDataset mine = data.for_user(k);
    if (mine.empty()) {
      std::cerr << "warning: user " << k + 1 << " has no records; skipped\n";
      out.emplace_back(std::nullopt);
      continue;
    }
    mine.K = 1;
    for (auto& r : mine.records) r.k = 0;
    out.emplace_back(fit_erm(mine, X, loss, ConstraintScheme::nuclear_full(lambda_star[k]), cfg));
  }
  return out;
}

}  // namespace crowdmetric
