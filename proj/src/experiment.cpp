#include "crowdmetric/experiment.hpp"

#include "crowdmetric/evaluation.hpp"
#include "crowdmetric/identifiability.hpp"
#include "crowdmetric/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;
using nlohmann::json;

const std::set<std::string>& known_methods() {
  static const std::set<std::string> names = {"frobenius_metric", "nuclear_full", "nuclear_metric",
                                              "nuclear_split",    "psd_only",     "single_user",
                                              "identity_metric",  "oracle"};
  return names;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

struct TrialData {
  CrowdModel model;
  ResponseDataset train;  // grouped by user, each user in shuffled order
  ResponseDataset test;
};

TrialData prepare_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const LinkFunction link = cfg.make_link();
  Rng model_rng(derive_seed(cfg.master_seed, trial, hash_tag("model")));
  CrowdModel model = generate_model(cfg, model_rng);
  const std::size_t train_max = *std::max_element(cfg.pairs_per_user.begin(), cfg.pairs_per_user.end());
  Rng data_rng(derive_seed(cfg.master_seed, trial, hash_tag("data")));
  const ResponseDataset pools = sample_user_pools(model, link, train_max + cfg.test_per_user, data_rng);
  Rng split_rng(derive_seed(cfg.master_seed, trial, hash_tag("split")));
  auto [train, test] = split_blocked_by_user(pools, train_max, split_rng);
  return TrialData{std::move(model), std::move(train), std::move(test)};
}

TrialRow score_joint(const TrialData& t, const SymMatrix& M, const MatrixXd& V, const MatrixXd& U) {
  TrialRow row;
  row.test_accuracy = test_accuracy(M, V, t.test, t.model.X);
  const MetricsReport rep = relative_errors(M, V, U, t.model);
  row.rel_metric_error = rep.rel_metric_error;
  row.rel_ideal_point_error = rep.rel_ideal_point_error;
  row.rel_pseudo_error = rep.rel_pseudo_error;
  return row;
}

TrialRow run_single_user(const ExperimentConfig& cfg, const TrialData& t, const ResponseDataset& train) {
  const CrowdModel& model = t.model;
  const auto fits = fit_single_user(train, model.X, cfg.make_loss(), oracle_single_user_radii(model), cfg.solver);
  const auto d = static_cast<Index>(model.d());
  MatrixXd V = MatrixXd::Zero(d, static_cast<Index>(model.K()));
  MatrixXd U = MatrixXd::Zero(d, static_cast<Index>(model.K()));
  std::vector<SymMatrix> metrics;
  double metric_err = 0.0;
  const double metric_norm = model.M_star.frobenius_norm();
  for (std::size_t k = 0; k < model.K(); ++k) {
    const SymMatrix M = fits[k] ? fits[k]->M_hat : SymMatrix::zero(model.d());
    const VectorXd v = fits[k] ? VectorXd(fits[k]->V_hat.col(0)) : VectorXd::Zero(d);
    V.col(static_cast<Index>(k)) = v;
    U.col(static_cast<Index>(k)) = recover_ideal_points(M, v, static_cast<double>(model.d()));
    metric_err += (M.matrix() - model.M_star.matrix()).norm();
    metrics.push_back(M);
  }
  TrialRow row;
  std::size_t correct = 0;
  for (const auto& r : t.test.records) {
    const SymMatrix& M = metrics[r.k];
    const double dv = delta(M, V.col(static_cast<Index>(r.k)), model.X.col(static_cast<Index>(r.i)),
                            model.X.col(static_cast<Index>(r.j)));
    if ((dv < 0.0 ? -1 : 1) == r.y) ++correct;
  }
  row.test_accuracy = static_cast<double>(correct) / static_cast<double>(t.test.size());
  if (metric_norm > 0.0) row.rel_metric_error = metric_err / static_cast<double>(model.K()) / metric_norm;
  const MetricsReport rep = relative_errors(SymMatrix::zero(model.d()), V, U, model);
  row.rel_ideal_point_error = rep.rel_ideal_point_error;
  row.rel_pseudo_error = rep.rel_pseudo_error;
  return row;
}

TrialRow run_method(const ExperimentConfig& cfg, const TrialData& t, const std::string& method, std::size_t pairs) {
  const CrowdModel& model = t.model;
  const double alpha = static_cast<double>(model.d());
  if (method == "oracle") {
    const MatrixXd& Ms = model.M_star.matrix();
    return score_joint(t, model.M_star, model.V_star, pseudoinverse(Ms) * Ms * model.U_star);
  }
  const ResponseDataset train = take_per_user(t.train, pairs);
  if (method == "single_user") return run_single_user(cfg, t, train);
  const ConstraintScheme scheme = oracle_hyperparameters(model, scheme_kind_from_name(method));
  const FitResult fit = fit_erm(train, model.X, cfg.make_loss(), scheme, cfg.solver);
  return score_joint(t, fit.M_hat, fit.V_hat, recover_ideal_points(fit.M_hat, fit.V_hat, alpha));
}

bool row_less(const TrialRow& a, const TrialRow& b) {
  return std::tie(a.trial, a.scheme, a.pairs_per_user) < std::tie(b.trial, b.scheme, b.pairs_per_user);
}

void mean_se(const std::vector<double>& xs, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  static const std::set<std::string> keys = {"d",       "r",      "n",        "K",        "beta",
                                             "link",    "loss",   "metric_mode", "schemes", "pairs_per_user",
                                             "test_per_user", "trials", "master_seed", "threads", "solver"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw std::invalid_argument("unknown experiment config key '" + k + "'");
  }
  ExperimentConfig c;
  c.d = get_or(j, "d", c.d);
  c.r = get_or(j, "r", c.r);
  c.n = get_or(j, "n", c.n);
  c.K = get_or(j, "K", c.K);
  c.beta = get_or(j, "beta", c.beta);
  c.link = get_or(j, "link", c.link);
  c.loss = get_or(j, "loss", c.loss);
  const std::string mode = get_or<std::string>(j, "metric_mode", "low_rank");
  if (mode == "low_rank") {
    c.metric_mode = MetricMode::low_rank;
  } else if (mode == "full_rank") {
    c.metric_mode = MetricMode::full_rank;
  } else {
    throw std::invalid_argument("metric_mode must be low_rank or full_rank");
  }
  c.schemes = get_or(j, "schemes", c.schemes);
  c.pairs_per_user = get_or(j, "pairs_per_user", c.pairs_per_user);
  c.test_per_user = get_or(j, "test_per_user", c.test_per_user);
  c.trials = get_or(j, "trials", c.trials);
  c.master_seed = get_or(j, "master_seed", c.master_seed);
  c.threads = get_or(j, "threads", c.threads);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    c.solver.step_scale = get_or(s, "step_scale", c.solver.step_scale);
    c.solver.max_iters = get_or(s, "max_iters", c.solver.max_iters);
    c.solver.tol_objective = get_or(s, "tol_objective", c.solver.tol_objective);
    c.solver.dykstra = get_or(s, "dykstra", c.solver.dykstra);
  }
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  return json{{"d", d},
              {"r", r},
              {"n", n},
              {"K", K},
              {"beta", beta},
              {"link", link},
              {"loss", loss},
              {"metric_mode", metric_mode == MetricMode::low_rank ? "low_rank" : "full_rank"},
              {"schemes", schemes},
              {"pairs_per_user", pairs_per_user},
              {"test_per_user", test_per_user},
              {"trials", trials},
              {"master_seed", master_seed},
              {"threads", threads},
              {"solver",
               {{"step_scale", solver.step_scale},
                {"max_iters", solver.max_iters},
                {"tol_objective", solver.tol_objective},
                {"dykstra", solver.dykstra}}}};
}

void ExperimentConfig::validate() const {
  if (d < 1 || r < 1 || r > d) throw std::invalid_argument("experiment needs 1 <= r <= d");
  if (n < 2 || K < 1) throw std::invalid_argument("experiment needs n >= 2 and K >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("experiment needs beta > 0");
  if (trials < 1 || threads < 1) throw std::invalid_argument("trials and threads must be >= 1");
  if (test_per_user < 1) throw std::invalid_argument("test_per_user must be >= 1");
  if (pairs_per_user.empty()) throw std::invalid_argument("pairs_per_user grid is empty");
  for (auto p : pairs_per_user) {
    if (p < 1) throw std::invalid_argument("pairs_per_user entries must be >= 1");
  }
  if (schemes.empty()) throw std::invalid_argument("no schemes requested");
  for (const auto& s : schemes) {
    if (!known_methods().count(s)) throw std::invalid_argument("unknown scheme '" + s + "'");
  }
  make_link();
  make_loss();
}

LinkFunction ExperimentConfig::make_link() const {
  if (link == "logistic") return LinkFunction::logistic(beta);
  if (link == "probit") return LinkFunction::probit();
  throw std::invalid_argument("link must be logistic or probit");
}

Loss ExperimentConfig::make_loss() const {
  if (loss == "logistic") return Loss::logistic(beta);
  if (loss == "hinge") return Loss::hinge();
  if (loss == "nll") return Loss::neg_log_likelihood(make_link());
  throw std::invalid_argument("loss must be logistic, hinge or nll");
}

CrowdModel generate_model(const ExperimentConfig& cfg, Rng& rng) {
  MatrixXd X = gen_items_gaussian(cfg.n, cfg.d, rng);
  SymMatrix M = gen_metric(cfg.d, cfg.r, rng, cfg.metric_mode);
  MatrixXd U = gen_users_gaussian(cfg.K, cfg.d, rng);
  return make_model(std::move(X), std::move(M), std::move(U));
}

std::vector<TrialRow> run_trial(const ExperimentConfig& cfg, std::size_t trial) {
  cfg.validate();
  const TrialData t = prepare_trial(cfg, trial);
  std::vector<TrialRow> rows;
  for (const auto& method : cfg.schemes) {
    for (std::size_t pairs : cfg.pairs_per_user) {
      const auto t0 = std::chrono::steady_clock::now();
      TrialRow row = run_method(cfg, t, method, pairs);
      row.wall_time = seconds_since(t0);
      row.trial = trial;
      row.scheme = method;
      row.pairs_per_user = pairs;
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::vector<TrialRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TrialRow>> per_trial(cfg.trials);
  const std::size_t workers = std::min(cfg.threads, cfg.trials);
  if (workers <= 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) per_trial[t] = run_trial(cfg, t);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t t = 0;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cfg.trials || failure) return;
            t = next++;
          }
          try {
            per_trial[t] = run_trial(cfg, t);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  std::vector<TrialRow> rows;
  for (auto& v : per_trial) rows.insert(rows.end(), v.begin(), v.end());
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::vector<SummaryRow> summarize(std::vector<TrialRow> rows) {
  std::sort(rows.begin(), rows.end(), row_less);
  std::map<std::pair<std::string, std::size_t>, std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) groups[{r.scheme, r.pairs_per_user}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    SummaryRow s;
    s.scheme = key.first;
    s.pairs_per_user = key.second;
    s.trials = members.size();
    std::vector<double> acc;
    std::vector<double> met;
    std::vector<double> ide;
    std::vector<double> pse;
    for (const TrialRow* r : members) {
      acc.push_back(r->test_accuracy);
      if (r->rel_metric_error) met.push_back(*r->rel_metric_error);
      if (r->rel_ideal_point_error) ide.push_back(*r->rel_ideal_point_error);
      if (r->rel_pseudo_error) pse.push_back(*r->rel_pseudo_error);
    }
    mean_se(acc, s.accuracy_mean, s.accuracy_se);
    auto fill = [](const std::vector<double>& xs, std::optional<double>& m, std::optional<double>& se) {
      if (xs.empty()) return;
      double a = 0.0;
      double b = 0.0;
      mean_se(xs, a, b);
      m = a;
      se = b;
    };
    fill(met, s.metric_mean, s.metric_se);
    fill(ide, s.ideal_mean, s.ideal_se);
    fill(pse, s.pseudo_mean, s.pseudo_se);
    out.push_back(std::move(s));
  }
  return out;
}

void write_trial_csv(std::ostream& os, const std::vector<TrialRow>& rows) {
  os << "trial,scheme,pairs_per_user,test_accuracy,rel_metric_error,rel_ideal_point_error,rel_pseudo_error,"
        "wall_time\n";
  for (const auto& r : rows) {
    os << r.trial << ',' << r.scheme << ',' << r.pairs_per_user << ',' << fmt(r.test_accuracy) << ','
       << fmt(r.rel_metric_error) << ',' << fmt(r.rel_ideal_point_error) << ',' << fmt(r.rel_pseudo_error) << ','
       << fmt(r.wall_time) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "scheme,pairs_per_user,trials,test_accuracy_mean,test_accuracy_se,rel_metric_error_mean,"
        "rel_metric_error_se,rel_ideal_point_error_mean,rel_ideal_point_error_se,rel_pseudo_error_mean,"
        "rel_pseudo_error_se\n";
  for (const auto& s : rows) {
    os << s.scheme << ',' << s.pairs_per_user << ',' << s.trials << ',' << fmt(s.accuracy_mean) << ','
       << fmt(s.accuracy_se) << ',' << fmt(s.metric_mean) << ',' << fmt(s.metric_se) << ',' << fmt(s.ideal_mean)
       << ',' << fmt(s.ideal_se) << ',' << fmt(s.pseudo_mean) << ',' << fmt(s.pseudo_se) << '\n';
  }
}

json validate_theory(const json& cfg) {
  const auto seed = get_or<std::uint64_t>(cfg, "seed", 7);
  const auto reps = get_or<std::size_t>(cfg, "repeats", 50);
  Rng rng(derive_seed(seed, 0, hash_tag("theory")));
  json report;
  bool all = true;
  auto record = [&](const std::string& name, double worst, bool pass, const std::string& what) {
    report[name] = {{"worst", worst}, {"pass", pass}, {"measure", what}};
    all = all && pass;
  };

  {
    double worst = 0.0;
    const UserScheme scheme = minimal_multiuser_construction(2, 3);
    for (std::size_t t = 0; t < reps; ++t) {
      const CrowdModel m = make_model(gen_items_gaussian(scheme.n, 2, rng), gen_metric(2, 2, rng, MetricMode::full_rank),
                                      gen_users_gaussian(3, 2, rng));
      const auto sol = solve_unquantized(m.X, scheme, unquantized_measurements(m, scheme));
      const double num = std::sqrt((sol.M.matrix() - m.M_star.matrix()).squaredNorm() + (sol.V - m.V_star).squaredNorm());
      const double den = std::sqrt(m.M_star.matrix().squaredNorm() + m.V_star.squaredNorm());
      worst = std::max(worst, num / den);
    }
    record("unquantized_recovery", worst, worst <= 1e-8, "max relative parameter error");
  }
  {
    std::size_t bad = 0;
    const UserScheme scheme = fixture_counterexample_necessary();
    for (std::size_t t = 0; t < reps; ++t) {
      const MatrixXd X = gen_items_gaussian(scheme.n, 2, rng);
      if (!check_necessary(X, scheme).all() || is_identifiable(X, scheme)) ++bad;
    }
    record("necessary_not_sufficient", static_cast<double>(bad), bad == 0, "draws where the counterexample failed");
  }
  {
    double worst = 0.0;
    for (std::size_t n = 2; n <= 50; ++n) {
      const MatrixXd S = to_dense(complete_selection(n));
      const MatrixXd J = static_cast<double>(n) * MatrixXd::Identity(static_cast<Index>(n), static_cast<Index>(n)) -
                         MatrixXd::Ones(static_cast<Index>(n), static_cast<Index>(n));
      worst = std::max(worst, (S.transpose() * S - J).cwiseAbs().maxCoeff());
    }
    record("centering_identity", worst, worst == 0.0, "max abs entry error of S^T S - nJ");
  }
  {
    double worst = 0.0;
    std::uniform_int_distribution<std::size_t> nd(2, 10);
    std::uniform_int_distribution<std::size_t> kd(1, 4);
    std::uniform_int_distribution<std::size_t> dd(1, 4);
    for (std::size_t t = 0; t < reps; ++t) {
      const std::size_t n = nd(rng);
      const std::size_t K = kd(rng);
      const std::size_t d = dd(rng);
      const MatrixXd X = gen_items_gaussian(n, d, rng);
      const SecondMoments closed = expected_second_moments(X, K);
      const auto di = static_cast<Index>(d);
      const auto Ki = static_cast<Index>(K);
      MatrixXd zz = MatrixXd::Zero(di, di);
      MatrixXd ztz = MatrixXd::Zero(di + Ki, di + Ki);
      double count = 0.0;
      for (Index k = 0; k < Ki; ++k) {
        for (Index i = 0; i < X.cols(); ++i) {
          for (Index j = i + 1; j < X.cols(); ++j) {
            MatrixXd Z = MatrixXd::Zero(di, di + Ki);
            Z.leftCols(di) = X.col(i) * X.col(i).transpose() - X.col(j) * X.col(j).transpose();
            Z.col(di + k) = X.col(i) - X.col(j);
            zz += Z * Z.transpose();
            ztz += Z.transpose() * Z;
            count += 1.0;
          }
        }
      }
      worst = std::max({worst, (zz / count - closed.E_ZZt).cwiseAbs().maxCoeff(),
                        (ztz / count - closed.E_ZtZ).cwiseAbs().maxCoeff()});
    }
    record("moment_identity", worst, worst <= 1e-10, "max abs difference, closed form vs enumeration");
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    const LinkFunction link = LinkFunction::logistic(1.0);
    const CrowdModel m = make_model(gen_items_gaussian(15, 3, rng), gen_metric(3, 3, rng, MetricMode::full_rank),
                                    gen_users_gaussian(3, 3, rng));
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.01, 1.0);
    for (std::size_t t = 0; t < reps; ++t) {
      const double s = scale(rng);
      MatrixXd E(3, 3);
      for (Index i = 0; i < 9; ++i) E(i) = g(rng);
      MatrixXd F(3, 3);
      for (Index i = 0; i < 9; ++i) F(i) = g(rng);
      const SymMatrix Mh = SymMatrix::symmetrized(m.M_star.matrix() + s * E);
      const MatrixXd Vh = m.V_star + s * F;
      worst = std::min(worst, recovery_bound_report(Mh, Vh, m, link).inequality_slack);
    }
    record("recovery_inequality", worst, worst >= -1e-9, "min slack rhs - lhs");
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
    for (std::size_t t = 0; t < 10000; ++t) {
      const double p = u(rng);
      const double q = u(rng);
      worst = std::min(worst, kl_bernoulli(p, q) - 2.0 * (p - q) * (p - q));
    }
    record("kl_pinsker", worst, worst >= -1e-12, "min of KL(p||q) - 2(p-q)^2");
  }
  {
    const LinkFunction link = LinkFunction::logistic(2.0);
    const CrowdModel m = make_model(gen_items_gaussian(8, 2, rng), gen_metric(2, 2, rng, MetricMode::full_rank),
                                    gen_users_gaussian(2, 2, rng));
    const SymMatrix Mh = SymMatrix::symmetrized(m.M_star.matrix() + 0.3 * MatrixXd::Identity(2, 2));
    const MatrixXd Vh = m.V_star * 0.7;
    const Loss nll = Loss::neg_log_likelihood(link);
    const double direct = true_risk_exact(Mh, Vh, m, link, nll) - true_risk_exact(m.M_star, m.V_star, m, link, nll);
    const double kl = excess_risk_kl(Mh, Vh, m, link);
    record("excess_risk_identity", std::abs(direct - kl), std::abs(direct - kl) <= 1e-10,
           "abs difference, direct vs KL decomposition");
  }
  {
    std::size_t violations = 0;
    std::uniform_int_distribution<std::size_t> nd(3, 7);
    for (std::size_t t = 0; t < 200; ++t) {
      const std::size_t n = nd(rng);
      std::uniform_int_distribution<std::size_t> md(1, n - 1);
      const std::size_t m = md(rng);
      SelectionMatrix s = sample_uniform_pairs(n, m, rng);
      while (selection_rank(s) != m) s = sample_uniform_pairs(n, m, rng);
      const std::size_t r = m;
      const Rational p = newspan_probability(s);
      const double lo = 2.0 * static_cast<double>(r) / static_cast<double>(n * (n - 1));
      const double hi = static_cast<double>((r + 1) * r) / static_cast<double>(n * (n - 1));
      if (p.value() < lo - 1e-15 || p.value() > hi + 1e-15) ++violations;
    }
    record("newspan_bracket", static_cast<double>(violations), violations == 0, "bracket violations");
  }
  report["all_pass"] = all;
  return report;
}

}  // namespace crowdmetric
