#include "crowdmetric/cli.hpp"

#include "crowdmetric/errors.hpp"
#include "crowdmetric/evaluation.hpp"
#include "crowdmetric/experiment.hpp"
#include "crowdmetric/identifiability.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;
using nlohmann::json;
namespace fs = std::filesystem;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

json matrix_rows(const MatrixXd& A) {
  std::vector<double> flat;
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) flat.push_back(A(i, j));
  }
  return flat;
}

json matrix_columns(const MatrixXd& A) {
  json cols = json::array();
  for (Index k = 0; k < A.cols(); ++k) cols.push_back(std::vector<double>(A.col(k).data(), A.col(k).data() + A.rows()));
  return cols;
}

MatrixXd from_rows(const json& j, Index d) {
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Index>(flat.size()) != d * d) throw std::invalid_argument("metric must have d*d entries");
  MatrixXd A(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index c = 0; c < d; ++c) A(i, c) = flat[static_cast<std::size_t>(i * d + c)];
  }
  return A;
}

MatrixXd from_columns(const json& j, Index d) {
  MatrixXd A(d, static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto col = j.at(k).get<std::vector<double>>();
    if (static_cast<Index>(col.size()) != d) throw std::invalid_argument("column length must equal d");
    for (Index i = 0; i < d; ++i) A(i, static_cast<Index>(k)) = col[static_cast<std::size_t>(i)];
  }
  return A;
}

SymMatrix sym_from_json(const json& j, Index d) {
  const MatrixXd A = from_rows(j, d);
  if (!A.isApprox(A.transpose(), 1e-12) && (A - A.transpose()).norm() > 1e-12) {
    throw std::invalid_argument("metric is not symmetric");
  }
  return SymMatrix::symmetrized(A);
}

struct Preprocess {
  bool center = false;
  bool maxnorm = false;
};

MatrixXd load_items(const std::string& path, const Preprocess& pre) {
  std::ifstream in = open_in(path);
  MatrixXd X = read_items_csv(in);
  if (pre.center) X = center_items(X);
  if (pre.maxnorm) X = maxnorm_items(X);
  return X;
}

CrowdModel load_truth(const std::string& path, const MatrixXd& X) {
  const json j = read_json(path);
  const auto d = j.at("d").get<Index>();
  if (X.rows() != d) throw std::invalid_argument("truth dimension does not match the items");
  return make_model(X, sym_from_json(j.at("M_star"), d), from_columns(j.at("U_star"), d));
}

json report_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"test_accuracy", opt(r.test_accuracy)},
              {"rel_metric_error", opt(r.rel_metric_error)},
              {"rel_ideal_point_error", opt(r.rel_ideal_point_error)},
              {"rel_pseudo_error", opt(r.rel_pseudo_error)}};
}

json scheme_json(const ConstraintScheme& s) {
  json j{{"kind", s.name()}};
  switch (s.kind) {
    case ConstraintScheme::Kind::frobenius_metric:
      j["lambda_F"] = s.lambda_F;
      j["lambda_v"] = s.lambda_v;
      break;
    case ConstraintScheme::Kind::nuclear_full:
      j["lambda_star"] = s.lambda_star;
      break;
    case ConstraintScheme::Kind::nuclear_metric:
      j["lambda_star"] = s.lambda_star;
      j["lambda_v"] = s.lambda_v;
      break;
    case ConstraintScheme::Kind::nuclear_split:
      j["lambda_M"] = s.lambda_M;
      j["lambda_V"] = s.lambda_V;
      break;
    case ConstraintScheme::Kind::psd_only:
      break;
    case ConstraintScheme::Kind::fixed_identity:
      j["lambda_v"] = s.lambda_v;
      break;
  }
  return j;
}

ConstraintScheme scheme_from_radii(ConstraintScheme::Kind kind, const json& radii) {
  auto need = [&](const char* key) {
    if (!radii.contains(key)) throw std::invalid_argument(std::string("radii.") + key + " is required for this scheme");
    return radii.at(key).get<double>();
  };
  using K = ConstraintScheme::Kind;
  switch (kind) {
    case K::frobenius_metric:
      return ConstraintScheme::frobenius_metric(need("lambda_F"), need("lambda_v"));
    case K::nuclear_full:
      return ConstraintScheme::nuclear_full(need("lambda_star"));
    case K::nuclear_metric:
      return ConstraintScheme::nuclear_metric(need("lambda_star"), need("lambda_v"));
    case K::nuclear_split:
      return ConstraintScheme::nuclear_split(need("lambda_M"), need("lambda_V"));
    case K::psd_only:
      return ConstraintScheme::psd_only();
    case K::fixed_identity:
      return ConstraintScheme::fixed_identity(need("lambda_v"));
  }
  throw std::invalid_argument("unknown scheme");
}

struct FitConfig {
  SolverConfig solver;
  std::string scheme = "nuclear_full";
  json radii = json::object();
  std::uint64_t seed = 0;
  std::string loss = "logistic";
  std::string link = "logistic";
  double beta = 1.0;
};

FitConfig fit_config_from_json(const json& j) {
  static const std::set<std::string> keys = {"step_scale", "max_iters", "tol_objective", "scheme", "radii",
                                             "seed",       "loss",      "link",          "beta",   "dykstra"};
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw std::invalid_argument("unknown solver config key '" + k + "'");
  }
  FitConfig c;
  if (j.contains("step_scale")) c.solver.step_scale = j.at("step_scale").get<double>();
  if (j.contains("max_iters")) c.solver.max_iters = j.at("max_iters").get<std::size_t>();
  if (j.contains("tol_objective")) c.solver.tol_objective = j.at("tol_objective").get<double>();
  if (j.contains("dykstra")) c.solver.dykstra = j.at("dykstra").get<bool>();
  if (j.contains("scheme")) c.scheme = j.at("scheme").get<std::string>();
  if (j.contains("radii")) c.radii = j.at("radii");
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("loss")) c.loss = j.at("loss").get<std::string>();
  if (j.contains("link")) c.link = j.at("link").get<std::string>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  return c;
}

LinkFunction make_link(const std::string& name, double beta) {
  if (name == "logistic") return LinkFunction::logistic(beta);
  if (name == "probit") return LinkFunction::probit();
  throw std::invalid_argument("link must be logistic or probit");
}

Loss make_loss(const std::string& name, const std::string& link, double beta) {
  if (name == "logistic") return Loss::logistic(beta);
  if (name == "hinge") return Loss::hinge();
  if (name == "nll") return Loss::neg_log_likelihood(make_link(link, beta));
  throw std::invalid_argument("loss must be logistic, hinge or nll");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

int cmd_gen(const std::string& config_path, const std::string& fixture, std::size_t fd, std::size_t fK,
            std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  fs::create_directories(dir);
  if (!fixture.empty()) {
    UserScheme scheme;
    std::size_t d = 2;
    if (fixture == "necessary") {
      scheme = fixture_counterexample_necessary();
    } else if (fixture == "sufficiency") {
      scheme = fixture_counterexample_sufficiency();
    } else if (fixture == "minimal") {
      scheme = minimal_multiuser_construction(fd, fK);
      d = fd;
    } else {
      throw std::invalid_argument("fixture must be necessary, sufficiency or minimal");
    }
    Rng rng(derive_seed(seed, 0, hash_tag("fixture-items")));
    std::ofstream s = open_out(dir / "scheme.txt");
    write_scheme(s, scheme);
    std::ofstream i = open_out(dir / "items.csv");
    write_items_csv(i, gen_items_gaussian(scheme.n, d, rng));
    out << "wrote " << (dir / "scheme.txt").string() << " and " << (dir / "items.csv").string() << '\n';
    return 0;
  }
  const ExperimentConfig cfg = ExperimentConfig::from_json(config_path.empty() ? json::object() : read_json(config_path));
  Rng model_rng(derive_seed(cfg.master_seed, 0, hash_tag("model")));
  const CrowdModel model = generate_model(cfg, model_rng);
  const std::size_t train = *std::max_element(cfg.pairs_per_user.begin(), cfg.pairs_per_user.end());
  Rng data_rng(derive_seed(cfg.master_seed, 0, hash_tag("data")));
  const ResponseDataset pools = sample_user_pools(model, cfg.make_link(), train + cfg.test_per_user, data_rng);
  Rng split_rng(derive_seed(cfg.master_seed, 0, hash_tag("split")));
  const auto [tr, te] = split_blocked_by_user(pools, train, split_rng);
  {
    std::ofstream f = open_out(dir / "items.csv");
    write_items_csv(f, model.X);
  }
  {
    std::ofstream f = open_out(dir / "train.csv");
    write_responses_csv(f, tr);
  }
  {
    std::ofstream f = open_out(dir / "test.csv");
    write_responses_csv(f, te);
  }
  const json truth{{"d", model.d()},
                   {"n", model.n()},
                   {"K", model.K()},
                   {"beta", cfg.beta},
                   {"link", cfg.link},
                   {"M_star", matrix_rows(model.M_star.matrix())},
                   {"U_star", matrix_columns(model.U_star)}};
  write_text(dir / "truth.json", truth.dump(2) + "\n");
  out << "wrote items.csv, train.csv, test.csv and truth.json to " << dir.string() << '\n';
  return 0;
}

int cmd_check(const std::string& items, const std::string& scheme_path, double tol, const Preprocess& pre,
              std::ostream& out) {
  const MatrixXd X = load_items(items, pre);
  std::ifstream in = open_in(scheme_path);
  const UserScheme scheme = read_scheme(in);
  const NecessaryReport nec = check_necessary(X, scheme, tol);
  const GammaSystem g = assemble_gamma(X, scheme);
  const std::size_t rank = g.gamma.rows() == 0 ? 0 : numeric_rank(g.gamma, tol);
  json report{{"d", nec.d},
              {"D", nec.D},
              {"K", nec.K},
              {"n", nec.n},
              {"gamma_rows", g.gamma.rows()},
              {"gamma_cols", g.gamma.cols()},
              {"gamma_rank", rank},
              {"identifiable", rank == g.unknowns()},
              {"necessary",
               {{"rows_ok", nec.rows_ok},
                {"cond_a", {{"pass", nec.cond_a}, {"selection_rank", nec.selection_rank_k}, {"item_rank", nec.item_rank_k}}},
                {"cond_b",
                 {{"pass", nec.cond_b},
                  {"sum_selection_rank", nec.sum_selection_rank},
                  {"sum_feature_rank", nec.sum_feature_rank},
                  {"required", nec.D + nec.d * nec.K}}},
                {"cond_c",
                 {{"pass", nec.cond_c},
                  {"stacked_selection_rank", nec.stacked_selection_rank},
                  {"stacked_feature_rank", nec.stacked_feature_rank},
                  {"enough_items", nec.enough_items}}},
                {"all", nec.all()}}}};
  if (scheme.has_partition()) {
    report["sufficient_incremental"] = check_sufficient_incremental(scheme);
    report["conjectured"] = check_conjectured(scheme);
  }
  out << report.dump(2) << '\n';
  return 0;
}

int cmd_fit(const std::string& items, const std::string& train_path, const std::string& config_path,
            const std::string& truth_path, const std::string& out_path, const Preprocess& pre, std::ostream& out) {
  const MatrixXd X = load_items(items, pre);
  const FitConfig cfg = fit_config_from_json(config_path.empty() ? json::object() : read_json(config_path));
  std::ifstream tin = open_in(train_path);
  const ResponseDataset train = read_responses_csv(tin, static_cast<std::size_t>(X.cols()),
                                                   static_cast<std::size_t>(X.rows()));
  const auto kind = scheme_kind_from_name(cfg.scheme);
  ConstraintScheme scheme;
  if (cfg.radii.empty() && kind != ConstraintScheme::Kind::psd_only) {
    if (truth_path.empty()) throw std::invalid_argument("fit needs radii in the config or --truth for oracle radii");
    CrowdModel truth = load_truth(truth_path, X);
    if (truth.K() != train.K) throw std::invalid_argument("truth user count does not match the training data");
    scheme = oracle_hyperparameters(truth, kind);
  } else {
    scheme = scheme_from_radii(kind, cfg.radii);
  }
  const FitResult fit = fit_erm(train, X, make_loss(cfg.loss, cfg.link, cfg.beta), scheme, cfg.solver);
  json residuals = json::object();
  for (const auto& r : fit.residuals) residuals[r.name] = r.value;
  const json model{{"d", X.rows()},
                   {"K", train.K},
                   {"M", matrix_rows(fit.M_hat.matrix())},
                   {"V", matrix_columns(fit.V_hat)},
                   {"scheme", scheme_json(scheme)},
                   {"loss", cfg.loss},
                   {"beta", cfg.beta},
                   {"objective", fit.objective},
                   {"iterations", fit.iterations},
                   {"best_iteration", fit.best_iteration},
                   {"residuals", residuals}};
  write_text(out_path, model.dump(2) + "\n");
  out << "objective " << fit.objective << " after " << fit.iterations << " iterations; wrote " << out_path << '\n';
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& items, const std::string& test_path,
             const std::string& truth_path, double alpha, const Preprocess& pre, std::ostream& out) {
  const MatrixXd X = load_items(items, pre);
  const json mj = read_json(model_path);
  const auto d = mj.at("d").get<Index>();
  if (d != X.rows()) throw std::invalid_argument("model dimension does not match the items");
  const SymMatrix M = sym_from_json(mj.at("M"), d);
  const MatrixXd V = from_columns(mj.at("V"), d);
  std::ifstream tin = open_in(test_path);
  const ResponseDataset test =
      read_responses_csv(tin, static_cast<std::size_t>(X.cols()), static_cast<std::size_t>(d),
                         static_cast<std::size_t>(V.cols()));
  MetricsReport rep;
  if (!truth_path.empty()) {
    const CrowdModel truth = load_truth(truth_path, X);
    rep = relative_errors(M, V, recover_ideal_points(M, V, alpha < 0 ? static_cast<double>(d) : alpha), truth);
  }
  rep.test_accuracy = test_accuracy(M, V, test, X);
  out << report_json(rep).dump(2) << '\n';
  return 0;
}

int cmd_validate(const std::string& config_path, const std::string& out_path, std::ostream& out) {
  const json report = validate_theory(config_path.empty() ? json::object() : read_json(config_path));
  if (out_path.empty()) {
    out << report.dump(2) << '\n';
  } else {
    write_text(out_path, report.dump(2) + "\n");
  }
  return report.at("all_pass").get<bool>() ? 0 : 1;
}

int cmd_experiment(const std::string& config_path, const std::string& out_path, const std::string& raw_path,
                   std::size_t threads, std::ostream& out) {
  ExperimentConfig cfg = ExperimentConfig::from_json(config_path.empty() ? json::object() : read_json(config_path));
  if (threads > 0) cfg.threads = threads;
  const std::vector<TrialRow> rows = run_experiment(cfg);
  {
    std::ofstream f = open_out(out_path);
    write_summary_csv(f, summarize(rows));
  }
  if (!raw_path.empty()) {
    std::ofstream f = open_out(raw_path);
    write_trial_csv(f, rows);
  }
  out << "wrote " << out_path << " (" << rows.size() << " trial rows)\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crowd metric learning from paired comparisons"};
  app.require_subcommand(1);

  Preprocess pre;
  auto add_pre = [&](CLI::App* c) {
    c->add_flag("--center", pre.center, "Subtract the mean item");
    c->add_flag("--maxnorm", pre.maxnorm, "Scale items so the largest norm is 1");
  };

  std::string config;
  std::string fixture;
  std::size_t fd = 2;
  std::size_t fK = 3;
  std::uint64_t seed = 1;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic crowd or a fixture scheme");
  gen->add_option("--config", config, "Experiment config (JSON)");
  gen->add_option("--fixture", fixture, "necessary | sufficiency | minimal");
  gen->add_option("--d", fd, "Dimension for the minimal construction");
  gen->add_option("--K", fK, "Users for the minimal construction");
  gen->add_option("--seed", seed, "Seed for fixture items");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string items;
  std::string scheme_path;
  double tol = kRankTol;
  auto* check = app.add_subcommand("check", "Identifiability report for a selection scheme");
  check->add_option("--items", items, "Item CSV")->required();
  check->add_option("--scheme", scheme_path, "Scheme file")->required();
  check->add_option("--tol", tol, "Relative rank tolerance");
  add_pre(check);

  std::string train;
  std::string truth;
  std::string out_path;
  auto* fit = app.add_subcommand("fit", "Fit a metric and pseudo-ideal points");
  fit->add_option("--items", items, "Item CSV")->required();
  fit->add_option("--train", train, "Response CSV")->required();
  fit->add_option("--config", config, "Solver config (JSON)");
  fit->add_option("--truth", truth, "Ground truth JSON, used for oracle radii");
  fit->add_option("--out", out_path, "Model JSON")->required();
  add_pre(fit);

  std::string model_path;
  std::string test;
  double alpha = -1.0;
  auto* eval = app.add_subcommand("eval", "Score a fitted model");
  eval->add_option("--model", model_path, "Model JSON")->required();
  eval->add_option("--items", items, "Item CSV")->required();
  eval->add_option("--test", test, "Response CSV")->required();
  eval->add_option("--truth", truth, "Ground truth JSON for recovery errors");
  eval->add_option("--alpha", alpha, "Ideal point regularizer (default d)");
  add_pre(eval);

  auto* validate = app.add_subcommand("validate-theory", "Numerical checks of the recovery identities");
  validate->add_option("--config", config, "JSON with seed and repeats");
  validate->add_option("--out", out_path, "Report path (default stdout)");

  std::string raw;
  std::size_t threads = 0;
  auto* exp = app.add_subcommand("experiment", "Run a seeded sweep and write CSV summaries");
  exp->add_option("--config", config, "Experiment config (JSON)");
  exp->add_option("--out", out_path, "Summary CSV")->required();
  exp->add_option("--raw", raw, "Per-trial CSV");
  exp->add_option("--threads", threads, "Parallel trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_gen(config, fixture, fd, fK, seed, out_dir, out);
    if (*check) return cmd_check(items, scheme_path, tol, pre, out);
    if (*fit) return cmd_fit(items, train, config, truth, out_path, pre, out);
    if (*eval) return cmd_eval(model_path, items, test, truth, alpha, pre, out);
    if (*validate) return cmd_validate(config, out_path, out);
    if (*exp) return cmd_experiment(config, out_path, raw, threads, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace crowdmetric
