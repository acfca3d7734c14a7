// One line per acceptance criterion; exit code 1 if any fails.

#include "crowdmetric/evaluation.hpp"
#include "crowdmetric/experiment.hpp"
#include "crowdmetric/identifiability.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

using namespace crowdmetric;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o{false, ""};
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %-3s %-28s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  std::normal_distribution<double> g(0, s);
  MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a;
}

Outcome exact_recovery() {
  const auto t0 = Clock::now();
  const UserScheme scheme = minimal_multiuser_construction(2, 3);
  double worst = 0;
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, 0, hash_tag("exact")));
    const CrowdModel m = make_model(gen_items_gaussian(6, 2, rng), gen_metric(2, 2, rng, MetricMode::full_rank),
                                    gen_users_gaussian(3, 2, rng));
    const auto sol = solve_unquantized(m.X, scheme, unquantized_measurements(m, scheme));
    const double num = std::sqrt((sol.M.matrix() - m.M_star.matrix()).squaredNorm() + (sol.V - m.V_star).squaredNorm());
    const double den = std::sqrt(m.M_star.matrix().squaredNorm() + m.V_star.squaredNorm());
    worst = std::max(worst, num / den);
    ok += num / den <= 1e-8;
  }
  const double t = seconds_since(t0);
  return {ok == 100 && t < 1.0, fmt("%.0f/100 seeds, worst rel error %.2e, %.3fs", ok, worst, t)};
}

Outcome counterexample() {
  const UserScheme s = fixture_counterexample_necessary();
  int ok = 0;
  std::size_t max_rank = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, 0, hash_tag("counterexample")));
    const MatrixXd X = gen_items_gaussian(s.n, 2, rng);
    const std::size_t rank = numeric_rank(assemble_gamma(X, s).gamma);
    max_rank = std::max(max_rank, rank);
    ok += check_necessary(X, s).all() && rank < 9;
  }
  return {ok == 20, fmt("%.0f/20 draws pass the necessary checks with rank < 9 (max rank %.0f)", ok, max_rank)};
}

Outcome tfae() {
  std::size_t count = 0, bad = 0;
  for (std::size_t n = 2; n <= 5; ++n) {
    std::vector<Pair> pairs;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (p != q) pairs.push_back({p, q});
    for (std::size_t m = 1; m <= 4; ++m) {
      std::vector<std::size_t> pick(m, 0);
      while (true) {
        std::vector<Pair> rows;
        for (auto i : pick) rows.push_back(pairs[i]);
        const SelectionMatrix s(n, rows);
        const auto perm = find_incremental_permutation(s);
        const bool found = perm && is_incremental(s.subset(*perm));
        bad += (selection_rank(s) == m) != found;
        ++count;
        std::size_t k = 0;
        while (k < m && ++pick[k] == pairs.size()) pick[k++] = 0;
        if (k == m) break;
      }
    }
  }
  return {bad == 0, fmt("%.0f matrices, %.0f discrepancies", count, bad)};
}

Outcome centering() {
  int bad = 0;
  for (std::size_t n = 2; n <= 50; ++n) {
    const MatrixXd S = to_dense(complete_selection(n));
    const MatrixXd nJ = static_cast<double>(n) * MatrixXd::Identity(n, n) - MatrixXd::Ones(n, n);
    bad += !(S.transpose() * S == nJ);
  }
  return {bad == 0, fmt("exact for n = 2..50, %.0f mismatches", bad)};
}

Outcome random_rank() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::ostringstream msg;
  for (auto [n, r] : {std::pair<std::size_t, std::size_t>{6, 3}, {8, 4}}) {
    const auto bound = randrank_bound(1, r, n, 0.1);
    Rng rng(derive_seed(n, r, hash_tag("randrank")));
    const SelectionMatrix s0(n, {{0, 1}});
    double sum = 0;
    std::size_t over = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      const auto c = sample_until_rank(s0, r, rng).count;
      sum += static_cast<double>(c);
      over += static_cast<double>(c) > bound.tail;
    }
    const double mean = sum / trials;
    const double tail = static_cast<double>(over) / trials;
    pass = pass && mean <= bound.expected && tail <= 0.1;
    msg << fmt("n=%.0f: mean %.3f <= %.3f, ", n, mean, bound.expected) << fmt("tail %.4f; ", tail);
  }
  const double t = seconds_since(t0);
  msg << fmt("%.2fs", t);
  return {pass && t < 10.0, msg.str()};
}

Outcome newspan() {
  Rng rng(hash_tag("newspan"));
  int checked = 0, bad = 0;
  while (checked < 200) {
    const std::size_t n = 3 + static_cast<std::size_t>(checked % 5);
    const std::size_t m = 1 + static_cast<std::size_t>(rng() % (n - 1));
    const SelectionMatrix s = sample_uniform_pairs(n, m, rng);
    const std::size_t r = selection_rank(s);
    if (r != m) continue;
    const double p = newspan_probability(s).value();
    const double nn = static_cast<double>(n * (n - 1));
    const double lo = 2.0 * r / nn, hi = static_cast<double>((r + 1) * r) / nn;
    bad += p < lo - 1e-15 || p > hi + 1e-15;
    ++checked;
  }
  return {bad == 0, fmt("%.0f full-rank matrices, %.0f bracket violations", checked, bad)};
}

Outcome moments() {
  Rng rng(hash_tag("moments"));
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng() % 9, K = 1 + rng() % 4, d = 1 + rng() % 4;
    const MatrixXd X = gen_items_gaussian(n, d, rng);
    const auto closed = expected_second_moments(X, K);
    const auto Ki = static_cast<Eigen::Index>(K);
    const auto di = static_cast<Eigen::Index>(d);
    MatrixXd A = MatrixXd::Zero(di, di), B = MatrixXd::Zero(di + Ki, di + Ki);
    double count = 0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (i == j) continue;
        for (Eigen::Index k = 0; k < Ki; ++k) {
          MatrixXd Z = MatrixXd::Zero(di, di + Ki);
          Z.leftCols(di) = X.col(i) * X.col(i).transpose() - X.col(j) * X.col(j).transpose();
          Z.col(di + k) = X.col(i) - X.col(j);
          A += Z * Z.transpose();
          B += Z.transpose() * Z;
          ++count;
        }
      }
    }
    worst = std::max({worst, (closed.E_ZZt - A / count).cwiseAbs().maxCoeff(),
                      (closed.E_ZtZ - B / count).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-10, fmt("50 instances, worst abs difference %.2e", worst)};
}

Outcome recovery_inequality() {
  Rng rng(hash_tag("recovery"));
  const auto link = LinkFunction::logistic(1.0);
  double worst = INFINITY;
  for (int t = 0; t < 50; ++t) {
    const CrowdModel m = make_model(gen_items_gaussian(15, 3, rng), gen_metric(3, 1 + t % 3, rng, MetricMode::low_rank),
                                    gen_users_gaussian(3, 3, rng));
    const double scale = 0.05 + 0.1 * (t % 10);
    const SymMatrix M = SymMatrix::symmetrized(m.M_star.matrix() + gaussian(3, 3, rng, scale));
    const MatrixXd V = m.V_star + gaussian(3, 3, rng, scale);
    worst = std::min(worst, recovery_bound_report(M, V, m, link).inequality_slack);
  }
  return {worst >= -1e-9, fmt("50 perturbations, min slack %.3e", worst)};
}

Outcome erm_trends() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg;  // defaults are the desk-scale setting
  const auto summary = summarize(run_experiment(cfg));
  std::map<std::string, std::vector<double>> acc;
  for (const auto& s : summary) acc[s.scheme].push_back(s.accuracy_mean);
  bool trends = true;
  for (const auto& [name, a] : acc) {
    int inversions = 0;
    for (std::size_t i = 1; i < a.size(); ++i) inversions += a[i] < a[i - 1];
    trends = trends && inversions <= 1;
  }
  const double nf = acc.at("nuclear_full").back();
  const double fro = acc.at("frobenius_metric").back();
  const double oracle = acc.at("oracle").back();
  const double t = seconds_since(t0);
  std::ostringstream msg;
  msg << "(a) trends " << (trends ? "ok" : "violated")
      << fmt("; (b) nuclear_full %.4f vs frobenius %.4f", nf, fro)
      << fmt("; (c) %.4f >= 0.8 x oracle %.4f; %.1fs", nf, oracle, t);
  return {trends && nf >= fro - 0.02 && nf >= 0.8 * oracle && t <= 600.0, msg.str()};
}

Outcome gradients() {
  Rng rng(hash_tag("gradients"));
  const CrowdModel m = make_model(gen_items_gaussian(10, 3, rng), gen_metric(3, 2, rng, MetricMode::low_rank),
                                  gen_users_gaussian(3, 3, rng));
  const auto data = sample_user_pools(m, LinkFunction::logistic(2.0), 15, rng);
  const double h = 1e-6;
  double worst = 0;
  for (const auto& loss : {Loss::hinge(), Loss::logistic(2.0), Loss::neg_log_likelihood(LinkFunction::probit())}) {
    int points = 0;
    while (points < 100) {
      const SymMatrix M = SymMatrix::symmetrized(gaussian(3, 3, rng));
      const MatrixXd V = gaussian(3, 3, rng);
      bool kink = false;
      for (const auto& r : data.records) {
        kink = kink || std::abs(r.y * delta(M, V.col(r.k), m.X.col(r.i), m.X.col(r.j)) - 1.0) < 1e-3;
      }
      if (kink) continue;
      ++points;
      const auto g = risk_subgradient(M, V, data, m.X, loss);
      const HalfVec base = nu(M);
      VectorXd fd(base.values.size() + V.size());
      for (Eigen::Index i = 0; i < base.values.size(); ++i) {
        HalfVec up = base, dn = base;
        up.values(i) += h;
        dn.values(i) -= h;
        fd(i) = (empirical_risk(nu_inverse(up), V, data, m.X, loss) - empirical_risk(nu_inverse(dn), V, data, m.X, loss)) /
                (2 * h);
      }
      for (Eigen::Index i = 0; i < V.size(); ++i) {
        MatrixXd up = V, dn = V;
        up.data()[i] += h;
        dn.data()[i] -= h;
        fd(base.values.size() + i) =
            (empirical_risk(M, up, data, m.X, loss) - empirical_risk(M, dn, data, m.X, loss)) / (2 * h);
      }
      VectorXd an(fd.size());
      an << g.d_nu, Eigen::Map<const VectorXd>(g.d_V.data(), g.d_V.size());
      worst = std::max(worst, (an - fd).norm() / std::max(an.norm(), 1e-8));
    }
  }
  return {worst <= 1e-5, fmt("300 points, worst relative error %.2e", worst)};
}

Outcome kl_bound() {
  Rng rng(hash_tag("kl"));
  std::uniform_real_distribution<double> u(1e-9, 1 - 1e-9);
  int violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const double p = u(rng), q = u(rng);
    violations += kl_bernoulli(p, q) < 2 * (p - q) * (p - q);
  }
  const auto link = LinkFunction::logistic(2.0);
  const Loss nll = Loss::neg_log_likelihood(link);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const CrowdModel m = make_model(gen_items_gaussian(8, 3, rng), gen_metric(3, 1, rng, MetricMode::low_rank),
                                    gen_users_gaussian(2, 3, rng));
    const SymMatrix M = SymMatrix::symmetrized(m.M_star.matrix() + gaussian(3, 3, rng, 0.3));
    const MatrixXd V = m.V_star + gaussian(3, 2, rng, 0.3);
    const double direct = true_risk_exact(M, V, m, link, nll) - true_risk_exact(m.M_star, m.V_star, m, link, nll);
    worst = std::max(worst, std::abs(direct - excess_risk_kl(M, V, m, link)));
  }
  return {violations == 0 && worst <= 1e-10,
          fmt("%.0f bound violations in 10^4 pairs; excess-risk identity worst %.2e", violations, worst)};
}

Outcome csv_loader() {
  Rng rng(hash_tag("csv"));
  const MatrixXd X = gaussian(3, 37, rng, 40.0).array() + 50.0;
  std::stringstream ss;
  write_items_csv(ss, X);
  const MatrixXd back = read_items_csv(ss);
  const MatrixXd P = maxnorm_items(center_items(back));
  const double max_norm = P.colwise().norm().maxCoeff();
  const double mean = P.rowwise().mean().norm();

  const CrowdModel m = make_model(back, gen_metric(3, 3, rng, MetricMode::full_rank), gen_users_gaussian(48, 3, rng));
  const auto data = sample_dataset(m, LinkFunction::logistic(1.0), 500, rng);
  std::stringstream rs;
  write_responses_csv(rs, data);
  const bool responses = read_responses_csv(rs, 37, 3, 48).records == data.records;
  const bool round_trip = back == X && responses;
  return {round_trip && std::abs(max_norm - 1.0) <= 1e-12 && mean < 1e-12,
          std::string("round trip ") + (round_trip ? "ok" : "failed") +
              fmt("; 3 x 37 items, max norm - 1 = %.1e, mean norm %.1e", max_norm - 1.0, mean)};
}

}  // namespace

int main() {
  report("1", "exact unquantized recovery", exact_recovery);
  report("2", "counterexample reproduction", counterexample);
  report("3", "TFAE equivalence", tfae);
  report("4", "centering identity", centering);
  report("5", "random-rank bounds", random_rank);
  report("6", "newspan bracket", newspan);
  report("7", "moment identity", moments);
  report("8", "recovery inequality", recovery_inequality);
  report("9", "ERM trends", erm_trends);
  report("10", "gradient correctness", gradients);
  report("11", "KL bound", kl_bound);
  report("CSV", "CSV loader", csv_loader);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
