#include <doctest.h>

#include "crowdmetric/evaluation.hpp"

#include <cmath>

using namespace crowdmetric;

namespace {

CrowdModel random_model(Rng& rng, std::size_t d, std::size_t n, std::size_t K, std::size_t r = 1) {
  return make_model(gen_items_gaussian(n, d, rng), gen_metric(d, r, rng, MetricMode::low_rank),
                    gen_users_gaussian(K, d, rng));
}

MatrixXd noise(Eigen::Index r, Eigen::Index c, Rng& rng, double s) {
  std::normal_distribution<double> g(0, s);
  MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a;
}

// Direct average of Z Z^T and Z^T Z over every ordered pair and user.
SecondMoments enumerate_moments(const MatrixXd& X, std::size_t K) {
  const auto d = X.rows(), n = X.cols();
  const auto Ki = static_cast<Eigen::Index>(K);
  MatrixXd A = MatrixXd::Zero(d, d), B = MatrixXd::Zero(d + Ki, d + Ki);
  double count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      for (Eigen::Index k = 0; k < Ki; ++k) {
        MatrixXd Z = MatrixXd::Zero(d, d + Ki);
        Z.leftCols(d) = X.col(i) * X.col(i).transpose() - X.col(j) * X.col(j).transpose();
        Z.col(d + k) = X.col(i) - X.col(j);
        A += Z * Z.transpose();
        B += Z.transpose() * Z;
        ++count;
      }
    }
  }
  return {A / count, B / count};
}

}  // namespace

TEST_CASE("test accuracy") {
  Rng rng(1);
  const CrowdModel m = random_model(rng, 3, 12, 3);
  const auto hard = sample_dataset(m, LinkFunction::logistic(1e6), 2000, rng);
  CHECK(test_accuracy(m.M_star, m.V_star, hard, m.X) >= 0.999);

  ResponseDataset coin = sample_dataset(m, LinkFunction::logistic(1.0), 10000, rng);
  std::bernoulli_distribution b(0.5);
  for (auto& r : coin.records) r.y = b(rng) ? 1 : -1;
  CHECK(std::abs(test_accuracy(m.M_star, m.V_star, coin, m.X) - 0.5) < 3 * 0.005);

  double pos = 0;
  for (const auto& r : coin.records) pos += r.y == 1;
  CHECK(test_accuracy(SymMatrix::zero(3), MatrixXd::Zero(3, 3), coin, m.X) == doctest::Approx(pos / coin.size()));
  CHECK_THROWS_AS(test_accuracy(m.M_star, m.V_star, ResponseDataset{12, 3, 3, {}}, m.X), std::invalid_argument);
}

TEST_CASE("relative errors") {
  Rng rng(2);
  const CrowdModel m = random_model(rng, 3, 6, 2);
  const MatrixXd U = pseudoinverse(m.M_star.matrix()) * m.M_star.matrix() * m.U_star;
  auto r = relative_errors(m.M_star, m.V_star, U, m);
  CHECK(*r.rel_metric_error == doctest::Approx(0.0));
  CHECK(*r.rel_ideal_point_error < 1e-12);
  CHECK(*r.rel_pseudo_error == 0.0);
  r = relative_errors(SymMatrix(2 * m.M_star.matrix()), m.V_star, U, m);
  CHECK(*r.rel_metric_error == doctest::Approx(1.0));

  // ideal points in the kernel of a rank-deficient metric
  const SymMatrix M((MatrixXd(2, 2) << 1, 0, 0, 0).finished());
  const CrowdModel k = make_model(MatrixXd::Identity(2, 3), M, (MatrixXd(2, 1) << 0, 1).finished());
  const auto rk = relative_errors(M, k.V_star, MatrixXd::Zero(2, 1), k);
  CHECK_FALSE(rk.rel_ideal_point_error.has_value());
  CHECK_FALSE(rk.rel_pseudo_error.has_value());
  CHECK(rk.rel_metric_error.has_value());
}

TEST_CASE("kl bernoulli") {
  CHECK(kl_bernoulli(0.5, 0.5) == 0.0);
  CHECK(kl_bernoulli(0.9, 0.1) == doctest::Approx(0.8 * std::log(9.0)));
  CHECK(kl_bernoulli(0.9, 0.1) >= 1.28);
  CHECK_THROWS_AS(kl_bernoulli(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(kl_bernoulli(0.5, 1.0), std::invalid_argument);
  Rng rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int t = 0; t < 10000; ++t) {
    const double p = u(rng), q = u(rng);
    CHECK(kl_bernoulli(p, q) >= 2 * (p - q) * (p - q) - 1e-15);
  }
}

TEST_CASE("exact risks") {
  Rng rng(4);
  const CrowdModel m = random_model(rng, 2, 8, 2);
  for (const auto& link : {LinkFunction::logistic(2.0), LinkFunction::probit()}) {
    const Loss nll = Loss::neg_log_likelihood(link);
    CHECK(excess_risk_kl(m.M_star, m.V_star, m, link) == 0.0);
    for (int t = 0; t < 10; ++t) {
      const SymMatrix M = SymMatrix::symmetrized(m.M_star.matrix() + noise(2, 2, rng, 0.3));
      const MatrixXd V = m.V_star + noise(2, 2, rng, 0.3);
      const double direct = true_risk_exact(M, V, m, link, nll) - true_risk_exact(m.M_star, m.V_star, m, link, nll);
      CHECK(std::abs(direct - excess_risk_kl(M, V, m, link)) < 1e-10);
      CHECK(excess_risk_kl(M, V, m, link) > 0.0);
    }
  }
  // brute expectation over sampled labels
  const auto link = LinkFunction::logistic(1.0);
  const SymMatrix M = SymMatrix::identity(2);
  const MatrixXd V = MatrixXd::Zero(2, 2);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) {
      for (std::size_t k = 0; k < 2; ++k) {
        const double ds = delta(m.M_star, m.V_star.col(k), m.X.col(i), m.X.col(j));
        const double dh = delta(M, V.col(k), m.X.col(i), m.X.col(j));
        sum += link.f(ds) * Loss::hinge().value(dh) + link.f(-ds) * Loss::hinge().value(-dh);
        ++count;
      }
    }
  }
  CHECK(true_risk_exact(M, V, m, link, Loss::hinge()) == doctest::Approx(sum / count).epsilon(1e-12));
  Rng big(5);
  const CrowdModel huge = random_model(big, 2, 61, 1);
  CHECK_THROWS_AS(excess_risk_kl(huge.M_star, huge.V_star, huge, link), std::invalid_argument);
}

TEST_CASE("C_f") {
  CHECK(c_f(LinkFunction::logistic(1.0), 0.0) == doctest::Approx(0.25));
  CHECK(c_f(LinkFunction::logistic(1.0), 60.0) < 1e-20);
  CHECK_THROWS_AS(c_f(LinkFunction::probit(), -1.0), std::invalid_argument);
  for (const auto& link : {LinkFunction::logistic(3.0), LinkFunction::probit()}) {
    for (double gamma : {0.1, 1.0, 2.5}) {
      double lo = INFINITY;
      for (int s = 0; s <= 10000; ++s) lo = std::min(lo, link.derivative(-gamma + 2 * gamma * s / 10000.0));
      CHECK(std::abs(lo - c_f(link, gamma)) < 1e-10);
    }
  }
}

TEST_CASE("recovery bound") {
  Rng rng(6);
  const CrowdModel m = random_model(rng, 3, 15, 3);
  const auto link = LinkFunction::logistic(1.0);
  const auto exact = recovery_bound_report(m.M_star, m.V_star, m, link);
  CHECK(exact.lhs == 0.0);
  CHECK(exact.excess_risk == 0.0);
  for (int t = 0; t < 50; ++t) {
    const SymMatrix M = SymMatrix::symmetrized(m.M_star.matrix() + noise(3, 3, rng, 0.5));
    const MatrixXd V = m.V_star + noise(3, 3, rng, 0.5);
    const auto r = recovery_bound_report(M, V, m, link);
    CHECK(r.inequality_slack >= -1e-9);
    CHECK(r.lhs > 0.0);
  }
  const CrowdModel tiny = random_model(rng, 3, 9, 2);
  CHECK(sigma_min_centered(tiny.X) == 0.0);
  const auto rt = recovery_bound_report(SymMatrix::identity(3), MatrixXd::Zero(3, 2), tiny, link);
  CHECK(rt.lhs == 0.0);
  CHECK(rt.inequality_slack >= 0.0);
}

TEST_CASE("centered singular value matches the complete selection") {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd X = gen_items_gaussian(12, 2, rng);
    const MatrixXd SF = to_dense(complete_selection(12)) * item_features(X);
    const double s = smallest_singular_value(SF);
    const double sj = sigma_min_centered(X);
    CHECK(s * s == doctest::Approx(12 * sj * sj).epsilon(1e-8));
  }
}

TEST_CASE("second moments") {
  const auto e = expected_second_moments(MatrixXd::Identity(2, 2), 1);
  CHECK((e.E_ZZt - (MatrixXd(2, 2) << 2, -1, -1, 2).finished()).norm() < 1e-12);
  const auto same = expected_second_moments(MatrixXd::Ones(3, 4), 2);
  CHECK(same.E_ZZt.norm() == 0.0);
  CHECK(same.E_ZtZ.norm() == 0.0);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 9, K = 1 + t % 4, d = 1 + t % 3;
    const MatrixXd X = gen_items_gaussian(n, d, rng);
    const auto closed = expected_second_moments(X, K);
    const auto brute = enumerate_moments(X, K);
    CHECK((closed.E_ZZt - brute.E_ZZt).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((closed.E_ZtZ - brute.E_ZtZ).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(closed.E_ZZt.trace() == doctest::Approx(closed.E_ZtZ.trace()).epsilon(1e-10));
    CHECK(SymMatrix::symmetrized(closed.E_ZtZ).min_eigenvalue() >= -1e-10);
  }
}
