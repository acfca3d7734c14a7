#include "crowdmetric/linalg.hpp"

#include "crowdmetric/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;

Eigen::SelfAdjointEigenSolver<MatrixXd> eigensolve(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) {
    throw NumericalError("symmetric eigendecomposition failed");
  }
  return es;
}

Eigen::BDCSVD<MatrixXd> svd_full(const MatrixXd& a) {
  Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
    throw NumericalError("singular value decomposition failed");
  }
  return svd;
}

void require_positive(double lambda, const char* what) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": radius must be > 0");
  }
}

}  // namespace

SymMatrix::SymMatrix(MatrixXd a) : m_(std::move(a)) {
  if (m_.rows() != m_.cols() || m_.rows() < 1) {
    throw std::invalid_argument("SymMatrix: expected a non-empty square matrix");
  }
  for (Index i = 0; i < m_.rows(); ++i) {
    for (Index j = i + 1; j < m_.cols(); ++j) {
      if (m_(i, j) != m_(j, i)) {
        throw std::invalid_argument("SymMatrix: input is not exactly symmetric");
      }
    }
  }
}

SymMatrix SymMatrix::zero(std::size_t d) {
  return SymMatrix(MatrixXd::Zero(static_cast<Index>(d), static_cast<Index>(d)));
}

SymMatrix SymMatrix::identity(std::size_t d) {
  return SymMatrix(MatrixXd::Identity(static_cast<Index>(d), static_cast<Index>(d)));
}

SymMatrix SymMatrix::symmetrized(const MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("symmetrized: expected a square matrix");
  }
  MatrixXd s = 0.5 * (a + a.transpose());
  return SymMatrix(std::move(s));
}

VectorXd SymMatrix::eigenvalues() const { return eigensolve(m_).eigenvalues(); }

double SymMatrix::min_eigenvalue() const { return eigenvalues()(0); }

HalfVec::HalfVec(std::size_t dim, VectorXd v) : d(dim), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != half_dim(d)) {
    throw std::invalid_argument("HalfVec: length must be d(d+1)/2");
  }
}

std::size_t half_index(std::size_t i, std::size_t j, std::size_t d) {
  if (i > j) std::swap(i, j);
  // Rows 0..i-1 contribute d, d-1, ..., d-i+1 entries.
  return i * d - i * (i - 1) / 2 + (j - i);
}

HalfVec sym_vec_upper(const MatrixXd& a) {
  const auto d = static_cast<std::size_t>(a.rows());
  VectorXd out(static_cast<Index>(half_dim(d)));
  Index k = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = i; j < a.cols(); ++j) out(k++) = a(i, j);
  }
  return HalfVec(d, std::move(out));
}

HalfVec sym_vec_upper(const SymMatrix& a) { return sym_vec_upper(a.matrix()); }

HalfVec nu(const SymMatrix& m) {
  HalfVec h = sym_vec_upper(m);
  const std::size_t d = m.dim();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      h.values(static_cast<Index>(half_index(i, j, d))) *= 2.0;
    }
  }
  return h;
}

SymMatrix nu_inverse(const HalfVec& h) {
  const auto d = static_cast<Index>(h.d);
  MatrixXd m(d, d);
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    m(i, i) = h.values(k++);
    for (Index j = i + 1; j < d; ++j) {
      // halving is exact
      const double v = 0.5 * h.values(k++);
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return SymMatrix(std::move(m));
}

HalfVec kron_sym(const VectorXd& x) {
  const auto d = static_cast<std::size_t>(x.size());
  VectorXd out(static_cast<Index>(half_dim(d)));
  Index k = 0;
  for (Index i = 0; i < x.size(); ++i) {
    for (Index j = i; j < x.size(); ++j) out(k++) = x(i) * x(j);
  }
  return HalfVec(d, std::move(out));
}

SymMatrix psd_project(const SymMatrix& a) {
  const auto es = eigensolve(a.matrix());
  const VectorXd& w = es.eigenvalues();
  if (w(0) >= 0.0) return a;
  const VectorXd clipped = w.cwiseMax(0.0);
  const MatrixXd& q = es.eigenvectors();
  return SymMatrix::symmetrized(q * clipped.asDiagonal() * q.transpose());
}

SymMatrix frobenius_ball_project(const SymMatrix& a, double lambda) {
  require_positive(lambda, "frobenius_ball_project");
  const double norm = a.frobenius_norm();
  if (norm <= lambda) return a;
  return SymMatrix::symmetrized(a.matrix() * (lambda / norm));
}

MatrixXd frobenius_ball_project(const MatrixXd& a, double lambda) {
  require_positive(lambda, "frobenius_ball_project");
  const double norm = a.norm();
  if (norm <= lambda) return a;
  return a * (lambda / norm);
}

VectorXd l2_ball_project(const VectorXd& v, double lambda) {
  require_positive(lambda, "l2_ball_project");
  const double norm = v.norm();
  if (norm <= lambda) return v;
  return v * (lambda / norm);
}

VectorXd capped_simplex_project(const VectorXd& s, double lambda) {
  require_positive(lambda, "capped_simplex_project");
  VectorXd pos = s.cwiseMax(0.0);
  if (pos.sum() <= lambda) return pos;
  // Project onto {x >= 0, sum x = lambda}: find theta with
  // sum max(s_i - theta, 0) = lambda by scanning the sorted values.
  std::vector<double> sorted(s.data(), s.data() + s.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - lambda) / static_cast<double>(k + 1);
    if (k + 1 == sorted.size() || sorted[k + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  return (s.array() - theta).cwiseMax(0.0).matrix();
}

MatrixXd nuclear_ball_project(const MatrixXd& b, double lambda) {
  require_positive(lambda, "nuclear_ball_project");
  if (b.size() == 0) return b;
  const auto svd = svd_full(b);
  const VectorXd& s = svd.singularValues();
  if (s.sum() <= lambda) return b;
  const VectorXd projected = capped_simplex_project(s, lambda);
  return svd.matrixU() * projected.asDiagonal() * svd.matrixV().transpose();
}

SymMatrix psd_trace_ball_project(const SymMatrix& a, double lambda) {
  require_positive(lambda, "psd_trace_ball_project");
  const auto es = eigensolve(a.matrix());
  const VectorXd w = capped_simplex_project(es.eigenvalues(), lambda);
  const MatrixXd& q = es.eigenvectors();
  return SymMatrix::symmetrized(q * w.asDiagonal() * q.transpose());
}

VectorXd singular_values(const MatrixXd& a) {
  if (a.size() == 0) return VectorXd();
  Eigen::BDCSVD<MatrixXd> svd(a);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
    throw NumericalError("singular value decomposition failed");
  }
  return svd.singularValues();
}

double nuclear_norm(const MatrixXd& a) { return singular_values(a).sum(); }

std::size_t numeric_rank(const MatrixXd& a, double tol) {
  if (tol < 0.0) throw std::invalid_argument("numeric_rank: tol must be >= 0");
  const VectorXd s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = tol * s(0);
  std::size_t rank = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++rank;
  }
  return rank;
}

MatrixXd pseudoinverse(const MatrixXd& a, double tol) {
  if (tol < 0.0) throw std::invalid_argument("pseudoinverse: tol must be >= 0");
  if (a.size() == 0) return MatrixXd::Zero(a.cols(), a.rows());
  const auto svd = svd_full(a);
  const VectorXd& s = svd.singularValues();
  const double cutoff = tol * s(0);
  VectorXd inv = VectorXd::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double smallest_singular_value(const MatrixXd& a) {
  const VectorXd s = singular_values(a);
  if (s.size() == 0) return 0.0;
  return s(s.size() - 1);
}

}  // namespace crowdmetric
