#pragma once

// Dense symmetric-matrix kernels: half-vectorization, projections onto the
// PSD cone and norm balls, numeric rank and pseudoinverse.

#include <Eigen/Dense>

#include <cstddef>

namespace crowdmetric {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Default relative tolerance for numeric rank decisions (relative to the
// largest singular value).
inline constexpr double kRankTol = 1e-9;

// Number of unique entries of a symmetric d x d matrix, d(d+1)/2.
constexpr std::size_t half_dim(std::size_t d) { return d * (d + 1) / 2; }

// d x d real symmetric matrix. Symmetry is exact: the constructor rejects
// any input with entries[i][j] != entries[j][i].
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(MatrixXd a);

  static SymMatrix zero(std::size_t d);
  static SymMatrix identity(std::size_t d);
  // (A + A^T) / 2, which is exactly symmetric in IEEE arithmetic.
  static SymMatrix symmetrized(const MatrixXd& a);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const MatrixXd& matrix() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  double frobenius_norm() const { return m_.norm(); }
  // Ascending eigenvalues.
  VectorXd eigenvalues() const;
  double min_eigenvalue() const;

  friend bool operator==(const SymMatrix& a, const SymMatrix& b) {
    return a.m_.rows() == b.m_.rows() && a.m_ == b.m_;
  }

 private:
  MatrixXd m_;
};

// Length d(d+1)/2 vector laid out as (1,1),(1,2),...,(1,d),(2,2),...,(d,d).
struct HalfVec {
  std::size_t d = 0;
  VectorXd values;

  HalfVec() = default;
  HalfVec(std::size_t dim, VectorXd v);
};

// Index of entry (i, j), i <= j, inside a HalfVec of dimension d.
std::size_t half_index(std::size_t i, std::size_t j, std::size_t d);

HalfVec sym_vec_upper(const SymMatrix& a);
HalfVec sym_vec_upper(const MatrixXd& a);
// Diagonal kept, off-diagonal doubled, so <nu(M), kron_sym(x)> = x^T M x.
HalfVec nu(const SymMatrix& m);
SymMatrix nu_inverse(const HalfVec& h);
// Unique entries of x x^T in HalfVec order.
HalfVec kron_sym(const VectorXd& x);

// Frobenius-nearest PSD matrix (negative eigenvalues clipped to zero).
SymMatrix psd_project(const SymMatrix& a);

SymMatrix frobenius_ball_project(const SymMatrix& a, double lambda);
MatrixXd frobenius_ball_project(const MatrixXd& a, double lambda);
VectorXd l2_ball_project(const VectorXd& v, double lambda);

// Euclidean projection of a nonnegative vector onto
// {s >= 0, sum(s) <= lambda}.
VectorXd capped_simplex_project(const VectorXd& s, double lambda);

// Euclidean projection onto the nuclear-norm ball of radius lambda.
MatrixXd nuclear_ball_project(const MatrixXd& b, double lambda);
// Projection of a symmetric matrix onto {PSD} intersected with the
// nuclear-norm ball (trace <= lambda). Exact: eigenvalues are projected onto
// the capped simplex.
SymMatrix psd_trace_ball_project(const SymMatrix& a, double lambda);

double nuclear_norm(const MatrixXd& a);
VectorXd singular_values(const MatrixXd& a);

// Count of singular values strictly greater than tol * sigma_max.
std::size_t numeric_rank(const MatrixXd& a, double tol = kRankTol);
// Moore-Penrose pseudoinverse; singular values <= tol * sigma_max are
// treated as zero.
MatrixXd pseudoinverse(const MatrixXd& a, double tol = kRankTol);
// min(rows, cols)-th singular value; zero for an empty matrix.
double smallest_singular_value(const MatrixXd& a);

}  // namespace crowdmetric
