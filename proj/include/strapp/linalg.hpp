#ifndef STRAPP_LINALG_HPP
#define STRAPP_LINALG_HPP

#include <Eigen/Dense>
#include <cmath>

#include "strapp/config.hpp"
#include "strapp/errors.hpp"

namespace strapp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline void require_symmetric(const Matrix& m,
                              const Tolerances& tol = default_tolerances()) {
  if (m.rows() != m.cols()) throw NotSymmetric("matrix is not square");
  const double scale = m.norm();
  const double asym = (m - m.transpose()).norm();
  if (asym > tol.symmetry_rtol * std::max(scale, 1.0))
    throw NotSymmetric("matrix is not symmetric");
}

/// Symmetric PSD square root via spectral decomposition.
///
/// Eigenvalues within the clamp band [-psd_band * ||M||, 0) are treated as
/// roundoff and set to zero; anything below the band is an error.
inline Matrix spd_sqrt(const Matrix& m,
                       const Tolerances& tol = default_tolerances()) {
  require_symmetric(m, tol);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double band = tol.psd_band * std::max(m.norm(), 1.0);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -band) throw IndefiniteMatrix("eigenvalue below clamp band");
    if (lambda[i] < 0.0) lambda[i] = 0.0;
  }
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

/// Directional derivative dS of the matrix square root, given S = sqrt(M)
/// and the direction dM: solves the Sylvester equation
///
///   S * dS + dS * S = dM
///
/// through its vectorized form  vec(dS) = (S (x) I + I (x) S)^{-1} vec(dM).
/// The explicit p^2 x p^2 Kronecker system is deliberate: dimensions stay
/// in the single digits throughout, and it mirrors the product-rule
/// identity the result is later checked against.
inline Matrix sqrt_derivative(const Matrix& s, const Matrix& dm,
                              const Tolerances& tol = default_tolerances()) {
  require_symmetric(s, tol);
  require_symmetric(dm, tol);
  if (s.rows() != dm.rows()) throw DimensionMismatch("S and dM sizes differ");
  const Eigen::Index p = s.rows();
  Matrix kron = Matrix::Zero(p * p, p * p);
  const Matrix eye = Matrix::Identity(p, p);
  // kron = S (x) I + I (x) S, with column-major vec convention.
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      kron.block(i * p, j * p, p, p) = eye * s(j, i);
  for (Eigen::Index i = 0; i < p; ++i) kron.block(i * p, i * p, p, p) += s;
  Eigen::PartialPivLU<Matrix> lu(kron);
  // A singular Kronecker sum means S has a zero eigenvalue.
  const Matrix& lum = lu.matrixLU();
  for (Eigen::Index i = 0; i < lum.rows(); ++i)
    if (std::abs(lum(i, i)) < tol.min_pivot)
      throw SingularSylvester("Kronecker sum is singular");
  Vector vec_dm(p * p);
  for (Eigen::Index j = 0; j < p; ++j) vec_dm.segment(j * p, p) = dm.col(j);
  const Vector vec_ds = lu.solve(vec_dm);
  Matrix ds(p, p);
  for (Eigen::Index j = 0; j < p; ++j) ds.col(j) = vec_ds.segment(j * p, p);
  // Symmetrize away the last ulps of asymmetry from the linear solve.
  return 0.5 * (ds + ds.transpose());
}

/// log|det(M)| for a square nonsingular matrix.
inline double logdet_abs(const Matrix& m,
                         const Tolerances& tol = default_tolerances()) {
  if (m.rows() != m.cols()) throw DimensionMismatch("matrix is not square");
  Eigen::PartialPivLU<Matrix> lu(m);
  double logdet = 0.0;
  const Matrix& lum = lu.matrixLU();
  for (Eigen::Index i = 0; i < lum.rows(); ++i) {
    const double pivot = std::abs(lum(i, i));
    if (pivot < tol.min_pivot) throw SingularMatrix("pivot underflow");
    logdet += std::log(pivot);
  }
  return logdet;
}

}  // namespace linalg
}  // namespace strapp

#endif  // STRAPP_LINALG_HPP
