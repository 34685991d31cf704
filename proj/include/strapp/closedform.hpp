#ifndef STRAPP_CLOSEDFORM_HPP
#define STRAPP_CLOSEDFORM_HPP

#include <cmath>
#include <optional>
#include <utility>

#include "strapp/errors.hpp"
#include "strapp/linalg.hpp"

namespace strapp {

/// Known-variance linear models on both sides. Y0/Y1 may be left empty for
/// prior-only quantities.
struct NormalNormalSetup {
  Matrix X0;
  Matrix X1;
  Vector Y0;
  Vector Y1;
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  double a0 = 1.0;
};

enum class NormalPriorKind { PowerPrior, StraPP };

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

namespace closedform {

inline Matrix checked_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw SingularDesign("normal-equation matrix is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

/// Prior moments for the normal-normal case. The power prior is the
/// historical least-squares Gaussian inflated by 1/a0; the straPP rescales
/// its mean by sigma1/sigma0 and swaps sigma0^2 for sigma1^2 in the
/// covariance.
inline GaussianMoments nn_prior(const NormalNormalSetup& s,
                                NormalPriorKind kind) {
  const Matrix xtx = s.X0.transpose() * s.X0;
  const Matrix xtx_inv = checked_inverse(xtx);
  const Vector bhat0 = xtx_inv * (s.X0.transpose() * s.Y0);
  GaussianMoments g;
  if (kind == NormalPriorKind::PowerPrior) {
    g.mean = bhat0;
    g.cov = (s.sigma0 * s.sigma0 / s.a0) * xtx_inv;
  } else {
    g.mean = (s.sigma1 / s.sigma0) * bhat0;
    g.cov = (s.sigma1 * s.sigma1 / s.a0) * xtx_inv;
  }
  return g;
}

/// Posterior moments for the normal-normal case.
inline GaussianMoments nn_posterior(const NormalNormalSetup& s,
                                    NormalPriorKind kind) {
  const Matrix x0t_x0 = s.X0.transpose() * s.X0;
  const Matrix x1t_x1 = s.X1.transpose() * s.X1;
  const Vector x0t_y0 = s.X0.transpose() * s.Y0;
  const Vector x1t_y1 = s.X1.transpose() * s.Y1;
  const double s1sq = s.sigma1 * s.sigma1;
  const double s0sq = s.sigma0 * s.sigma0;
  GaussianMoments g;
  if (kind == NormalPriorKind::StraPP) {
    g.cov = s1sq * checked_inverse(x1t_x1 + s.a0 * x0t_x0);
    g.mean = g.cov * (x1t_y1 / s1sq +
                      (s.a0 / (s.sigma0 * s.sigma1)) * x0t_y0);
  } else {
    g.cov = checked_inverse(x1t_x1 / s1sq + (s.a0 / s0sq) * x0t_x0);
    g.mean = g.cov * (x1t_y1 / s1sq + (s.a0 / s0sq) * x0t_y0);
  }
  return g;
}

/// Treatment-effect magnitude where the straPP and power-prior posterior
/// means have equal MSE in the balanced intercept+treatment design. Returns
/// the positive root; nullopt when the bracketed radicand is not positive
/// (the MSE curves never cross).
inline std::optional<double> mse_threshold(double n0, double n1, double a0,
                                           double sigma0, double sigma1) {
  if (sigma0 == sigma1)
    throw EqualVariances("threshold undefined when sigma0 == sigma1");
  if (!(a0 > 0.0)) throw ValidationError("a0 must be positive");
  if (!(n0 >= 1.0 && n1 >= 1.0))
    throw ValidationError("sample sizes must be at least 1");
  const double s0sq = sigma0 * sigma0;
  const double s1sq = sigma1 * sigma1;
  const double lead =
      2.0 * (n1 * s0sq + a0 * n0 * s1sq) / (a0 * n0 * (sigma0 - sigma1));
  const double term1 = (n1 + a0 * a0 * n0) / ((n1 + a0 * n0) * (n1 + a0 * n0));
  const double denom = n1 * s0sq + a0 * n0 * s1sq;
  const double term2 = s0sq * (n1 * s0sq + a0 * a0 * n0 * s1sq) / (denom * denom);
  const double radicand = term1 - term2;
  if (!(radicand > 0.0)) return std::nullopt;
  return std::abs(lead) * std::sqrt(radicand);
}

/// The MSE comparison behind the threshold: true when the straPP posterior
/// mean has MSE no larger than the power prior's at effect size beta, i.e.
/// (Var_s - Var_p) / PercentBias_p^2 <= beta^2.
inline bool theorem1_condition(double var_s, double var_p, double pct_bias_p,
                               double beta) {
  if (pct_bias_p == 0.0) throw ZeroBias("percent bias must be nonzero");
  return (var_s - var_p) / (pct_bias_p * pct_bias_p) <= beta * beta;
}

/// Sampling moments of the posterior-mean point estimators under the truth
/// beta1 (with beta0 = (sigma0/sigma1) beta1): expectation and covariance of
/// each estimator over repeated data. Used by the estimator-MSE checks.
struct EstimatorMoments {
  Vector mean_strapp;
  Matrix cov_strapp;
  Vector mean_pp;
  Matrix cov_pp;
};

inline EstimatorMoments estimator_moments(const NormalNormalSetup& s,
                                          const Vector& beta1) {
  const Matrix x0t_x0 = s.X0.transpose() * s.X0;
  const Matrix x1t_x1 = s.X1.transpose() * s.X1;
  const double s1sq = s.sigma1 * s.sigma1;
  const double s0sq = s.sigma0 * s.sigma0;
  const double ratio = s.sigma0 / s.sigma1;

  EstimatorMoments m;
  const Matrix cov_s = s1sq * checked_inverse(x1t_x1 + s.a0 * x0t_x0);
  // E[b_s] = Cov_s {X1'X1 / s1^2 + a0 ratio / (s0 s1) X0'X0} beta1 = beta1.
  m.mean_strapp =
      cov_s * ((x1t_x1 / s1sq) * beta1 +
               (s.a0 * ratio / (s.sigma0 * s.sigma1)) * (x0t_x0 * beta1));
  m.cov_strapp = cov_s *
                 (x1t_x1 / s1sq + (s.a0 * s.a0 / s1sq) * x0t_x0) *
                 cov_s;

  const Matrix cov_p = checked_inverse(x1t_x1 / s1sq + (s.a0 / s0sq) * x0t_x0);
  m.mean_pp = cov_p * ((x1t_x1 / s1sq) * beta1 +
                       (s.a0 * ratio / s0sq) * (x0t_x0 * beta1));
  m.cov_pp = cov_p *
             (x1t_x1 / s1sq + (s.a0 * s.a0 / s0sq) * x0t_x0) *
             cov_p;
  return m;
}

}  // namespace closedform
}  // namespace strapp

#endif  // STRAPP_CLOSEDFORM_HPP
