#ifndef STRAPP_CONFIG_HPP
#define STRAPP_CONFIG_HPP

namespace strapp {

// Numerical tolerances, centralized. Every module reads its thresholds from
// here so they can be reviewed (or tightened) in one place.
struct Tolerances {
  // Relative symmetry tolerance for matrices claimed symmetric.
  double symmetry_rtol = 1e-12;
  // Eigenvalues in [-psd_band * ||M||, 0) are clamped to zero before
  // rooting; anything below is treated as indefinite.
  double psd_band = 1e-10;
  // Smallest acceptable pivot magnitude in logdet_abs.
  double min_pivot = 1e-300;
  // Sup-norm residual required of the standardization constraint solver.
  double constraint_tol = 1e-8;
  // Gradient sup-norm at which the MLE solver declares convergence.
  double mle_grad_tol = 1e-8;
  // Linear predictors past this magnitude saturate the Bernoulli variance
  // function; the transform treats them as out of support.
  double saturation_cutoff = 30.0;
  int mle_max_iter = 100;
  int constraint_max_iter = 50;
};

inline const Tolerances& default_tolerances() {
  static const Tolerances tol{};
  return tol;
}

}  // namespace strapp

#endif  // STRAPP_CONFIG_HPP
