#ifndef STRAPP_GLM_HPP
#define STRAPP_GLM_HPP

#include <cmath>
#include <string>
#include <utility>

#include "strapp/config.hpp"
#include "strapp/errors.hpp"
#include "strapp/linalg.hpp"

namespace strapp {

enum class FamilyKind {
  NormalKnownVariance,
  NormalUnknownVariance,
  BernoulliLogit,
  PoissonLog,
  ExponentialLog,
};

/// Exponential-family outcome model with its canonical-form pieces.
///
/// Each family supplies the exact per-observation log density (constants
/// included, so deviances are absolute), the expected-information weight
/// w(m) entering  I = phi * X' diag(w_i) X,  and dw/dm for the Jacobian
/// machinery. For canonical links w(m) is b''(m); the exponential outcome
/// uses the log link on the mean, for which w collapses to 1 and the
/// information matrix is free of the regression parameter.
class GlmFamily {
 public:
  static GlmFamily normal_known(double sigma) {
    if (!(sigma > 0.0)) throw InvalidSpec("sigma must be positive");
    return GlmFamily(FamilyKind::NormalKnownVariance, sigma);
  }
  static GlmFamily normal_unknown() {
    return GlmFamily(FamilyKind::NormalUnknownVariance, 1.0);
  }
  static GlmFamily bernoulli() { return GlmFamily(FamilyKind::BernoulliLogit, 1.0); }
  static GlmFamily poisson() { return GlmFamily(FamilyKind::PoissonLog, 1.0); }
  static GlmFamily exponential() { return GlmFamily(FamilyKind::ExponentialLog, 1.0); }

  FamilyKind kind() const { return kind_; }
  double sigma() const { return sigma_; }

  /// True if the dispersion is a free parameter rather than fixed.
  bool has_free_dispersion() const {
    return kind_ == FamilyKind::NormalUnknownVariance;
  }

  /// Dispersion phi used when none is sampled. phi = sigma^-2 for the
  /// known-variance normal, 1 otherwise.
  double fixed_phi() const {
    return kind_ == FamilyKind::NormalKnownVariance ? 1.0 / (sigma_ * sigma_)
                                                    : 1.0;
  }

  double log_density(double y, double m, double phi) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance: {
        const double r = y - m;
        return -0.5 * std::log(two_pi_ * sigma_ * sigma_) -
               0.5 * r * r / (sigma_ * sigma_);
      }
      case FamilyKind::NormalUnknownVariance: {
        const double r = y - m;
        return 0.5 * std::log(phi) - 0.5 * std::log(two_pi_) -
               0.5 * phi * r * r;
      }
      case FamilyKind::BernoulliLogit:
        // y*m - log(1 + e^m), evaluated stably on both tails.
        return y * m - softplus(m);
      case FamilyKind::PoissonLog:
        return y * m - std::exp(m) - std::lgamma(y + 1.0);
      case FamilyKind::ExponentialLog:
        // mean exp(m): log f = -m - y exp(-m)
        return -m - y * std::exp(-m);
    }
    return 0.0;
  }

  /// dl/dm for one observation (used by the score and the MLE solver).
  double score_factor(double y, double m, double phi) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
        return (y - m) / (sigma_ * sigma_);
      case FamilyKind::NormalUnknownVariance:
        return phi * (y - m);
      case FamilyKind::BernoulliLogit:
        return y - expit(m);
      case FamilyKind::PoissonLog:
        return y - std::exp(m);
      case FamilyKind::ExponentialLog:
        return y * std::exp(-m) - 1.0;
    }
    return 0.0;
  }

  double mean(double m) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
      case FamilyKind::NormalUnknownVariance:
        return m;
      case FamilyKind::BernoulliLogit:
        return expit(m);
      case FamilyKind::PoissonLog:
      case FamilyKind::ExponentialLog:
        return std::exp(m);
    }
    return 0.0;
  }

  /// Expected-information weight w(m); the information matrix is
  /// phi * X' diag(w(m_i)) X.
  double info_weight(double m) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
      case FamilyKind::NormalUnknownVariance:
      case FamilyKind::ExponentialLog:
        return 1.0;
      case FamilyKind::BernoulliLogit: {
        const double p = expit(m);
        return p * (1.0 - p);
      }
      case FamilyKind::PoissonLog:
        return std::exp(m);
    }
    return 0.0;
  }

  /// dw/dm, feeding dI/dbeta_j = phi * X' diag(w'(m_i) x_ij) X.
  double info_weight_derivative(double m) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
      case FamilyKind::NormalUnknownVariance:
      case FamilyKind::ExponentialLog:
        return 0.0;
      case FamilyKind::BernoulliLogit: {
        const double p = expit(m);
        return p * (1.0 - p) * (1.0 - 2.0 * p);
      }
      case FamilyKind::PoissonLog:
        return std::exp(m);
    }
    return 0.0;
  }

  /// True if the information matrix does not depend on the regression
  /// parameter (drives the choice of sampling route).
  bool information_parameter_free() const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
      case FamilyKind::NormalUnknownVariance:
      case FamilyKind::ExponentialLog:
        return true;
      default:
        return false;
    }
  }

  void validate_response(double y, Eigen::Index row) const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
      case FamilyKind::NormalUnknownVariance:
        if (!std::isfinite(y))
          throw InvalidResponse("non-finite response at row " +
                                std::to_string(row + 1));
        return;
      case FamilyKind::BernoulliLogit:
        if (y != 0.0 && y != 1.0)
          throw InvalidResponse("Bernoulli response must be 0/1 at row " +
                                std::to_string(row + 1));
        return;
      case FamilyKind::PoissonLog:
        if (y < 0.0 || y != std::floor(y))
          throw InvalidResponse(
              "Poisson response must be a nonnegative integer at row " +
              std::to_string(row + 1));
        return;
      case FamilyKind::ExponentialLog:
        if (!(y > 0.0))
          throw InvalidResponse("exponential response must be positive at row " +
                                std::to_string(row + 1));
        return;
    }
  }

  std::string name() const {
    switch (kind_) {
      case FamilyKind::NormalKnownVariance:
        return "normal(sigma=" + std::to_string(sigma_) + ")";
      case FamilyKind::NormalUnknownVariance:
        return "normal_unknown_variance";
      case FamilyKind::BernoulliLogit:
        return "bernoulli";
      case FamilyKind::PoissonLog:
        return "poisson";
      case FamilyKind::ExponentialLog:
        return "exponential";
    }
    return "?";
  }

  static double expit(double m) {
    if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
  }

 private:
  GlmFamily(FamilyKind kind, double sigma) : kind_(kind), sigma_(sigma) {}

  static double softplus(double m) {
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }

  static constexpr double two_pi_ = 6.283185307179586476925286766559;

  FamilyKind kind_;
  double sigma_;
};

/// One study's data: response vector and covariate matrix (intercept column
/// included). Immutable after construction.
struct Dataset {
  Vector y;
  Matrix X;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
};

/// Regression coefficients plus dispersion. phi is sigma^-2 for normal
/// outcomes and fixed at 1 for Bernoulli/Poisson/exponential.
struct GlmParams {
  Vector beta;
  double phi = 1.0;
};

namespace glm {

inline void check_dims(const GlmParams& params, const Dataset& data) {
  if (params.beta.size() != data.p())
    throw DimensionMismatch("beta length does not match design columns");
  if (!(params.phi > 0.0)) throw InvalidSpec("phi must be positive");
}

/// Exact log likelihood (constants included).
inline double log_likelihood(const GlmFamily& family, const GlmParams& params,
                             const Dataset& data) {
  check_dims(params, data);
  const Vector eta = data.X * params.beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    total += family.log_density(data.y[i], eta[i], params.phi);
  return total;
}

/// Score vector d logL / d beta.
inline Vector score(const GlmFamily& family, const GlmParams& params,
                    const Dataset& data) {
  check_dims(params, data);
  const Vector eta = data.X * params.beta;
  Vector factors(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    factors[i] = family.score_factor(data.y[i], eta[i], params.phi);
  return data.X.transpose() * factors;
}

/// Fisher information for the regression parameters on the given design:
/// phi * X' diag(w_i) X with w_i the family's expected-information weight.
inline Matrix fisher_information(const GlmFamily& family,
                                 const GlmParams& params, const Matrix& X) {
  if (params.beta.size() != X.cols())
    throw DimensionMismatch("beta length does not match design columns");
  const double phi = family.has_free_dispersion()
                         ? params.phi
                         : family.fixed_phi();
  const Vector eta = X * params.beta;
  Vector w(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    w[i] = family.info_weight(eta[i]);
  Matrix info = phi * X.transpose() * w.asDiagonal() * X;
  return 0.5 * (info + info.transpose());
}

/// dI/dbeta_j (Fisher information derivative in coordinate j).
inline Matrix fisher_information_derivative(const GlmFamily& family,
                                            const GlmParams& params,
                                            const Matrix& X, Eigen::Index j) {
  const double phi = family.has_free_dispersion()
                         ? params.phi
                         : family.fixed_phi();
  const Vector eta = X * params.beta;
  Vector dw(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    dw[i] = family.info_weight_derivative(eta[i]) * X(i, j);
  Matrix dinfo = phi * X.transpose() * dw.asDiagonal() * X;
  return 0.5 * (dinfo + dinfo.transpose());
}

struct MleResult {
  GlmParams params;
  Matrix covariance;  // inverse Fisher information at the MLE
};

/// Maximum likelihood by Fisher scoring with step halving, started at
/// beta = 0. For the unknown-variance normal the coefficient fit is exact
/// weighted least squares and phi-hat = n / RSS.
inline MleResult fit_mle(const GlmFamily& family, const Dataset& data,
                         const Tolerances& tol = default_tolerances()) {
  const Eigen::Index p = data.p();
  GlmParams params{Vector::Zero(p), 1.0};
  for (Eigen::Index i = 0; i < data.n(); ++i)
    family.validate_response(data.y[i], i);

  if (family.kind() == FamilyKind::NormalKnownVariance ||
      family.kind() == FamilyKind::NormalUnknownVariance) {
    params.beta = (data.X.transpose() * data.X)
                      .ldlt()
                      .solve(data.X.transpose() * data.y);
    if (family.kind() == FamilyKind::NormalUnknownVariance) {
      const double rss = (data.y - data.X * params.beta).squaredNorm();
      if (!(rss > 0.0)) throw NonConvergence("zero residual sum of squares");
      params.phi = static_cast<double>(data.n()) / rss;
    }
  } else {
    double ll = log_likelihood(family, params, data);
    bool converged = false;
    for (int iter = 0; iter < tol.mle_max_iter; ++iter) {
      const Vector grad = score(family, params, data);
      if (grad.lpNorm<Eigen::Infinity>() < tol.mle_grad_tol) {
        converged = true;
        break;
      }
      const Matrix info = fisher_information(family, params, data.X);
      const Vector step = info.ldlt().solve(grad);
      double scale = 1.0;
      GlmParams trial = params;
      for (int half = 0; half < 30; ++half) {
        trial.beta = params.beta + scale * step;
        const double trial_ll = log_likelihood(family, trial, data);
        if (std::isfinite(trial_ll) && trial_ll >= ll - 1e-12) {
          params = trial;
          ll = trial_ll;
          break;
        }
        scale *= 0.5;
      }
      if (family.kind() == FamilyKind::BernoulliLogit &&
          params.beta.lpNorm<Eigen::Infinity>() > tol.saturation_cutoff)
        throw SeparableData("logistic fit diverging: separable outcome");
    }
    if (!converged) {
      const Vector grad = score(family, params, data);
      if (grad.lpNorm<Eigen::Infinity>() >= tol.mle_grad_tol)
        throw NonConvergence("MLE did not converge in " +
                             std::to_string(tol.mle_max_iter) + " iterations");
    }
  }

  const Matrix info = fisher_information(family, params, data.X);
  Eigen::LDLT<Matrix> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NonConvergence("information matrix not positive definite at MLE");
  MleResult result;
  result.params = params;
  result.covariance = ldlt.solve(Matrix::Identity(p, p));
  return result;
}

}  // namespace glm
}  // namespace strapp

#endif  // STRAPP_GLM_HPP
