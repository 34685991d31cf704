#ifndef STRAPP_PRIORS_HPP
#define STRAPP_PRIORS_HPP

#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "strapp/glm.hpp"
#include "strapp/transform.hpp"

namespace strapp {

enum class PriorKind {
  UniformImproper,
  PowerPrior,
  AsymptoticPP,
  Commensurate,
  StraPP,
  GenStraPP,
};

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Gamma(shape, rate) with density proportional to x^{shape-1} e^{-rate x};
/// "rate" is the inverse scale.
struct GammaPrior {
  double shape = 2.0;
  double rate = 2.0;

  double log_density(double x) const {
    if (!(x > 0.0)) return neg_inf;
    return shape * std::log(rate) - std::lgamma(shape) +
           (shape - 1.0) * std::log(x) - rate * x;
  }
};

namespace priors {
struct AppCache {
  std::once_flag once;
  std::optional<glm::MleResult> mle;
};
}  // namespace priors

/// Selects one of the historical-borrowing priors together with its
/// hyperparameters. The initial prior pi_0 defaults to uniform improper
/// (a null pointer); gamma dispersion priors attach to whichever side has a
/// free dispersion. StraPP/GenStraPP carry the transformation context;
/// PowerPrior/AsymptoticPP/Commensurate carry the historical family and,
/// for partial borrowing, the shared coordinate subset.
struct PriorSpec {
  PriorKind kind = PriorKind::UniformImproper;
  double a0 = 1.0;
  double omega0 = 1.0;  // Gen-straPP c0 prior variance
  double b0 = 2.0;      // commensurate gamma inverse scale (shape fixed at 2)
  std::optional<GlmFamily> hist_family;
  std::vector<Eigen::Index> borrowed;  // empty = all coordinates
  std::optional<TransformContext> ctx;
  std::optional<GammaPrior> curr_dispersion_prior;
  std::optional<GammaPrior> hist_dispersion_prior;
  std::shared_ptr<const PriorSpec> initial_prior;  // null = uniform improper
  std::shared_ptr<priors::AppCache> app_cache;

  static PriorSpec uniform() { return PriorSpec{}; }

  static PriorSpec power_prior(GlmFamily hist, double a0,
                               std::vector<Eigen::Index> borrowed = {}) {
    PriorSpec s;
    s.kind = PriorKind::PowerPrior;
    s.hist_family = hist;
    s.a0 = a0;
    s.borrowed = std::move(borrowed);
    return s;
  }

  static PriorSpec asymptotic_pp(GlmFamily hist, double a0,
                                 std::vector<Eigen::Index> borrowed = {}) {
    PriorSpec s;
    s.kind = PriorKind::AsymptoticPP;
    s.hist_family = hist;
    s.a0 = a0;
    s.borrowed = std::move(borrowed);
    s.app_cache = std::make_shared<priors::AppCache>();
    return s;
  }

  static PriorSpec commensurate(GlmFamily hist, double b0,
                                std::vector<Eigen::Index> borrowed = {}) {
    PriorSpec s;
    s.kind = PriorKind::Commensurate;
    s.hist_family = hist;
    s.b0 = b0;
    s.borrowed = std::move(borrowed);
    return s;
  }

  static PriorSpec strapp(TransformContext ctx, double a0) {
    PriorSpec s;
    s.kind = PriorKind::StraPP;
    s.a0 = a0;
    s.hist_family = ctx.hist_family;
    s.borrowed = ctx.borrowed;
    s.ctx = std::move(ctx);
    return s;
  }

  static PriorSpec gen_strapp(TransformContext ctx, double a0, double omega0) {
    PriorSpec s = strapp(std::move(ctx), a0);
    s.kind = PriorKind::GenStraPP;
    s.omega0 = omega0;
    return s;
  }

  void validate() const {
    if (a0 < 0.0 || a0 > 1.0) throw InvalidSpec("a0 must lie in [0, 1]");
    if (!(omega0 > 0.0) && kind == PriorKind::GenStraPP)
      throw InvalidSpec("omega0 must be positive");
    if (!(b0 > 0.0) && kind == PriorKind::Commensurate)
      throw InvalidSpec("b0 must be positive");
    if ((kind == PriorKind::StraPP || kind == PriorKind::GenStraPP) && !ctx)
      throw InvalidSpec("straPP requires a transform context");
    const bool needs_family = kind == PriorKind::PowerPrior ||
                              kind == PriorKind::AsymptoticPP ||
                              kind == PriorKind::Commensurate;
    if (needs_family && !hist_family)
      throw InvalidSpec("prior requires the historical family");
  }
};

namespace priors {

inline double mvn_logpdf(const Vector& x, const Vector& mean,
                         const Matrix& cov) {
  const Eigen::Index p = x.size();
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return neg_inf;
  const Vector diff = x - mean;
  const Vector z = llt.matrixL().solve(diff);
  double logdet_half = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    logdet_half += std::log(llt.matrixL()(i, i));
  return -0.5 * p * std::log(2.0 * M_PI) - logdet_half - 0.5 * z.squaredNorm();
}

inline double iso_normal_logpdf(const Vector& x, double variance) {
  return -0.5 * x.size() * std::log(2.0 * M_PI * variance) -
         0.5 * x.squaredNorm() / variance;
}

inline const glm::MleResult& ensure_app_cache(const PriorSpec& spec,
                                              const Dataset& hist) {
  if (!spec.app_cache) throw InvalidSpec("asymptotic prior lacks its cache");
  std::call_once(spec.app_cache->once, [&] {
    spec.app_cache->mle = glm::fit_mle(*spec.hist_family, hist);
  });
  return *spec.app_cache->mle;
}

inline double log_asymptotic_pp_impl(const PriorSpec& spec,
                                     const GlmParams& params,
                                     const Dataset& hist) {
  const glm::MleResult& mle = ensure_app_cache(spec, hist);
  // Gaussian with the power-prior mode and 1/a0 times the inverse observed
  // information of the (unpowered) likelihood; this is the Laplace expansion
  // of L^{a0} and reproduces the exact power prior in the linear model.
  return mvn_logpdf(params.beta, mle.params.beta,
                    (1.0 / spec.a0) * mle.covariance);
}

/// log pi_0 at a coefficient vector. Null or UniformImproper contributes the
/// fixed constant 0 (the improper density's arbitrary constant).
inline double log_initial_prior(const PriorSpec& spec, const Vector& beta,
                                const Dataset& hist) {
  if (!spec.initial_prior) return 0.0;
  const PriorSpec& init = *spec.initial_prior;
  switch (init.kind) {
    case PriorKind::UniformImproper:
      return 0.0;
    case PriorKind::AsymptoticPP:
      return log_asymptotic_pp_impl(init, GlmParams{beta, 1.0}, hist);
    default:
      throw InvalidSpec("unsupported initial prior kind");
  }
}

/// Power prior evaluated at the historical-side parameter:
/// a0 * log L(params | hist) + log pi_0(params).
inline double log_power_prior(const PriorSpec& spec, const GlmParams& params,
                              const Dataset& hist) {
  if (spec.kind != PriorKind::PowerPrior)
    throw InvalidSpec("spec is not a power prior");
  spec.validate();
  if (!(params.phi > 0.0)) return neg_inf;
  const double ll = glm::log_likelihood(*spec.hist_family, params, hist);
  if (!std::isfinite(ll)) return neg_inf;
  return spec.a0 * ll + log_initial_prior(spec, params.beta, hist);
}

/// Asymptotic power prior: N(mode, a0^-1 H^-1) at the historical-side
/// coefficient vector.
inline double log_asymptotic_pp(const PriorSpec& spec, const GlmParams& params,
                                const Dataset& hist) {
  if (spec.kind != PriorKind::AsymptoticPP)
    throw InvalidSpec("spec is not an asymptotic power prior");
  spec.validate();
  if (!(spec.a0 > 0.0)) return log_initial_prior(spec, params.beta, hist);
  return log_asymptotic_pp_impl(spec, params, hist);
}

/// Commensurate joint density over (theta, eta, tau): historical likelihood,
/// normal tether on the shared coordinates with precision tau, and the
/// Gamma(2, b0) hyperprior on tau.
inline double log_commensurate_joint(const PriorSpec& spec,
                                     const GlmParams& curr,
                                     const GlmParams& hist_params, double tau,
                                     const Dataset& hist) {
  if (spec.kind != PriorKind::Commensurate)
    throw InvalidSpec("spec is not a commensurate prior");
  spec.validate();
  if (!(tau > 0.0)) return neg_inf;
  const double ll = glm::log_likelihood(*spec.hist_family, hist_params, hist);
  if (!std::isfinite(ll)) return neg_inf;

  std::vector<Eigen::Index> shared = spec.borrowed;
  if (shared.empty())
    for (Eigen::Index j = 0; j < curr.beta.size(); ++j) shared.push_back(j);
  Vector diff(static_cast<Eigen::Index>(shared.size()));
  for (std::size_t k = 0; k < shared.size(); ++k)
    diff[static_cast<Eigen::Index>(k)] =
        curr.beta[shared[k]] - hist_params.beta[shared[k]];
  const double tether = iso_normal_logpdf(diff, 1.0 / tau);
  const GammaPrior tau_prior{2.0, spec.b0};
  return ll + tether + tau_prior.log_density(tau) +
         log_initial_prior(spec, curr.beta, hist);
}

/// Point at which a straPP-family prior is evaluated: the current parameter,
/// the full historical shell (whose non-borrowed entries are the sampled
/// eta_2 coordinates), and the historical dispersion.
struct StrappState {
  GlmParams curr;
  Vector hist_shell;  // length p; ignored entries on borrowed coordinates
  double hist_phi = 1.0;
};

inline StrappState full_borrow_state(const PriorSpec& spec,
                                     const GlmParams& curr) {
  StrappState st;
  st.curr = curr;
  st.hist_shell = Vector::Zero(spec.ctx->p());
  return st;
}

/// straPP log density at the current parameter: a0 times the historical
/// likelihood at g_c0(theta), the initial prior there, and the Jacobian
/// log determinant. Transform failures are out-of-support (-inf), never
/// errors. `solved_hist` returns the solved historical parameter;
/// `warm_init` seeds the constraint solve.
inline double log_strapp_impl(const PriorSpec& spec, const StrappState& state,
                              const Vector& c0, const Dataset& hist,
                              GlmParams* solved_hist = nullptr,
                              const Vector* warm_init = nullptr) {
  const TransformContext& ctx = *spec.ctx;
  if (spec.a0 == 0.0)
    return log_initial_prior(spec, state.curr.beta, hist);
  if (!(state.curr.phi > 0.0) || !(state.hist_phi > 0.0)) return neg_inf;

  GlmParams shell{state.hist_shell, state.hist_phi};
  GlmParams hist_params;
  double jac;
  try {
    hist_params = transform::map_params(ctx, state.curr, Direction::CurrToHist,
                                        shell, c0, warm_init);
    jac = transform::jacobian_logdet_at(ctx, state.curr, hist_params);
  } catch (const NumericalError&) {
    return neg_inf;
  }
  if (solved_hist != nullptr) *solved_hist = hist_params;

  const double ll = glm::log_likelihood(ctx.hist_family, hist_params, hist);
  if (!std::isfinite(ll) || !std::isfinite(jac)) return neg_inf;
  double total = spec.a0 * ll + jac +
                 log_initial_prior(spec, hist_params.beta, hist);
  if (ctx.hist_family.has_free_dispersion() && spec.hist_dispersion_prior)
    total += spec.hist_dispersion_prior->log_density(state.hist_phi);
  return total;
}

inline double log_strapp(const PriorSpec& spec, const StrappState& state,
                         const Dataset& hist, GlmParams* solved_hist = nullptr,
                         const Vector* warm_init = nullptr) {
  if (spec.kind != PriorKind::StraPP)
    throw InvalidSpec("spec is not a straPP");
  spec.validate();
  return log_strapp_impl(spec, state, spec.ctx->c0, hist, solved_hist,
                         warm_init);
}

/// Full-borrowing convenience overload.
inline double log_strapp(const PriorSpec& spec, const GlmParams& curr,
                         const Dataset& hist) {
  return log_strapp(spec, full_borrow_state(spec, curr), hist);
}

/// Gen-straPP: the c0-shifted straPP plus the N(0, omega0 I) prior on c0.
inline double log_gen_strapp(const PriorSpec& spec, const StrappState& state,
                             const Vector& c0, const Dataset& hist,
                             GlmParams* solved_hist = nullptr,
                             const Vector* warm_init = nullptr) {
  if (spec.kind != PriorKind::GenStraPP)
    throw InvalidSpec("spec is not a Gen-straPP");
  spec.validate();
  const double base =
      log_strapp_impl(spec, state, c0, hist, solved_hist, warm_init);
  return base + iso_normal_logpdf(c0, spec.omega0);
}

inline double log_gen_strapp(const PriorSpec& spec, const GlmParams& curr,
                             const Vector& c0, const Dataset& hist) {
  return log_gen_strapp(spec, full_borrow_state(spec, curr), c0, hist);
}

/// Empirical omega_0: the sup-norm gap between the standardized MLEs of the
/// two studies.
inline double empirical_omega(const Dataset& hist, const Dataset& curr,
                              const TransformContext& ctx) {
  const auto hist_fit = glm::fit_mle(ctx.hist_family, hist);
  const auto curr_fit = glm::fit_mle(ctx.curr_family, curr);
  const Vector s_hist =
      transform::standardize(ctx, Side::Historical, hist_fit.params);
  const Vector s_curr =
      transform::standardize(ctx, Side::Current, curr_fit.params);
  return (s_hist - s_curr).lpNorm<Eigen::Infinity>();
}

}  // namespace priors
}  // namespace strapp

#endif  // STRAPP_PRIORS_HPP
