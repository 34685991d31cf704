#ifndef STRAPP_SAMPLER_HPP
#define STRAPP_SAMPLER_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strapp/priors.hpp"
#include "strapp/rng.hpp"

namespace strapp {

struct SamplerConfig {
  int draws = 10000;
  int burn_in = -1;  // negative: draws / 5
  double proposal_multiplier = 1.0;

  int resolved_burn_in() const { return burn_in < 0 ? draws / 5 : burn_in; }
};

/// Ordered posterior draws with their log densities. Rows of `draws` follow
/// `labels`; for transformed samplers the current-model parameters always
/// occupy the leading columns.
struct Chain {
  Matrix draws;
  Vector logdens;
  std::vector<std::string> labels;
  long accepted = 0;
  long proposals = 0;
  long solver_failures = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  int burn_in = 0;
  double max_residual = 0.0;
  std::vector<std::string> warnings;

  Eigen::Index n() const { return draws.rows(); }

  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  }

  Eigen::Index column(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<Eigen::Index>(i);
    throw ValidationError("no chain column labeled '" + label + "'");
  }
};

/// Column roles inside a Chain produced by run_analysis.
struct ChainLayout {
  Eigen::Index p = 0;                 // current-model coefficient count
  Eigen::Index curr_beta_start = 0;   // always 0
  Eigen::Index curr_phi_col = -1;     // -1 when the dispersion is fixed
  Eigen::Index hist_beta_start = -1;  // -1 when absent
  Eigen::Index hist_phi_col = -1;
  Eigen::Index tau_col = -1;
  Eigen::Index c0_start = -1;
  Eigen::Index c0_len = 0;
  double fixed_curr_phi = 1.0;

  GlmParams curr_params(const Vector& row) const {
    GlmParams prm{row.segment(curr_beta_start, p),
                  curr_phi_col >= 0 ? row[curr_phi_col] : fixed_curr_phi};
    return prm;
  }
};

namespace sampler {

/// Symmetric Metropolis acceptance rule; u is uniform on (0, 1].
inline bool mh_accept(double log_ratio, double u) {
  return log_ratio >= 0.0 || std::log(u) <= log_ratio;
}

struct EvalResult {
  double logdens = neg_inf;
  Vector row;
  double residual = 0.0;
  bool solver_failed = false;
};

using EvalFn = std::function<EvalResult(const Vector&)>;

/// Random-walk Metropolis over an arbitrary evaluator. The evaluator maps a
/// state to its log density plus the decorated output row that is retained
/// in the chain.
inline Chain run_mh(const EvalFn& eval, const Vector& init,
                    const Matrix& proposal_cov, int n, RngStream rng,
                    const SamplerConfig& cfg, std::uint64_t seed,
                    std::uint64_t stream) {
  Eigen::LLT<Matrix> llt(proposal_cov);
  if (llt.info() != Eigen::Success)
    throw InvalidSpec("proposal covariance is not positive definite");
  const Matrix chol = llt.matrixL();

  EvalResult current = eval(init);
  if (!std::isfinite(current.logdens))
    throw InitOutOfSupport("initial state has non-finite log density");

  const int burn = cfg.resolved_burn_in();
  Chain chain;
  chain.seed = seed;
  chain.stream = stream;
  chain.burn_in = burn;
  chain.draws.resize(n, current.row.size());
  chain.logdens.resize(n);

  Vector state = init;
  Vector noise(init.size());
  for (int t = 0; t < burn + n; ++t) {
    for (Eigen::Index j = 0; j < noise.size(); ++j) noise[j] = rng.normal();
    const Vector proposal = state + chol * noise;
    EvalResult cand = eval(proposal);
    ++chain.proposals;
    if (cand.solver_failed) ++chain.solver_failures;
    if (std::isfinite(cand.logdens) &&
        mh_accept(cand.logdens - current.logdens, rng.uniform())) {
      state = proposal;
      current = std::move(cand);
      ++chain.accepted;
    }
    if (t >= burn) {
      chain.draws.row(t - burn) = current.row;
      chain.logdens[t - burn] = current.logdens;
      chain.max_residual = std::max(chain.max_residual, current.residual);
    }
  }
  const double rate = chain.acceptance_rate();
  if (rate < 0.05 || rate > 0.7)
    chain.warnings.push_back("acceptance rate " + std::to_string(rate) +
                             " outside (0.05, 0.7)");
  return chain;
}

/// Plain random-walk Metropolis on a log target.
template <class Target>
Chain rw_metropolis(Target&& target, const Vector& init,
                    const Matrix& proposal_cov, int n, RngStream rng,
                    const SamplerConfig& cfg = {}, std::uint64_t seed = 0,
                    std::uint64_t stream = 0) {
  EvalFn eval = [&target](const Vector& state) {
    EvalResult r;
    r.logdens = target(state);
    r.row = state;
    return r;
  };
  return run_mh(eval, init, proposal_cov, n, rng, cfg, seed, stream);
}

}  // namespace sampler

/// Historical and current studies analyzed together.
struct ModelPair {
  GlmFamily hist_family;
  GlmFamily curr_family;
  Dataset hist;
  Dataset curr;
};

namespace sampler {

namespace detail {

// Cached standardization pieces for one side of the transformation. For
// families whose information matrix is free of the regression parameter the
// root scales as sqrt(phi) times a fixed factor, so the per-evaluation work
// collapses to a scalar multiply.
struct SideCache {
  bool param_free = false;
  Matrix s_unit;          // sqrt((X0' X0)[b,b]) for parameter-free sides
  Eigen::LLT<Matrix> s_unit_llt;
  double logdet_s_unit = 0.0;

  static SideCache make(const TransformContext& ctx, Side side) {
    SideCache c;
    c.param_free = ctx.family(side).information_parameter_free();
    if (c.param_free) {
      const Matrix xtx = ctx.X0.transpose() * ctx.X0;
      c.s_unit = linalg::spd_sqrt(transform::borrowed_block(ctx, xtx));
      c.s_unit_llt.compute(c.s_unit);
      c.logdet_s_unit = linalg::logdet_abs(c.s_unit);
    }
    return c;
  }

  double effective_phi(const TransformContext& ctx, Side side,
                       const GlmParams& prm) const {
    const GlmFamily& fam = ctx.family(side);
    return fam.has_free_dispersion() ? prm.phi : fam.fixed_phi();
  }

  Matrix sqrt_info(const TransformContext& ctx, Side side,
                   const GlmParams& prm) const {
    if (param_free)
      return std::sqrt(effective_phi(ctx, side, prm)) * s_unit;
    return transform::info_sqrt(ctx, side, prm);
  }

  Vector standardized(const TransformContext& ctx, Side side,
                      const GlmParams& prm) const {
    if (param_free)
      return std::sqrt(effective_phi(ctx, side, prm)) *
             (s_unit * transform::borrowed_part(ctx, prm.beta));
    return transform::standardize(ctx, side, prm);
  }

  // Solve sqrt(I[b,b]) b = target for a parameter-free side.
  Vector linear_solve(const TransformContext& ctx, Side side,
                      const GlmParams& prm, const Vector& target) const {
    const double root_phi = std::sqrt(effective_phi(ctx, side, prm));
    return s_unit_llt.solve(Vector(target / root_phi));
  }

  double bracket_logdet(const TransformContext& ctx, Side side,
                        const GlmParams& prm) const {
    if (param_free)
      return 0.5 * ctx.r() * std::log(effective_phi(ctx, side, prm)) +
             logdet_s_unit;
    return linalg::logdet_abs(
        transform::standardize_jacobian(ctx, side, prm));
  }
};

// State vector bookkeeping shared by the target builders. Dispersions are
// sampled on the log scale; the log-Jacobian of that reparameterization is
// added to the target.
struct StateMap {
  Eigen::Index dim = 0;
  Eigen::Index curr_beta = -1;
  Eigen::Index curr_logphi = -1;
  Eigen::Index hist_beta = -1;       // full historical vector (complementary,
                                     // commensurate)
  Eigen::Index hist_extra = -1;      // non-borrowed historical coordinates
  Eigen::Index curr_extra = -1;      // non-borrowed current coordinates
  Eigen::Index hist_logphi = -1;
  Eigen::Index logtau = -1;
  Eigen::Index c0 = -1;
  Eigen::Index c0_len = 0;
};

inline std::vector<Eigen::Index> complement(Eigen::Index p,
                                            const std::vector<Eigen::Index>& borrowed) {
  std::vector<Eigen::Index> rest;
  std::size_t k = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (k < borrowed.size() && borrowed[k] == j)
      ++k;
    else
      rest.push_back(j);
  }
  return rest;
}

struct BuiltTarget {
  EvalFn eval;
  Vector init;
  Matrix proposal_cov;
  std::vector<std::string> labels;
  ChainLayout layout;
};

inline void append_block(Matrix& cov, Eigen::Index at, const Matrix& block) {
  cov.block(at, at, block.rows(), block.cols()) = block;
}

inline double dispersion_logprior(const std::optional<GammaPrior>& prior,
                                  double phi, double logphi) {
  if (!prior) throw InvalidSpec("free dispersion requires a gamma prior");
  return prior->log_density(phi) + logphi;  // log-scale Jacobian
}

}  // namespace detail

/// Assembles the posterior target for every prior kind whose state lives on
/// the current-model side (with the historical borrowed coordinates solved
/// from the constraint for the straPP family). Returns the evaluator, a
/// feasible starting point, a scaled proposal covariance, and the chain
/// layout.
inline detail::BuiltTarget build_theta_side_target(const ModelPair& pair,
                                                   const PriorSpec& spec) {
  using detail::StateMap;
  spec.validate();
  const Eigen::Index p = pair.curr.p();
  const bool curr_free = pair.curr_family.has_free_dispersion();
  const bool hist_free = pair.hist_family.has_free_dispersion();
  const bool is_strapp =
      spec.kind == PriorKind::StraPP || spec.kind == PriorKind::GenStraPP;
  const bool is_gen = spec.kind == PriorKind::GenStraPP;

  std::vector<Eigen::Index> borrowed = spec.borrowed;
  if (borrowed.empty())
    for (Eigen::Index j = 0; j < p; ++j) borrowed.push_back(j);
  const std::vector<Eigen::Index> rest = detail::complement(p, borrowed);
  const Eigen::Index r = static_cast<Eigen::Index>(borrowed.size());

  const bool wants_hist_side = spec.kind == PriorKind::PowerPrior ||
                               spec.kind == PriorKind::AsymptoticPP ||
                               spec.kind == PriorKind::Commensurate ||
                               is_strapp;
  const bool hist_phi_sampled =
      wants_hist_side && hist_free && spec.kind != PriorKind::AsymptoticPP;

  StateMap sm;
  sm.curr_beta = 0;
  sm.dim = p;
  if (curr_free) sm.curr_logphi = sm.dim++;
  if (spec.kind == PriorKind::Commensurate) {
    sm.hist_beta = sm.dim;
    sm.dim += p;
  } else if (wants_hist_side && !rest.empty()) {
    sm.hist_extra = sm.dim;
    sm.dim += static_cast<Eigen::Index>(rest.size());
  }
  if (hist_phi_sampled) sm.hist_logphi = sm.dim++;
  if (spec.kind == PriorKind::Commensurate) sm.logtau = sm.dim++;
  if (is_gen) {
    sm.c0 = sm.dim;
    sm.c0_len = r;
    sm.dim += r;
  }

  // MLE fits drive the starting point and the proposal scale.
  const auto curr_mle = glm::fit_mle(pair.curr_family, pair.curr);
  std::optional<glm::MleResult> hist_mle;
  if (wants_hist_side) hist_mle = glm::fit_mle(pair.hist_family, pair.hist);

  Vector init = Vector::Zero(sm.dim);
  init.segment(0, p) = curr_mle.params.beta;
  if (curr_free) init[sm.curr_logphi] = std::log(curr_mle.params.phi);
  if (sm.hist_beta >= 0) init.segment(sm.hist_beta, p) = hist_mle->params.beta;
  if (sm.hist_extra >= 0)
    for (std::size_t k = 0; k < rest.size(); ++k)
      init[sm.hist_extra + static_cast<Eigen::Index>(k)] =
          hist_mle->params.beta[rest[k]];
  if (sm.hist_logphi >= 0) init[sm.hist_logphi] = std::log(hist_mle->params.phi);
  if (sm.logtau >= 0) init[sm.logtau] = 0.0;

  Matrix cov = Matrix::Identity(sm.dim, sm.dim);
  detail::append_block(cov, 0, curr_mle.covariance);
  if (curr_free) cov(sm.curr_logphi, sm.curr_logphi) = 2.0 / pair.curr.n();
  if (sm.hist_beta >= 0) detail::append_block(cov, sm.hist_beta, hist_mle->covariance);
  if (sm.hist_extra >= 0)
    for (std::size_t a = 0; a < rest.size(); ++a)
      for (std::size_t b = 0; b < rest.size(); ++b)
        cov(sm.hist_extra + static_cast<Eigen::Index>(a),
            sm.hist_extra + static_cast<Eigen::Index>(b)) =
            hist_mle->covariance(rest[a], rest[b]);
  if (sm.hist_logphi >= 0) cov(sm.hist_logphi, sm.hist_logphi) = 2.0 / pair.hist.n();
  if (sm.logtau >= 0) cov(sm.logtau, sm.logtau) = 0.25;
  if (sm.c0 >= 0)
    cov.block(sm.c0, sm.c0, r, r) = spec.omega0 * Matrix::Identity(r, r);
  cov *= 2.38 * 2.38 / static_cast<double>(sm.dim);

  // Labels and output layout: current parameters first, then the historical
  // block, then c0.
  std::vector<std::string> labels;
  ChainLayout layout;
  layout.p = p;
  layout.fixed_curr_phi = pair.curr_family.fixed_phi();
  for (Eigen::Index j = 0; j < p; ++j)
    labels.push_back("curr_b" + std::to_string(j));
  if (curr_free) {
    layout.curr_phi_col = static_cast<Eigen::Index>(labels.size());
    labels.push_back("curr_phi");
  }
  const bool out_hist = wants_hist_side;
  if (out_hist) {
    layout.hist_beta_start = static_cast<Eigen::Index>(labels.size());
    for (Eigen::Index j = 0; j < p; ++j)
      labels.push_back("hist_b" + std::to_string(j));
  }
  if (hist_phi_sampled) {
    layout.hist_phi_col = static_cast<Eigen::Index>(labels.size());
    labels.push_back("hist_phi");
  }
  if (sm.logtau >= 0) {
    layout.tau_col = static_cast<Eigen::Index>(labels.size());
    labels.push_back("tau");
  }
  if (is_gen) {
    layout.c0_start = static_cast<Eigen::Index>(labels.size());
    layout.c0_len = r;
    for (Eigen::Index j = 0; j < r; ++j)
      labels.push_back("c0_" + std::to_string(j));
  }
  const Eigen::Index out_dim = static_cast<Eigen::Index>(labels.size());

  // Transformation caches for the straPP family.
  std::shared_ptr<detail::SideCache> hist_cache, curr_cache;
  if (is_strapp) {
    hist_cache = std::make_shared<detail::SideCache>(
        detail::SideCache::make(*spec.ctx, Side::Historical));
    curr_cache = std::make_shared<detail::SideCache>(
        detail::SideCache::make(*spec.ctx, Side::Current));
  }

  auto pp = std::make_shared<const ModelPair>(pair);
  PriorSpec spec_copy = spec;
  std::vector<Eigen::Index> borrowed_copy = borrowed;
  std::vector<Eigen::Index> rest_copy = rest;

  EvalFn eval = [pp, spec_copy, sm, borrowed_copy, rest_copy, r, p, out_dim,
                 layout, hist_cache, curr_cache,
                 curr_free, hist_free, hist_phi_sampled](
                    const Vector& state) -> EvalResult {
    EvalResult res;
    res.row = Vector::Zero(out_dim);

    GlmParams curr{state.segment(0, p), 1.0};
    double curr_logphi = 0.0;
    if (sm.curr_logphi >= 0) {
      curr_logphi = state[sm.curr_logphi];
      if (curr_logphi > 700.0 || curr_logphi < -700.0) return res;
      curr.phi = std::exp(curr_logphi);
    }

    double ld = glm::log_likelihood(pp->curr_family, curr, pp->curr);
    if (!std::isfinite(ld)) return res;
    if (curr_free)
      ld += detail::dispersion_logprior(spec_copy.curr_dispersion_prior,
                                        curr.phi, curr_logphi);

    GlmParams hist{Vector::Zero(p), 1.0};
    double hist_logphi = 0.0;
    if (sm.hist_logphi >= 0) {
      hist_logphi = state[sm.hist_logphi];
      if (hist_logphi > 700.0 || hist_logphi < -700.0) return res;
      hist.phi = std::exp(hist_logphi);
    } else if (hist_free) {
      hist.phi = 1.0;
    }

    switch (spec_copy.kind) {
      case PriorKind::UniformImproper:
        break;
      case PriorKind::PowerPrior:
      case PriorKind::AsymptoticPP: {
        for (Eigen::Index k = 0; k < r; ++k)
          hist.beta[borrowed_copy[static_cast<std::size_t>(k)]] =
              curr.beta[borrowed_copy[static_cast<std::size_t>(k)]];
        for (std::size_t k = 0; k < rest_copy.size(); ++k)
          hist.beta[rest_copy[k]] =
              state[sm.hist_extra + static_cast<Eigen::Index>(k)];
        if (spec_copy.kind == PriorKind::PowerPrior) {
          const double ll =
              glm::log_likelihood(pp->hist_family, hist, pp->hist);
          if (!std::isfinite(ll)) return res;
          ld += spec_copy.a0 * ll;
          if (hist_phi_sampled)
            ld += detail::dispersion_logprior(spec_copy.hist_dispersion_prior,
                                              hist.phi, hist_logphi);
        } else {
          if (spec_copy.a0 > 0.0) {
            const double lp =
                priors::log_asymptotic_pp_impl(spec_copy, hist, pp->hist);
            if (!std::isfinite(lp)) return res;
            ld += lp;
          }
        }
        break;
      }
      case PriorKind::Commensurate: {
        hist.beta = state.segment(sm.hist_beta, p);
        const double logtau = state[sm.logtau];
        if (logtau > 700.0 || logtau < -700.0) return res;
        const double tau = std::exp(logtau);
        const double ll = glm::log_likelihood(pp->hist_family, hist, pp->hist);
        if (!std::isfinite(ll)) return res;
        Vector diff(r);
        for (Eigen::Index k = 0; k < r; ++k) {
          const Eigen::Index j = borrowed_copy[static_cast<std::size_t>(k)];
          diff[k] = curr.beta[j] - hist.beta[j];
        }
        const GammaPrior tau_prior{2.0, spec_copy.b0};
        ld += ll + priors::iso_normal_logpdf(diff, 1.0 / tau) +
              tau_prior.log_density(tau) + logtau;
        if (hist_phi_sampled)
          ld += detail::dispersion_logprior(spec_copy.hist_dispersion_prior,
                                            hist.phi, hist_logphi);
        res.row[layout.tau_col] = tau;
        break;
      }
      case PriorKind::StraPP:
      case PriorKind::GenStraPP: {
        const TransformContext& ctx = *spec_copy.ctx;
        Vector c0 = Vector::Zero(r);
        if (sm.c0 >= 0)
          c0 = state.segment(sm.c0, r);
        else
          c0 = ctx.c0;

        for (std::size_t k = 0; k < rest_copy.size(); ++k)
          hist.beta[rest_copy[k]] =
              state[sm.hist_extra + static_cast<Eigen::Index>(k)];

        Vector target;
        try {
          target = curr_cache->standardized(ctx, Side::Current, curr) + c0;
        } catch (const NumericalError&) {
          return res;
        }
        if (hist_cache->param_free) {
          const Vector eta_b =
              hist_cache->linear_solve(ctx, Side::Historical, hist, target);
          transform::set_borrowed_part(ctx, hist.beta, eta_b);
        } else {
          try {
            hist = transform::solve_constraint(ctx, Side::Historical, target,
                                               hist);
          } catch (const NumericalError&) {
            res.solver_failed = true;
            return res;
          }
        }
        double jac, resid;
        try {
          jac = curr_cache->bracket_logdet(ctx, Side::Current, curr) -
                hist_cache->bracket_logdet(ctx, Side::Historical, hist);
          resid = (hist_cache->standardized(ctx, Side::Historical, hist) -
                   target)
                      .lpNorm<Eigen::Infinity>();
        } catch (const NumericalError&) {
          return res;
        }
        const double ll = glm::log_likelihood(pp->hist_family, hist, pp->hist);
        if (!std::isfinite(ll) || !std::isfinite(jac)) return res;
        ld += spec_copy.a0 * ll + jac;
        if (hist_phi_sampled)
          ld += detail::dispersion_logprior(spec_copy.hist_dispersion_prior,
                                            hist.phi, hist_logphi);
        if (sm.c0 >= 0) ld += priors::iso_normal_logpdf(c0, spec_copy.omega0);
        res.residual = resid;
        break;
      }
    }

    res.row.segment(0, p) = curr.beta;
    if (layout.curr_phi_col >= 0) res.row[layout.curr_phi_col] = curr.phi;
    if (layout.hist_beta_start >= 0)
      res.row.segment(layout.hist_beta_start, p) = hist.beta;
    if (layout.hist_phi_col >= 0) res.row[layout.hist_phi_col] = hist.phi;
    if (layout.c0_start >= 0)
      res.row.segment(layout.c0_start, layout.c0_len) = state.segment(sm.c0, r);
    res.logdens = ld;
    return res;
  };

  detail::BuiltTarget built;
  built.eval = std::move(eval);
  built.init = std::move(init);
  built.proposal_cov = std::move(cov);
  built.labels = std::move(labels);
  built.layout = layout;
  return built;
}

/// Assembles the complementary posterior target (state on the historical
/// side, current borrowed coordinates obtained by the linear solve available
/// when the current information matrix is parameter-free).
inline detail::BuiltTarget build_eta_side_target(const ModelPair& pair,
                                                 const PriorSpec& spec) {
  using detail::StateMap;
  spec.validate();
  if (spec.kind != PriorKind::StraPP && spec.kind != PriorKind::GenStraPP)
    throw InvalidSpec("complementary sampling is a straPP-family route");
  if (!pair.curr_family.information_parameter_free())
    throw InvalidSpec(
        "complementary sampling requires a parameter-free current "
        "information matrix");
  const TransformContext& ctx = *spec.ctx;
  const Eigen::Index p = pair.curr.p();
  const bool curr_free = pair.curr_family.has_free_dispersion();
  const bool hist_free = pair.hist_family.has_free_dispersion();
  const bool is_gen = spec.kind == PriorKind::GenStraPP;
  const std::vector<Eigen::Index>& borrowed = ctx.borrowed;
  const std::vector<Eigen::Index> rest = detail::complement(p, borrowed);
  const Eigen::Index r = ctx.r();

  StateMap sm;
  sm.hist_beta = 0;
  sm.dim = p;
  if (hist_free) sm.hist_logphi = sm.dim++;
  if (!rest.empty()) {
    sm.curr_extra = sm.dim;
    sm.dim += static_cast<Eigen::Index>(rest.size());
  }
  if (curr_free) sm.curr_logphi = sm.dim++;
  if (is_gen) {
    sm.c0 = sm.dim;
    sm.c0_len = r;
    sm.dim += r;
  }

  const auto hist_mle = glm::fit_mle(pair.hist_family, pair.hist);
  const auto curr_mle = glm::fit_mle(pair.curr_family, pair.curr);

  Vector init = Vector::Zero(sm.dim);
  init.segment(0, p) = hist_mle.params.beta;
  if (sm.hist_logphi >= 0) init[sm.hist_logphi] = std::log(hist_mle.params.phi);
  if (sm.curr_extra >= 0)
    for (std::size_t k = 0; k < rest.size(); ++k)
      init[sm.curr_extra + static_cast<Eigen::Index>(k)] =
          curr_mle.params.beta[rest[k]];
  if (sm.curr_logphi >= 0) init[sm.curr_logphi] = std::log(curr_mle.params.phi);

  Matrix cov = Matrix::Identity(sm.dim, sm.dim);
  detail::append_block(cov, 0, hist_mle.covariance);
  if (sm.hist_logphi >= 0) cov(sm.hist_logphi, sm.hist_logphi) = 2.0 / pair.hist.n();
  if (sm.curr_extra >= 0)
    for (std::size_t a = 0; a < rest.size(); ++a)
      for (std::size_t b = 0; b < rest.size(); ++b)
        cov(sm.curr_extra + static_cast<Eigen::Index>(a),
            sm.curr_extra + static_cast<Eigen::Index>(b)) =
            curr_mle.covariance(rest[a], rest[b]);
  if (sm.curr_logphi >= 0) cov(sm.curr_logphi, sm.curr_logphi) = 2.0 / pair.curr.n();
  if (sm.c0 >= 0)
    cov.block(sm.c0, sm.c0, r, r) = spec.omega0 * Matrix::Identity(r, r);
  cov *= 2.38 * 2.38 / static_cast<double>(sm.dim);

  std::vector<std::string> labels;
  ChainLayout layout;
  layout.p = p;
  layout.fixed_curr_phi = pair.curr_family.fixed_phi();
  for (Eigen::Index j = 0; j < p; ++j)
    labels.push_back("curr_b" + std::to_string(j));
  if (curr_free) {
    layout.curr_phi_col = static_cast<Eigen::Index>(labels.size());
    labels.push_back("curr_phi");
  }
  layout.hist_beta_start = static_cast<Eigen::Index>(labels.size());
  for (Eigen::Index j = 0; j < p; ++j)
    labels.push_back("hist_b" + std::to_string(j));
  if (hist_free) {
    layout.hist_phi_col = static_cast<Eigen::Index>(labels.size());
    labels.push_back("hist_phi");
  }
  if (is_gen) {
    layout.c0_start = static_cast<Eigen::Index>(labels.size());
    layout.c0_len = r;
    for (Eigen::Index j = 0; j < r; ++j)
      labels.push_back("c0_" + std::to_string(j));
  }
  const Eigen::Index out_dim = static_cast<Eigen::Index>(labels.size());

  auto hist_cache = std::make_shared<detail::SideCache>(
      detail::SideCache::make(ctx, Side::Historical));
  auto curr_cache = std::make_shared<detail::SideCache>(
      detail::SideCache::make(ctx, Side::Current));
  auto pair_copy = std::make_shared<const ModelPair>(pair);
  PriorSpec spec_copy = spec;
  std::vector<Eigen::Index> rest_copy = rest;

  EvalFn eval = [pair_copy, spec_copy, sm, rest_copy, r, p, out_dim, layout,
                 hist_cache, curr_cache, curr_free,
                 hist_free](const Vector& state) -> EvalResult {
    EvalResult res;
    res.row = Vector::Zero(out_dim);
    const TransformContext& tctx = *spec_copy.ctx;

    GlmParams hist{state.segment(0, p), 1.0};
    double hist_logphi = 0.0;
    if (sm.hist_logphi >= 0) {
      hist_logphi = state[sm.hist_logphi];
      if (std::abs(hist_logphi) > 700.0) return res;
      hist.phi = std::exp(hist_logphi);
    }
    GlmParams curr{Vector::Zero(p), 1.0};
    double curr_logphi = 0.0;
    if (sm.curr_logphi >= 0) {
      curr_logphi = state[sm.curr_logphi];
      if (std::abs(curr_logphi) > 700.0) return res;
      curr.phi = std::exp(curr_logphi);
    }
    for (std::size_t k = 0; k < rest_copy.size(); ++k)
      curr.beta[rest_copy[k]] =
          state[sm.curr_extra + static_cast<Eigen::Index>(k)];
    Vector c0 = tctx.c0;
    if (sm.c0 >= 0) c0 = state.segment(sm.c0, r);

    // theta_b = S_curr^{-1} (S_hist(eta) eta_b - c0): the linear solve of the
    // parameter-free current side.
    Vector target;
    try {
      target = hist_cache->standardized(tctx, Side::Historical, hist) - c0;
    } catch (const NumericalError&) {
      return res;
    }
    const Vector theta_b =
        curr_cache->linear_solve(tctx, Side::Current, curr, target);
    transform::set_borrowed_part(tctx, curr.beta, theta_b);

    const double ll_hist =
        glm::log_likelihood(pair_copy->hist_family, hist, pair_copy->hist);
    const double ll_curr =
        glm::log_likelihood(pair_copy->curr_family, curr, pair_copy->curr);
    double jac;
    try {
      // |d theta_b / d eta_b| = |D_hist(eta)| / |D_curr|.
      jac = hist_cache->bracket_logdet(tctx, Side::Historical, hist) -
            curr_cache->bracket_logdet(tctx, Side::Current, curr);
    } catch (const NumericalError&) {
      return res;
    }
    if (!std::isfinite(ll_hist) || !std::isfinite(ll_curr) ||
        !std::isfinite(jac))
      return res;

    double ld = spec_copy.a0 * ll_hist + ll_curr + jac;
    if (curr_free)
      ld += detail::dispersion_logprior(spec_copy.curr_dispersion_prior,
                                        curr.phi, curr_logphi);
    if (hist_free)
      ld += detail::dispersion_logprior(spec_copy.hist_dispersion_prior,
                                        hist.phi, hist_logphi);
    if (sm.c0 >= 0) ld += priors::iso_normal_logpdf(c0, spec_copy.omega0);

    res.row.segment(0, p) = curr.beta;
    if (layout.curr_phi_col >= 0) res.row[layout.curr_phi_col] = curr.phi;
    res.row.segment(layout.hist_beta_start, p) = hist.beta;
    if (layout.hist_phi_col >= 0) res.row[layout.hist_phi_col] = hist.phi;
    if (layout.c0_start >= 0) res.row.segment(layout.c0_start, r) = c0;
    res.residual = 0.0;  // exact linear solve
    res.logdens = ld;
    return res;
  };

  detail::BuiltTarget built;
  built.eval = std::move(eval);
  built.init = std::move(init);
  built.proposal_cov = std::move(cov);
  built.labels = std::move(labels);
  built.layout = layout;
  return built;
}

namespace detail {

// Shrinks the coefficient blocks of an infeasible starting point toward
// zero until the target is finite.
inline Vector feasible_init(const EvalFn& eval, const Vector& init,
                            Eigen::Index beta_start, Eigen::Index beta_len) {
  Vector candidate = init;
  for (int k = 0; k <= 20; ++k) {
    if (std::isfinite(eval(candidate).logdens)) return candidate;
    const double shrink = 1.0 - (k + 1) / 20.0;
    candidate = init;
    candidate.segment(beta_start, beta_len) *= std::max(shrink, 0.0);
  }
  throw InitOutOfSupport("no feasible starting point found");
}

}  // namespace detail

/// Sampling route for a prior given the two information-matrix structures.
enum class Route { Direct, Complementary, Constrained };

inline Route choose_route(const ModelPair& pair, const PriorSpec& spec) {
  if (spec.kind != PriorKind::StraPP && spec.kind != PriorKind::GenStraPP)
    return Route::Direct;
  if (spec.a0 == 0.0) return Route::Direct;
  if (pair.hist_family.information_parameter_free()) return Route::Direct;
  if (pair.curr_family.information_parameter_free())
    return Route::Complementary;
  return Route::Constrained;
}

struct FitResult {
  Chain chain;
  ChainLayout layout;
  Route route = Route::Direct;
};

/// Runs the appropriate sampler for the given prior on a data pair. straPP
/// priors with a0 = 0 are definitionally the initial prior, so they reuse
/// the uniform-improper target (bit-identical chains under the same seed).
inline FitResult run_analysis(const ModelPair& pair, const PriorSpec& spec,
                              const SamplerConfig& cfg, std::uint64_t seed,
                              std::uint64_t stream) {
  PriorSpec effective = spec;
  if (spec.a0 == 0.0 && (spec.kind == PriorKind::StraPP ||
                         spec.kind == PriorKind::GenStraPP ||
                         spec.kind == PriorKind::PowerPrior ||
                         spec.kind == PriorKind::AsymptoticPP)) {
    effective = PriorSpec::uniform();
    effective.curr_dispersion_prior = spec.curr_dispersion_prior;
  }

  const Route route = choose_route(pair, effective);
  detail::BuiltTarget built = route == Route::Complementary
                                  ? build_eta_side_target(pair, effective)
                                  : build_theta_side_target(pair, effective);
  Matrix proposal = built.proposal_cov * cfg.proposal_multiplier;
  const Vector init =
      detail::feasible_init(built.eval, built.init, 0, pair.curr.p());
  FitResult result;
  result.route = route;
  result.layout = built.layout;
  result.chain = sampler::run_mh(built.eval, init, proposal, cfg.draws,
                                 RngStream(seed, stream), cfg, seed, stream);
  result.chain.labels = built.labels;
  return result;
}

/// Appendix-style joint sampler over (theta, eta): every retained draw's
/// solved historical parameter satisfies the standardization constraint.
/// Throws SolverFailureRate when more than 5% of proposals fail the solve.
inline FitResult constrained_mh(const ModelPair& pair, const PriorSpec& spec,
                                const SamplerConfig& cfg, std::uint64_t seed,
                                std::uint64_t stream) {
  if (spec.kind != PriorKind::StraPP && spec.kind != PriorKind::GenStraPP)
    throw InvalidSpec("constrained sampler requires a straPP-family prior");
  detail::BuiltTarget built = build_theta_side_target(pair, spec);
  Matrix proposal = built.proposal_cov * cfg.proposal_multiplier;
  const Vector init =
      detail::feasible_init(built.eval, built.init, 0, pair.curr.p());
  FitResult result;
  result.route = Route::Constrained;
  result.layout = built.layout;
  result.chain = sampler::run_mh(built.eval, init, proposal, cfg.draws,
                                 RngStream(seed, stream), cfg, seed, stream);
  result.chain.labels = built.labels;
  if (result.chain.solver_failures >
      0.05 * static_cast<double>(result.chain.proposals))
    throw SolverFailureRate("constraint solver failed on more than 5% of "
                            "proposals");
  return result;
}

/// Complementary-posterior sampler: state on the historical side, draws
/// mapped back to the current parameterization (leading columns).
inline FitResult complementary_sample(const ModelPair& pair,
                                      const PriorSpec& spec,
                                      const SamplerConfig& cfg,
                                      std::uint64_t seed,
                                      std::uint64_t stream) {
  detail::BuiltTarget built = build_eta_side_target(pair, spec);
  Matrix proposal = built.proposal_cov * cfg.proposal_multiplier;
  const Vector init = detail::feasible_init(built.eval, built.init, 0,
                                            pair.hist.p());
  FitResult result;
  result.route = Route::Complementary;
  result.layout = built.layout;
  result.chain = sampler::run_mh(built.eval, init, proposal, cfg.draws,
                                 RngStream(seed, stream), cfg, seed, stream);
  result.chain.labels = built.labels;
  return result;
}

}  // namespace sampler
}  // namespace strapp

#endif  // STRAPP_SAMPLER_HPP
