#ifndef STRAPP_TRANSFORM_HPP
#define STRAPP_TRANSFORM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "strapp/config.hpp"
#include "strapp/errors.hpp"
#include "strapp/glm.hpp"
#include "strapp/linalg.hpp"

namespace strapp {

enum class Side { Historical, Current };
enum class Direction { HistToCurr, CurrToHist };

/// Everything needed to evaluate the scale transformation between the
/// historical and current model parameters. Both information matrices are
/// computed on the historical design X0. `borrowed` lists the coordinates
/// the transformation acts on (all of them for full borrowing); the
/// standardized-parameter constraint, with shift c0, reads
///
///   sqrt(I0[b,b](eta)) * eta[b] = sqrt(I1[b,b](theta)) * theta[b] + c0.
///
/// I0[b,b] and I1[b,b] are the r x r submatrices of the full information
/// matrices at the borrowed indices, evaluated at the full parameter vector.
struct TransformContext {
  GlmFamily hist_family;
  GlmFamily curr_family;
  Matrix X0;
  std::vector<Eigen::Index> borrowed;
  Vector c0;

  TransformContext(GlmFamily hist, GlmFamily curr, Matrix design,
                   std::vector<Eigen::Index> borrow = {},
                   Vector shift = Vector())
      : hist_family(hist),
        curr_family(curr),
        X0(std::move(design)),
        borrowed(std::move(borrow)),
        c0(std::move(shift)) {
    if (borrowed.empty()) {
      borrowed.resize(static_cast<std::size_t>(X0.cols()));
      for (Eigen::Index j = 0; j < X0.cols(); ++j)
        borrowed[static_cast<std::size_t>(j)] = j;
    }
    std::sort(borrowed.begin(), borrowed.end());
    if (std::adjacent_find(borrowed.begin(), borrowed.end()) != borrowed.end())
      throw InvalidSpec("borrowed indices must be distinct");
    if (borrowed.front() < 0 || borrowed.back() >= X0.cols())
      throw InvalidSpec("borrowed index out of range");
    if (c0.size() == 0) c0 = Vector::Zero(r());
    if (c0.size() != r())
      throw InvalidSpec("c0 length must match number of borrowed coordinates");
    Eigen::ColPivHouseholderQR<Matrix> qr(X0);
    if (qr.rank() < X0.cols())
      throw RankDeficientDesign("historical design is rank deficient");
  }

  Eigen::Index p() const { return X0.cols(); }
  Eigen::Index r() const { return static_cast<Eigen::Index>(borrowed.size()); }
  bool full_borrowing() const { return r() == p(); }

  const GlmFamily& family(Side side) const {
    return side == Side::Historical ? hist_family : curr_family;
  }
};

namespace transform {

inline Vector borrowed_part(const TransformContext& ctx, const Vector& full) {
  Vector sub(ctx.r());
  for (Eigen::Index k = 0; k < ctx.r(); ++k)
    sub[k] = full[ctx.borrowed[static_cast<std::size_t>(k)]];
  return sub;
}

inline void set_borrowed_part(const TransformContext& ctx, Vector& full,
                              const Vector& sub) {
  for (Eigen::Index k = 0; k < ctx.r(); ++k)
    full[ctx.borrowed[static_cast<std::size_t>(k)]] = sub[k];
}

inline Matrix borrowed_block(const TransformContext& ctx, const Matrix& full) {
  Matrix sub(ctx.r(), ctx.r());
  for (Eigen::Index a = 0; a < ctx.r(); ++a)
    for (Eigen::Index b = 0; b < ctx.r(); ++b)
      sub(a, b) = full(ctx.borrowed[static_cast<std::size_t>(a)],
                       ctx.borrowed[static_cast<std::size_t>(b)]);
  return sub;
}

inline void check_saturation(const TransformContext& ctx, Side side,
                             const GlmParams& params,
                             const Tolerances& tol = default_tolerances()) {
  if (ctx.family(side).kind() != FamilyKind::BernoulliLogit) return;
  const Vector eta = ctx.X0 * params.beta;
  if (eta.lpNorm<Eigen::Infinity>() > tol.saturation_cutoff)
    throw IndefiniteInformation("Bernoulli variance saturated");
}

/// Square root of the borrowed information sub-block for one side.
inline Matrix info_sqrt(const TransformContext& ctx, Side side,
                        const GlmParams& params,
                        const Tolerances& tol = default_tolerances()) {
  check_saturation(ctx, side, params, tol);
  const Matrix info =
      glm::fisher_information(ctx.family(side), params, ctx.X0);
  try {
    return linalg::spd_sqrt(borrowed_block(ctx, info), tol);
  } catch (const IndefiniteMatrix&) {
    throw IndefiniteInformation("information sub-block indefinite");
  }
}

/// Standardized borrowed coordinates sqrt(I[b,b]) * beta[b].
inline Vector standardize(const TransformContext& ctx, Side side,
                          const GlmParams& params,
                          const Tolerances& tol = default_tolerances()) {
  return info_sqrt(ctx, side, params, tol) * borrowed_part(ctx, params.beta);
}

/// Jacobian of the standardization map in the borrowed coordinates:
///
///   D = {d sqrt(I[b,b]) / d beta_bj} beta[b] + sqrt(I[b,b]),
///
/// with each square-root derivative obtained from the Sylvester solve of the
/// product-rule identity applied to dI/dbeta_j.
inline Matrix standardize_jacobian(const TransformContext& ctx, Side side,
                                   const GlmParams& params,
                                   const Tolerances& tol = default_tolerances()) {
  const Matrix s = info_sqrt(ctx, side, params, tol);
  Matrix jac = s;
  if (ctx.family(side).information_parameter_free()) return jac;
  const Vector beta_b = borrowed_part(ctx, params.beta);
  for (Eigen::Index j = 0; j < ctx.r(); ++j) {
    const Matrix dinfo = glm::fisher_information_derivative(
        ctx.family(side), params, ctx.X0,
        ctx.borrowed[static_cast<std::size_t>(j)]);
    const Matrix ds = linalg::sqrt_derivative(s, borrowed_block(ctx, dinfo), tol);
    jac.col(j) += ds * beta_b;
  }
  return jac;
}

/// Solves the standardization constraint on one side: finds borrowed
/// coordinates b such that sqrt(I[b,b]) * b = target, holding the
/// non-borrowed coordinates (and dispersion) of `shell` fixed. Damped Newton
/// with the exact Jacobian; the default start premultiplies the target by
/// the inverse information root at beta[b] = 0, with +-0.5 multi-start
/// fallbacks. Iterations continue past the acceptance residual while they
/// still improve, so downstream finite-difference checks see solver noise
/// well below truncation error.
inline GlmParams solve_constraint(const TransformContext& ctx, Side side,
                                  const Vector& target, const GlmParams& shell,
                                  const Vector* init = nullptr,
                                  const Tolerances& tol = default_tolerances()) {
  if (target.size() != ctx.r())
    throw DimensionMismatch("target length != borrowed count");

  GlmParams params = shell;
  if (params.beta.size() != ctx.p())
    throw DimensionMismatch("shell beta length != design columns");

  Vector start(ctx.r());
  if (init != nullptr) {
    start = *init;
  } else {
    GlmParams at_zero = shell;
    set_borrowed_part(ctx, at_zero.beta, Vector::Zero(ctx.r()));
    const Matrix s0 = info_sqrt(ctx, side, at_zero, tol);
    start = s0.llt().solve(target);
  }

  const auto residual = [&](const Vector& b, Vector& out) -> bool {
    set_borrowed_part(ctx, params.beta, b);
    try {
      out = standardize(ctx, side, params, tol) - target;
      return out.allFinite();
    } catch (const NumericalError&) {
      return false;
    }
  };

  std::vector<Vector> starts{start};
  starts.push_back(start.array() + 0.5);
  starts.push_back(start.array() - 0.5);
  {
    Vector alt = start;
    for (Eigen::Index k = 0; k < ctx.r(); ++k) alt[k] += (k % 2 == 0) ? 0.5 : -0.5;
    starts.push_back(alt);
  }

  double best_res = std::numeric_limits<double>::infinity();
  for (const Vector& s0 : starts) {
    Vector b = s0;
    Vector f(ctx.r());
    if (!residual(b, f)) continue;
    double fnorm = f.lpNorm<Eigen::Infinity>();
    for (int iter = 0; iter < tol.constraint_max_iter; ++iter) {
      if (fnorm < 1e-14) break;
      Matrix jac;
      try {
        jac = standardize_jacobian(ctx, side, params, tol);
      } catch (const NumericalError&) {
        break;
      }
      const Vector step = jac.fullPivLu().solve(f);
      if (!step.allFinite()) break;
      double scale = 1.0;
      bool moved = false;
      for (int half = 0; half < 25; ++half) {
        Vector trial = b - scale * step;
        Vector ftrial(ctx.r());
        if (residual(trial, ftrial) &&
            ftrial.lpNorm<Eigen::Infinity>() < fnorm) {
          b = trial;
          f = ftrial;
          fnorm = ftrial.lpNorm<Eigen::Infinity>();
          moved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!moved) break;
    }
    if (fnorm < best_res) best_res = fnorm;
    if (fnorm < tol.constraint_tol) {
      set_borrowed_part(ctx, params.beta, b);
      return params;
    }
  }
  throw NonConvergence("constraint solve failed; best residual " +
                       std::to_string(best_res));
}

/// Maps parameters across the transformation. The constraint convention is
///   standardized(hist) = standardized(curr) + c0,
/// so curr -> hist targets standardized(curr) + c0 and hist -> curr targets
/// standardized(hist) - c0. Non-borrowed coordinates and the dispersion of
/// the result come from `target_shell` (defaults to the source parameters).
/// When the target side's information matrix is parameter-free the solve
/// collapses to one linear system.
inline GlmParams map_params(const TransformContext& ctx, const GlmParams& source,
                            Direction direction,
                            const std::optional<GlmParams>& target_shell = {},
                            const std::optional<Vector>& c0_override = {},
                            const Vector* init = nullptr,
                            const Tolerances& tol = default_tolerances()) {
  const Side from =
      direction == Direction::CurrToHist ? Side::Current : Side::Historical;
  const Side to =
      direction == Direction::CurrToHist ? Side::Historical : Side::Current;
  const Vector& c0 = c0_override ? *c0_override : ctx.c0;
  if (c0.size() != ctx.r()) throw DimensionMismatch("c0 length != borrowed count");

  Vector target = standardize(ctx, from, source, tol);
  if (direction == Direction::CurrToHist)
    target += c0;
  else
    target -= c0;

  GlmParams shell = target_shell ? *target_shell : source;
  if (ctx.family(to).information_parameter_free()) {
    const Matrix s = info_sqrt(ctx, to, shell, tol);
    GlmParams out = shell;
    set_borrowed_part(ctx, out.beta, Vector(s.llt().solve(target)));
    return out;
  }
  return solve_constraint(ctx, to, target, shell, init, tol);
}

/// log |det d eta / d theta| restricted to the borrowed coordinates, with
/// eta = g_c0(theta) already solved. Implicit differentiation of the
/// constraint gives  d eta_b / d theta_b = D_hist^{-1} D_curr  where D_side
/// is the standardization Jacobian, so the log determinant is the
/// difference of the two bracket log determinants.
inline double jacobian_logdet_at(const TransformContext& ctx,
                                 const GlmParams& curr, const GlmParams& hist,
                                 const Tolerances& tol = default_tolerances()) {
  const Matrix d_curr = standardize_jacobian(ctx, Side::Current, curr, tol);
  const Matrix d_hist = standardize_jacobian(ctx, Side::Historical, hist, tol);
  try {
    return linalg::logdet_abs(d_curr, tol) - linalg::logdet_abs(d_hist, tol);
  } catch (const SingularMatrix&) {
    throw SingularJacobian("bracket matrix singular");
  }
}

/// Convenience overload that solves for the historical parameter first.
/// `hist_shell` supplies non-borrowed historical coordinates (defaults to
/// the current parameters, which is only meaningful for full borrowing).
inline double jacobian_logdet(const TransformContext& ctx, const GlmParams& curr,
                              const std::optional<GlmParams>& hist_shell = {},
                              const std::optional<Vector>& c0_override = {},
                              const Tolerances& tol = default_tolerances()) {
  const GlmParams hist = map_params(ctx, curr, Direction::CurrToHist,
                                    hist_shell, c0_override, nullptr, tol);
  return jacobian_logdet_at(ctx, curr, hist, tol);
}

}  // namespace transform
}  // namespace strapp

#endif  // STRAPP_TRANSFORM_HPP
