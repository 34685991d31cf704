#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "strapp/rng.hpp"
#include "strapp/transform.hpp"

using strapp::Direction;
using strapp::GlmFamily;
using strapp::GlmParams;
using strapp::Matrix;
using strapp::Side;
using strapp::TransformContext;
using strapp::Vector;
namespace transform = strapp::transform;

namespace {

Matrix balanced_design(Eigen::Index n, bool with_age, strapp::RngStream* rng) {
  Matrix X = Matrix::Ones(n, with_age ? 3 : 2);
  for (Eigen::Index i = 0; i < n; ++i) X(i, 1) = (i < n / 2) ? 1.0 : 0.0;
  if (with_age)
    for (Eigen::Index i = 0; i < n; ++i) X(i, 2) = rng->normal();
  return X;
}

// Central-difference log-determinant of the map theta -> eta restricted to
// the borrowed coordinates, holding non-borrowed historical coordinates at
// the shell values.
double fd_jacobian_logdet(const TransformContext& ctx, const GlmParams& curr,
                          const GlmParams& hist_shell, double h = 1e-6) {
  const Eigen::Index r = ctx.r();
  Matrix jac(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    GlmParams up = curr, dn = curr;
    up.beta[ctx.borrowed[static_cast<std::size_t>(j)]] += h;
    dn.beta[ctx.borrowed[static_cast<std::size_t>(j)]] -= h;
    const GlmParams eta_up =
        transform::map_params(ctx, up, Direction::CurrToHist, hist_shell);
    const GlmParams eta_dn =
        transform::map_params(ctx, dn, Direction::CurrToHist, hist_shell);
    jac.col(j) = (transform::borrowed_part(ctx, eta_up.beta) -
                  transform::borrowed_part(ctx, eta_dn.beta)) /
                 (2.0 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace

TEST_CASE("standardize scalar case and linearity", "[transform]") {
  Matrix X = Matrix::Ones(2, 1);
  TransformContext ctx(GlmFamily::normal_known(2.0), GlmFamily::normal_known(1.0),
                       X);
  GlmParams params{Vector::Zero(1), 1.0};
  params.beta << 3.0;
  const Vector s = transform::standardize(ctx, Side::Historical, params);
  // I = 2 / 4 = 0.5, so the standardized value is sqrt(0.5) * 3.
  REQUIRE(s[0] == Catch::Approx(std::sqrt(0.5) * 3.0).margin(1e-12));

  GlmParams zero{Vector::Zero(1), 1.0};
  REQUIRE(transform::standardize(ctx, Side::Historical, zero).norm() == 0.0);

  GlmParams other{Vector::Zero(1), 1.0};
  other.beta << -1.7;
  const Vector s2 = transform::standardize(ctx, Side::Historical, other);
  REQUIRE(s[0] / s2[0] == Catch::Approx(3.0 / -1.7).margin(1e-12));
}

TEST_CASE("solve_constraint inverts standardize", "[transform]") {
  Matrix X = Matrix::Ones(2, 1);
  TransformContext ctx(GlmFamily::normal_known(2.0), GlmFamily::bernoulli(), X);

  GlmParams shell{Vector::Zero(1), 1.0};
  // Zero target has the zero fixed point on both sides.
  for (Side side : {Side::Historical, Side::Current}) {
    const GlmParams at_zero =
        transform::solve_constraint(ctx, side, Vector::Zero(1), shell);
    REQUIRE(at_zero.beta.norm() < 1e-10);
  }

  Vector target(1);
  target << std::sqrt(0.5) * 3.0;
  const GlmParams solved =
      transform::solve_constraint(ctx, Side::Historical, target, shell);
  REQUIRE(solved.beta[0] == Catch::Approx(3.0).margin(1e-9));
}

TEST_CASE("solve_constraint round-trips a 2-d Bernoulli standardization",
          "[transform]") {
  strapp::RngStream rng(17, 2);
  const Matrix X = balanced_design(40, false, nullptr);
  TransformContext ctx(GlmFamily::bernoulli(), GlmFamily::poisson(), X);
  for (int rep = 0; rep < 10; ++rep) {
    GlmParams truth{Vector::Zero(2), 1.0};
    truth.beta << 0.8 * rng.normal(), 0.8 * rng.normal();
    const Vector target = transform::standardize(ctx, Side::Historical, truth);
    GlmParams shell{Vector::Zero(2), 1.0};
    const GlmParams solved =
        transform::solve_constraint(ctx, Side::Historical, target, shell);
    const Vector back = transform::standardize(ctx, Side::Historical, solved);
    REQUIRE((back - target).lpNorm<Eigen::Infinity>() < 1e-8);
    REQUIRE((solved.beta - truth.beta).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("map_params reduces to the sigma ratio for normal pairs",
          "[transform]") {
  strapp::RngStream rng(3, 3);
  Matrix X = balanced_design(30, true, &rng);
  const double sigma0 = 1.4, sigma1 = 0.6;
  TransformContext ctx(GlmFamily::normal_known(sigma0),
                       GlmFamily::normal_known(sigma1), X);
  GlmParams hist{Vector::Zero(3), 1.0};
  hist.beta << 1.0, -0.7, 0.4;
  const GlmParams curr =
      transform::map_params(ctx, hist, Direction::HistToCurr);
  REQUIRE((curr.beta - (sigma1 / sigma0) * hist.beta).norm() < 1e-10);

  // Identical models: the identity map.
  TransformContext same(GlmFamily::normal_known(sigma0),
                        GlmFamily::normal_known(sigma0), X);
  const GlmParams mapped =
      transform::map_params(same, hist, Direction::HistToCurr);
  REQUIRE((mapped.beta - hist.beta).norm() < 1e-12);
}

TEST_CASE("map_params matches the direct shifted closed form for "
          "binary-to-normal",
          "[transform]") {
  const Matrix X = balanced_design(100, false, nullptr);
  const double sigma1 = 2.0;
  Vector c0(2);
  c0 << 0.0, 0.8;
  TransformContext ctx(GlmFamily::bernoulli(), GlmFamily::normal_known(sigma1),
                       X, {}, c0);
  GlmParams hist{Vector::Zero(2), 1.0};
  hist.beta << 0.5, 0.25;

  // Direct matrix arithmetic: theta = I1^{-1/2} (I0^{1/2}(beta0) beta0 - c0).
  const Matrix info0 =
      strapp::glm::fisher_information(GlmFamily::bernoulli(), hist, X);
  const Matrix info1 = X.transpose() * X / (sigma1 * sigma1);
  Eigen::SelfAdjointEigenSolver<Matrix> e0(info0), e1(info1);
  const Vector direct =
      e1.operatorInverseSqrt() * (e0.operatorSqrt() * hist.beta - c0);

  const GlmParams mapped =
      transform::map_params(ctx, hist, Direction::HistToCurr);
  REQUIRE((mapped.beta - direct).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("map_params round-trips across family pairs with and without c0",
          "[transform]") {
  strapp::RngStream rng(9, 1);
  Matrix X = balanced_design(60, true, &rng);

  struct Pair {
    GlmFamily hist;
    GlmFamily curr;
  };
  const std::vector<Pair> pairs = {
      {GlmFamily::normal_known(1.0), GlmFamily::normal_known(2.0)},
      {GlmFamily::bernoulli(), GlmFamily::normal_known(1.5)},
      {GlmFamily::bernoulli(), GlmFamily::poisson()},
      {GlmFamily::poisson(), GlmFamily::exponential()},
  };
  for (const auto& pair : pairs) {
    for (bool shifted : {false, true}) {
      Vector c0 = Vector::Zero(3);
      if (shifted) c0 << 0.0, 0.2, -0.15;
      TransformContext ctx(pair.hist, pair.curr, X, {}, c0);
      for (int rep = 0; rep < 5; ++rep) {
        // Small coefficients keep the standardized target inside the
        // reachable set of the bounded Bernoulli/Poisson standardizations.
        GlmParams curr{Vector::Zero(3), 1.0};
        curr.beta << 0.12 * rng.normal(), 0.12 * rng.normal(),
            0.12 * rng.normal();
        const GlmParams hist =
            transform::map_params(ctx, curr, Direction::CurrToHist);
        const GlmParams back =
            transform::map_params(ctx, hist, Direction::HistToCurr);
        REQUIRE((back.beta - curr.beta).lpNorm<Eigen::Infinity>() < 1e-7);

        // The mapped pair satisfies the standardization constraint.
        const Vector lhs = transform::standardize(ctx, Side::Historical, hist);
        const Vector rhs =
            transform::standardize(ctx, Side::Current, curr) + c0;
        REQUIRE((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-8);
      }
    }
  }
}

TEST_CASE("jacobian_logdet is the closed form for normal pairs",
          "[transform]") {
  strapp::RngStream rng(21, 6);
  Matrix X = balanced_design(40, true, &rng);
  const double sigma0 = 1.3, sigma1 = 0.9;
  TransformContext ctx(GlmFamily::normal_known(sigma0),
                       GlmFamily::normal_known(sigma1), X);
  const double expected = 3.0 * std::log(sigma0 / sigma1);
  for (int rep = 0; rep < 5; ++rep) {
    GlmParams curr{Vector::Zero(3), 1.0};
    curr.beta << rng.normal(), rng.normal(), rng.normal();
    REQUIRE(transform::jacobian_logdet(ctx, curr) ==
            Catch::Approx(expected).margin(1e-10));
  }

  TransformContext same(GlmFamily::normal_known(sigma0),
                        GlmFamily::normal_known(sigma0), X);
  GlmParams any{Vector::Zero(3), 1.0};
  any.beta << 0.5, -0.5, 0.1;
  REQUIRE(transform::jacobian_logdet(same, any) ==
          Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("jacobian_logdet agrees with finite differences of map_params",
          "[transform]") {
  strapp::RngStream rng(33, 7);
  Matrix X = balanced_design(50, true, &rng);

  struct Pair {
    GlmFamily hist;
    GlmFamily curr;
  };
  const std::vector<Pair> pairs = {
      {GlmFamily::bernoulli(), GlmFamily::poisson()},
      {GlmFamily::bernoulli(), GlmFamily::normal_known(2.0)},
      {GlmFamily::poisson(), GlmFamily::exponential()},
      {GlmFamily::poisson(), GlmFamily::bernoulli()},
  };
  for (const auto& pair : pairs) {
    TransformContext ctx(pair.hist, pair.curr, X);
    for (int rep = 0; rep < 10; ++rep) {
      GlmParams curr{Vector::Zero(3), 1.0};
      curr.beta << 0.12 * rng.normal(), 0.12 * rng.normal(),
          0.12 * rng.normal();
      GlmParams shell{Vector::Zero(3), 1.0};
      const double analytic = transform::jacobian_logdet(ctx, curr, shell);
      const double fd = fd_jacobian_logdet(ctx, curr, shell);
      REQUIRE(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-3) < 1e-4);
    }
  }
}

TEST_CASE("jacobian_logdet handles partial borrowing at fixed eta2",
          "[transform]") {
  strapp::RngStream rng(41, 8);
  Matrix X = balanced_design(50, true, &rng);
  TransformContext ctx(GlmFamily::bernoulli(), GlmFamily::poisson(), X,
                       {1, 2});
  GlmParams curr{Vector::Zero(3), 1.0};
  curr.beta << 0.2, 0.15, -0.1;
  GlmParams shell{Vector::Zero(3), 1.0};
  shell.beta[0] = -0.6;
  const double analytic = transform::jacobian_logdet(ctx, curr, shell);
  const double fd = fd_jacobian_logdet(ctx, curr, shell);
  REQUIRE(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-3) < 1e-4);
}

TEST_CASE("saturated Bernoulli points are rejected as indefinite",
          "[transform]") {
  const Matrix X = balanced_design(10, false, nullptr);
  TransformContext ctx(GlmFamily::bernoulli(), GlmFamily::poisson(), X);
  GlmParams far{Vector::Zero(2), 1.0};
  far.beta << 40.0, 0.0;
  REQUIRE_THROWS_AS(transform::standardize(ctx, Side::Historical, far),
                    strapp::IndefiniteInformation);
}

TEST_CASE("context validates its invariants", "[transform]") {
  const Matrix X = balanced_design(10, false, nullptr);
  REQUIRE_THROWS_AS(TransformContext(GlmFamily::bernoulli(),
                                     GlmFamily::poisson(), X, {0, 0}),
                    strapp::InvalidSpec);
  Matrix flat = Matrix::Ones(10, 2);  // second column constant too
  REQUIRE_THROWS_AS(
      TransformContext(GlmFamily::bernoulli(), GlmFamily::poisson(), flat),
      strapp::RankDeficientDesign);
}
