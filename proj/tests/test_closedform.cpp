#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "strapp/analysis.hpp"
#include "strapp/closedform.hpp"
#include "strapp/sampler.hpp"

using strapp::Matrix;
using strapp::NormalNormalSetup;
using strapp::NormalPriorKind;
using strapp::Vector;
namespace closedform = strapp::closedform;

namespace {

Matrix balanced(Eigen::Index n) {
  Matrix X = Matrix::Ones(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) X(i, 1) = (i < n / 2) ? 1.0 : 0.0;
  return X;
}

NormalNormalSetup simulated_setup(strapp::RngStream& rng, Eigen::Index n0,
                                  Eigen::Index n1, double sigma0,
                                  double sigma1, double a0,
                                  const Vector& beta1) {
  NormalNormalSetup s;
  s.X0 = balanced(n0);
  s.X1 = balanced(n1);
  s.sigma0 = sigma0;
  s.sigma1 = sigma1;
  s.a0 = a0;
  const Vector beta0 = (sigma0 / sigma1) * beta1;
  s.Y0 = s.X0 * beta0;
  s.Y1 = s.X1 * beta1;
  for (Eigen::Index i = 0; i < n0; ++i) s.Y0[i] += sigma0 * rng.normal();
  for (Eigen::Index i = 0; i < n1; ++i) s.Y1[i] += sigma1 * rng.normal();
  return s;
}

}  // namespace

TEST_CASE("nn_prior coincidence, rescaled mean, and the hand-computed case",
          "[closedform]") {
  strapp::RngStream rng(1, 0);
  NormalNormalSetup s = simulated_setup(rng, 40, 40, 1.2, 1.2, 0.7,
                                        (Vector(2) << 1.0, 0.5).finished());
  const auto pp = closedform::nn_prior(s, NormalPriorKind::PowerPrior);
  const auto st = closedform::nn_prior(s, NormalPriorKind::StraPP);
  REQUIRE((pp.mean - st.mean).norm() < 1e-12);
  REQUIRE((pp.cov - st.cov).norm() < 1e-12);

  s.sigma1 = 3.0;
  const auto st2 = closedform::nn_prior(s, NormalPriorKind::StraPP);
  const Vector bhat0 = (s.X0.transpose() * s.X0)
                           .ldlt()
                           .solve(s.X0.transpose() * s.Y0);
  REQUIRE((st2.mean - (3.0 / 1.2) * bhat0).norm() < 1e-12);

  // Intercept-only, Y0 = (1, 3), sigma0 = 1, sigma1 = 2, a0 = 0.5:
  // PP = N(2, 1); straPP mean 4 and variance (sigma1^2/a0) (X0'X0)^{-1} = 4.
  NormalNormalSetup tiny;
  tiny.X0 = Matrix::Ones(2, 1);
  tiny.X1 = Matrix::Ones(2, 1);
  tiny.Y0 = (Vector(2) << 1.0, 3.0).finished();
  tiny.sigma0 = 1.0;
  tiny.sigma1 = 2.0;
  tiny.a0 = 0.5;
  const auto tiny_pp = closedform::nn_prior(tiny, NormalPriorKind::PowerPrior);
  REQUIRE(tiny_pp.mean[0] == Catch::Approx(2.0));
  REQUIRE(tiny_pp.cov(0, 0) == Catch::Approx(1.0));
  const auto tiny_st = closedform::nn_prior(tiny, NormalPriorKind::StraPP);
  REQUIRE(tiny_st.mean[0] == Catch::Approx(4.0));
  REQUIRE(tiny_st.cov(0, 0) == Catch::Approx(4.0));
}

TEST_CASE("nn_posterior limits and PD covariances", "[closedform]") {
  strapp::RngStream rng(2, 0);
  NormalNormalSetup s = simulated_setup(rng, 50, 100, 1.0, 3.0, 0.5,
                                        (Vector(2) << 1.0, 0.9).finished());

  // a0 = 0: both reduce to the current-data-only posterior.
  NormalNormalSetup s0 = s;
  s0.a0 = 0.0;
  const auto pp0 = closedform::nn_posterior(s0, NormalPriorKind::PowerPrior);
  const auto st0 = closedform::nn_posterior(s0, NormalPriorKind::StraPP);
  const Matrix x1t_x1 = s.X1.transpose() * s.X1;
  const Vector ols = x1t_x1.ldlt().solve(s.X1.transpose() * s.Y1);
  REQUIRE((pp0.mean - ols).norm() < 1e-10);
  REQUIRE((st0.mean - ols).norm() < 1e-10);
  REQUIRE((pp0.cov - 9.0 * x1t_x1.inverse()).norm() < 1e-10);

  // sigma0 = sigma1: the two posteriors coincide.
  NormalNormalSetup same = s;
  same.sigma0 = same.sigma1 = 2.0;
  const auto pps = closedform::nn_posterior(same, NormalPriorKind::PowerPrior);
  const auto sts = closedform::nn_posterior(same, NormalPriorKind::StraPP);
  REQUIRE((pps.mean - sts.mean).norm() < 1e-10);
  REQUIRE((pps.cov - sts.cov).norm() < 1e-10);

  for (auto kind : {NormalPriorKind::PowerPrior, NormalPriorKind::StraPP}) {
    const auto g = closedform::nn_posterior(s, kind);
    REQUIRE((g.cov - g.cov.transpose()).norm() < 1e-12);
    Eigen::LLT<Matrix> llt(g.cov);
    REQUIRE(llt.info() == Eigen::Success);
  }
}

TEST_CASE("nn_posterior agrees with MCMC under both priors", "[closedform]") {
  strapp::RngStream rng(3, 0);
  NormalNormalSetup s = simulated_setup(rng, 50, 100, 1.0, 3.0, 0.5,
                                        (Vector(2) << 1.0, 0.9).finished());
  strapp::Dataset hist{s.Y0, s.X0};
  strapp::Dataset curr{s.Y1, s.X1};
  strapp::ModelPair pair{strapp::GlmFamily::normal_known(s.sigma0),
                         strapp::GlmFamily::normal_known(s.sigma1), hist, curr};
  strapp::TransformContext ctx(pair.hist_family, pair.curr_family, s.X0);
  strapp::SamplerConfig cfg;
  cfg.draws = 10000;

  struct Case {
    strapp::PriorSpec spec;
    NormalPriorKind kind;
  };
  std::vector<Case> cases;
  cases.push_back({strapp::PriorSpec::strapp(ctx, s.a0),
                   NormalPriorKind::StraPP});
  cases.push_back(
      {strapp::PriorSpec::power_prior(pair.hist_family, s.a0),
       NormalPriorKind::PowerPrior});
  int stream = 0;
  for (const auto& c : cases) {
    const auto fit = strapp::sampler::run_analysis(pair, c.spec, cfg, 77,
                                                   static_cast<std::uint64_t>(stream++));
    const auto closed = closedform::nn_posterior(s, c.kind);
    const auto [mean, sd] = strapp::analysis::posterior_summary(fit.chain);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double se = strapp::analysis::mcse(fit.chain, j);
      REQUIRE(std::abs(mean[j] - closed.mean[j]) < 3.0 * se);
      REQUIRE(sd[j] ==
              Catch::Approx(std::sqrt(closed.cov(j, j))).epsilon(0.1));
    }
  }
}

TEST_CASE("mse_threshold reproduces the reference value and its edge cases",
          "[closedform]") {
  const auto t = closedform::mse_threshold(50, 100, 0.5, 1.0, 3.0);
  REQUIRE(t.has_value());
  REQUIRE(*t == Catch::Approx(0.9364).margin(5e-5));

  REQUIRE_THROWS_AS(closedform::mse_threshold(50, 100, 0.5, 2.0, 2.0),
                    strapp::EqualVariances);

  // Reversed variances: the radicand goes nonpositive, no real crossing.
  REQUIRE_FALSE(closedform::mse_threshold(50, 100, 0.5, 3.0, 1.0).has_value());
}

TEST_CASE("mse_threshold scales linearly in the sigmas", "[closedform]") {
  const auto base = closedform::mse_threshold(50, 100, 0.5, 1.0, 3.0);
  for (double c : {0.5, 2.0, 7.0}) {
    const auto scaled = closedform::mse_threshold(50, 100, 0.5, c, 3.0 * c);
    REQUIRE(*scaled == Catch::Approx(c * *base).epsilon(1e-10));
  }
}

TEST_CASE("theorem1_condition basics", "[closedform]") {
  REQUIRE(closedform::theorem1_condition(1.0, 1.0, 0.2, 0.0));
  REQUIRE(closedform::theorem1_condition(2.0, 1.0, 1.0, 1.0));  // boundary
  REQUIRE_FALSE(closedform::theorem1_condition(2.0, 1.0, 1.0, 0.5));
  REQUIRE_THROWS_AS(closedform::theorem1_condition(1.0, 2.0, 0.0, 1.0),
                    strapp::ZeroBias);
}

TEST_CASE("theorem1_condition verdict matches empirical MSE ordering",
          "[closedform]") {
  const double n0 = 50, n1 = 100, a0 = 0.5, sigma0 = 1.0, sigma1 = 3.0;
  const double threshold = *closedform::mse_threshold(n0, n1, a0, sigma0,
                                                      sigma1);
  strapp::RngStream rng(11, 0);
  for (double shift : {0.8, 1.2}) {
    const double beta11 = shift * threshold;
    Vector beta1(2);
    beta1 << 1.0, beta11;
    NormalNormalSetup s;
    s.X0 = balanced(50);
    s.X1 = balanced(100);
    s.sigma0 = sigma0;
    s.sigma1 = sigma1;
    s.a0 = a0;

    const auto moments = closedform::estimator_moments(s, beta1);
    const double pct_bias = (moments.mean_pp[1] - beta11) / beta11;
    const bool verdict = closedform::theorem1_condition(
        moments.cov_strapp(1, 1), moments.cov_pp(1, 1), pct_bias, beta11);

    double mse_s = 0.0, mse_p = 0.0;
    const int reps = 2000;
    const Vector beta0 = (sigma0 / sigma1) * beta1;
    for (int rep = 0; rep < reps; ++rep) {
      NormalNormalSetup data = s;
      data.Y0 = data.X0 * beta0;
      data.Y1 = data.X1 * beta1;
      for (Eigen::Index i = 0; i < 50; ++i) data.Y0[i] += sigma0 * rng.normal();
      for (Eigen::Index i = 0; i < 100; ++i) data.Y1[i] += sigma1 * rng.normal();
      const auto ps = closedform::nn_posterior(data, NormalPriorKind::StraPP);
      const auto pppost =
          closedform::nn_posterior(data, NormalPriorKind::PowerPrior);
      mse_s += (ps.mean[1] - beta11) * (ps.mean[1] - beta11);
      mse_p += (pppost.mean[1] - beta11) * (pppost.mean[1] - beta11);
    }
    mse_s /= reps;
    mse_p /= reps;
    REQUIRE(verdict == (mse_s <= mse_p));
    // Below the threshold the PP MSE should win; above it, the straPP.
    REQUIRE(verdict == (shift > 1.0));
  }
}

TEST_CASE("straPP posterior mean is unbiased when the transformation holds",
          "[closedform]") {
  strapp::RngStream rng(13, 0);
  Vector beta1(2);
  beta1 << 1.0, 1.0;
  const double sigma0 = 3.0, sigma1 = 1.0, a0 = 0.5;
  const Vector beta0 = (sigma0 / sigma1) * beta1;
  NormalNormalSetup s;
  s.X0 = balanced(50);
  s.X1 = balanced(100);
  s.sigma0 = sigma0;
  s.sigma1 = sigma1;
  s.a0 = a0;

  Vector sum = Vector::Zero(2), sumsq = Vector::Zero(2);
  const int reps = 500;
  for (int rep = 0; rep < reps; ++rep) {
    NormalNormalSetup data = s;
    data.Y0 = data.X0 * beta0;
    data.Y1 = data.X1 * beta1;
    for (Eigen::Index i = 0; i < 50; ++i) data.Y0[i] += sigma0 * rng.normal();
    for (Eigen::Index i = 0; i < 100; ++i) data.Y1[i] += sigma1 * rng.normal();
    const auto post = closedform::nn_posterior(data, NormalPriorKind::StraPP);
    sum += post.mean;
    sumsq += post.mean.cwiseProduct(post.mean);
  }
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double mc_mean = sum[j] / reps;
    const double mc_sd =
        std::sqrt((sumsq[j] / reps - mc_mean * mc_mean) * reps / (reps - 1.0));
    REQUIRE(std::abs(mc_mean - beta1[j]) < 3.0 * mc_sd / std::sqrt(reps));
  }
}
