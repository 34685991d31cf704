#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "strapp/simharness.hpp"

using strapp::GlmFamily;
using strapp::GlmParams;
using strapp::Matrix;
using strapp::Scenario;
using strapp::ScenarioKind;
using strapp::TransformContext;
using strapp::Vector;
namespace simharness = strapp::simharness;
namespace transform = strapp::transform;

TEST_CASE("solve_truth reduces to the sigma ratio for normal-normal",
          "[simharness]") {
  Scenario sc = simharness::normal_normal_scenario(3.0, 1.0);
  const Matrix X0 = simharness::template_design(sc.n0, false, 0);
  TransformContext ctx(GlmFamily::normal_known(3.0), GlmFamily::normal_known(1.0),
                       X0);
  const auto truth = simharness::solve_truth(sc, ctx, 0.8);
  REQUIRE(truth.curr.beta[1] == Catch::Approx(0.8));
  REQUIRE((truth.hist.beta - 3.0 * truth.curr.beta).norm() < 1e-12);
}

TEST_CASE("binary-normal transformation matrix at the symmetric point",
          "[simharness]") {
  // With p0 = p1 = 1/2 the binary information is one quarter of X0'X0, so
  // the hist-to-curr linear map collapses to (sigma1 / 2) * identity.
  const double sigma1 = 2.0;
  const Matrix X0 = simharness::template_design(100, false, 0);
  TransformContext ctx(GlmFamily::bernoulli(), GlmFamily::normal_known(sigma1),
                       X0);
  GlmParams at_zero{Vector::Zero(2), 1.0};
  const Matrix s_hist =
      transform::info_sqrt(ctx, strapp::Side::Historical, at_zero);
  const Matrix s_curr =
      transform::info_sqrt(ctx, strapp::Side::Current, at_zero);
  const Matrix map = s_curr.llt().solve(s_hist);
  REQUIRE((map - (sigma1 / 2.0) * Matrix::Identity(2, 2)).norm() < 1e-10);
}

TEST_CASE("solved truths satisfy the scenario constraint", "[simharness]") {
  for (const char* name :
       {"normal-normal-s0gt", "binary-poisson", "binary-normal-violated",
        "binary-normal-holds", "poisson-exponential"}) {
    Scenario sc = simharness::scenario_by_name(name);
    const Matrix X0 = simharness::template_design(sc.n0, sc.with_age, 0);
    TransformContext ctx(simharness::scenario_hist_family(sc),
                         simharness::scenario_curr_family(sc), X0,
                         simharness::scenario_borrowed(sc));
    for (Eigen::Index g = 0; g < sc.grid.size(); ++g) {
      const auto truth = simharness::solve_truth(sc, ctx, sc.grid[g]);
      Vector shift = Vector::Zero(ctx.r());
      if (sc.kind == ScenarioKind::BinaryNormalViolated) shift[1] = sc.grid[g];
      const Vector gap =
          transform::standardize(ctx, strapp::Side::Historical, truth.hist) -
          transform::standardize(ctx, strapp::Side::Current, truth.curr) -
          shift;
      REQUIRE(gap.lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("generate_dataset construction checks", "[simharness]") {
  const Matrix X = simharness::template_design(1001, false, 0);
  REQUIRE(X.col(1).sum() == 500.0);  // exactly floor(n/2) treated

  strapp::RngStream rng(3, 3);
  GlmParams zero{Vector::Zero(2), 1.0};
  const auto bern = simharness::generate_dataset(GlmFamily::bernoulli(), X,
                                                 zero, rng);
  REQUIRE(std::abs(bern.y.mean() - 0.5) < 0.05);

  GlmParams pois_truth{Vector::Zero(2), 1.0};
  pois_truth.beta << 0.7, 0.0;
  const auto pois = simharness::generate_dataset(GlmFamily::poisson(), X,
                                                 pois_truth, rng);
  const double mean = std::exp(0.7);
  REQUIRE(std::abs(pois.y.mean() - mean) < 3.0 * std::sqrt(mean / 1001.0));
}

TEST_CASE("run_scenario is empty for zero replicates and reproducible "
          "otherwise",
          "[simharness]") {
  Scenario sc = simharness::normal_normal_scenario(3.0, 1.0);
  sc.replicates = 0;
  REQUIRE(simharness::run_scenario(sc).empty());

  sc = simharness::normal_normal_scenario(3.0, 1.0);
  sc.grid = simharness::linspace(0.3, 0.9, 2);
  sc.replicates = 6;
  sc.draws = 300;
  sc.priors = {{strapp::PriorKind::StraPP, 0.0},
               {strapp::PriorKind::PowerPrior, 0.0}};
  sc.base_seed = 77;
  sc.workers = 2;
  const auto a = simharness::run_scenario(sc);
  sc.workers = 1;  // scheduling must not matter
  const auto b = simharness::run_scenario(sc);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].prior == b[i].prior);
    REQUIRE(a[i].x == b[i].x);
    REQUIRE(a[i].avg_log_var == b[i].avg_log_var);
    REQUIRE(a[i].bias == b[i].bias);
    REQUIRE(a[i].log_mse == b[i].log_mse);
    REQUIRE(a[i].coverage == b[i].coverage);
    REQUIRE(a[i].n_fail == 0);
    // MSE >= bias^2 for every cell.
    REQUIRE(std::exp(a[i].log_mse) >= a[i].bias * a[i].bias - 1e-15);
  }
}

TEST_CASE("metrics CSV carries the fixed header", "[simharness]") {
  const std::string csv = simharness::metrics_to_csv({}, "p");
  REQUIRE(csv ==
          "# p\nscenario,prior,hyper,x,avg_log_var,bias,log_mse,coverage,"
          "n_fail\n");
}

TEST_CASE("the synthetic analog study is deterministic and well-formed",
          "[simharness]") {
  const auto study = simharness::make_analog_study(11);
  REQUIRE(study.hist.n() == 244);
  REQUIRE(study.curr.n() == 385);
  REQUIRE(study.hist.p() == 6);
  REQUIRE(study.curr.p() == 6);
  for (Eigen::Index i = 0; i < study.hist.n(); ++i)
    REQUIRE((study.hist.y[i] == 0.0 || study.hist.y[i] == 1.0));
  const auto again = simharness::make_analog_study(11);
  REQUIRE(study.hist.y == again.hist.y);
  REQUIRE(study.curr.y == again.curr.y);
  const auto other = simharness::make_analog_study(12);
  REQUIRE(study.hist.y != other.hist.y);

  // Designs are full rank so the loaders and samplers accept them.
  Eigen::ColPivHouseholderQR<Matrix> qr(study.hist.X);
  REQUIRE(qr.rank() == 6);
}
