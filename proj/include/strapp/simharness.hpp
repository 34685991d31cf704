#ifndef STRAPP_SIMHARNESS_HPP
#define STRAPP_SIMHARNESS_HPP

#include <atomic>
#include <cmath>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "strapp/analysis.hpp"
#include "strapp/sampler.hpp"

namespace strapp {

enum class ScenarioKind {
  NormalNormal,
  BinaryPoisson,
  BinaryNormalViolated,
  BinaryNormalHolds,
  PoissonExponential,
};

/// One prior entry in a scenario's comparison set. `hyper` is omega0 for the
/// Gen-straPP and b0 for the commensurate prior; unused otherwise.
struct ScenarioPrior {
  PriorKind kind = PriorKind::StraPP;
  double hyper = 0.0;

  std::string id() const {
    switch (kind) {
      case PriorKind::UniformImproper:
        return "uip";
      case PriorKind::PowerPrior:
        return "pp";
      case PriorKind::AsymptoticPP:
        return "app";
      case PriorKind::Commensurate:
        return "com";
      case PriorKind::StraPP:
        return "strapp";
      case PriorKind::GenStraPP:
        return "gen_strapp";
    }
    return "?";
  }
};

/// A reproduction cell of one simulation study: data-generating truth,
/// grid of x-axis values, priors to compare, and execution budget. Covariate
/// matrices are fixed per scenario (balanced treatment, age column frozen at
/// a seed-0 draw) so the solved truths satisfy the transformation constraint
/// for every replicate; only responses are redrawn.
struct Scenario {
  ScenarioKind kind = ScenarioKind::NormalNormal;
  std::string name = "normal-normal";
  Eigen::Index n0 = 50, n1 = 100;
  double a0 = 0.5;
  double sigma0 = 1.0, sigma1 = 1.0;
  bool with_age = false;
  double beta10 = 1.0;  // current intercept
  double beta12 = 0.0;  // current age effect (when present)
  double beta00 = 0.0;  // historical intercept (partial borrowing)
  double beta01 = 0.0;  // historical treatment effect (binary-normal cases)
  Vector grid;          // beta11 values (or c01 for the violated case)
  std::vector<ScenarioPrior> priors;
  int replicates = 500;
  int draws = 10000;
  int burn_in = -1;
  std::uint64_t base_seed = 1;
  int workers = 0;  // 0: hardware concurrency
};

/// One aggregated metrics row, mirroring the figure panels: average log
/// posterior variance, bias and log MSE of the posterior mean, and 95% HPD
/// coverage for the treatment effect.
struct MetricsRow {
  std::string scenario;
  std::string prior;
  double hyper = 0.0;
  double x = 0.0;
  double avg_log_var = 0.0;
  double bias = 0.0;
  double log_mse = 0.0;
  double coverage = 0.0;
  int n_fail = 0;
};

namespace simharness {

inline Vector linspace(double lo, double hi, int count) {
  Vector v(count);
  for (int k = 0; k < count; ++k)
    v[k] = count == 1 ? lo : lo + (hi - lo) * k / (count - 1);
  return v;
}

/// Balanced design: intercept, treatment for the first floor(n/2) rows, and
/// optionally a standardized-age column frozen at a seed-0 draw.
inline Matrix template_design(Eigen::Index n, bool with_age,
                              std::uint64_t age_stream) {
  Matrix X = Matrix::Ones(n, with_age ? 3 : 2);
  for (Eigen::Index i = 0; i < n; ++i) X(i, 1) = (i < n / 2) ? 1.0 : 0.0;
  if (with_age) {
    RngStream rng(0, age_stream);
    for (Eigen::Index i = 0; i < n; ++i) X(i, 2) = rng.normal();
  }
  return X;
}

inline GlmFamily scenario_hist_family(const Scenario& sc) {
  switch (sc.kind) {
    case ScenarioKind::NormalNormal:
      return GlmFamily::normal_known(sc.sigma0);
    case ScenarioKind::BinaryPoisson:
    case ScenarioKind::BinaryNormalViolated:
    case ScenarioKind::BinaryNormalHolds:
      return GlmFamily::bernoulli();
    case ScenarioKind::PoissonExponential:
      return GlmFamily::poisson();
  }
  throw InvalidSpec("unknown scenario");
}

inline GlmFamily scenario_curr_family(const Scenario& sc) {
  switch (sc.kind) {
    case ScenarioKind::NormalNormal:
      return GlmFamily::normal_known(sc.sigma1);
    case ScenarioKind::BinaryPoisson:
      return GlmFamily::poisson();
    case ScenarioKind::BinaryNormalViolated:
    case ScenarioKind::BinaryNormalHolds:
      return GlmFamily::normal_known(sc.sigma1);
    case ScenarioKind::PoissonExponential:
      return GlmFamily::exponential();
  }
  throw InvalidSpec("unknown scenario");
}

inline std::vector<Eigen::Index> scenario_borrowed(const Scenario& sc) {
  // The age scenarios do not borrow on the intercept.
  if (sc.kind == ScenarioKind::BinaryPoisson ||
      sc.kind == ScenarioKind::PoissonExponential)
    return {1, 2};
  return {};
}

struct Truth {
  GlmParams hist;
  GlmParams curr;
  double beta11 = 0.0;  // current treatment effect (the estimand)
};

/// Solves the unspecified side's parameters so the scenario constraint holds
/// on the template design.
inline Truth solve_truth(const Scenario& sc, const TransformContext& ctx,
                         double x) {
  Truth t;
  const Eigen::Index p = ctx.p();
  switch (sc.kind) {
    case ScenarioKind::NormalNormal: {
      t.curr = GlmParams{Vector::Zero(p), 1.0};
      t.curr.beta << sc.beta10, x;
      t.hist = GlmParams{(sc.sigma0 / sc.sigma1) * t.curr.beta, 1.0};
      t.beta11 = x;
      break;
    }
    case ScenarioKind::BinaryPoisson: {
      t.curr = GlmParams{Vector::Zero(p), 1.0};
      t.curr.beta << sc.beta10, x, sc.beta12;
      GlmParams shell{Vector::Zero(p), 1.0};
      shell.beta[0] = sc.beta00;
      t.hist = transform::map_params(ctx, t.curr, Direction::CurrToHist, shell);
      t.beta11 = x;
      break;
    }
    case ScenarioKind::BinaryNormalViolated:
    case ScenarioKind::BinaryNormalHolds: {
      t.hist = GlmParams{Vector::Zero(p), 1.0};
      const double beta01 =
          sc.kind == ScenarioKind::BinaryNormalHolds ? x : sc.beta01;
      t.hist.beta << sc.beta00, beta01;
      Vector c0 = Vector::Zero(p);
      if (sc.kind == ScenarioKind::BinaryNormalViolated) c0[1] = x;
      t.curr = transform::map_params(ctx, t.hist, Direction::HistToCurr,
                                     GlmParams{Vector::Zero(p), 1.0}, c0);
      t.beta11 = t.curr.beta[1];
      break;
    }
    case ScenarioKind::PoissonExponential: {
      t.hist = GlmParams{Vector::Zero(p), 1.0};
      t.hist.beta << sc.beta00, x, 0.1;
      GlmParams shell{Vector::Zero(p), 1.0};
      shell.beta[0] = sc.beta10;
      t.curr = transform::map_params(ctx, t.hist, Direction::HistToCurr, shell);
      t.beta11 = t.curr.beta[1];
      break;
    }
  }
  // The solved pair must satisfy the constraint on the template design.
  const Vector gap =
      transform::standardize(ctx, Side::Historical, t.hist) -
      transform::standardize(ctx, Side::Current, t.curr) -
      (sc.kind == ScenarioKind::BinaryNormalViolated
           ? Vector((Vector(2) << 0.0, x).finished())
           : Vector(Vector::Zero(ctx.r())));
  if (gap.lpNorm<Eigen::Infinity>() > 1e-10)
    throw NumericalError("scenario truth violates its constraint");
  return t;
}

/// Draws responses on the template design at the given truth.
inline Dataset generate_dataset(const GlmFamily& family, const Matrix& X,
                                const GlmParams& truth, RngStream& rng) {
  Dataset d;
  d.X = X;
  d.y = Vector::Zero(X.rows());
  const Vector eta = X * truth.beta;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    switch (family.kind()) {
      case FamilyKind::BernoulliLogit:
        d.y[i] = rng.bernoulli(family.mean(eta[i])) ? 1.0 : 0.0;
        break;
      case FamilyKind::PoissonLog:
        d.y[i] = static_cast<double>(rng.poisson(family.mean(eta[i])));
        break;
      case FamilyKind::ExponentialLog:
        d.y[i] = rng.exponential(family.mean(eta[i]));
        break;
      case FamilyKind::NormalKnownVariance:
        d.y[i] = eta[i] + family.sigma() * rng.normal();
        break;
      case FamilyKind::NormalUnknownVariance:
        d.y[i] = eta[i] + rng.normal() / std::sqrt(truth.phi);
        break;
    }
  }
  return d;
}

inline PriorSpec build_prior(const Scenario& sc, const ScenarioPrior& choice,
                             const TransformContext& ctx) {
  switch (choice.kind) {
    case PriorKind::UniformImproper:
      return PriorSpec::uniform();
    case PriorKind::PowerPrior:
      return PriorSpec::power_prior(ctx.hist_family, sc.a0, ctx.borrowed);
    case PriorKind::AsymptoticPP:
      return PriorSpec::asymptotic_pp(ctx.hist_family, sc.a0, ctx.borrowed);
    case PriorKind::Commensurate:
      return PriorSpec::commensurate(ctx.hist_family, choice.hyper,
                                     ctx.borrowed);
    case PriorKind::StraPP:
      return PriorSpec::strapp(ctx, sc.a0);
    case PriorKind::GenStraPP:
      return PriorSpec::gen_strapp(ctx, sc.a0, choice.hyper);
  }
  throw InvalidSpec("unknown prior kind");
}

struct ReplicateOutcome {
  bool ok = false;
  double post_mean = 0.0;
  double post_var = 0.0;
  bool covered = false;
};

/// Runs every (grid point x prior x replicate) cell and aggregates the
/// figure metrics. Replicates are independent jobs over disjoint rng
/// streams, executed by a small worker pool; aggregation is indexed by
/// replicate so the result does not depend on scheduling.
inline std::vector<MetricsRow> run_scenario(const Scenario& sc) {
  const GlmFamily hist_family = scenario_hist_family(sc);
  const GlmFamily curr_family = scenario_curr_family(sc);
  const Matrix X0 = template_design(sc.n0, sc.with_age, 0);
  const Matrix X1 = template_design(sc.n1, sc.with_age, 1);
  const TransformContext ctx(hist_family, curr_family, X0,
                             scenario_borrowed(sc));

  std::vector<MetricsRow> rows;
  if (sc.replicates <= 0 || sc.grid.size() == 0) return rows;

  const int n_grid = static_cast<int>(sc.grid.size());
  const int n_priors = static_cast<int>(sc.priors.size());
  const int reps = sc.replicates;

  std::vector<Truth> truths;
  for (int g = 0; g < n_grid; ++g)
    truths.push_back(solve_truth(sc, ctx, sc.grid[g]));

  // outcome[(g * n_priors + k) * reps + r]
  std::vector<ReplicateOutcome> outcomes(
      static_cast<std::size_t>(n_grid) * n_priors * reps);

  SamplerConfig cfg;
  cfg.draws = sc.draws;
  cfg.burn_in = sc.burn_in;

  std::atomic<int> next_job{0};
  const int total_jobs = n_grid * reps;
  const auto worker = [&] {
    for (;;) {
      const int job = next_job.fetch_add(1);
      if (job >= total_jobs) return;
      const int g = job / reps;
      const int r = job % reps;
      const Truth& truth = truths[static_cast<std::size_t>(g)];
      const std::uint64_t base =
          (static_cast<std::uint64_t>(g) * 100000 + static_cast<std::uint64_t>(r)) *
          64;
      RngStream hist_rng(sc.base_seed, base);
      RngStream curr_rng(sc.base_seed, base + 1);
      ModelPair pair{hist_family, curr_family,
                     generate_dataset(hist_family, X0, truth.hist, hist_rng),
                     generate_dataset(curr_family, X1, truth.curr, curr_rng)};
      for (int k = 0; k < n_priors; ++k) {
        ReplicateOutcome& out =
            outcomes[(static_cast<std::size_t>(g) * n_priors + k) * reps + r];
        try {
          const PriorSpec spec = build_prior(sc, sc.priors[k], ctx);
          const auto fit = sampler::run_analysis(
              pair, spec, cfg, sc.base_seed,
              base + 2 + static_cast<std::uint64_t>(k));
          const auto [mean, sd] = analysis::posterior_summary(fit.chain);
          const auto [lo, hi] = analysis::hpd_interval(fit.chain, 1, 0.95);
          out.ok = true;
          out.post_mean = mean[1];
          out.post_var = sd[1] * sd[1];
          out.covered = lo <= truth.beta11 && truth.beta11 <= hi;
        } catch (const Error&) {
          out.ok = false;
        }
      }
    }
  };

  int n_workers = sc.workers > 0
                      ? sc.workers
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, total_jobs));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (int g = 0; g < n_grid; ++g) {
    for (int k = 0; k < n_priors; ++k) {
      MetricsRow row;
      row.scenario = sc.name;
      row.prior = sc.priors[static_cast<std::size_t>(k)].id();
      row.hyper = sc.priors[static_cast<std::size_t>(k)].hyper;
      row.x = sc.grid[g];
      double sum_log_var = 0.0, sum_err = 0.0, sum_sq = 0.0;
      int covered = 0, ok = 0;
      const double truth = truths[static_cast<std::size_t>(g)].beta11;
      for (int r = 0; r < reps; ++r) {
        const ReplicateOutcome& out =
            outcomes[(static_cast<std::size_t>(g) * n_priors + k) * reps + r];
        if (!out.ok) continue;
        ++ok;
        sum_log_var += std::log(out.post_var);
        sum_err += out.post_mean - truth;
        sum_sq += (out.post_mean - truth) * (out.post_mean - truth);
        covered += out.covered ? 1 : 0;
      }
      row.n_fail = reps - ok;
      if (ok > 0) {
        row.avg_log_var = sum_log_var / ok;
        row.bias = sum_err / ok;
        row.log_mse = std::log(sum_sq / ok);
        row.coverage = static_cast<double>(covered) / ok;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows,
                                  const std::string& provenance = "") {
  std::ostringstream out;
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "scenario,prior,hyper,x,avg_log_var,bias,log_mse,coverage,n_fail\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  r.scenario.c_str(), r.prior.c_str(), r.hyper, r.x,
                  r.avg_log_var, r.bias, r.log_mse, r.coverage, r.n_fail);
    out << buf;
  }
  return out.str();
}

// --- scenario presets --------------------------------------------------------

inline Scenario normal_normal_scenario(double sigma0, double sigma1,
                                       int grid_points = 7) {
  Scenario sc;
  sc.kind = ScenarioKind::NormalNormal;
  sc.name = sigma0 > sigma1 ? "normal-normal-s0gt" : "normal-normal-s0lt";
  sc.n0 = 50;
  sc.n1 = 100;
  sc.a0 = 0.5;
  sc.sigma0 = sigma0;
  sc.sigma1 = sigma1;
  sc.beta10 = 1.0;
  sc.grid = linspace(0.0, 1.8, grid_points);
  sc.priors = {{PriorKind::StraPP, 0.0},
               {PriorKind::PowerPrior, 0.0},
               {PriorKind::UniformImproper, 0.0}};
  return sc;
}

inline Scenario binary_poisson_scenario(int grid_points = 7) {
  Scenario sc;
  sc.kind = ScenarioKind::BinaryPoisson;
  sc.name = "binary-poisson";
  sc.n0 = 150;
  sc.n1 = 150;
  sc.a0 = 1.0;
  sc.with_age = true;
  sc.beta10 = 0.2;
  sc.beta12 = -0.1;
  sc.beta00 = -0.6;
  sc.grid = linspace(0.05, 0.35, grid_points);
  sc.priors = {{PriorKind::StraPP, 0.0},
               {PriorKind::PowerPrior, 0.0},
               {PriorKind::AsymptoticPP, 0.0},
               {PriorKind::UniformImproper, 0.0},
               {PriorKind::GenStraPP, 1.0},
               {PriorKind::GenStraPP, 2.0},
               {PriorKind::GenStraPP, 4.0},
               {PriorKind::Commensurate, 1.0},
               {PriorKind::Commensurate, 8.0},
               {PriorKind::Commensurate, 16.0}};
  return sc;
}

inline Scenario binary_normal_violated_scenario(int grid_points = 7) {
  Scenario sc;
  sc.kind = ScenarioKind::BinaryNormalViolated;
  sc.name = "binary-normal-violated";
  sc.n0 = 100;
  sc.n1 = 50;
  sc.a0 = 1.0;
  sc.sigma1 = 2.0;
  sc.beta00 = 0.5;
  sc.beta01 = 0.25;
  sc.grid = linspace(-1.5, 1.5, grid_points);
  sc.priors = {{PriorKind::StraPP, 0.0},
               {PriorKind::GenStraPP, 1.0},
               {PriorKind::GenStraPP, 2.0},
               {PriorKind::GenStraPP, 4.0},
               {PriorKind::Commensurate, 2.0},
               {PriorKind::Commensurate, 4.0},
               {PriorKind::Commensurate, 8.0}};
  return sc;
}

inline Scenario binary_normal_holds_scenario(int grid_points = 7) {
  Scenario sc;
  sc.kind = ScenarioKind::BinaryNormalHolds;
  sc.name = "binary-normal-holds";
  sc.n0 = 100;
  sc.n1 = 50;
  sc.a0 = 1.0;
  sc.sigma1 = 2.0;
  sc.beta00 = 0.5;
  sc.grid = linspace(0.0, 2.0, grid_points);
  sc.priors = {{PriorKind::StraPP, 0.0},
               {PriorKind::PowerPrior, 0.0},
               {PriorKind::AsymptoticPP, 0.0},
               {PriorKind::UniformImproper, 0.0},
               {PriorKind::GenStraPP, 0.1},
               {PriorKind::GenStraPP, 0.5},
               {PriorKind::GenStraPP, 1.0}};
  return sc;
}

inline Scenario poisson_exponential_scenario(int grid_points = 7) {
  Scenario sc;
  sc.kind = ScenarioKind::PoissonExponential;
  sc.name = "poisson-exponential";
  sc.n0 = 100;
  sc.n1 = 100;
  sc.a0 = 1.0;
  sc.with_age = true;
  sc.beta00 = 0.55;
  sc.beta10 = 0.25;
  sc.grid = linspace(-0.35, 0.5, grid_points);
  sc.priors = {{PriorKind::StraPP, 0.0},
               {PriorKind::PowerPrior, 0.0},
               {PriorKind::AsymptoticPP, 0.0},
               {PriorKind::UniformImproper, 0.0},
               {PriorKind::GenStraPP, 0.1},
               {PriorKind::GenStraPP, 0.5},
               {PriorKind::GenStraPP, 1.0}};
  return sc;
}

inline Scenario scenario_by_name(const std::string& name) {
  if (name == "normal-normal-s0gt") return normal_normal_scenario(3.0, 1.0);
  if (name == "normal-normal-s0lt") return normal_normal_scenario(1.0, 3.0);
  if (name == "binary-poisson") return binary_poisson_scenario();
  if (name == "binary-normal-violated") return binary_normal_violated_scenario();
  if (name == "binary-normal-holds") return binary_normal_holds_scenario();
  if (name == "poisson-exponential") return poisson_exponential_scenario();
  throw InvalidSpec("unknown scenario '" + name + "'");
}

/// Synthetic two-study pair shaped like the stroke-services analysis: a
/// binary historical outcome and a continuous current outcome over five
/// shared covariates. Deterministic in the seed; stands in for the real
/// dataset, which is not distributable.
struct AnalogStudy {
  Dataset hist;
  Dataset curr;
  std::vector<std::string> covariates;
  std::string hist_response = "falls";
  std::string curr_response = "health_score";
};

inline AnalogStudy make_analog_study(std::uint64_t seed) {
  const Eigen::Index n0 = 244, n1 = 385, p = 6;
  AnalogStudy study;
  study.covariates = {"ecare", "hx_stroke", "nihss_minor", "nihss_modsev",
                      "nonwhite"};
  RngStream rng(seed, 900);

  const auto draw_design = [&](Eigen::Index n) {
    Matrix X = Matrix::Ones(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 1) = rng.bernoulli(0.45) ? 1.0 : 0.0;   // eCare plan
      X(i, 2) = rng.bernoulli(0.2) ? 1.0 : 0.0;    // history of stroke
      const double u = rng.uniform();              // NIHSS categories
      X(i, 3) = (u > 0.4 && u <= 0.8) ? 1.0 : 0.0;
      X(i, 4) = u > 0.8 ? 1.0 : 0.0;
      X(i, 5) = rng.bernoulli(0.3) ? 1.0 : 0.0;    // non-white
    }
    return X;
  };

  Vector hist_beta(p);
  hist_beta << -1.0, -0.25, 0.3, 0.35, 0.8, 0.4;
  study.hist.X = draw_design(n0);
  study.hist.y = Vector::Zero(n0);
  const Vector eta0 = study.hist.X * hist_beta;
  for (Eigen::Index i = 0; i < n0; ++i)
    study.hist.y[i] = rng.bernoulli(GlmFamily::expit(eta0[i])) ? 1.0 : 0.0;

  Vector curr_beta(p);
  curr_beta << 47.0, 1.0, -1.2, -1.5, -3.5, -1.6;
  const double sigma = 9.3;
  study.curr.X = draw_design(n1);
  study.curr.y = study.curr.X * curr_beta;
  for (Eigen::Index i = 0; i < n1; ++i) study.curr.y[i] += sigma * rng.normal();
  return study;
}

}  // namespace simharness
}  // namespace strapp

#endif  // STRAPP_SIMHARNESS_HPP
