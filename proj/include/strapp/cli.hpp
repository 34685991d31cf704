#ifndef STRAPP_CLI_HPP
#define STRAPP_CLI_HPP

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "strapp/closedform.hpp"
#include "strapp/io.hpp"
#include "strapp/simharness.hpp"

namespace strapp {
namespace cli {

/// Command-line overrides applied on top of a config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> draws;
  std::optional<int> burn_in;
  std::optional<int> workers;
  bool paper_scale = false;
};

inline void apply_overrides(io::AnalysisConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.mcmc.seed = *ov.seed;
  if (ov.draws) cfg.mcmc.draws = *ov.draws;
  if (ov.burn_in) cfg.mcmc.burn_in = *ov.burn_in;
}

inline std::vector<Eigen::Index> borrowed_indices(const io::AnalysisConfig& cfg,
                                                  Eigen::Index p) {
  if (cfg.borrow_intercept) return {};
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 1; j < p; ++j) idx.push_back(j);
  return idx;
}

inline PriorSpec build_prior_spec(const io::AnalysisConfig& cfg,
                                  const GlmFamily& hist_family,
                                  const GlmFamily& curr_family,
                                  const Matrix& X0, double a0, double omega0) {
  const auto borrowed = borrowed_indices(cfg, X0.cols());
  PriorSpec spec = PriorSpec::uniform();
  const std::string& kind = cfg.prior.kind;
  if (kind == "uniform") {
    spec = PriorSpec::uniform();
  } else if (kind == "pp") {
    spec = PriorSpec::power_prior(hist_family, a0, borrowed);
  } else if (kind == "app") {
    spec = PriorSpec::asymptotic_pp(hist_family, a0, borrowed);
  } else if (kind == "commensurate") {
    spec = PriorSpec::commensurate(hist_family, cfg.prior.b0, borrowed);
  } else if (kind == "strapp") {
    spec = PriorSpec::strapp(
        TransformContext(hist_family, curr_family, X0, borrowed), a0);
  } else if (kind == "gen_strapp") {
    spec = PriorSpec::gen_strapp(
        TransformContext(hist_family, curr_family, X0, borrowed), a0, omega0);
  } else {
    throw InvalidSpec("unknown prior kind '" + kind + "'");
  }
  if (curr_family.has_free_dispersion())
    spec.curr_dispersion_prior = GammaPrior{0.01, 0.01};
  if (hist_family.has_free_dispersion())
    spec.hist_dispersion_prior = GammaPrior{0.01, 0.01};
  return spec;
}

inline io::Json resolved_provenance(const io::AnalysisConfig& cfg,
                                    double a0, double omega0) {
  io::Json j;
  j["historical_csv"] = cfg.historical_csv;
  j["current_csv"] = cfg.current_csv;
  j["covariates"] = cfg.covariates;
  j["prior"] = {{"kind", cfg.prior.kind}, {"a0", a0},
                {"omega0", omega0},       {"b0", cfg.prior.b0}};
  j["borrow_intercept"] = cfg.borrow_intercept;
  j["mcmc"] = {{"draws", cfg.mcmc.draws},
               {"burn_in", cfg.mcmc.burn_in},
               {"seed", cfg.mcmc.seed},
               {"chains", cfg.mcmc.chains}};
  j["rng"] = "xoshiro256++/splitmix64";
  return j;
}

/// Concatenates chains run with disjoint streams (after their own burn-in).
inline Chain merge_chains(std::vector<Chain> chains) {
  Chain merged = std::move(chains.front());
  for (std::size_t k = 1; k < chains.size(); ++k) {
    const Chain& c = chains[k];
    const Eigen::Index old_n = merged.draws.rows();
    merged.draws.conservativeResize(old_n + c.draws.rows(),
                                    merged.draws.cols());
    merged.draws.bottomRows(c.draws.rows()) = c.draws;
    merged.logdens.conservativeResize(old_n + c.logdens.size());
    merged.logdens.tail(c.logdens.size()) = c.logdens;
    merged.accepted += c.accepted;
    merged.proposals += c.proposals;
    merged.solver_failures += c.solver_failures;
    merged.max_residual = std::max(merged.max_residual, c.max_residual);
  }
  return merged;
}

struct LoadedPair {
  ModelPair pair;
  GlmFamily hist_family;
  GlmFamily curr_family;
  std::vector<std::string> coef_labels;
};

inline LoadedPair load_pair(const io::AnalysisConfig& cfg) {
  const GlmFamily hist_family = cfg.hist_family.build();
  const GlmFamily curr_family = cfg.curr_family.build();
  Dataset hist = io::load_dataset(cfg.historical_csv, cfg.hist_response,
                                  cfg.covariates, hist_family);
  Dataset curr = io::load_dataset(cfg.current_csv, cfg.curr_response,
                                  cfg.covariates, curr_family);
  std::vector<std::string> labels{"intercept"};
  labels.insert(labels.end(), cfg.covariates.begin(), cfg.covariates.end());
  return {ModelPair{hist_family, curr_family, std::move(hist), std::move(curr)},
          hist_family, curr_family, std::move(labels)};
}

inline sampler::FitResult run_configured(const LoadedPair& loaded,
                                         const io::AnalysisConfig& cfg,
                                         const PriorSpec& spec,
                                         std::uint64_t stream_base) {
  SamplerConfig scfg;
  scfg.draws = cfg.mcmc.draws;
  scfg.burn_in = cfg.mcmc.burn_in;
  const int n_chains = std::max(1, cfg.mcmc.chains);
  std::vector<Chain> chains;
  sampler::FitResult first;
  for (int k = 0; k < n_chains; ++k) {
    auto fit = sampler::run_analysis(loaded.pair, spec, scfg, cfg.mcmc.seed,
                                     stream_base + static_cast<std::uint64_t>(k));
    if (k == 0) first = fit;
    chains.push_back(std::move(fit.chain));
  }
  first.chain = merge_chains(std::move(chains));
  return first;
}

/// Replaces the compact coordinate labels with covariate names and appends a
/// derived current-variance column when the dispersion is sampled.
inline void decorate_chain(Chain& chain, const ChainLayout& layout,
                           const std::vector<std::string>& coef_labels) {
  for (Eigen::Index j = 0; j < layout.p; ++j)
    chain.labels[static_cast<std::size_t>(j)] =
        "curr_" + coef_labels[static_cast<std::size_t>(j)];
  if (layout.hist_beta_start >= 0)
    for (Eigen::Index j = 0; j < layout.p; ++j)
      chain.labels[static_cast<std::size_t>(layout.hist_beta_start + j)] =
          "hist_" + coef_labels[static_cast<std::size_t>(j)];
  if (layout.curr_phi_col >= 0) {
    const Eigen::Index n = chain.draws.rows();
    chain.draws.conservativeResize(n, chain.draws.cols() + 1);
    chain.draws.col(chain.draws.cols() - 1) =
        chain.draws.col(layout.curr_phi_col).cwiseInverse();
    chain.labels.push_back("curr_variance");
  }
}

/// fit: one prior on one data pair; writes summaries, the chain, and a
/// human-readable digest to stdout.
inline int cmd_fit(io::AnalysisConfig cfg, const Overrides& ov,
                   std::ostream& out = std::cout) {
  apply_overrides(cfg, ov);
  const LoadedPair loaded = load_pair(cfg);
  const double a0 = cfg.prior.a0, omega0 = cfg.prior.omega0;
  const PriorSpec spec =
      build_prior_spec(cfg, loaded.hist_family, loaded.curr_family,
                       loaded.pair.hist.X, a0, omega0);
  auto fit = run_configured(loaded, cfg, spec, 0);
  decorate_chain(fit.chain, fit.layout, loaded.coef_labels);

  PosteriorSummary summary = analysis::summarize(fit.chain);
  summary.dic = analysis::dic(fit.chain, fit.layout, loaded.curr_family,
                              loaded.pair.curr);

  const io::Json prov = resolved_provenance(cfg, a0, omega0);
  io::CellResult cell;
  cell.prior_id = cfg.prior.kind;
  cell.hyper = {{"a0", a0}, {"omega0", omega0}, {"b0", cfg.prior.b0}};
  cell.summary = summary;
  cell.acceptance = fit.chain.acceptance_rate();
  cell.max_residual = fit.chain.max_residual;
  io::write_results({cell}, cfg.output_dir, prov);
  io::write_chain_csv(
      fit.chain,
      (std::filesystem::path(cfg.output_dir) / "chain.csv").string(), prov);

  out << "prior=" << cfg.prior.kind << " a0=" << a0
      << " draws=" << fit.chain.n()
      << " acceptance=" << fit.chain.acceptance_rate()
      << " max_constraint_residual=" << fit.chain.max_residual << "\n";
  for (const auto& w : fit.chain.warnings) out << "warning: " << w << "\n";
  out << "dic=" << summary.dic << "\n";
  for (std::size_t k = 0; k < summary.labels.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %10.4f (%.4f)  [%.4f, %.4f]\n",
                  summary.labels[k].c_str(), summary.mean[i], summary.sd[i],
                  summary.hpd_lower[i], summary.hpd_upper[i]);
    out << line;
  }
  return 0;
}

struct DicCell {
  double a0 = 0.0;
  double omega0 = 0.0;
  double dic = std::numeric_limits<double>::quiet_NaN();
  double dic_mcse = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

/// dic-grid: DIC over the (a0, omega0) grid for the Gen-straPP family.
/// omega0 = 0 cells run the straPP; a0 = 0 cells are definitionally the
/// uniform-improper posterior. Failed cells are reported as NA.
inline std::vector<DicCell> dic_grid(const io::AnalysisConfig& cfg,
                                     const LoadedPair& loaded) {
  if (cfg.a0_grid.empty() || cfg.omega0_grid.empty())
    throw ValidationError("dic-grid requires nonempty a0_grid and omega0_grid");
  std::vector<DicCell> cells;
  std::uint64_t stream = 0;
  for (double omega0 : cfg.omega0_grid) {
    for (double a0 : cfg.a0_grid) {
      DicCell cell;
      cell.a0 = a0;
      cell.omega0 = omega0;
      io::AnalysisConfig cell_cfg = cfg;
      cell_cfg.prior.kind = omega0 == 0.0 ? "strapp" : "gen_strapp";
      cell_cfg.prior.a0 = a0;
      cell_cfg.prior.omega0 = omega0;
      try {
        const PriorSpec spec =
            build_prior_spec(cell_cfg, loaded.hist_family, loaded.curr_family,
                             loaded.pair.hist.X, a0, omega0);
        auto fit = run_configured(loaded, cell_cfg, spec, stream * 7919);
        cell.dic = analysis::dic(fit.chain, fit.layout, loaded.curr_family,
                                 loaded.pair.curr);
        // Batch-means error of the deviance average dominates the DIC noise.
        std::vector<double> dev(static_cast<std::size_t>(fit.chain.n()));
        for (Eigen::Index i = 0; i < fit.chain.n(); ++i)
          dev[static_cast<std::size_t>(i)] =
              -2.0 * glm::log_likelihood(
                         loaded.curr_family,
                         fit.layout.curr_params(Vector(fit.chain.draws.row(i))),
                         loaded.pair.curr);
        cell.dic_mcse = 2.0 * analysis::batch_mcse(dev);
        cell.ok = true;
      } catch (const Error&) {
        cell.ok = false;
      }
      cells.push_back(cell);
      ++stream;
    }
  }
  return cells;
}

inline int cmd_dic_grid(io::AnalysisConfig cfg, const Overrides& ov,
                        std::ostream& out = std::cout) {
  apply_overrides(cfg, ov);
  const LoadedPair loaded = load_pair(cfg);
  const auto cells = dic_grid(cfg, loaded);

  std::ostringstream csv;
  csv << "# config=" << resolved_provenance(cfg, 0, 0).dump() << "\n";
  csv << "omega0,a0,dic,dic_mcse\n";
  for (const auto& c : cells) {
    csv << io::format_full(c.omega0) << "," << io::format_full(c.a0) << ",";
    if (c.ok)
      csv << io::format_full(c.dic) << "," << io::format_full(c.dic_mcse);
    else
      csv << "NA,NA";
    csv << "\n";
  }
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  io::write_text(
      (std::filesystem::path(cfg.output_dir) / "dic_grid.csv").string(),
      csv.str());

  out << "omega0 \\ a0";
  for (double a0 : cfg.a0_grid) out << "\t" << a0;
  out << "\n";
  std::size_t idx = 0;
  for (double omega0 : cfg.omega0_grid) {
    out << omega0;
    for (std::size_t k = 0; k < cfg.a0_grid.size(); ++k) {
      const DicCell& c = cells[idx++];
      if (c.ok) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "\t%.2f", c.dic);
        out << buf;
      } else {
        out << "\tNA";
      }
    }
    out << "\n";
  }
  bool all_ok = true;
  for (const auto& c : cells) all_ok = all_ok && c.ok;
  return all_ok ? 0 : 3;
}

/// threshold: the normal-normal MSE crossing point.
inline int cmd_threshold(double n0, double n1, double a0, double sigma0,
                         double sigma1, std::ostream& out = std::cout) {
  const auto t = closedform::mse_threshold(n0, n1, a0, sigma0, sigma1);
  if (t)
    out << "beta11_threshold=" << io::format_full(*t) << "\n";
  else
    out << "beta11_threshold=no-crossing\n";
  return 0;
}

/// simulate: run a named scenario (with optional JSON overrides) and write
/// the metrics CSV.
inline Scenario scenario_from_json(const io::Json& j) {
  Scenario sc = simharness::scenario_by_name(j.at("name").get<std::string>());
  if (j.contains("replicates")) sc.replicates = j.at("replicates").get<int>();
  if (j.contains("draws")) sc.draws = j.at("draws").get<int>();
  if (j.contains("burn_in")) sc.burn_in = j.at("burn_in").get<int>();
  if (j.contains("base_seed"))
    sc.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("workers")) sc.workers = j.at("workers").get<int>();
  if (j.contains("grid")) {
    const auto values = j.at("grid").get<std::vector<double>>();
    sc.grid.resize(static_cast<Eigen::Index>(values.size()));
    for (std::size_t k = 0; k < values.size(); ++k)
      sc.grid[static_cast<Eigen::Index>(k)] = values[k];
  } else if (j.contains("grid_points")) {
    const Scenario preset =
        simharness::scenario_by_name(j.at("name").get<std::string>());
    sc.grid = simharness::linspace(preset.grid[0],
                                   preset.grid[preset.grid.size() - 1],
                                   j.at("grid_points").get<int>());
  }
  return sc;
}

inline int cmd_simulate(Scenario sc, const Overrides& ov,
                        const std::string& output_csv,
                        std::ostream& out = std::cout) {
  if (ov.seed) sc.base_seed = *ov.seed;
  if (ov.draws) sc.draws = *ov.draws;
  if (ov.burn_in) sc.burn_in = *ov.burn_in;
  if (ov.workers) sc.workers = *ov.workers;
  if (ov.paper_scale) {
    sc.replicates = 5000;
    sc.draws = 25000;
    sc.burn_in = 5000;
  }
  const auto rows = simharness::run_scenario(sc);
  std::ostringstream prov;
  prov << "scenario=" << sc.name << " replicates=" << sc.replicates
       << " draws=" << sc.draws << " base_seed=" << sc.base_seed;
  io::write_text(output_csv, simharness::metrics_to_csv(rows, prov.str()));
  out << "wrote " << rows.size() << " metric rows to " << output_csv << "\n";
  return 0;
}

}  // namespace cli
}  // namespace strapp

#endif  // STRAPP_CLI_HPP
