#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strapp/cli.hpp"

namespace fs = std::filesystem;
using strapp::GlmFamily;
using strapp::Matrix;
using strapp::Vector;

namespace {

std::string cli_binary() {
  const char* env = std::getenv("STRAPP_CLI_BIN");
  if (env != nullptr) return env;
  return "";
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "strapp_cli_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args, const fs::path& stdout_path) {
  const std::string cmd =
      cli_binary() + " " + args + " > " + stdout_path.string() + " 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ostringstream out;
  out << std::ifstream(p).rdbuf();
  return out.str();
}

// Two tiny studies: normal historical / normal current.
void write_pair_csvs(const fs::path& hist, const fs::path& curr) {
  strapp::RngStream rng(5, 0);
  std::ofstream h(hist), c(curr);
  h << "y,trt\n";
  for (int i = 0; i < 40; ++i) {
    const double trt = i < 20 ? 1.0 : 0.0;
    h << 0.5 + 0.4 * trt + rng.normal() << "," << trt << "\n";
  }
  c << "score,trt\n";
  for (int i = 0; i < 60; ++i) {
    const double trt = i < 30 ? 1.0 : 0.0;
    c << 1.0 + 0.8 * trt + 2.0 * rng.normal() << "," << trt << "\n";
  }
}

strapp::io::Json base_config(const fs::path& hist, const fs::path& curr,
                             const fs::path& outdir) {
  return {
      {"historical_csv", hist.string()},
      {"current_csv", curr.string()},
      {"historical", {{"response", "y"}, {"family", "normal"}, {"sigma", 1.0}}},
      {"current",
       {{"response", "score"}, {"family", "normal"}, {"sigma", 2.0}}},
      {"covariates", {"trt"}},
      {"borrow_intercept", true},
      {"prior", {{"kind", "uniform"}}},
      {"mcmc", {{"draws", 1500}, {"seed", 11}}},
      {"output_dir", outdir.string()},
  };
}

fs::path write_config(const strapp::io::Json& j, const std::string& name) {
  const fs::path p = work_dir() / name;
  std::ofstream out(p);
  out << j.dump(2);
  return p;
}

double parsed_mean(const fs::path& results_dir, const std::string& label) {
  const auto j = strapp::io::Json::parse(
      std::ifstream(results_dir / "cell_0_uniform.json"));
  for (const auto& c : j.at("summary").at("coordinates"))
    if (c.at("label") == label) return c.at("mean").get<double>();
  throw std::runtime_error("label not found");
}

}  // namespace

TEST_CASE("threshold subcommand prints the closed-form value", "[cli]") {
  REQUIRE_FALSE(cli_binary().empty());
  const auto out = work_dir() / "thr.txt";
  REQUIRE(run_cli("threshold --n0 50 --n1 100 --a0 0.5 --sigma0 1 --sigma1 3",
                  out) == 0);
  REQUIRE(slurp(out).rfind("beta11_threshold=0.93637", 0) == 0);

  REQUIRE(run_cli("threshold --n0 50 --n1 100 --a0 0.5 --sigma0 3 --sigma1 1",
                  out) == 0);
  REQUIRE(slurp(out) == "beta11_threshold=no-crossing\n");

  // Equal variances: validation failure, exit code 2.
  const int code = run_cli(
      "threshold --n0 50 --n1 100 --a0 0.5 --sigma0 2 --sigma1 2", out);
  REQUIRE(WEXITSTATUS(code) == 2);
}

TEST_CASE("fit with the uniform prior recovers the MLE", "[cli]") {
  const auto hist = work_dir() / "hist.csv";
  const auto curr = work_dir() / "curr.csv";
  write_pair_csvs(hist, curr);
  const auto outdir = work_dir() / "fit_uip";
  const auto cfg = write_config(base_config(hist, curr, outdir), "uip.json");
  const auto out = work_dir() / "fit.txt";
  REQUIRE(run_cli("fit --config " + cfg.string(), out) == 0);

  // Flat prior, known variance: posterior mean is the least-squares fit.
  const auto curr_data = strapp::io::load_dataset(
      curr.string(), "score", {"trt"}, GlmFamily::normal_known(2.0));
  const auto mle = strapp::glm::fit_mle(GlmFamily::normal_known(2.0),
                                        curr_data);
  const double post_mean = parsed_mean(outdir, "curr_trt");
  const double se = 3.0 * std::sqrt(mle.covariance(1, 1) / 10.0);
  REQUIRE(std::abs(post_mean - mle.params.beta[1]) < se);
}

TEST_CASE("straPP with a0 = 0 matches the uniform fit under the same seed",
          "[cli]") {
  const auto hist = work_dir() / "hist.csv";
  const auto curr = work_dir() / "curr.csv";
  write_pair_csvs(hist, curr);

  auto uip_cfg = base_config(hist, curr, work_dir() / "a0_uip");
  auto strapp_cfg = base_config(hist, curr, work_dir() / "a0_strapp");
  strapp_cfg["prior"] = {{"kind", "strapp"}, {"a0", 0.0}};
  const auto out = work_dir() / "a0.txt";
  REQUIRE(run_cli("fit --config " +
                      write_config(uip_cfg, "a0_uip.json").string(),
                  out) == 0);
  REQUIRE(run_cli("fit --config " +
                      write_config(strapp_cfg, "a0_strapp.json").string(),
                  out) == 0);

  const auto uip_chain = slurp(work_dir() / "a0_uip" / "chain.csv");
  const auto strapp_chain = slurp(work_dir() / "a0_strapp" / "chain.csv");
  // Identical draws; only the embedded config line differs.
  const auto body = [](const std::string& s) {
    return s.substr(s.find("\ncurr_"));
  };
  REQUIRE(body(uip_chain) == body(strapp_chain));
}

TEST_CASE("fit output is byte-identical across reruns", "[cli]") {
  const auto hist = work_dir() / "hist.csv";
  const auto curr = work_dir() / "curr.csv";
  write_pair_csvs(hist, curr);
  auto cfg = base_config(hist, curr, work_dir() / "rerun_a");
  cfg["prior"] = {{"kind", "strapp"}, {"a0", 0.6}};
  const auto out = work_dir() / "rerun.txt";
  REQUIRE(run_cli("fit --config " +
                      write_config(cfg, "rerun_a.json").string(),
                  out) == 0);
  const std::string first = slurp(work_dir() / "rerun_a" / "chain.csv");
  REQUIRE(run_cli("fit --config " +
                      write_config(cfg, "rerun_a.json").string(),
                  out) == 0);
  REQUIRE(slurp(work_dir() / "rerun_a" / "chain.csv") == first);

  // A seed override via the environment changes the draws.
  REQUIRE(run_cli("fit --seed 99 --config " +
                      write_config(cfg, "rerun_a.json").string(),
                  out) == 0);
  REQUIRE(slurp(work_dir() / "rerun_a" / "chain.csv") != first);
}

TEST_CASE("dic-grid single cell and the a0 = 0 column equivalence", "[cli]") {
  const auto hist = work_dir() / "hist.csv";
  const auto curr = work_dir() / "curr.csv";
  write_pair_csvs(hist, curr);

  auto cfg = base_config(hist, curr, work_dir() / "grid_one");
  cfg["a0_grid"] = {0.5};
  cfg["omega0_grid"] = {0.0};
  const auto out = work_dir() / "grid.txt";
  REQUIRE(run_cli("dic-grid --config " +
                      write_config(cfg, "grid_one.json").string(),
                  out) == 0);
  {
    const auto table = strapp::io::read_csv(
        (work_dir() / "grid_one" / "dic_grid.csv").string());
    REQUIRE(table.rows.size() == 1);
  }

  auto cfg2 = base_config(hist, curr, work_dir() / "grid_zero");
  cfg2["a0_grid"] = {0.0};
  cfg2["omega0_grid"] = {0.0, 0.5, 1.0};
  cfg2["mcmc"] = {{"draws", 4000}, {"seed", 21}};
  REQUIRE(run_cli("dic-grid --config " +
                      write_config(cfg2, "grid_zero.json").string(),
                  out) == 0);
  const auto table = strapp::io::read_csv(
      (work_dir() / "grid_zero" / "dic_grid.csv").string());
  REQUIRE(table.rows.size() == 3);
  std::vector<double> dic, mcse;
  for (const auto& row : table.rows) {
    dic.push_back(std::stod(row[2]));
    mcse.push_back(std::stod(row[3]));
  }
  for (std::size_t i = 1; i < dic.size(); ++i) {
    const double tol = 3.0 * std::hypot(mcse[0], mcse[i]);
    REQUIRE(std::abs(dic[i] - dic[0]) <= tol);
  }
}

TEST_CASE("config errors exit with the validation code", "[cli]") {
  const auto out = work_dir() / "bad.txt";
  const int code = run_cli("fit --config /nonexistent.json", out);
  REQUIRE(WEXITSTATUS(code) != 0);
}
