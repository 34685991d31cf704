#ifndef STRAPP_IO_HPP
#define STRAPP_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "strapp/analysis.hpp"
#include "strapp/sampler.hpp"

namespace strapp {
namespace io {

using Json = nlohmann::json;

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- CSV ------------------------------------------------------------------

/// In-memory CSV: comma separated, UTF-8, one header row, '.' decimals,
/// no quoting. Lines starting with '#' are provenance comments and are
/// skipped.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Eigen::Index column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return static_cast<Eigen::Index>(j);
    throw MissingColumn("column '" + name + "' not found");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  bool header_read = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (!header_read) {
      table.columns = std::move(cells);
      header_read = true;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (!header_read) throw IoFailure("'" + path + "' has no header row");
  return table;
}

inline double parse_cell(const std::string& cell, std::size_t data_row,
                         const std::string& column) {
  if (cell.empty())
    throw MissingValue("missing value in column '" + column + "' at row " +
                       std::to_string(data_row + 1));
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse '" + cell + "' in column '" + column +
                          "' at row " + std::to_string(data_row + 1));
  }
  if (used != cell.size())
    throw ValidationError("trailing characters in '" + cell + "' at row " +
                          std::to_string(data_row + 1));
  return value;
}

/// Loads a study dataset: named response plus covariates in declared order,
/// intercept column prepended, responses validated for the family and the
/// design checked for full column rank.
inline Dataset load_dataset(const std::string& path,
                            const std::string& response,
                            const std::vector<std::string>& covariates,
                            const GlmFamily& family) {
  const CsvTable table = read_csv(path);
  const Eigen::Index y_col = table.column_index(response);
  std::vector<Eigen::Index> x_cols;
  for (const auto& name : covariates) x_cols.push_back(table.column_index(name));

  const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(covariates.size()) + 1;
  if (n == 0) throw ValidationError("'" + path + "' has no data rows");
  Dataset d;
  d.y = Vector::Zero(n);
  d.X = Matrix::Ones(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    if (row.size() != table.columns.size())
      throw ValidationError("row " + std::to_string(i + 1) +
                            " has the wrong number of cells");
    d.y[i] = parse_cell(row[static_cast<std::size_t>(y_col)],
                        static_cast<std::size_t>(i), response);
    family.validate_response(d.y[i], i);
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      d.X(i, static_cast<Eigen::Index>(k) + 1) =
          parse_cell(row[static_cast<std::size_t>(x_cols[k])],
                     static_cast<std::size_t>(i), covariates[k]);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(d.X);
  if (qr.rank() < p)
    throw RankDeficientDesign("design matrix of '" + path +
                              "' is rank deficient");
  return d;
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write '" + path + "'");
  out << body;
  if (!out) throw IoFailure("write to '" + path + "' failed");
}

/// One posterior chain to CSV: provenance comments, then one row per draw.
inline void write_chain_csv(const Chain& chain, const std::string& path,
                            const Json& provenance = Json::object()) {
  std::ostringstream out;
  out << "# seed=" << chain.seed << " stream=" << chain.stream
      << " burn_in=" << chain.burn_in
      << " acceptance=" << format_full(chain.acceptance_rate()) << "\n";
  if (!provenance.empty()) out << "# config=" << provenance.dump() << "\n";
  for (std::size_t j = 0; j < chain.labels.size(); ++j)
    out << (j ? "," : "") << chain.labels[j];
  out << ",log_density\n";
  for (Eigen::Index i = 0; i < chain.n(); ++i) {
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j)
      out << (j ? "," : "") << format_full(chain.draws(i, j));
    out << "," << format_full(chain.logdens[i]) << "\n";
  }
  write_text(path, out.str());
}

// --- analysis configuration -------------------------------------------------

struct FamilyChoice {
  std::string name;    // normal | normal_unknown | bernoulli | poisson |
                       // exponential
  double sigma = 1.0;  // known-variance normal only

  GlmFamily build() const {
    if (name == "normal") return GlmFamily::normal_known(sigma);
    if (name == "normal_unknown") return GlmFamily::normal_unknown();
    if (name == "bernoulli") return GlmFamily::bernoulli();
    if (name == "poisson") return GlmFamily::poisson();
    if (name == "exponential") return GlmFamily::exponential();
    throw InvalidSpec("unknown family '" + name + "'");
  }
};

struct PriorChoiceConfig {
  std::string kind;  // uniform | pp | app | commensurate | strapp | gen_strapp
  double a0 = 1.0;
  double omega0 = 1.0;
  double b0 = 2.0;
};

struct McmcConfig {
  int draws = 10000;
  int burn_in = -1;
  std::uint64_t seed = 1;
  int chains = 1;
};

struct AnalysisConfig {
  std::string historical_csv;
  std::string current_csv;
  std::string hist_response;
  std::string curr_response;
  FamilyChoice hist_family;
  FamilyChoice curr_family;
  std::vector<std::string> covariates;
  bool borrow_intercept = false;
  PriorChoiceConfig prior;
  std::vector<double> a0_grid;      // dic-grid
  std::vector<double> omega0_grid;  // dic-grid
  McmcConfig mcmc;
  std::string output_dir = ".";

  void validate() const {
    for (const auto& c : covariates) {
      if (c == hist_response || c == curr_response)
        throw ValidationError("response column '" + c +
                              "' also listed as a covariate");
    }
  }
};

inline FamilyChoice parse_family(const Json& j) {
  FamilyChoice f;
  f.name = j.at("family").get<std::string>();
  if (f.name == "normal") f.sigma = j.at("sigma").get<double>();
  return f;
}

inline AnalysisConfig parse_analysis_config(const Json& j) {
  AnalysisConfig c;
  c.historical_csv = j.at("historical_csv").get<std::string>();
  c.current_csv = j.at("current_csv").get<std::string>();
  const Json& hist = j.at("historical");
  const Json& curr = j.at("current");
  c.hist_response = hist.at("response").get<std::string>();
  c.curr_response = curr.at("response").get<std::string>();
  c.hist_family = parse_family(hist);
  c.curr_family = parse_family(curr);
  c.covariates = j.at("covariates").get<std::vector<std::string>>();
  c.borrow_intercept = j.value("borrow_intercept", false);
  if (j.contains("prior")) {
    const Json& p = j.at("prior");
    c.prior.kind = p.value("kind", std::string("uniform"));
    c.prior.a0 = p.value("a0", 1.0);
    c.prior.omega0 = p.value("omega0", 1.0);
    c.prior.b0 = p.value("b0", 2.0);
  }
  c.a0_grid = j.value("a0_grid", std::vector<double>{});
  c.omega0_grid = j.value("omega0_grid", std::vector<double>{});
  if (j.contains("mcmc")) {
    const Json& m = j.at("mcmc");
    c.mcmc.draws = m.value("draws", 10000);
    c.mcmc.burn_in = m.value("burn_in", -1);
    c.mcmc.seed = m.value("seed", std::uint64_t{1});
    c.mcmc.chains = m.value("chains", 1);
  }
  c.output_dir = j.value("output_dir", std::string("."));
  c.validate();
  return c;
}

inline AnalysisConfig load_analysis_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  return parse_analysis_config(j);
}

// --- results ----------------------------------------------------------------

/// One fitted prior's summary cell for write_results.
struct CellResult {
  std::string prior_id;
  Json hyper = Json::object();
  PosteriorSummary summary;
  double acceptance = 0.0;
  double max_residual = 0.0;
};

inline Json summary_to_json(const PosteriorSummary& s) {
  Json j;
  j["dic"] = s.dic;
  Json coords = Json::array();
  for (std::size_t k = 0; k < s.labels.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    coords.push_back({{"label", s.labels[k]},
                      {"mean", s.mean[i]},
                      {"sd", s.sd[i]},
                      {"hpd_lower", s.hpd_lower[i]},
                      {"hpd_upper", s.hpd_upper[i]}});
  }
  j["coordinates"] = std::move(coords);
  return j;
}

inline PosteriorSummary summary_from_json(const Json& j) {
  PosteriorSummary s;
  s.dic = j.at("dic").get<double>();
  const Json& coords = j.at("coordinates");
  const Eigen::Index m = static_cast<Eigen::Index>(coords.size());
  s.mean.resize(m);
  s.sd.resize(m);
  s.hpd_lower.resize(m);
  s.hpd_upper.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Json& c = coords[static_cast<std::size_t>(i)];
    s.labels.push_back(c.at("label").get<std::string>());
    s.mean[i] = c.at("mean").get<double>();
    s.sd[i] = c.at("sd").get<double>();
    s.hpd_lower[i] = c.at("hpd_lower").get<double>();
    s.hpd_upper[i] = c.at("hpd_upper").get<double>();
  }
  return s;
}

/// Writes one JSON document per cell plus a combined CSV table with one row
/// per prior, sorted by DIC ascending. Every file embeds the resolved
/// provenance.
inline void write_results(const std::vector<CellResult>& cells,
                          const std::string& dir,
                          const Json& provenance = Json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cells[a].summary.dic < cells[b].summary.dic;
  });

  std::ostringstream csv;
  if (!provenance.empty()) csv << "# config=" << provenance.dump() << "\n";
  csv << "prior,hyper,dic,acceptance,max_residual";
  if (!cells.empty())
    for (const auto& label : cells.front().summary.labels)
      csv << "," << label << "_mean," << label << "_sd," << label
          << "_hpd_lower," << label << "_hpd_upper";
  csv << "\n";
  for (std::size_t idx : order) {
    const CellResult& cell = cells[idx];
    csv << cell.prior_id << "," << cell.hyper.dump() << ","
        << format_full(cell.summary.dic) << "," << format_full(cell.acceptance)
        << "," << format_full(cell.max_residual);
    for (Eigen::Index i = 0; i < cell.summary.mean.size(); ++i)
      csv << "," << format_full(cell.summary.mean[i]) << ","
          << format_full(cell.summary.sd[i]) << ","
          << format_full(cell.summary.hpd_lower[i]) << ","
          << format_full(cell.summary.hpd_upper[i]);
    csv << "\n";
  }
  write_text((std::filesystem::path(dir) / "results.csv").string(), csv.str());

  for (std::size_t i = 0; i < cells.size(); ++i) {
    Json j;
    j["prior"] = cells[i].prior_id;
    j["hyper"] = cells[i].hyper;
    j["acceptance"] = cells[i].acceptance;
    j["max_residual"] = cells[i].max_residual;
    j["provenance"] = provenance;
    j["summary"] = summary_to_json(cells[i].summary);
    const std::string name =
        "cell_" + std::to_string(i) + "_" + cells[i].prior_id + ".json";
    write_text((std::filesystem::path(dir) / name).string(), j.dump(2));
  }
}

}  // namespace io
}  // namespace strapp

#endif  // STRAPP_IO_HPP
