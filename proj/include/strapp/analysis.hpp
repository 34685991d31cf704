#ifndef STRAPP_ANALYSIS_HPP
#define STRAPP_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "strapp/sampler.hpp"

namespace strapp {

/// Per-coordinate posterior summary at a fixed HPD level.
struct PosteriorSummary {
  std::vector<std::string> labels;
  Vector mean;
  Vector sd;
  Vector hpd_lower;
  Vector hpd_upper;
  double dic = std::numeric_limits<double>::quiet_NaN();
};

namespace analysis {

/// Coordinatewise sample mean and standard deviation (denominator n - 1).
inline std::pair<Vector, Vector> posterior_summary(const Chain& chain) {
  if (chain.n() == 0) throw EmptyChain("chain has no draws");
  const Eigen::Index n = chain.n();
  const Vector mean = chain.draws.colwise().mean();
  Vector sd = Vector::Zero(chain.draws.cols());
  if (n > 1) {
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j)
      sd[j] = std::sqrt(
          (chain.draws.col(j).array() - mean[j]).square().sum() / (n - 1));
  }
  return {mean, sd};
}

/// Narrowest window containing ceil(level * n) consecutive sorted samples;
/// ties resolved toward the smallest lower endpoint.
inline std::pair<double, double> hpd_interval(std::vector<double> samples,
                                              double level) {
  if (samples.size() < 20) throw TooFewSamples("HPD needs at least 20 samples");
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("HPD level must lie in (0, 1)");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const std::size_t m = static_cast<std::size_t>(
      std::ceil(level * static_cast<double>(n)));
  const std::size_t window = std::min(std::max<std::size_t>(m, 1), n);
  double best_lo = samples.front(), best_hi = samples.back();
  double best_width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + window <= n; ++i) {
    const double width = samples[i + window - 1] - samples[i];
    if (width < best_width) {
      best_width = width;
      best_lo = samples[i];
      best_hi = samples[i + window - 1];
    }
  }
  return {best_lo, best_hi};
}

inline std::pair<double, double> hpd_interval(const Chain& chain,
                                              Eigen::Index col,
                                              double level = 0.95) {
  std::vector<double> samples(static_cast<std::size_t>(chain.n()));
  for (Eigen::Index i = 0; i < chain.n(); ++i)
    samples[static_cast<std::size_t>(i)] = chain.draws(i, col);
  return hpd_interval(std::move(samples), level);
}

/// Deviance information criterion: 2 E[Dev] - Dev(posterior mean), where the
/// callable maps a chain row to the current-data log likelihood and
/// Dev = -2 log L. The posterior mean is coordinatewise over the chain rows.
template <class LogLik>
double dic(const Chain& chain, LogLik&& loglik_of_row) {
  if (chain.n() == 0) throw EmptyChain("chain has no draws");
  double mean_dev = 0.0;
  for (Eigen::Index i = 0; i < chain.n(); ++i)
    mean_dev += -2.0 * loglik_of_row(Vector(chain.draws.row(i)));
  mean_dev /= static_cast<double>(chain.n());
  const Vector mean_row = chain.draws.colwise().mean();
  const double dev_at_mean = -2.0 * loglik_of_row(mean_row);
  return 2.0 * mean_dev - dev_at_mean;
}

/// DIC with the chain layout locating (beta_1, phi_1) inside rows.
inline double dic(const Chain& chain, const ChainLayout& layout,
                  const GlmFamily& curr_family, const Dataset& curr) {
  return dic(chain, [&](const Vector& row) {
    return glm::log_likelihood(curr_family, layout.curr_params(row), curr);
  });
}

/// Full summary of a chain (all columns), with DIC when the current data is
/// supplied.
inline PosteriorSummary summarize(const Chain& chain, double level = 0.95) {
  auto [mean, sd] = posterior_summary(chain);
  PosteriorSummary s;
  s.labels = chain.labels;
  s.mean = mean;
  s.sd = sd;
  s.hpd_lower.resize(chain.draws.cols());
  s.hpd_upper.resize(chain.draws.cols());
  for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) {
    auto [lo, hi] = hpd_interval(chain, j, level);
    s.hpd_lower[j] = lo;
    s.hpd_upper[j] = hi;
  }
  return s;
}

/// Batch-means Monte Carlo standard error of a scalar series' mean.
inline double batch_mcse(const std::vector<double>& series) {
  const Eigen::Index n = static_cast<Eigen::Index>(series.size());
  const Eigen::Index b = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(std::sqrt(n))));
  const Eigen::Index nb = n / b;
  if (nb < 2) return 0.0;
  double overall = 0.0;
  for (Eigen::Index i = 0; i < nb * b; ++i)
    overall += series[static_cast<std::size_t>(i)];
  overall /= static_cast<double>(nb * b);
  double var = 0.0;
  for (Eigen::Index k = 0; k < nb; ++k) {
    double bm = 0.0;
    for (Eigen::Index i = 0; i < b; ++i)
      bm += series[static_cast<std::size_t>(k * b + i)];
    bm /= static_cast<double>(b);
    var += (bm - overall) * (bm - overall);
  }
  var *= static_cast<double>(b) / (nb - 1);
  return std::sqrt(var / static_cast<double>(n));
}

/// Batch-means Monte Carlo standard error for one chain column.
inline double mcse(const Chain& chain, Eigen::Index col) {
  const Eigen::Index n = chain.n();
  const Eigen::Index b = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(std::sqrt(n))));
  const Eigen::Index nb = n / b;
  if (nb < 2) return 0.0;
  const double overall = chain.draws.col(col).head(nb * b).mean();
  double var = 0.0;
  for (Eigen::Index k = 0; k < nb; ++k) {
    const double bm = chain.draws.col(col).segment(k * b, b).mean();
    var += (bm - overall) * (bm - overall);
  }
  var *= static_cast<double>(b) / (nb - 1);
  return std::sqrt(var / static_cast<double>(n));
}

}  // namespace analysis
}  // namespace strapp

#endif  // STRAPP_ANALYSIS_HPP
