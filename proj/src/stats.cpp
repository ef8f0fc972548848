#include "baycann/stats.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace baycann::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

bool usable(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().size() < 2) return false;
  const auto n = chains.front().size();
  return std::all_of(chains.begin(), chains.end(), [n](const auto& c) { return c.size() == n; });
}

// Multi-chain ESS on equal-length chains.
double ess_impl(const std::vector<std::vector<double>>& chains) {
  if (!usable(chains)) return kNaN;
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) return kNaN;

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean(chains[c]);
    vars[c] = variance(chains[c]);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  const double b_over_n = m > 1 ? variance(means) : 0.0;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b_over_n;
  if (!(var_plus > 0.0)) return kNaN;

  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[c]) * (x[i + lag] - means[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - mean_acov(lag)) / var_plus; };

  // Geyer initial monotone sequence over pairs (rho_2k + rho_2k+1).
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  const double total = static_cast<double>(m * n);
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return kNaN;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return kNaN;
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size() - 1);
}

double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double ks_uniform(std::vector<double> x, double lower, double upper) {
  if (x.empty()) throw std::invalid_argument("ks_uniform of empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp((x[i] - lower) / (upper - lower), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (!usable(chains) || chains.front().size() < 4) return kNaN;
  const auto halves = split_chains(chains);
  const std::size_t n = halves.front().size();
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    means.push_back(mean(h));
    vars.push_back(variance(h));
  }
  const double w = mean(vars);
  const double b_over_n = variance(means);
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b_over_n;
  if (!(w > 0.0)) return b_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return std::sqrt(var_plus / w);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
  if (!usable(chains) || chains.front().size() < 4) return kNaN;
  auto halves = split_chains(chains);
  // Rank-normalize over the pooled draws, average ranks for ties.
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < halves.size(); ++c) {
    for (std::size_t i = 0; i < halves[c].size(); ++i) pooled.emplace_back(halves[c][i], c * halves[c].size() + i);
  }
  std::sort(pooled.begin(), pooled.end());
  const double s = static_cast<double>(pooled.size());
  std::vector<double> z(pooled.size());
  const boost::math::normal_distribution<double> normal;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double q = boost::math::quantile(normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k <= j; ++k) z[pooled[k].second] = q;
    i = j + 1;
  }
  const std::size_t len = halves.front().size();
  for (std::size_t c = 0; c < halves.size(); ++c) {
    for (std::size_t i = 0; i < len; ++i) halves[c][i] = z[c * len + i];
  }
  return ess_impl(halves);
}

double ess_raw(const std::vector<std::vector<double>>& chains) { return ess_impl(chains); }

std::vector<double> kde(std::span<const double> x, std::span<const double> grid) {
  if (x.size() < 2) throw std::invalid_argument("kde needs at least 2 points");
  std::vector<double> sorted(x.begin(), x.end());
  const double sd = std::sqrt(variance(sorted));
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = std::max(std::abs(sorted.front()), 1.0) * 1e-6;
  const double h = 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
  const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * M_PI));
  std::vector<double> out;
  out.reserve(grid.size());
  for (double g : grid) {
    double s = 0.0;
    for (double v : x) {
      const double u = (g - v) / h;
      s += std::exp(-0.5 * u * u);
    }
    out.push_back(s * norm);
  }
  return out;
}

}  // namespace baycann::stats
