#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace baycann::stats {

double mean(std::span<const double> x);
// Unbiased sample variance.
double variance(std::span<const double> x);

// Linear-interpolation quantile (type 7), p in [0, 1].
double quantile(std::vector<double> x, double p);

// Kolmogorov-Smirnov sup distance between the empirical CDF of `x` and the
// uniform CDF on [lower, upper].
double ks_uniform(std::vector<double> x, double lower, double upper);

// Split potential scale reduction over equal-length chains. Returns NaN for a
// single chain shorter than 4 draws.
double split_rhat(const std::vector<std::vector<double>>& chains);

// Bulk effective sample size: rank-normalized split chains, Geyer initial
// monotone sequence on the multi-chain autocorrelation.
double ess_bulk(const std::vector<std::vector<double>>& chains);

// Same estimator on the raw draws.
double ess_raw(const std::vector<std::vector<double>>& chains);

// Gaussian kernel density on `grid` with Silverman's bandwidth.
std::vector<double> kde(std::span<const double> x, std::span<const double> grid);

}  // namespace baycann::stats
