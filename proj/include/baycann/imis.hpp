#pragma once

// Incremental mixture importance sampling against a likelihood evaluated on
// the simulator itself. Serves as the direct-calibration baseline.

#include "baycann/calibrate.hpp"
#include "baycann/doe.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace baycann::imis {

struct ImisConfig {
  int n_initial = 1000;
  int batch = 100;
  int max_iterations = 100;
  int resample_size = 4000;
  std::uint64_t seed = 1;
  // Keep weighted mean/covariance after every iteration (costs O(N d^2) each).
  bool record_history = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ImisConfig from_json(const nlohmann::json& j);
};

// Log-likelihood at a parameter vector in natural units.
using LogLikelihood = std::function<double(const Eigen::VectorXd&)>;

struct MixtureComponent {
  Eigen::VectorXd mean;        // unit-cube coordinates
  Eigen::MatrixXd covariance;  // unit-cube coordinates
};

struct IterationRecord {
  int iteration = 0;
  long points = 0;
  double unique_fraction = 0.0;
  double ess = 0.0;
  Eigen::VectorXd mean;        // natural units, weighted
  Eigen::MatrixXd covariance;  // natural units, weighted
};

struct ImisResult {
  calibrate::Posterior posterior;  // resampled draws, method "imis"
  std::vector<MixtureComponent> components;
  Eigen::MatrixXd points;          // all sampled points, natural units
  Eigen::VectorXd weights;         // final normalized importance weights
  Eigen::VectorXd mixture_density; // q_mix at each point, unit-cube density
  int iterations = 0;
  long evaluations = 0;
  bool converged = false;
  double unique_fraction = 0.0;
  double ess = 0.0;  // 1 / sum w^2
  std::vector<std::string> warnings;
  std::vector<IterationRecord> history;

  nlohmann::json summary_json() const;
};

// Expected number of distinct points in a J-draw resample, divided by J:
// (1/J) sum_i (1 - (1 - w_i)^J).
double effective_unique_fraction(std::span<const double> weights, long resample_size);

// Stops once the unique fraction reaches 1 - exp(-1) or after max_iterations.
ImisResult imis_run(const LogLikelihood& log_likelihood, const doe::PriorSpec& priors,
                    const ImisConfig& cfg);

}  // namespace baycann::imis
