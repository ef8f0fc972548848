#pragma once

// End-to-end orchestration: targets -> design -> surrogate -> surrogate
// calibration -> direct IMIS calibration -> comparison and plot data. Every
// stage reads its inputs from, and writes its artifacts to, one output
// directory so stages can also be run one at a time from the CLI.

#include "baycann/ann.hpp"
#include "baycann/calibrate.hpp"
#include "baycann/doe.hpp"
#include "baycann/imis.hpp"
#include "baycann/nathist.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace baycann::pipeline {

// Bad configuration or missing input; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A stage failed after its inputs were accepted; exit code 1.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Scale { Desk, Full };
Scale parse_scale(const std::string& s);

struct PipelineConfig {
  std::filesystem::path life_table;  // empty: bundled Gompertz-Makeham table
  std::filesystem::path out_dir = "baycann_out";
  std::uint64_t seed = 20200101;
  int doe_size = 10000;
  double split_fraction = 0.8;
  nathist::TargetGenOptions targets;  // seed is derived from `seed`
  ann::AnnConfig ann;
  ann::TrainOptions train;
  calibrate::HmcConfig hmc;           // seed is derived from `seed`
  imis::ImisConfig imis;              // seed is derived from `seed`
  // Give IMIS as many simulator evaluations as the surrogate route used
  // model evaluations (design rows + HMC gradient evaluations).
  bool imis_match_budget = false;
  int predictive_draws = 500;
  int density_grid_points = 101;

  void apply_scale(Scale s);
  void validate() const;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  // Hash of the canonical JSON form, excluding out_dir.
  std::string hash() const;

  std::uint64_t stage_seed(const std::string& stage) const;
  nathist::LifeTable load_life_table() const;
};

struct ComparisonRow {
  std::string name;
  double truth = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double dev_a = 0.0;
  double dev_b = 0.0;
  std::optional<double> ratio;  // dev_a / dev_b; empty when dev_b == 0
};

struct ComparisonReport {
  std::string label_a = "BayCANN";
  std::string label_b = "IMIS";
  std::vector<ComparisonRow> rows;
  std::map<std::string, double> wall_seconds;

  int ratios_below_one() const;
  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
  std::string render_table() const;
};

ComparisonReport compare_means(const std::vector<std::string>& names, const Eigen::VectorXd& mean_a,
                               const Eigen::VectorXd& mean_b, const Eigen::VectorXd& truth);

// Column names must agree between both posteriors and the truth map.
ComparisonReport compare_posteriors(const calibrate::Posterior& a, const calibrate::Posterior& b,
                                    const std::map<std::string, double>& truth);

std::map<std::string, double> read_truth_csv(const std::filesystem::path& path);
void write_truth_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const Eigen::VectorXd& values);

// Posterior predictive band of the cohort model over a set of draws.
struct PredictiveBand {
  std::vector<std::string> ids;
  Eigen::VectorXd mean, q025, q975;
};
PredictiveBand posterior_predictive(const calibrate::Posterior& posterior,
                                    const nathist::LifeTable& lt, int draws);

// Log-likelihood of the targets under the cohort simulator.
imis::LogLikelihood simulator_log_likelihood(const nathist::TargetSet& targets,
                                             const nathist::LifeTable& lt);

// Holds an exclusive lock file in the output directory for its lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Stage runner. Results stay in memory; missing inputs are loaded from the
// output directory on demand.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  std::filesystem::path artifact(const std::string& name) const { return cfg_.out_dir / name; }

  const nathist::TargetSet& gen_targets();
  const doe::Design& run_doe();
  const ann::AnnModel& train();
  const calibrate::Posterior& calibrate();
  const imis::ImisResult& run_imis();
  const ComparisonReport& compare();
  void write_plot_data();
  // All stages in order, then the manifest.
  void run_all();
  void write_manifest() const;

  const nathist::TargetSet& targets();
  const doe::Design& design();
  const ann::AnnModel& model();
  const std::optional<ann::TrainReport>& train_report() const { return train_report_; }
  const std::optional<calibrate::DiagnosticsReport>& diagnostics() const { return diagnostics_; }
  const calibrate::Posterior& baycann_posterior();
  const std::map<std::string, double>& wall_seconds() const { return wall_seconds_; }

 private:
  nlohmann::json metadata(const std::string& stage) const;
  template <typename Fn>
  auto timed(const std::string& stage, Fn&& fn);

  PipelineConfig cfg_;
  nathist::LifeTable life_table_;
  std::optional<nathist::TargetSet> targets_;
  std::optional<doe::Design> design_;
  std::optional<ann::AnnModel> model_;
  std::optional<ann::TrainReport> train_report_;
  std::optional<calibrate::Posterior> baycann_;
  std::optional<calibrate::DiagnosticsReport> diagnostics_;
  std::optional<imis::ImisResult> imis_;
  std::optional<calibrate::Posterior> imis_posterior_;
  std::optional<ComparisonReport> comparison_;
  std::map<std::string, double> wall_seconds_;
};

}  // namespace baycann::pipeline
