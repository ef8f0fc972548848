#pragma once

#include "baycann/nathist.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace baycann::doe {

struct PriorBound {
  std::string name;
  double lower;
  double upper;
};

// Independent uniform priors on a box.
class PriorSpec {
 public:
  explicit PriorSpec(std::vector<PriorBound> bounds);

  // Prior ranges of the nine calibrated natural-history parameters.
  static PriorSpec crc();

  Eigen::Index size() const { return static_cast<Eigen::Index>(bounds_.size()); }
  const std::vector<PriorBound>& bounds() const { return bounds_; }
  std::vector<std::string> names() const;
  Eigen::VectorXd lower() const;
  Eigen::VectorXd upper() const;
  Eigen::VectorXd range() const { return upper() - lower(); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  // log of 1 / prod(range) inside the box, -inf outside.
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

 private:
  std::vector<PriorBound> bounds_;
};

// Jittered Latin hypercube: n rows, one point per equal-probability stratum
// in every column, columns permuted independently.
Eigen::MatrixXd lhs_sample(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed);

// Per-column affine map of [min, max] onto [-1, 1].
struct ColumnScaler {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  static ColumnScaler fit(const Eigen::MatrixXd& data);

  Eigen::Index size() const { return min.size(); }
  // d(scaled)/d(natural) per column.
  Eigen::VectorXd slope() const;

  Eigen::MatrixXd scale(const Eigen::MatrixXd& data) const;
  Eigen::MatrixXd unscale(const Eigen::MatrixXd& scaled) const;
  Eigen::VectorXd scale_vector(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd unscale_vector(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  nlohmann::json to_json() const;
  static ColumnScaler from_json(const nlohmann::json& j);
};

struct DroppedRow {
  Eigen::Index row;
  std::string reason;
};

struct Design {
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  Eigen::MatrixXd inputs;   // natural units
  Eigen::MatrixXd outputs;  // natural units
  ColumnScaler input_scaler;
  ColumnScaler output_scaler;
  std::uint64_t seed = 0;
  std::vector<DroppedRow> dropped;

  Eigen::Index rows() const { return inputs.rows(); }
  Eigen::MatrixXd scaled_inputs() const { return input_scaler.scale(inputs); }
  Eigen::MatrixXd scaled_outputs() const { return output_scaler.scale(outputs); }

  // Design CSV plus a JSON sidecar (scalers, seed, dropped rows, metadata).
  void write(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
             const nlohmann::json& extra = {}) const;
  static Design read(const std::filesystem::path& csv_path, const std::filesystem::path& json_path);
};

// Maps a parameter row (natural units) to a simulator output row. May throw.
using Simulator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Cohort model with the fixed parameters taken from `base`.
Simulator crc_simulator(const nathist::LifeTable& lt,
                        nathist::NatHistParams base = nathist::NatHistParams::base_case());

// Runs the simulator on every row of an LHS design. Rows whose evaluation
// throws or yields non-finite values are dropped and logged.
Design run_design(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed,
                  const Simulator& sim, std::vector<std::string> output_names);

Design run_design(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed,
                  const nathist::LifeTable& lt);

// Random row partition; both parts share scalers fitted on the training part.
std::pair<Design, Design> split(const Design& design, double fraction, std::uint64_t seed);

}  // namespace baycann::doe
