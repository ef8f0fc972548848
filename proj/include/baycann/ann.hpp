#pragma once

// Feedforward network metamodel with logistic hidden units. Inputs and
// outputs live in the [-1, 1] scaled space of the design it was trained on.

#include "baycann/doe.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace baycann::ann {

enum class Activation { Logistic, Tanh, Linear };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

// 1 / (1 + exp(-z)), evaluated without overflow for large |z|.
double logistic(double z);

struct AnnConfig {
  int input_dim = 9;
  std::vector<int> hidden_layers{100, 100};
  int output_dim = 36;
  Activation hidden_activation = Activation::Logistic;
  Activation output_activation = Activation::Linear;

  void validate() const;
  nlohmann::json to_json() const;
  static AnnConfig from_json(const nlohmann::json& j);
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation;
};

class AnnModel {
 public:
  AnnModel() = default;
  AnnModel(AnnConfig config, std::vector<DenseLayer> layers, doe::ColumnScaler input_scaler,
           doe::ColumnScaler output_scaler);

  // Glorot-uniform weights, zero biases.
  static AnnModel initialize(const AnnConfig& config, std::uint64_t seed,
                             doe::ColumnScaler input_scaler = {},
                             doe::ColumnScaler output_scaler = {});

  const AnnConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  const doe::ColumnScaler& input_scaler() const { return input_scaler_; }
  const doe::ColumnScaler& output_scaler() const { return output_scaler_; }

  // Scaled input -> scaled output.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Rows are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  // d(output)/d(input) at x, output_dim x input_dim.
  Eigen::MatrixXd input_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Returns forward(x) and writes cotangent^T * J(x) into `grad`, without
  // forming the Jacobian. `cotangent` is called with the output and must
  // return d(loss)/d(output).
  template <typename CotangentFn>
  Eigen::VectorXd forward_and_pullback(const Eigen::Ref<const Eigen::VectorXd>& x,
                                       CotangentFn&& cotangent, Eigen::VectorXd& grad) const;

  // Natural-units wrapper: scale -> forward -> unscale.
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  bool all_finite() const;

  nlohmann::json to_json() const;
  static AnnModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static AnnModel load(const std::filesystem::path& path);

 private:
  void check_shapes() const;

  AnnConfig config_;
  std::vector<DenseLayer> layers_;
  doe::ColumnScaler input_scaler_;
  doe::ColumnScaler output_scaler_;
};

struct TrainOptions {
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 2000;
  int patience = 50;
  // Reduce-on-plateau: multiply the step by `lr_decay` after this many epochs
  // without a new best validation loss. 0 disables.
  int lr_decay_patience = 0;
  double lr_decay = 0.5;
  double min_learning_rate = 1e-5;

  nlohmann::json to_json() const;
  static TrainOptions from_json(const nlohmann::json& j);
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::vector<std::optional<double>> r2;
  double aggregate_r2 = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  bool early_stopped = false;

  nlohmann::json to_json() const;
};

// Raised when the loss becomes non-finite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mini-batch Adam on mean squared error in scaled space, keeping the weights
// of the best validation epoch. Uses train's scalers for both splits.
std::pair<AnnModel, TrainReport> train(const doe::Design& train, const doe::Design& valid,
                                       const AnnConfig& config, const TrainOptions& opts,
                                       std::uint64_t seed);

struct ValidationResult {
  std::vector<std::optional<double>> r2;  // nullopt for zero-variance columns
  double aggregate_r2 = 0.0;              // pooled over all outputs
  Eigen::MatrixXd observed;               // scaled
  Eigen::MatrixXd predicted;              // scaled

  void write_scatter_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& output_ids) const;
};

ValidationResult r2_scores(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted);

ValidationResult validate(const AnnModel& model, const doe::Design& valid);

// ---------------------------------------------------------------------------

namespace detail {
void activate(Activation a, Eigen::Ref<Eigen::VectorXd> z);
// Derivative expressed through the activation value.
void activation_derivative(Activation a, const Eigen::Ref<const Eigen::VectorXd>& value,
                           Eigen::Ref<Eigen::VectorXd> out);
}  // namespace detail

template <typename CotangentFn>
Eigen::VectorXd AnnModel::forward_and_pullback(const Eigen::Ref<const Eigen::VectorXd>& x,
                                               CotangentFn&& cotangent,
                                               Eigen::VectorXd& grad) const {
  thread_local std::vector<Eigen::VectorXd> acts;
  acts.resize(layers_.size() + 1);
  acts[0] = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& L = layers_[k];
    acts[k + 1].noalias() = L.weights * acts[k];
    acts[k + 1] += L.bias;
    detail::activate(L.activation, acts[k + 1]);
  }
  Eigen::VectorXd delta = cotangent(static_cast<const Eigen::VectorXd&>(acts.back()));
  Eigen::VectorXd deriv;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& L = layers_[k];
    deriv.resize(acts[k + 1].size());
    detail::activation_derivative(L.activation, acts[k + 1], deriv);
    delta.array() *= deriv.array();
    delta = L.weights.transpose() * delta;
  }
  grad = std::move(delta);
  return acts.back();
}

}  // namespace baycann::ann
