#include "baycann/ann.hpp"

#include "baycann/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace baycann::ann {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Logistic: return "logistic";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "logistic" || name == "sigmoid") return Activation::Logistic;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw std::invalid_argument("unsupported activation '" + name + "'");
}

namespace detail {

void activate(Activation a, Eigen::Ref<Eigen::VectorXd> z) {
  switch (a) {
    case Activation::Logistic:
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = logistic(z[i]);
      break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Linear: break;
  }
}

void activation_derivative(Activation a, const Eigen::Ref<const Eigen::VectorXd>& value,
                           Eigen::Ref<Eigen::VectorXd> out) {
  switch (a) {
    case Activation::Logistic: out = (value.array() * (1.0 - value.array())).matrix(); break;
    case Activation::Tanh: out = (1.0 - value.array().square()).matrix(); break;
    case Activation::Linear: out.setOnes(); break;
  }
}

}  // namespace detail

namespace {

void activate_matrix(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Logistic: z = z.unaryExpr([](double v) { return logistic(v); }); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Linear: break;
  }
}

// In-place multiply of `delta` by the activation derivative given activations.
void scale_by_derivative(Activation a, const Eigen::MatrixXd& value, Eigen::MatrixXd& delta) {
  switch (a) {
    case Activation::Logistic: delta.array() *= value.array() * (1.0 - value.array()); break;
    case Activation::Tanh: delta.array() *= 1.0 - value.array().square(); break;
    case Activation::Linear: break;
  }
}

std::vector<double> to_vec(const Eigen::MatrixXd& m) {
  // Row-major flattening for the model file.
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

Eigen::MatrixXd from_vec(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw std::invalid_argument("model file array has wrong length");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  }
  return m;
}

constexpr int kModelFileVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Config

void AnnConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("layer widths must be >= 1");
  for (int w : hidden_layers) {
    if (w < 1) throw std::invalid_argument("layer widths must be >= 1");
  }
}

nlohmann::json AnnConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"hidden_layers", hidden_layers},
          {"output_dim", output_dim},
          {"hidden_activation", activation_name(hidden_activation)},
          {"output_activation", activation_name(output_activation)}};
}

AnnConfig AnnConfig::from_json(const nlohmann::json& j) {
  AnnConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.hidden_activation = parse_activation(j.value("hidden_activation", std::string("logistic")));
  c.output_activation = parse_activation(j.value("output_activation", std::string("linear")));
  c.validate();
  return c;
}

nlohmann::json TrainOptions::to_json() const {
  return {{"batch_size", batch_size},       {"learning_rate", learning_rate},
          {"beta1", beta1},                 {"beta2", beta2},
          {"epsilon", epsilon},             {"max_epochs", max_epochs},
          {"patience", patience},           {"lr_decay_patience", lr_decay_patience},
          {"lr_decay", lr_decay},           {"min_learning_rate", min_learning_rate}};
}

TrainOptions TrainOptions::from_json(const nlohmann::json& j) {
  TrainOptions o;
  o.batch_size = j.value("batch_size", o.batch_size);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.epsilon = j.value("epsilon", o.epsilon);
  o.max_epochs = j.value("max_epochs", o.max_epochs);
  o.patience = j.value("patience", o.patience);
  o.lr_decay_patience = j.value("lr_decay_patience", o.lr_decay_patience);
  o.lr_decay = j.value("lr_decay", o.lr_decay);
  o.min_learning_rate = j.value("min_learning_rate", o.min_learning_rate);
  if (o.batch_size < 1 || o.max_epochs < 1 || o.patience < 1 || !(o.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid training options");
  }
  return o;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json r2_json = nlohmann::json::array();
  for (const auto& v : r2) r2_json.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"train_loss", train_loss}, {"valid_loss", valid_loss}, {"r2", r2_json},
          {"aggregate_r2", aggregate_r2}, {"epochs", epochs}, {"best_epoch", best_epoch},
          {"early_stopped", early_stopped}};
}

// ---------------------------------------------------------------------------
// Model

AnnModel::AnnModel(AnnConfig config, std::vector<DenseLayer> layers,
                   doe::ColumnScaler input_scaler, doe::ColumnScaler output_scaler)
    : config_(std::move(config)),
      layers_(std::move(layers)),
      input_scaler_(std::move(input_scaler)),
      output_scaler_(std::move(output_scaler)) {
  check_shapes();
}

void AnnModel::check_shapes() const {
  config_.validate();
  std::vector<int> widths{config_.input_dim};
  widths.insert(widths.end(), config_.hidden_layers.begin(), config_.hidden_layers.end());
  widths.push_back(config_.output_dim);
  if (layers_.size() + 1 != widths.size()) throw std::invalid_argument("layer count mismatch");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].weights.rows() != widths[k + 1] || layers_[k].weights.cols() != widths[k] ||
        layers_[k].bias.size() != widths[k + 1]) {
      throw std::invalid_argument("layer " + std::to_string(k) + " has wrong shape");
    }
  }
  if (input_scaler_.size() != 0 && input_scaler_.size() != config_.input_dim) {
    throw std::invalid_argument("input scaler width mismatch");
  }
  if (output_scaler_.size() != 0 && output_scaler_.size() != config_.output_dim) {
    throw std::invalid_argument("output scaler width mismatch");
  }
}

AnnModel AnnModel::initialize(const AnnConfig& config, std::uint64_t seed,
                              doe::ColumnScaler input_scaler, doe::ColumnScaler output_scaler) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<int> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  widths.push_back(config.output_dim);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[k] + widths[k + 1]));
    std::uniform_real_distribution<double> unif(-limit, limit);
    DenseLayer L;
    L.weights.resize(widths[k + 1], widths[k]);
    for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < L.weights.cols(); ++j) L.weights(i, j) = unif(rng);
    }
    L.bias = Eigen::VectorXd::Zero(widths[k + 1]);
    L.activation = (k + 2 == widths.size()) ? config.output_activation : config.hidden_activation;
    layers.push_back(std::move(L));
  }
  return AnnModel(config, std::move(layers), std::move(input_scaler), std::move(output_scaler));
}

Eigen::VectorXd AnnModel::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != config_.input_dim) throw std::invalid_argument("forward: input size mismatch");
  Eigen::VectorXd a = x;
  for (const auto& L : layers_) {
    Eigen::VectorXd z = L.weights * a + L.bias;
    detail::activate(L.activation, z);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd AnnModel::forward_batch(const Eigen::MatrixXd& x) const {
  if (x.cols() != config_.input_dim) throw std::invalid_argument("forward: input size mismatch");
  Eigen::MatrixXd a = x.transpose();
  for (const auto& L : layers_) {
    Eigen::MatrixXd z = L.weights * a;
    z.colwise() += L.bias;
    activate_matrix(L.activation, z);
    a = std::move(z);
  }
  return a.transpose();
}

Eigen::MatrixXd AnnModel::input_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != config_.input_dim) throw std::invalid_argument("gradient: input size mismatch");
  // Forward-mode accumulation: J_k = diag(f'_k) W_k J_{k-1}.
  Eigen::VectorXd a = x;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(config_.input_dim, config_.input_dim);
  for (const auto& L : layers_) {
    Eigen::VectorXd z = L.weights * a + L.bias;
    detail::activate(L.activation, z);
    Eigen::VectorXd d(z.size());
    detail::activation_derivative(L.activation, z, d);
    jac = d.asDiagonal() * (L.weights * jac);
    a = std::move(z);
  }
  return jac;
}

Eigen::VectorXd AnnModel::predict(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  return output_scaler_.unscale_vector(forward(input_scaler_.scale_vector(theta)));
}

bool AnnModel::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& L) {
    return L.weights.allFinite() && L.bias.allFinite();
  });
}

nlohmann::json AnnModel::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : layers_) {
    layers.push_back({{"rows", L.weights.rows()},
                      {"cols", L.weights.cols()},
                      {"activation", activation_name(L.activation)},
                      {"weights", to_vec(L.weights)},
                      {"bias", to_vec(L.bias)}});
  }
  return {{"format", "baycann-ann"},
          {"version", kModelFileVersion},
          {"config", config_.to_json()},
          {"input_scaler", input_scaler_.to_json()},
          {"output_scaler", output_scaler_.to_json()},
          {"layers", layers}};
}

AnnModel AnnModel::from_json(const nlohmann::json& j) {
  const int version = j.value("version", 0);
  if (version < 1 || version > kModelFileVersion) {
    throw std::invalid_argument("unsupported model file version " + std::to_string(version));
  }
  const auto config = AnnConfig::from_json(j.at("config"));
  std::vector<DenseLayer> layers;
  for (const auto& lj : j.at("layers")) {
    DenseLayer L;
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    L.weights = from_vec(lj.at("weights").get<std::vector<double>>(), rows, cols);
    L.bias = from_vec(lj.at("bias").get<std::vector<double>>(), rows, 1);
    L.activation = parse_activation(lj.at("activation").get<std::string>());
    layers.push_back(std::move(L));
  }
  return AnnModel(config, std::move(layers), doe::ColumnScaler::from_json(j.at("input_scaler")),
                  doe::ColumnScaler::from_json(j.at("output_scaler")));
}

void AnnModel::save(const std::filesystem::path& path) const {
  io::write_text(path, to_json().dump() + "\n");
}

AnnModel AnnModel::load(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(io::read_text(path)));
}

// ---------------------------------------------------------------------------
// Validation

ValidationResult r2_scores(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted) {
  if (observed.rows() != predicted.rows() || observed.cols() != predicted.cols()) {
    throw std::invalid_argument("r2_scores: shape mismatch");
  }
  if (observed.rows() < 1) throw std::invalid_argument("r2_scores: no rows");
  ValidationResult res;
  res.observed = observed;
  res.predicted = predicted;
  double ss_res_total = 0.0, ss_tot_total = 0.0;
  for (Eigen::Index j = 0; j < observed.cols(); ++j) {
    const double mean = observed.col(j).mean();
    const double ss_tot = (observed.col(j).array() - mean).square().sum();
    const double ss_res = (observed.col(j) - predicted.col(j)).squaredNorm();
    ss_res_total += ss_res;
    ss_tot_total += ss_tot;
    if (ss_tot > 0.0) {
      res.r2.emplace_back(1.0 - ss_res / ss_tot);
    } else {
      res.r2.emplace_back(std::nullopt);
    }
  }
  res.aggregate_r2 = ss_tot_total > 0.0 ? 1.0 - ss_res_total / ss_tot_total : 0.0;
  return res;
}

ValidationResult validate(const AnnModel& model, const doe::Design& valid) {
  if (valid.rows() < 1) throw std::invalid_argument("validation split is empty");
  const Eigen::MatrixXd x = model.input_scaler().scale(valid.inputs);
  const Eigen::MatrixXd y = model.output_scaler().scale(valid.outputs);
  return r2_scores(y, model.forward_batch(x));
}

void ValidationResult::write_scatter_csv(const std::filesystem::path& path,
                                         const std::vector<std::string>& output_ids) const {
  std::ostringstream out;
  out << "output_id,observed_scaled,predicted_scaled\n";
  for (Eigen::Index j = 0; j < observed.cols(); ++j) {
    const auto& id = output_ids.at(static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < observed.rows(); ++i) {
      out << id << ',' << io::format_double(observed(i, j)) << ','
          << io::format_double(predicted(i, j)) << '\n';
    }
  }
  io::write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;

  explicit AdamState(const std::vector<DenseLayer>& layers) {
    for (const auto& L : layers) {
      mw.push_back(Eigen::MatrixXd::Zero(L.weights.rows(), L.weights.cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXd::Zero(L.bias.size()));
      vb.push_back(mb.back());
    }
  }
};

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

std::pair<AnnModel, TrainReport> train(const doe::Design& train_set, const doe::Design& valid,
                                       const AnnConfig& config, const TrainOptions& opts,
                                       std::uint64_t seed) {
  config.validate();
  if (train_set.rows() < 1) throw std::invalid_argument("training split is empty");
  if (valid.rows() < 1) throw std::invalid_argument("validation split is empty");
  if (train_set.inputs.cols() != config.input_dim || train_set.outputs.cols() != config.output_dim) {
    throw std::invalid_argument("design width does not match network config");
  }

  const auto& in_s = train_set.input_scaler;
  const auto& out_s = train_set.output_scaler;
  const Eigen::MatrixXd x_train = in_s.scale(train_set.inputs).transpose();   // in x n
  const Eigen::MatrixXd y_train = out_s.scale(train_set.outputs).transpose(); // out x n
  const Eigen::MatrixXd x_valid = in_s.scale(valid.inputs);
  const Eigen::MatrixXd y_valid = out_s.scale(valid.outputs);

  AnnModel model = AnnModel::initialize(config, seed, in_s, out_s);
  auto& layers = model.mutable_layers();
  const std::size_t depth = layers.size();
  AdamState adam(layers);
  std::vector<DenseLayer> best = layers;

  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  const Eigen::Index n = x_train.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  std::vector<Eigen::MatrixXd> acts(depth + 1);
  Eigen::MatrixXd y_batch, delta;
  std::vector<Eigen::MatrixXd> grad_w(depth);
  std::vector<Eigen::VectorXd> grad_b(depth);

  TrainReport report;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_decay = 0;
  double lr = opts.learning_rate;
  long step = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(opts.batch_size, n - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + bs);
      acts[0] = x_train(Eigen::all, idx);
      y_batch = y_train(Eigen::all, idx);
      for (std::size_t k = 0; k < depth; ++k) {
        acts[k + 1].noalias() = layers[k].weights * acts[k];
        acts[k + 1].colwise() += layers[k].bias;
        activate_matrix(layers[k].activation, acts[k + 1]);
      }
      delta = acts[depth] - y_batch;
      const double batch_loss = delta.squaredNorm() / static_cast<double>(delta.size());
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step) + " (learning rate " +
                            io::format_double(lr) + ")");
      }
      loss_sum += batch_loss * static_cast<double>(bs);
      seen += bs;
      delta *= 2.0 / static_cast<double>(delta.size());
      for (std::size_t k = depth; k-- > 0;) {
        scale_by_derivative(layers[k].activation, acts[k + 1], delta);
        grad_w[k].noalias() = delta * acts[k].transpose();
        grad_b[k] = delta.rowwise().sum();
        if (k > 0) {
          Eigen::MatrixXd prev = layers[k].weights.transpose() * delta;
          delta = std::move(prev);
        }
      }
      ++step;
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
      const double step_size = lr * std::sqrt(c2) / c1;
      for (std::size_t k = 0; k < depth; ++k) {
        adam.mw[k] = opts.beta1 * adam.mw[k] + (1.0 - opts.beta1) * grad_w[k];
        adam.vw[k] = opts.beta2 * adam.vw[k] + (1.0 - opts.beta2) * grad_w[k].cwiseAbs2();
        adam.mb[k] = opts.beta1 * adam.mb[k] + (1.0 - opts.beta1) * grad_b[k];
        adam.vb[k] = opts.beta2 * adam.vb[k] + (1.0 - opts.beta2) * grad_b[k].cwiseAbs2();
        layers[k].weights.array() -=
            step_size * adam.mw[k].array() / (adam.vw[k].array().sqrt() + opts.epsilon);
        layers[k].bias.array() -=
            step_size * adam.mb[k].array() / (adam.vb[k].array().sqrt() + opts.epsilon);
      }
    }
    const double train_loss = loss_sum / static_cast<double>(seen);
    const double valid_loss = mse(model.forward_batch(x_valid), y_valid);
    if (!std::isfinite(valid_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.train_loss.push_back(train_loss);
    report.valid_loss.push_back(valid_loss);
    report.epochs = epoch + 1;

    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = layers;
      report.best_epoch = epoch + 1;
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      ++since_decay;
    }
    if (since_best >= opts.patience) {
      report.early_stopped = true;
      break;
    }
    if (opts.lr_decay_patience > 0 && since_decay >= opts.lr_decay_patience &&
        lr > opts.min_learning_rate) {
      lr = std::max(opts.min_learning_rate, lr * opts.lr_decay);
      since_decay = 0;
    }
  }

  layers = best;
  const auto val = validate(model, valid);
  report.r2 = val.r2;
  report.aggregate_r2 = val.aggregate_r2;
  return {std::move(model), std::move(report)};
}

}  // namespace baycann::ann
