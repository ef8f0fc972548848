#include "baycann/ann.hpp"
#include "baycann/doe.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace baycann;
using namespace baycann::ann;
namespace fs = std::filesystem;

namespace {

AnnModel one_one_one() {
  AnnConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden_layers = {1};
  cfg.output_dim = 1;
  auto m = AnnModel::initialize(cfg, 1);
  auto& L = m.mutable_layers();
  L[0].weights(0, 0) = 1.0;
  L[0].bias[0] = 0.0;
  L[1].weights(0, 0) = 2.0;
  L[1].bias[0] = -1.0;
  return m;
}

AnnConfig small_config(int in, std::vector<int> hidden, int out) {
  AnnConfig cfg;
  cfg.input_dim = in;
  cfg.hidden_layers = std::move(hidden);
  cfg.output_dim = out;
  return cfg;
}

// Randomizes biases too, so the hidden units are not all centered at zero.
AnnModel random_net(const AnnConfig& cfg, std::uint64_t seed) {
  auto m = AnnModel::initialize(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x55);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& L : m.mutable_layers()) {
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = n(rng);
  }
  return m;
}

// Wraps a function of the scaled input as a design over [-1, 1]^d.
std::pair<doe::Design, doe::Design> synthetic(int d, int rows, std::uint64_t seed,
                                              const doe::Simulator& f, int outputs) {
  std::vector<doe::PriorBound> bounds;
  for (int i = 0; i < d; ++i) bounds.push_back({"x" + std::to_string(i), -1.0, 1.0});
  std::vector<std::string> names;
  for (int j = 0; j < outputs; ++j) names.push_back("y" + std::to_string(j));
  const auto design = doe::run_design(doe::PriorSpec(bounds), rows, seed, f, names);
  return doe::split(design, 0.8, seed + 1);
}

}  // namespace

TEST_SUITE("logistic") {
  TEST_CASE("fixed points") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  }
  TEST_CASE("symmetry and extremes") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    for (int k = 0; k < 1000; ++k) {
      const double z = u(rng);
      CHECK(logistic(-z) == doctest::Approx(1.0 - logistic(z)).epsilon(1e-12));
    }
    CHECK(logistic(1000.0) == 1.0);
    CHECK(logistic(-1000.0) == 0.0);
    CHECK(std::isfinite(logistic(-1e308)));
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero weights give zero output and jacobian") {
    auto m = AnnModel::initialize(AnnConfig{}, 3);
    for (auto& L : m.mutable_layers()) {
      L.weights.setZero();
      L.bias.setZero();
    }
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(9, -1, 1);
    CHECK(m.forward(x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.input_gradient(x).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("hand-computed 1-1-1 net") {
    const auto m = one_one_one();
    CHECK(m.forward(Eigen::VectorXd::Zero(1))[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m.input_gradient(Eigen::VectorXd::Zero(1))(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    // x = ln 3: 2 * 0.75 - 1
    CHECK(m.forward(Eigen::VectorXd::Constant(1, std::log(3.0)))[0] == doctest::Approx(0.5));
  }

  TEST_CASE("batched forward equals row-by-row") {
    const auto m = random_net(AnnConfig{}, 5);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(64, 9);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    const auto batch = m.forward_batch(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd row = m.forward(x.row(i).transpose());
      CHECK((batch.row(i).transpose() - row).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }

  TEST_CASE("shape mismatch") {
    const auto m = AnnModel::initialize(AnnConfig{}, 1);
    CHECK_THROWS_AS(m.forward(Eigen::VectorXd::Zero(8)), std::invalid_argument);
    CHECK_THROWS_AS(m.input_gradient(Eigen::VectorXd::Zero(10)), std::invalid_argument);
  }

  TEST_CASE("finite on the widened box") {
    const auto m = random_net(AnnConfig{}, 9);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
      Eigen::VectorXd x(9);
      for (auto& v : x) v = u(rng);
      CHECK(m.forward(x).allFinite());
    }
  }

  TEST_CASE("glorot bounds") {
    const auto m = AnnModel::initialize(AnnConfig{}, 4);
    for (const auto& L : m.layers()) {
      const double r = std::sqrt(6.0 / static_cast<double>(L.weights.rows() + L.weights.cols()));
      CHECK(L.weights.cwiseAbs().maxCoeff() <= r);
      CHECK(L.weights.cwiseAbs().maxCoeff() > 0.9 * r);
      CHECK(L.bias.cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_SUITE("jacobian") {
  TEST_CASE("matches central differences on 100 random nets") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 1e-5;
    for (int k = 0; k < 100; ++k) {
      const auto cfg = k % 2 == 0 ? AnnConfig{} : small_config(9, {17, 11}, 36);
      const auto m = random_net(cfg, 100 + static_cast<std::uint64_t>(k));
      Eigen::VectorXd x(9);
      for (auto& v : x) v = u(rng);
      const Eigen::MatrixXd J = m.input_gradient(x);
      Eigen::MatrixXd fd(36, 9);
      for (int j = 0; j < 9; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd.col(j) = (m.forward(xp) - m.forward(xm)) / (2.0 * h);
      }
      const double rel = (J - fd).norm() / std::max(fd.norm(), 1e-12);
      CHECK(rel <= 1e-5);

      // Pullback agrees with the explicit Jacobian.
      Eigen::VectorXd w(36);
      for (auto& v : w) v = u(rng);
      Eigen::VectorXd g;
      const Eigen::VectorXd out = m.forward_and_pullback(x, [&](const Eigen::VectorXd&) { return w; }, g);
      CHECK((out - m.forward(x)).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((g - J.transpose() * w).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_SUITE("r2") {
  TEST_CASE("exact and mean predictions") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    Eigen::MatrixXd y(50, 3);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);
    const auto exact = r2_scores(y, y);
    for (const auto& r : exact.r2) CHECK(*r == 1.0);
    CHECK(exact.aggregate_r2 == 1.0);
    const Eigen::MatrixXd mean = y.colwise().mean().replicate(50, 1);
    const auto flat = r2_scores(y, mean);
    for (const auto& r : flat.r2) CHECK(*r == doctest::Approx(0.0).epsilon(1e-12));
  }
  TEST_CASE("zero-variance column is missing") {
    Eigen::MatrixXd y(4, 2);
    y << 1, 1, 2, 1, 3, 1, 4, 1;
    const auto r = r2_scores(y, y);
    CHECK(r.r2[0].has_value());
    CHECK_FALSE(r.r2[1].has_value());
  }
}

TEST_SUITE("training") {
  TEST_CASE("linear data against a least-squares oracle") {
    Eigen::MatrixXd A(3, 4);
    A << 0.5, -0.3, 0.2, 0.1, -0.4, 0.6, 0.0, 0.3, 0.2, 0.2, -0.5, 0.4;
    const Eigen::Vector3d c(0.1, -0.2, 0.05);
    auto [train_set, valid_set] = synthetic(
        4, 500, 11, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x + c; }, 3);

    // Oracle: ordinary least squares on the scaled training data fits exactly.
    const Eigen::MatrixXd X = train_set.scaled_inputs();
    const Eigen::MatrixXd Y = train_set.scaled_outputs();
    Eigen::MatrixXd Xa(X.rows(), X.cols() + 1);
    Xa << X, Eigen::VectorXd::Ones(X.rows());
    const Eigen::MatrixXd beta = Xa.colPivHouseholderQr().solve(Y);
    Eigen::MatrixXd Xv(valid_set.rows(), X.cols() + 1);
    Xv << valid_set.scaled_inputs(), Eigen::VectorXd::Ones(valid_set.rows());
    const auto oracle = r2_scores(valid_set.scaled_outputs(), Xv * beta);
    REQUIRE(oracle.aggregate_r2 > 1.0 - 1e-12);

    const auto [model, report] = train(train_set, valid_set, small_config(4, {16, 16}, 3), {}, 5);
    const auto v = validate(model, valid_set);
    INFO("epochs " << report.epochs << " best " << report.best_epoch << " early " << report.early_stopped);
    CHECK(v.aggregate_r2 >= 0.999);
    CHECK(report.aggregate_r2 == doctest::Approx(v.aggregate_r2));
  }

  TEST_CASE("recovers a random teacher network") {
    const auto cfg = small_config(9, {20, 20}, 4);
    const auto teacher = random_net(cfg, 77);
    auto [train_set, valid_set] = synthetic(
        9, 2500, 21, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return teacher.forward(x); }, 4);
    const auto [model, report] = train(train_set, valid_set, cfg, {}, 8);
    CHECK(validate(model, valid_set).aggregate_r2 >= 0.999);
  }

  TEST_CASE("same seed gives identical weights") {
    auto [train_set, valid_set] = synthetic(
        2, 200, 3, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().sin(); }, 2);
    TrainOptions o;
    o.max_epochs = 30;
    const auto cfg = small_config(2, {8, 8}, 2);
    const auto a = train(train_set, valid_set, cfg, o, 4).first;
    const auto b = train(train_set, valid_set, cfg, o, 4).first;
    const auto c = train(train_set, valid_set, cfg, o, 5).first;
    for (std::size_t k = 0; k < a.layers().size(); ++k) {
      CHECK(a.layers()[k].weights == b.layers()[k].weights);
      CHECK(a.layers()[k].bias == b.layers()[k].bias);
    }
    CHECK(a.layers()[0].weights != c.layers()[0].weights);
  }

  TEST_CASE("early stopping keeps the best validation epoch") {
    // Few noisy rows so the validation loss turns upward.
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.3);
    auto [train_set, valid_set] = synthetic(
        1, 40, 13, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array() + noise(rng); }, 1);
    TrainOptions o;
    o.batch_size = 1000;  // full batch
    o.learning_rate = 1e-2;
    o.patience = 30;
    const auto [model, report] = train(train_set, valid_set, small_config(1, {50, 50}, 1), o, 1);
    CHECK(report.early_stopped);
    CHECK(report.epochs < o.max_epochs);
    const auto best = std::min_element(report.valid_loss.begin(), report.valid_loss.end());
    CHECK(best - report.valid_loss.begin() + 1 == report.best_epoch);
    // The returned weights are the best epoch's, not the last one's.
    const auto v = validate(model, valid_set);
    const Eigen::MatrixXd diff = v.predicted - v.observed;
    CHECK(diff.squaredNorm() / static_cast<double>(diff.size()) == doctest::Approx(*best).epsilon(1e-9));
  }

  TEST_CASE("divergence raises a training error") {
    auto [train_set, valid_set] = synthetic(
        2, 100, 3, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; }, 2);
    TrainOptions o;
    o.learning_rate = 1e300;
    o.max_epochs = 5;
    CHECK_THROWS_AS(train(train_set, valid_set, small_config(2, {4}, 2), o, 1), TrainingError);
  }

  TEST_CASE("width mismatch") {
    auto [train_set, valid_set] = synthetic(
        2, 50, 3, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; }, 2);
    CHECK_THROWS_AS(train(train_set, valid_set, AnnConfig{}, {}, 1), std::invalid_argument);
  }
}

TEST_SUITE("model file") {
  TEST_CASE("json round trip") {
    doe::ColumnScaler in, out;
    in.min = Eigen::VectorXd::Constant(9, -3.0);
    in.max = Eigen::VectorXd::Constant(9, 5.0);
    out.min = Eigen::VectorXd::Constant(36, 0.0);
    out.max = Eigen::VectorXd::Constant(36, 0.5);
    auto m = AnnModel::initialize(AnnConfig{}, 12, in, out);
    const auto path = fs::temp_directory_path() / "baycann_model_test.json";
    m.save(path);
    const auto back = AnnModel::load(path);
    const auto j = nlohmann::json::parse(std::ifstream(path));
    CHECK(j.at("version") == 1);
    for (std::size_t k = 0; k < m.layers().size(); ++k) {
      CHECK(back.layers()[k].weights == m.layers()[k].weights);
      CHECK(back.layers()[k].bias == m.layers()[k].bias);
    }
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(9, 1.0);
    CHECK(back.predict(theta) == m.predict(theta));
    fs::remove(path);
  }

  TEST_CASE("unknown version") {
    auto j = AnnModel::initialize(AnnConfig{}, 1).to_json();
    j["version"] = 99;
    CHECK_THROWS_AS(AnnModel::from_json(j), std::invalid_argument);
  }
}
