#include "baycann/imis.hpp"

#include "baycann/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace baycann::imis {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kRidge = 1e-8;

struct FittedComponent {
  MixtureComponent spec;
  Eigen::LLT<Eigen::MatrixXd> chol;
  double log_norm = 0.0;  // -0.5 log det(2 pi Sigma)

  double density(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd r = chol.matrixL().solve(z - spec.mean);
    return std::exp(log_norm - 0.5 * r.squaredNorm());
  }
};

bool inside_unit_cube(const Eigen::VectorXd& z) {
  return (z.array() >= 0.0).all() && (z.array() <= 1.0).all();
}

}  // namespace

void ImisConfig::validate() const {
  if (n_initial < 1 || batch < 1 || max_iterations < 0 || resample_size < 1) {
    throw std::invalid_argument("IMIS counts must be >= 1");
  }
  if (batch > n_initial) throw std::invalid_argument("IMIS batch size must not exceed n_initial");
}

nlohmann::json ImisConfig::to_json() const {
  return {{"n_initial", n_initial},
          {"batch", batch},
          {"max_iterations", max_iterations},
          {"resample_size", resample_size},
          {"seed", seed}};
}

ImisConfig ImisConfig::from_json(const nlohmann::json& j) {
  ImisConfig c;
  c.n_initial = j.value("n_initial", c.n_initial);
  c.batch = j.value("batch", c.batch);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.resample_size = j.value("resample_size", c.resample_size);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double effective_unique_fraction(std::span<const double> weights, long resample_size) {
  if (resample_size < 1) throw std::invalid_argument("resample size must be >= 1");
  const double j = static_cast<double>(resample_size);
  double expected = 0.0;
  for (double w : weights) {
    if (w <= 0.0) continue;
    expected += (w >= 1.0) ? 1.0 : -std::expm1(j * std::log1p(-w));
  }
  return expected / j;
}

ImisResult imis_run(const LogLikelihood& log_likelihood, const doe::PriorSpec& priors,
                    const ImisConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index d = priors.size();
  const Eigen::VectorXd lower = priors.lower();
  const Eigen::VectorXd range = priors.range();
  auto to_natural = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return (lower.array() + range.array() * z.array()).matrix();
  };

  ImisResult res;
  std::vector<Eigen::VectorXd> z;       // unit-cube points
  std::vector<double> log_lik;          // -inf outside the box
  std::vector<double> sum_phi;          // sum of component densities at each point
  std::vector<FittedComponent> comps;
  std::vector<double> weights;

  auto evaluate = [&](const Eigen::VectorXd& point) {
    if (!inside_unit_cube(point)) return -std::numeric_limits<double>::infinity();
    ++res.evaluations;
    const double ll = log_likelihood(to_natural(point));
    return std::isnan(ll) ? -std::numeric_limits<double>::infinity() : ll;
  };

  // Stage 0: prior sample.
  {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < cfg.n_initial; ++i) {
      Eigen::VectorXd p(d);
      for (Eigen::Index k = 0; k < d; ++k) p[k] = unif(rng);
      log_lik.push_back(evaluate(p));
      sum_phi.push_back(0.0);
      z.push_back(std::move(p));
    }
  }

  auto reweight = [&] {
    const double n_total = static_cast<double>(z.size());
    const double prior_share = static_cast<double>(cfg.n_initial) / n_total;
    const double comp_share = static_cast<double>(cfg.batch) / n_total;
    std::vector<double> log_w(z.size());
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!std::isfinite(log_lik[i])) {
        log_w[i] = -std::numeric_limits<double>::infinity();
        continue;
      }
      // Unit-cube prior density is 1 inside the box.
      const double q = prior_share + comp_share * sum_phi[i];
      log_w[i] = log_lik[i] - std::log(q);
      max_lw = std::max(max_lw, log_w[i]);
    }
    weights.assign(z.size(), 0.0);
    if (!std::isfinite(max_lw)) {
      throw std::runtime_error("IMIS: likelihood is zero at every sampled point");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      weights[i] = std::isfinite(log_w[i]) ? std::exp(log_w[i] - max_lw) : 0.0;
      total += weights[i];
    }
    for (double& w : weights) w /= total;
  };

  auto record = [&](int iteration) {
    res.unique_fraction = effective_unique_fraction(weights, cfg.resample_size);
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    res.ess = 1.0 / sq;
    if (!cfg.record_history) return;
    IterationRecord rec;
    rec.iteration = iteration;
    rec.points = static_cast<long>(z.size());
    rec.unique_fraction = res.unique_fraction;
    rec.ess = res.ess;
    rec.mean = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < z.size(); ++i) rec.mean += weights[i] * to_natural(z[i]);
    rec.covariance = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const Eigen::VectorXd r = to_natural(z[i]) - rec.mean;
      rec.covariance += weights[i] * r * r.transpose();
    }
    res.history.push_back(std::move(rec));
  };

  reweight();
  record(0);
  const double stop_threshold = 1.0 - std::exp(-1.0);

  for (int it = 1; it <= cfg.max_iterations && res.unique_fraction < stop_threshold; ++it) {
    const double n_total = static_cast<double>(z.size());
    const auto center_idx = static_cast<std::size_t>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());
    const Eigen::VectorXd center = z[center_idx];

    // B nearest neighbours in prior-range-scaled distance (Euclidean in the cube).
    std::vector<std::pair<double, std::size_t>> dist(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dist[i] = {(z[i] - center).squaredNorm(), i};
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), z.size());
    std::nth_element(dist.begin(), dist.begin() + static_cast<long>(b) - 1, dist.end());
    std::sort(dist.begin(), dist.begin() + static_cast<long>(b));

    double wsum = 0.0;
    for (std::size_t k = 0; k < b; ++k) wsum += 0.5 * (weights[dist[k].second] + 1.0 / n_total);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    double wsq = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
      const auto i = dist[k].second;
      const double w = 0.5 * (weights[i] + 1.0 / n_total) / wsum;
      const Eigen::VectorXd r = z[i] - center;
      cov += w * r * r.transpose();
      wsq += w * w;
    }
    // Unbiased weighted covariance.
    if (wsq < 1.0) cov /= 1.0 - wsq;

    FittedComponent comp;
    comp.spec.mean = center;
    comp.chol.compute(cov);
    double ridge = kRidge;
    while (comp.chol.info() != Eigen::Success ||
           comp.chol.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
      if (ridge == kRidge) {
        res.warnings.push_back("iteration " + std::to_string(it) +
                               ": singular neighbour covariance, ridge added");
      }
      cov += ridge * Eigen::MatrixXd::Identity(d, d);
      comp.chol.compute(cov);
      ridge *= 10.0;
      if (ridge > 1.0) throw std::runtime_error("IMIS: covariance regularization failed");
    }
    comp.spec.covariance = cov;
    const Eigen::VectorXd diag = comp.chol.matrixL().toDenseMatrix().diagonal();
    comp.log_norm = -0.5 * static_cast<double>(d) * kLog2Pi - diag.array().log().sum();

    // Existing points gain this component's density.
    for (std::size_t i = 0; i < z.size(); ++i) sum_phi[i] += comp.density(z[i]);
    comps.push_back(std::move(comp));

    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& fresh = comps.back();
    for (int k = 0; k < cfg.batch; ++k) {
      Eigen::VectorXd e(d);
      for (Eigen::Index j = 0; j < d; ++j) e[j] = normal(rng);
      Eigen::VectorXd p = fresh.spec.mean + fresh.chol.matrixL() * e;
      double s = 0.0;
      for (const auto& c : comps) s += c.density(p);
      log_lik.push_back(evaluate(p));
      sum_phi.push_back(s);
      z.push_back(std::move(p));
    }
    reweight();
    res.iterations = it;
    record(it);
  }
  res.converged = res.unique_fraction >= stop_threshold;
  if (!res.converged) {
    res.warnings.push_back("stopped at max iterations with unique fraction " +
                           std::to_string(res.unique_fraction));
  }

  // Resample.
  std::mt19937_64 rng(derive_seed(cfg.seed, 0xfeedULL));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  auto& post = res.posterior;
  post.method = "imis";
  post.names = priors.names();
  post.draws.resize(cfg.resample_size, d);
  for (int r = 0; r < cfg.resample_size; ++r) {
    post.draws.row(r) = to_natural(z[pick(rng)]).transpose();
    post.chain.push_back(1);
    post.iter.push_back(r + 1);
  }
  post.model_evaluations = res.evaluations;

  const double n_total = static_cast<double>(z.size());
  res.points.resize(static_cast<Eigen::Index>(z.size()), d);
  res.weights.resize(static_cast<Eigen::Index>(z.size()));
  res.mixture_density.resize(static_cast<Eigen::Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    res.points.row(row) = to_natural(z[i]).transpose();
    res.weights[row] = weights[i];
    res.mixture_density[row] = static_cast<double>(cfg.n_initial) / n_total *
                                   (inside_unit_cube(z[i]) ? 1.0 : 0.0) +
                               static_cast<double>(cfg.batch) / n_total * sum_phi[i];
  }
  for (const auto& c : comps) res.components.push_back(c.spec);
  post.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

nlohmann::json ImisResult::summary_json() const {
  auto j = posterior.summary_json();
  j["iterations"] = iterations;
  j["simulator_evaluations"] = evaluations;
  j["converged"] = converged;
  j["unique_fraction"] = unique_fraction;
  j["importance_ess"] = ess;
  j["components"] = components.size();
  j["warnings"] = warnings;
  return j;
}

}  // namespace baycann::imis
