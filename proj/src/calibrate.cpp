#include "baycann/calibrate.hpp"

#include "baycann/io.hpp"
#include "baycann/rng.hpp"
#include "baycann/stats.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace baycann::calibrate {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

// ---------------------------------------------------------------------------
// Transform

BoxTransform::BoxTransform(const doe::PriorSpec& priors)
    : lower_(priors.lower()), range_(priors.range()) {}

Eigen::VectorXd BoxTransform::transform(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != size()) throw std::invalid_argument("transform: size mismatch");
  Eigen::VectorXd u(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const double t = (theta[i] - lower_[i]) / range_[i];
    if (!(t > 0.0 && t < 1.0)) {
      throw std::domain_error("transform: parameter " + std::to_string(i) +
                              " is not strictly inside its bounds");
    }
    u[i] = std::log(t) - std::log1p(-t);
  }
  return u;
}

Eigen::VectorXd BoxTransform::untransform(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (u.size() != size()) throw std::invalid_argument("untransform: size mismatch");
  Eigen::VectorXd theta(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    theta[i] = lower_[i] + range_[i] * ann::logistic(u[i]);
  }
  return theta;
}

double BoxTransform::log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) {
    s += std::log(range_[i]) - softplus(-u[i]) - softplus(u[i]);
  }
  return s;
}

Eigen::VectorXd BoxTransform::log_jacobian_gradient(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  Eigen::VectorXd g(size());
  for (Eigen::Index i = 0; i < size(); ++i) g[i] = 1.0 - 2.0 * ann::logistic(u[i]);
  return g;
}

Eigen::VectorXd BoxTransform::derivative(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  Eigen::VectorXd d(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const double f = ann::logistic(u[i]);
    d[i] = range_[i] * f * (1.0 - f);
  }
  return d;
}

std::vector<std::string> DifferentiableDensity::names() const {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < dim(); ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

// ---------------------------------------------------------------------------
// Densities

double normal_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y,
                             const Eigen::Ref<const Eigen::VectorXd>& sigma,
                             const Eigen::Ref<const Eigen::VectorXd>& phi) {
  const auto r = ((y - phi).array() / sigma.array());
  return -(sigma.array().log().sum() + kHalfLog2Pi * static_cast<double>(y.size()) +
           0.5 * r.square().sum());
}

LogPosterior::LogPosterior(const ann::AnnModel& model, const nathist::TargetSet& targets,
                           doe::PriorSpec priors)
    : model_(&model),
      y_(targets.means()),
      sigma_(targets.ses()),
      priors_(std::move(priors)),
      transform_(priors_),
      log_prior_(-priors_.range().array().log().sum()) {
  if (y_.size() != model.config().output_dim) {
    throw std::invalid_argument("target count does not match surrogate outputs");
  }
  if (priors_.size() != model.config().input_dim) {
    throw std::invalid_argument("prior dimension does not match surrogate inputs");
  }
  if ((sigma_.array() <= 0.0).any()) throw std::invalid_argument("target se must be > 0");
}

double LogPosterior::likelihood_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                             Eigen::VectorXd* grad_theta) const {
  const auto& in_s = model_->input_scaler();
  const auto& out_s = model_->output_scaler();
  const Eigen::VectorXd x = in_s.scale_vector(theta);
  const Eigen::VectorXd out_slope = out_s.slope();
  Eigen::VectorXd phi;
  auto cotangent = [&](const Eigen::VectorXd& y_scaled) -> Eigen::VectorXd {
    phi = out_s.unscale_vector(y_scaled);
    // d/dy_scaled of the log-likelihood, through phi = unscale(y_scaled).
    return ((y_ - phi).array() / sigma_.array().square() / out_slope.array()).matrix();
  };
  if (grad_theta) {
    Eigen::VectorXd grad_x;
    model_->forward_and_pullback(x, cotangent, grad_x);
    *grad_theta = (grad_x.array() * in_s.slope().array()).matrix();
  } else {
    phi = out_s.unscale_vector(model_->forward(x));
  }
  return normal_log_likelihood(y_, sigma_, phi);
}

double LogPosterior::log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (!priors_.contains(theta)) return -kInf;
  return likelihood_and_gradient(theta, nullptr);
}

Eigen::VectorXd LogPosterior::log_likelihood_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  Eigen::VectorXd g;
  likelihood_and_gradient(theta, &g);
  return g;
}

double LogPosterior::log_density(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd theta = transform_.untransform(u);
  return likelihood_and_gradient(theta, nullptr) + log_prior_ + transform_.log_jacobian(u);
}

double LogPosterior::log_density_and_gradient(const Eigen::VectorXd& u,
                                              Eigen::VectorXd& grad) const {
  const Eigen::VectorXd theta = transform_.untransform(u);
  Eigen::VectorXd g_theta;
  const double ll = likelihood_and_gradient(theta, &g_theta);
  grad = (g_theta.array() * transform_.derivative(u).array()).matrix() +
         transform_.log_jacobian_gradient(u);
  return ll + log_prior_ + transform_.log_jacobian(u);
}

Eigen::VectorXd LogPosterior::to_natural(const Eigen::VectorXd& u) const {
  return transform_.untransform(u);
}

BoxPriorDensity::BoxPriorDensity(doe::PriorSpec priors)
    : priors_(std::move(priors)), transform_(priors_) {}

double BoxPriorDensity::log_density(const Eigen::VectorXd& u) const {
  return transform_.log_jacobian(u);
}

double BoxPriorDensity::log_density_and_gradient(const Eigen::VectorXd& u,
                                                 Eigen::VectorXd& grad) const {
  grad = transform_.log_jacobian_gradient(u);
  return transform_.log_jacobian(u);
}

Eigen::VectorXd BoxPriorDensity::to_natural(const Eigen::VectorXd& u) const {
  return transform_.untransform(u);
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, Eigen::VectorXd sd)
    : mean_(std::move(mean)), sd_(std::move(sd)) {
  if (mean_.size() != sd_.size() || (sd_.array() <= 0.0).any()) {
    throw std::invalid_argument("GaussianDensity needs matching mean/sd with sd > 0");
  }
}

GaussianDensity GaussianDensity::standard(Eigen::Index dim) {
  return GaussianDensity(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));
}

double GaussianDensity::log_density(const Eigen::VectorXd& u) const {
  return -0.5 * ((u - mean_).array() / sd_.array()).square().sum();
}

double GaussianDensity::log_density_and_gradient(const Eigen::VectorXd& u,
                                                 Eigen::VectorXd& grad) const {
  grad = -((u - mean_).array() / sd_.array().square()).matrix();
  return log_density(u);
}

// ---------------------------------------------------------------------------
// HMC

void HmcConfig::validate() const {
  if (chains < 1 || warmup < 0 || iterations < 1 || leapfrog_steps < 1) {
    throw std::invalid_argument("HMC counts must be >= 1");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::invalid_argument("target acceptance must lie in (0, 1)");
  }
  if (!(step_jitter >= 0.0 && step_jitter < 1.0) || !(initial_step_size > 0.0)) {
    throw std::invalid_argument("invalid HMC step settings");
  }
  if (init_ascent_iters < 0 || !(init_ascent_rate > 0.0) || !(init_radius >= 0.0)) {
    throw std::invalid_argument("invalid HMC initialization settings");
  }
}

nlohmann::json HmcConfig::to_json() const {
  return {{"chains", chains},
          {"warmup", warmup},
          {"iterations", iterations},
          {"leapfrog_steps", leapfrog_steps},
          {"step_jitter", step_jitter},
          {"target_accept", target_accept},
          {"initial_step_size", initial_step_size},
          {"max_energy_error", max_energy_error},
          {"init_radius", init_radius},
          {"init_ascent_iters", init_ascent_iters},
          {"init_ascent_rate", init_ascent_rate},
          {"dense_metric", dense_metric},
          {"seed", seed}};
}

HmcConfig HmcConfig::from_json(const nlohmann::json& j) {
  HmcConfig c;
  c.chains = j.value("chains", c.chains);
  c.warmup = j.value("warmup", c.warmup);
  c.iterations = j.value("iterations", c.iterations);
  c.leapfrog_steps = j.value("leapfrog_steps", c.leapfrog_steps);
  c.step_jitter = j.value("step_jitter", c.step_jitter);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.initial_step_size = j.value("initial_step_size", c.initial_step_size);
  c.max_energy_error = j.value("max_energy_error", c.max_energy_error);
  c.init_radius = j.value("init_radius", c.init_radius);
  c.init_ascent_iters = j.value("init_ascent_iters", c.init_ascent_iters);
  c.init_ascent_rate = j.value("init_ascent_rate", c.init_ascent_rate);
  c.dense_metric = j.value("dense_metric", c.dense_metric);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

struct Trajectory {
  Eigen::VectorXd q;
  double log_p = 0.0;
  Eigen::VectorXd grad;
};

// Euclidean metric given by its inverse M^-1 (the posterior covariance
// estimate). Momentum ~ N(0, M) is drawn as L^-T z with M^-1 = L L^T.
struct Metric {
  Eigen::MatrixXd inverse;
  Eigen::MatrixXd chol;  // lower factor of `inverse`

  explicit Metric(Eigen::Index d)
      : inverse(Eigen::MatrixXd::Identity(d, d)), chol(Eigen::MatrixXd::Identity(d, d)) {}

  void set(const Eigen::MatrixXd& inv) {
    Eigen::LLT<Eigen::MatrixXd> llt(inv);
    if (llt.info() != Eigen::Success) return;  // keep the previous metric
    inverse = inv;
    chol = llt.matrixL();
  }
  Eigen::VectorXd velocity(const Eigen::VectorXd& p) const { return inverse * p; }
  double kinetic(const Eigen::VectorXd& p) const { return 0.5 * p.dot(inverse * p); }
  Eigen::VectorXd momentum(const Eigen::VectorXd& z) const {
    return chol.transpose().triangularView<Eigen::Upper>().solve(z);
  }
};

// Leapfrog; returns false on a non-finite state.
bool integrate(const DifferentiableDensity& density, Trajectory& state, Eigen::VectorXd& p,
               const Metric& metric, double eps, int steps, long& grad_evals) {
  p += 0.5 * eps * state.grad;
  for (int s = 0; s < steps; ++s) {
    state.q += eps * metric.velocity(p);
    state.log_p = density.log_density_and_gradient(state.q, state.grad);
    ++grad_evals;
    if (!std::isfinite(state.log_p) || !state.grad.allFinite()) return false;
    if (s + 1 < steps) p += eps * state.grad;
  }
  p += 0.5 * eps * state.grad;
  return true;
}

// Nesterov dual averaging of log step size.
class DualAveraging {
 public:
  DualAveraging(double target, double step) : target_(target) { restart(step); }

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    h_bar_ = 0.0;
    log_bar_ = 0.0;
    count_ = 0;
  }

  double update(double accept_prob) {
    ++count_;
    const double t = static_cast<double>(count_);
    const double eta = 1.0 / (t + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double w = std::pow(t, -kKappa);
    log_bar_ = w * log_step + (1.0 - w) * log_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double target_ = 0.8;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_bar_ = 0.0;
  long count_ = 0;
};

struct ChainOutput {
  std::vector<Eigen::VectorXd> draws;
  ChainStats stats;
};

ChainOutput run_chain(const DifferentiableDensity& density, const HmcConfig& cfg, int chain_id) {
  std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_id)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index d = density.dim();
  ChainOutput out;
  auto& st = out.stats;

  Trajectory cur;
  for (int attempt = 0;; ++attempt) {
    cur.q = Eigen::VectorXd(d);
    for (Eigen::Index i = 0; i < d; ++i) cur.q[i] = cfg.init_radius * (2.0 * unif(rng) - 1.0);
    cur.log_p = density.log_density_and_gradient(cur.q, cur.grad);
    ++st.gradient_evaluations;
    if (std::isfinite(cur.log_p) && cur.grad.allFinite()) break;
    if (attempt > 100) throw std::runtime_error("HMC: no finite initial point found");
  }

  if (cfg.init_ascent_iters > 0) {
    Trajectory best = cur;
    Trajectory pos = cur;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
    for (int k = 1; k <= cfg.init_ascent_iters; ++k) {
      m1 = 0.9 * m1 + 0.1 * pos.grad;
      m2 = 0.999 * m2 + 0.001 * pos.grad.cwiseAbs2();
      const Eigen::ArrayXd mh = m1.array() / (1.0 - std::pow(0.9, k));
      const Eigen::ArrayXd vh = m2.array() / (1.0 - std::pow(0.999, k));
      pos.q += (cfg.init_ascent_rate * mh / (vh.sqrt() + 1e-8)).matrix();
      pos.log_p = density.log_density_and_gradient(pos.q, pos.grad);
      ++st.gradient_evaluations;
      if (!std::isfinite(pos.log_p) || !pos.grad.allFinite()) break;
      if (pos.log_p > best.log_p) best = pos;
    }
    cur = std::move(best);
  }

  Metric metric(d);
  auto draw_momentum = [&] {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
    return metric.momentum(z);
  };

  // Step-size heuristic: double or halve until one-step acceptance crosses 0.5.
  auto find_step = [&](double eps0) {
    auto one_step_log_accept = [&](double step) {
      Trajectory trial = cur;
      Eigen::VectorXd p = draw_momentum();
      const double h0 = -cur.log_p + metric.kinetic(p);
      if (!integrate(density, trial, p, metric, step, 1, st.gradient_evaluations)) return -kInf;
      const double h1 = -trial.log_p + metric.kinetic(p);
      return std::isfinite(h1) ? h0 - h1 : -kInf;
    };
    double step = eps0;
    double la = one_step_log_accept(step);
    const double dir = la > std::log(0.5) ? 1.0 : -1.0;
    for (int k = 0; k < 50; ++k) {
      if (dir * la <= dir * std::log(0.5)) break;
      step *= std::pow(2.0, dir);
      la = one_step_log_accept(step);
    }
    return step;
  };
  double eps = find_step(cfg.initial_step_size);

  // Windowed warmup: fast initial buffer, doubling slow windows that each end
  // with a metric update, fast terminal buffer.
  const int warmup = cfg.warmup;
  const WarmupSchedule schedule = warmup_schedule(warmup);
  std::size_t next_window = 0;
  DualAveraging adapter(cfg.target_accept, eps);
  std::vector<Eigen::VectorXd> metric_samples;

  const int total = warmup + cfg.iterations;
  double accept_sum = 0.0;
  for (int it = 0; it < total; ++it) {
    const bool in_warmup = it < warmup;
    const double scale = 1.0 + cfg.step_jitter * (2.0 * unif(rng) - 1.0);
    const int steps = std::max(1, static_cast<int>(std::lround(cfg.leapfrog_steps * scale)));

    Eigen::VectorXd p = draw_momentum();
    const double h0 = -cur.log_p + metric.kinetic(p);
    Trajectory prop = cur;
    const bool ok = integrate(density, prop, p, metric, eps, steps, st.gradient_evaluations);
    double accept_prob = 0.0;
    bool divergent = !ok;
    if (ok) {
      const double h1 = -prop.log_p + metric.kinetic(p);
      const double dh = h1 - h0;
      if (!std::isfinite(dh) || dh > cfg.max_energy_error) {
        divergent = true;
      } else {
        accept_prob = std::min(1.0, std::exp(-dh));
      }
    }
    if (divergent) (in_warmup ? st.warmup_divergences : st.divergences) += 1;
    if (unif(rng) < accept_prob) cur = std::move(prop);

    if (in_warmup) {
      eps = adapter.update(accept_prob);
      if (next_window < schedule.window_ends.size() && it >= schedule.window_start(next_window)) {
        metric_samples.push_back(cur.q);
        if (it + 1 == schedule.window_ends[next_window]) {
          const auto n = static_cast<double>(metric_samples.size());
          Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
          for (const auto& q : metric_samples) mean += q;
          mean /= n;
          Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
          for (const auto& q : metric_samples) cov += (q - mean) * (q - mean).transpose();
          cov /= (n - 1.0);
          if (!cfg.dense_metric) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
          // Shrink toward a small multiple of the identity, as in common HMC implementations.
          metric.set((n / (n + 5.0)) * cov +
                     1e-3 * (5.0 / (n + 5.0)) * Eigen::MatrixXd::Identity(d, d));
          metric_samples.clear();
          ++next_window;
          eps = find_step(eps);
          adapter.restart(eps);
        }
      }
      if (it + 1 == warmup) eps = adapter.final_step();
    } else {
      accept_sum += accept_prob;
      out.draws.push_back(density.to_natural(cur.q));
    }
  }
  st.step_size = eps;
  st.mean_accept = accept_sum / static_cast<double>(cfg.iterations);
  return out;
}

}  // namespace

WarmupSchedule warmup_schedule(int warmup) {
  WarmupSchedule s;
  if (warmup < 20) return s;
  int init = 75, term = 50, base = 25;
  if (init + term + base > warmup) {
    init = static_cast<int>(0.15 * warmup);
    term = static_cast<int>(0.1 * warmup);
    base = warmup - init - term;
  }
  s.init_buffer = init;
  const int slow_end = warmup - term;
  int start = init, size = base;
  while (start < slow_end) {
    int end = start + size;
    // Absorb a trailing remainder too short for a doubled window.
    if (end + 2 * size > slow_end) end = slow_end;
    s.window_ends.push_back(end);
    start = end;
    size *= 2;
  }
  return s;
}

double leapfrog_energy_error(const DifferentiableDensity& density, const Eigen::VectorXd& q0,
                             const Eigen::VectorXd& p0, double step_size, int steps) {
  const Metric metric(density.dim());
  Trajectory state;
  state.q = q0;
  state.log_p = density.log_density_and_gradient(state.q, state.grad);
  Eigen::VectorXd p = p0;
  const double h0 = -state.log_p + metric.kinetic(p);
  long evals = 0;
  if (!integrate(density, state, p, metric, step_size, steps, evals)) return kInf;
  return (-state.log_p + metric.kinetic(p)) - h0;
}

Posterior hmc_sample(const DifferentiableDensity& density, const HmcConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ChainOutput> outputs(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(outputs.size());
  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw == 1 || cfg.chains == 1) {
    for (int c = 0; c < cfg.chains; ++c) outputs[static_cast<std::size_t>(c)] = run_chain(density, cfg, c);
  } else {
    std::vector<std::jthread> pool;
    for (int c = 0; c < cfg.chains; ++c) {
      pool.emplace_back([&, c] {
        try {
          outputs[static_cast<std::size_t>(c)] = run_chain(density, cfg, c);
        } catch (...) {
          errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Posterior post;
  post.method = "hmc";
  post.names = density.names();
  const Eigen::Index d = density.dim();
  post.draws.resize(static_cast<Eigen::Index>(cfg.chains) * cfg.iterations, d);
  Eigen::Index row = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    const auto& o = outputs[static_cast<std::size_t>(c)];
    for (int i = 0; i < cfg.iterations; ++i) {
      post.draws.row(row++) = o.draws[static_cast<std::size_t>(i)].transpose();
      post.chain.push_back(c + 1);
      post.iter.push_back(i + 1);
    }
    post.chain_stats.push_back(o.stats);
    post.model_evaluations += o.stats.gradient_evaluations;
  }
  post.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return post;
}

// ---------------------------------------------------------------------------
// Posterior

int Posterior::num_chains() const {
  return chain.empty() ? 0 : *std::max_element(chain.begin(), chain.end());
}

std::vector<std::vector<double>> Posterior::chain_draws(Eigen::Index param) const {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(num_chains()));
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    out[static_cast<std::size_t>(chain[static_cast<std::size_t>(r)] - 1)].push_back(draws(r, param));
  }
  return out;
}

std::vector<ParameterSummary> Posterior::summarize() const {
  std::vector<ParameterSummary> out;
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    ParameterSummary s;
    s.name = names.at(static_cast<std::size_t>(j));
    std::vector<double> col(draws.col(j).data(), draws.col(j).data() + draws.rows());
    s.mean = stats::mean(col);
    s.sd = std::sqrt(stats::variance(col));
    s.q025 = stats::quantile(col, 0.025);
    s.q50 = stats::quantile(col, 0.5);
    s.q975 = stats::quantile(col, 0.975);
    const auto chains = chain_draws(j);
    s.rhat = chains.size() >= 2 ? stats::split_rhat(chains) : std::numeric_limits<double>::quiet_NaN();
    s.ess = stats::ess_bulk(chains);
    out.push_back(s);
  }
  return out;
}

void Posterior::write_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "chain,iter";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    out << chain[static_cast<std::size_t>(r)] << ',' << iter[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < draws.cols(); ++j) out << ',' << io::format_double(draws(r, j));
    out << '\n';
  }
  io::write_text(path, out.str());
}

Posterior Posterior::read_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  if (table.header.size() < 3 || table.header[0] != "chain" || table.header[1] != "iter") {
    throw std::invalid_argument("posterior CSV must start with chain,iter columns");
  }
  Posterior post;
  post.names.assign(table.header.begin() + 2, table.header.end());
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(post.names.size());
  post.draws.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    post.chain.push_back(static_cast<int>(io::parse_double(row[0])));
    post.iter.push_back(static_cast<int>(io::parse_double(row[1])));
    for (Eigen::Index j = 0; j < d; ++j) {
      post.draws(r, j) = io::parse_double(row[static_cast<std::size_t>(j) + 2]);
    }
  }
  return post;
}

namespace {
nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
}  // namespace

nlohmann::json Posterior::summary_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& s : summarize()) {
    params.push_back({{"name", s.name},
                      {"mean", s.mean},
                      {"sd", s.sd},
                      {"q025", s.q025},
                      {"q50", s.q50},
                      {"q975", s.q975},
                      {"rhat", number_or_null(s.rhat)},
                      {"ess", number_or_null(s.ess)}});
  }
  nlohmann::json chains = nlohmann::json::array();
  int divergences = 0;
  for (const auto& c : chain_stats) {
    divergences += c.divergences;
    chains.push_back({{"step_size", c.step_size},
                      {"mean_accept", c.mean_accept},
                      {"divergences", c.divergences},
                      {"warmup_divergences", c.warmup_divergences},
                      {"gradient_evaluations", c.gradient_evaluations}});
  }
  return {{"method", method},
          {"draws", draws.rows()},
          {"parameters", params},
          {"chains", chains},
          {"divergences", divergences},
          {"model_evaluations", model_evaluations},
          {"wall_seconds", wall_seconds}};
}

// ---------------------------------------------------------------------------
// Diagnostics

std::string status_name(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Warn: return "warn";
    case Status::Fail: return "fail";
  }
  return "unknown";
}

DiagnosticsReport diagnostics(const Posterior& posterior) {
  DiagnosticsReport rep;
  const int chains = posterior.num_chains();
  rep.post_warmup_draws = posterior.draws.rows();
  for (const auto& c : posterior.chain_stats) {
    rep.divergences += c.divergences;
    rep.acceptance.push_back(c.mean_accept);
  }
  if (chains < 2) {
    rep.status = Status::Warn;
    rep.messages.push_back("single chain: split-R-hat unavailable");
  }
  for (Eigen::Index j = 0; j < posterior.draws.cols(); ++j) {
    const auto cd = posterior.chain_draws(j);
    const double rhat = chains >= 2 ? stats::split_rhat(cd) : std::numeric_limits<double>::quiet_NaN();
    rep.rhat.push_back(rhat);
    rep.ess.push_back(stats::ess_bulk(cd));
    if (chains >= 2 && !(rhat <= 1.05)) {
      rep.status = Status::Fail;
      rep.messages.push_back("R-hat " + io::format_double(rhat) + " > 1.05 for " +
                             posterior.names.at(static_cast<std::size_t>(j)));
    }
  }
  if (rep.post_warmup_draws > 0 &&
      static_cast<double>(rep.divergences) > 0.1 * static_cast<double>(rep.post_warmup_draws)) {
    if (rep.status == Status::Pass) rep.status = Status::Warn;
    rep.messages.push_back("divergent transitions exceed 10% of draws");
  }
  return rep;
}

nlohmann::json DiagnosticsReport::to_json() const {
  nlohmann::json r = nlohmann::json::array(), e = nlohmann::json::array();
  for (double v : rhat) r.push_back(number_or_null(v));
  for (double v : ess) e.push_back(number_or_null(v));
  return {{"rhat", r},
          {"ess", e},
          {"divergences", divergences},
          {"post_warmup_draws", post_warmup_draws},
          {"acceptance", acceptance},
          {"status", status_name(status)},
          {"messages", messages}};
}

}  // namespace baycann::calibrate
