#pragma once

// Bayesian calibration on the ANN surrogate: normal likelihood over the
// targets, uniform box priors sampled through a logit reparameterization,
// and Hamiltonian Monte Carlo with convergence diagnostics.

#include "baycann/ann.hpp"
#include "baycann/doe.hpp"
#include "baycann/nathist.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace baycann::calibrate {

// Logit map between a prior box and R^d. theta = a + (b - a) * logistic(u).
class BoxTransform {
 public:
  explicit BoxTransform(const doe::PriorSpec& priors);

  Eigen::Index size() const { return lower_.size(); }

  // Throws std::domain_error unless theta is strictly inside the box.
  Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  Eigen::VectorXd untransform(const Eigen::Ref<const Eigen::VectorXd>& u) const;

  // sum_i ln(b_i - a_i) + ln f(u_i) + ln(1 - f(u_i))
  double log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  // d log_jacobian / du = 1 - 2 f(u)
  Eigen::VectorXd log_jacobian_gradient(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  // d theta / du, elementwise.
  Eigen::VectorXd derivative(const Eigen::Ref<const Eigen::VectorXd>& u) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd range_;
};

// Target density for the sampler, on an unconstrained space.
class DifferentiableDensity {
 public:
  virtual ~DifferentiableDensity() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Eigen::VectorXd& u) const = 0;
  virtual double log_density_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const = 0;
  // Map a sampler state to the reported parameterization.
  virtual Eigen::VectorXd to_natural(const Eigen::VectorXd& u) const { return u; }
  virtual std::vector<std::string> names() const;
};

// Sum over targets of ln N(y_t | phi_t, sigma_t^2).
double normal_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& y,
                             const Eigen::Ref<const Eigen::VectorXd>& sigma,
                             const Eigen::Ref<const Eigen::VectorXd>& phi);

// Log posterior of the surrogate-calibration problem in logit space. Holds a
// reference to the model, which must outlive it.
class LogPosterior : public DifferentiableDensity {
 public:
  LogPosterior(const ann::AnnModel& model, const nathist::TargetSet& targets,
               doe::PriorSpec priors);

  Eigen::Index dim() const override { return priors_.size(); }
  double log_density(const Eigen::VectorXd& u) const override;
  double log_density_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd to_natural(const Eigen::VectorXd& u) const override;
  std::vector<std::string> names() const override { return priors_.names(); }

  // Natural units; -inf outside the prior box.
  double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  // d log_likelihood / d theta.
  Eigen::VectorXd log_likelihood_gradient(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  const BoxTransform& transform() const { return transform_; }
  const doe::PriorSpec& priors() const { return priors_; }

 private:
  double likelihood_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                 Eigen::VectorXd* grad_theta) const;

  const ann::AnnModel* model_;
  Eigen::VectorXd y_;
  Eigen::VectorXd sigma_;
  doe::PriorSpec priors_;
  BoxTransform transform_;
  double log_prior_;
};

// Uniform prior only: the log-Jacobian of the box transform.
class BoxPriorDensity : public DifferentiableDensity {
 public:
  explicit BoxPriorDensity(doe::PriorSpec priors);
  Eigen::Index dim() const override { return priors_.size(); }
  double log_density(const Eigen::VectorXd& u) const override;
  double log_density_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd to_natural(const Eigen::VectorXd& u) const override;
  std::vector<std::string> names() const override { return priors_.names(); }

 private:
  doe::PriorSpec priors_;
  BoxTransform transform_;
};

// Independent normal coordinates; sampler test target.
class GaussianDensity : public DifferentiableDensity {
 public:
  GaussianDensity(Eigen::VectorXd mean, Eigen::VectorXd sd);
  static GaussianDensity standard(Eigen::Index dim);
  Eigen::Index dim() const override { return mean_.size(); }
  double log_density(const Eigen::VectorXd& u) const override;
  double log_density_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd sd_;
};

struct HmcConfig {
  int chains = 4;
  int warmup = 1000;
  int iterations = 1000;
  int leapfrog_steps = 20;
  double step_jitter = 0.2;  // steps drawn uniformly in [(1-j)L, (1+j)L]
  double target_accept = 0.8;
  double initial_step_size = 0.1;
  double max_energy_error = 1000.0;
  double init_radius = 2.0;  // initial state uniform in [-r, r]^d
  // Adam ascent on the log density from the random start before warmup;
  // 0 disables it. Far from the mode the posterior is too steep for warmup
  // alone to reach it.
  int init_ascent_iters = 2000;
  double init_ascent_rate = 0.05;
  // Full covariance metric from the warmup windows; false keeps the diagonal.
  bool dense_metric = true;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static HmcConfig from_json(const nlohmann::json& j);
};

// Warmup layout: [0, init_buffer) adapts the step size only; slow windows
// follow, doubling in length, each ending in a metric update; the remaining
// iterations up to warmup adapt the step size under the final metric.
struct WarmupSchedule {
  int init_buffer = 0;
  std::vector<int> window_ends;  // exclusive iteration index of each window

  int window_start(std::size_t k) const { return k == 0 ? init_buffer : window_ends[k - 1]; }
};
// Buffers 75/50 with a 25-iteration base window; warmup below 150 uses
// 15%/10% buffers instead, and below 20 adapts no metric at all.
WarmupSchedule warmup_schedule(int warmup);

struct ChainStats {
  double step_size = 0.0;
  double mean_accept = 0.0;  // post-warmup mean acceptance probability
  int divergences = 0;       // post-warmup
  int warmup_divergences = 0;
  long gradient_evaluations = 0;
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;  // NaN when unavailable
  double ess = 0.0;
};

struct Posterior {
  std::string method;
  std::vector<std::string> names;
  Eigen::MatrixXd draws;   // rows = draws, natural units
  std::vector<int> chain;  // 1-based chain id per row
  std::vector<int> iter;   // 1-based iteration per row
  std::vector<ChainStats> chain_stats;
  double wall_seconds = 0.0;
  long model_evaluations = 0;

  int num_chains() const;
  // Draws of one parameter, grouped by chain.
  std::vector<std::vector<double>> chain_draws(Eigen::Index param) const;
  std::vector<ParameterSummary> summarize() const;
  Eigen::VectorXd means() const { return draws.colwise().mean().transpose(); }

  void write_csv(const std::filesystem::path& path) const;
  static Posterior read_csv(const std::filesystem::path& path);
  nlohmann::json summary_json() const;
};

Posterior hmc_sample(const DifferentiableDensity& density, const HmcConfig& cfg);

// Integrates one trajectory with a fixed momentum and returns H(end) - H(start).
double leapfrog_energy_error(const DifferentiableDensity& density, const Eigen::VectorXd& q0,
                             const Eigen::VectorXd& p0, double step_size, int steps);

enum class Status { Pass, Warn, Fail };
std::string status_name(Status s);

struct DiagnosticsReport {
  std::vector<double> rhat;
  std::vector<double> ess;
  int divergences = 0;
  long post_warmup_draws = 0;
  std::vector<double> acceptance;
  Status status = Status::Pass;
  std::vector<std::string> messages;

  nlohmann::json to_json() const;
};

// Fail when any split-R-hat exceeds 1.05; warn on a single chain or when
// divergences exceed 10% of post-warmup draws.
DiagnosticsReport diagnostics(const Posterior& posterior);

}  // namespace baycann::calibrate
