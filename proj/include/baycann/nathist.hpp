#pragma once

// Discrete-time natural-history model of colorectal cancer: annual cycles
// from age 50 to 100 over nine health states, as a deterministic cohort and
// as an individual-level microsimulation.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace baycann::nathist {

enum class HealthState : int {
  Normal = 0,
  SmallAdenoma,
  LargeAdenoma,
  PreclinEarly,
  PreclinLate,
  ClinEarly,
  ClinLate,
  CrcDeath,
  OtherDeath,
};

inline constexpr int kNumStates = 9;
inline constexpr int kStartAge = 50;
inline constexpr int kEndAge = 100;
inline constexpr int kNumCycles = kEndAge - kStartAge;  // transitions
inline constexpr int kBinWidth = 5;
inline constexpr int kNumBins = 9;  // 50-54 ... 90-94
inline constexpr int kNumSeries = 4;
inline constexpr int kNumOutputs = kNumSeries * kNumBins;
inline constexpr int kNumCalibrated = 9;

// Preclinical early/late shares of the adenoma-bearing mass at age 50.
inline constexpr double kInitPreclinEarlyShare = 0.12;
inline constexpr double kInitPreclinLateShare = 0.08;

constexpr int index(HealthState s) { return static_cast<int>(s); }
std::string_view state_name(HealthState s);

struct NatHistParams {
  double l = 2.86e-6;
  double g = 2.78;
  double lambda2 = 0.0346;
  double lambda3 = 0.0215;
  double lambda4 = 0.3697;
  double lambda5 = 0.2382;
  double lambda6 = 0.4852;
  double lambda7 = 0.0302;
  double lambda8 = 0.2099;
  double p_adeno = 0.27;
  double p_small = 0.71;

  static NatHistParams base_case() { return {}; }

  // Throws std::domain_error when a rate is negative or non-finite, g <= 0,
  // or a probability falls outside [0, 1].
  void validate() const;
};

// Calibrated parameters in canonical column order.
inline constexpr std::array<std::string_view, kNumCalibrated> kCalibratedNames = {
    "l", "g", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6", "p_adeno", "p_small"};

Eigen::VectorXd calibrated_vector(const NatHistParams& p);

// Copy of `base` with the nine calibrated fields replaced by `theta`.
NatHistParams with_calibrated(NatHistParams base, const Eigen::Ref<const Eigen::VectorXd>& theta);

// All-cause mortality by integer age.
class LifeTable {
 public:
  struct Entry {
    double age;
    double mu;
  };

  explicit LifeTable(std::vector<Entry> entries);

  // mu(a) = 0.0007 + 5e-5 exp(0.085 a) at integer ages.
  static LifeTable gompertz_makeham(int min_age = 0, int max_age = 110);
  static LifeTable from_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;

  // Rate of the last entry with age <= a. Throws std::range_error outside
  // [min_age, max_age].
  double mu(double age) const;
  double min_age() const { return entries_.front().age; }
  double max_age() const { return entries_.back().age; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

using TransitionMatrix = Eigen::Matrix<double, kNumStates, kNumStates, Eigen::RowMajor>;
using StateVector = Eigen::Matrix<double, 1, kNumStates>;

// Onset hazard l * g * a^(g-1).
double weibull_hazard(double l, double g, double age);

// One-cycle transition matrix at the given age. Competing exits from a state
// with total rate R split as p(stay) = exp(-R), p(j) = (r_j / R)(1 - exp(-R)).
TransitionMatrix transition_probs(const NatHistParams& params, double age, const LifeTable& lt);

StateVector initial_distribution(const NatHistParams& params);

enum class Series : int { AdenomaPrev = 0, PropSmall, IncidEarly, IncidLate };

std::string_view series_name(Series s);
Series parse_series(std::string_view name);

// Lower age of a target bin.
constexpr int bin_start_age(int bin) { return kStartAge + kBinWidth * bin; }

// Output ordering is series-major: index = series * kNumBins + bin.
constexpr int output_index(Series s, int bin) { return static_cast<int>(s) * kNumBins + bin; }

std::string target_id(Series s, int bin);
std::vector<std::string> output_names();

struct ModelOutputs {
  std::array<double, kNumOutputs> values{};
  // Set when some bin had an empty denominator and its output was forced to 0.
  bool degenerate = false;

  double at(Series s, int bin) const { return values[output_index(s, bin)]; }
  Eigen::VectorXd as_vector() const;
};

// Per-bin numerators and denominators. Cohort tallies hold expected counts
// per unit cohort; microsimulation tallies hold integer counts.
// Preclinical cancers count as adenoma-bearing for prevalence, as in the
// initial distribution where they are carved out of p_adeno; prop_small is
// among small + large only.
struct BinTallies {
  std::array<double, kNumBins> carriers{};      // small + large + preclinical occupancy
  std::array<double, kNumBins> adenoma{};       // small + large occupancy
  std::array<double, kNumBins> small{};         // small occupancy
  std::array<double, kNumBins> alive{};         // non-death occupancy
  std::array<double, kNumBins> undiagnosed{};   // Normal..PreclinLate occupancy
  std::array<double, kNumBins> new_early{};     // PreclinEarly -> ClinEarly
  std::array<double, kNumBins> new_late{};      // PreclinLate -> ClinLate
};

ModelOutputs summarize(const BinTallies& tallies);

struct CohortResult {
  Eigen::MatrixXd trace;  // (kNumCycles + 1) x kNumStates
  BinTallies tallies;
  ModelOutputs outputs;
};

CohortResult run_cohort(const NatHistParams& params, const LifeTable& lt);

struct MicrosimResult {
  BinTallies tallies;
  ModelOutputs outputs;
};

// n independent individuals, each drawing from its own substream derived
// from (seed, individual index), so results do not depend on thread count.
MicrosimResult run_microsim_detailed(const NatHistParams& params, const LifeTable& lt,
                                     std::int64_t n, std::uint64_t seed);

ModelOutputs run_microsim(const NatHistParams& params, const LifeTable& lt, std::int64_t n,
                          std::uint64_t seed);

struct Target {
  std::string id;
  Series series;
  int age_bin;  // lower age of the bin
  double mean;
  double se;
};

struct TargetSet {
  std::vector<Target> targets;
  std::vector<std::string> warnings;

  Eigen::VectorXd means() const;
  Eigen::VectorXd ses() const;

  void write_csv(const std::filesystem::path& path) const;
  static TargetSet from_csv(const std::filesystem::path& path);
};

// se floor: max(se, 1e-4 * max(|mean|, 0.01)).
double floor_se(double se, double mean);

struct TargetGenOptions {
  int runs = 100;
  std::int64_t n_adenoma = 500;
  std::int64_t n_incid = 100000;
  std::uint64_t seed = 1;
  // Every run reuses the run-0 substreams; only useful for exercising the SE floor.
  bool same_seed_each_run = false;
};

TargetSet generate_targets(const NatHistParams& params, const LifeTable& lt,
                           const TargetGenOptions& opts);

}  // namespace baycann::nathist
