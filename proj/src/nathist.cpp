#include "baycann/nathist.hpp"

#include "baycann/io.hpp"
#include "baycann/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace baycann::nathist {

namespace {

constexpr int kNormal = index(HealthState::Normal);
constexpr int kSmall = index(HealthState::SmallAdenoma);
constexpr int kLarge = index(HealthState::LargeAdenoma);
constexpr int kPreEarly = index(HealthState::PreclinEarly);
constexpr int kPreLate = index(HealthState::PreclinLate);
constexpr int kClinEarly = index(HealthState::ClinEarly);
constexpr int kClinLate = index(HealthState::ClinLate);
constexpr int kCrcDeath = index(HealthState::CrcDeath);
constexpr int kOtherDeath = index(HealthState::OtherDeath);

// Only cycles starting inside a target bin contribute to the outputs.
constexpr int kTalliedCycles = kNumBins * kBinWidth;

constexpr std::array<std::string_view, kNumSeries> kSeriesNames = {
    "adenoma_prev", "prop_small", "incid_early", "incid_late"};

bool is_alive(int s) { return s < kCrcDeath; }

void check_rate(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw std::domain_error(std::string("rate '") + name + "' must be finite and >= 0");
  }
}

void check_prob(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw std::domain_error(std::string("probability '") + name + "' must lie in [0, 1]");
  }
}

double ratio_or_zero(double num, double den, bool& degenerate) {
  if (den > 0.0) return num / den;
  degenerate = true;
  return 0.0;
}

// Fills row `from` of P given the exit rates to each destination.
void fill_row(TransitionMatrix& P, int from, const std::array<double, kNumStates>& rates) {
  double total = 0.0;
  for (double r : rates) total += r;
  P.row(from).setZero();
  if (total <= 0.0) {
    P(from, from) = 1.0;
    return;
  }
  const double leave = -std::expm1(-total);
  for (int j = 0; j < kNumStates; ++j) {
    if (rates[j] > 0.0) P(from, j) = rates[j] / total * leave;
  }
  P(from, from) = std::exp(-total);
}

}  // namespace

std::string_view state_name(HealthState s) {
  static constexpr std::array<std::string_view, kNumStates> names = {
      "Normal", "SmallAdenoma", "LargeAdenoma", "PreclinEarly", "PreclinLate",
      "ClinEarly", "ClinLate", "CrcDeath", "OtherDeath"};
  return names[index(s)];
}

void NatHistParams::validate() const {
  check_rate(l, "l");
  if (!std::isfinite(g) || g <= 0.0) throw std::domain_error("shape 'g' must be > 0");
  check_rate(lambda2, "lambda2");
  check_rate(lambda3, "lambda3");
  check_rate(lambda4, "lambda4");
  check_rate(lambda5, "lambda5");
  check_rate(lambda6, "lambda6");
  check_rate(lambda7, "lambda7");
  check_rate(lambda8, "lambda8");
  check_prob(p_adeno, "p_adeno");
  check_prob(p_small, "p_small");
}

Eigen::VectorXd calibrated_vector(const NatHistParams& p) {
  Eigen::VectorXd v(kNumCalibrated);
  v << p.l, p.g, p.lambda2, p.lambda3, p.lambda4, p.lambda5, p.lambda6, p.p_adeno, p.p_small;
  return v;
}

NatHistParams with_calibrated(NatHistParams base, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != kNumCalibrated) {
    throw std::invalid_argument("expected 9 calibrated parameters");
  }
  base.l = theta[0];
  base.g = theta[1];
  base.lambda2 = theta[2];
  base.lambda3 = theta[3];
  base.lambda4 = theta[4];
  base.lambda5 = theta[5];
  base.lambda6 = theta[6];
  base.p_adeno = theta[7];
  base.p_small = theta[8];
  return base;
}

// ---------------------------------------------------------------------------
// Life table

LifeTable::LifeTable(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw std::invalid_argument("life table is empty");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!std::isfinite(entries_[i].mu) || entries_[i].mu < 0.0) {
      throw std::invalid_argument("life table mu must be finite and >= 0");
    }
    if (i > 0 && !(entries_[i].age > entries_[i - 1].age)) {
      throw std::invalid_argument("life table ages must be strictly increasing");
    }
  }
  if (min_age() > kStartAge || max_age() < kEndAge) {
    throw std::invalid_argument("life table must cover ages 50-100");
  }
}

LifeTable LifeTable::gompertz_makeham(int min_age, int max_age) {
  std::vector<Entry> entries;
  for (int a = min_age; a <= max_age; ++a) {
    entries.push_back({static_cast<double>(a), 0.0007 + 5e-5 * std::exp(0.085 * a)});
  }
  return LifeTable(std::move(entries));
}

LifeTable LifeTable::from_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("life table not found: " + path.string());
  }
  const auto table = io::read_csv(path);
  const auto age_col = table.column("age");
  const auto mu_col = table.column("mu");
  std::vector<Entry> entries;
  entries.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    entries.push_back({io::parse_double(row[age_col]), io::parse_double(row[mu_col])});
  }
  return LifeTable(std::move(entries));
}

void LifeTable::write_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "age,mu\n";
  for (const auto& e : entries_) {
    out << io::format_double(e.age) << ',' << io::format_double(e.mu) << '\n';
  }
  io::write_text(path, out.str());
}

double LifeTable::mu(double age) const {
  if (!(age >= min_age() && age <= max_age())) {
    throw std::range_error("age " + std::to_string(age) + " outside life table range");
  }
  auto it = std::upper_bound(entries_.begin(), entries_.end(), age,
                             [](double a, const Entry& e) { return a < e.age; });
  return std::prev(it)->mu;
}

// ---------------------------------------------------------------------------
// Transitions

double weibull_hazard(double l, double g, double age) {
  if (!(l >= 0.0) || !(g > 0.0) || !(age > 0.0)) {
    throw std::domain_error("weibull_hazard requires l >= 0, g > 0, age > 0");
  }
  const double h = l * g * std::pow(age, g - 1.0);
  if (!std::isfinite(h)) throw std::domain_error("weibull_hazard overflow");
  return h;
}

TransitionMatrix transition_probs(const NatHistParams& p, double age, const LifeTable& lt) {
  const double mu = lt.mu(age);
  const double onset = weibull_hazard(p.l, p.g, age);

  TransitionMatrix P = TransitionMatrix::Zero();
  auto exits = [&](std::initializer_list<std::pair<int, double>> arcs, bool alive) {
    std::array<double, kNumStates> r{};
    for (auto [to, rate] : arcs) r[to] += rate;
    if (alive) r[kOtherDeath] += mu;
    return r;
  };
  fill_row(P, kNormal, exits({{kSmall, onset}}, true));
  fill_row(P, kSmall, exits({{kLarge, p.lambda2}}, true));
  fill_row(P, kLarge, exits({{kPreEarly, p.lambda3}}, true));
  fill_row(P, kPreEarly, exits({{kPreLate, p.lambda4}, {kClinEarly, p.lambda5}}, true));
  fill_row(P, kPreLate, exits({{kClinLate, p.lambda6}}, true));
  fill_row(P, kClinEarly, exits({{kCrcDeath, p.lambda7}}, true));
  fill_row(P, kClinLate, exits({{kCrcDeath, p.lambda8}}, true));
  P(kCrcDeath, kCrcDeath) = 1.0;
  P(kOtherDeath, kOtherDeath) = 1.0;
  return P;
}

StateVector initial_distribution(const NatHistParams& p) {
  check_prob(p.p_adeno, "p_adeno");
  check_prob(p.p_small, "p_small");
  const double adenoma_share = 1.0 - kInitPreclinEarlyShare - kInitPreclinLateShare;
  StateVector v = StateVector::Zero();
  v[kNormal] = 1.0 - p.p_adeno;
  v[kSmall] = p.p_adeno * p.p_small * adenoma_share;
  v[kLarge] = p.p_adeno * (1.0 - p.p_small) * adenoma_share;
  v[kPreEarly] = p.p_adeno * kInitPreclinEarlyShare;
  v[kPreLate] = p.p_adeno * kInitPreclinLateShare;
  return v;
}

// ---------------------------------------------------------------------------
// Outputs

std::string_view series_name(Series s) { return kSeriesNames[static_cast<int>(s)]; }

Series parse_series(std::string_view name) {
  for (int i = 0; i < kNumSeries; ++i) {
    if (kSeriesNames[i] == name) return static_cast<Series>(i);
  }
  throw std::invalid_argument("unknown series '" + std::string(name) + "'");
}

std::string target_id(Series s, int bin) {
  const int lo = bin_start_age(bin);
  return std::string(series_name(s)) + "_" + std::to_string(lo) + "_" +
         std::to_string(lo + kBinWidth - 1);
}

std::vector<std::string> output_names() {
  std::vector<std::string> names;
  names.reserve(kNumOutputs);
  for (int s = 0; s < kNumSeries; ++s) {
    for (int b = 0; b < kNumBins; ++b) names.push_back(target_id(static_cast<Series>(s), b));
  }
  return names;
}

Eigen::VectorXd ModelOutputs::as_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(values.data(), kNumOutputs);
}

ModelOutputs summarize(const BinTallies& t) {
  ModelOutputs out;
  bool deg = false;
  for (int b = 0; b < kNumBins; ++b) {
    out.values[output_index(Series::AdenomaPrev, b)] = ratio_or_zero(t.carriers[b], t.alive[b], deg);
    out.values[output_index(Series::PropSmall, b)] = ratio_or_zero(t.small[b], t.adenoma[b], deg);
    out.values[output_index(Series::IncidEarly, b)] =
        ratio_or_zero(t.new_early[b], t.undiagnosed[b], deg);
    out.values[output_index(Series::IncidLate, b)] =
        ratio_or_zero(t.new_late[b], t.undiagnosed[b], deg);
  }
  out.degenerate = deg;
  return out;
}

CohortResult run_cohort(const NatHistParams& params, const LifeTable& lt) {
  params.validate();
  CohortResult res;
  res.trace.resize(kNumCycles + 1, kNumStates);
  StateVector occ = initial_distribution(params);
  res.trace.row(0) = occ;
  for (int c = 0; c < kNumCycles; ++c) {
    const TransitionMatrix P = transition_probs(params, kStartAge + c, lt);
    if (c < kTalliedCycles) {
      const int b = c / kBinWidth;
      auto& t = res.tallies;
      t.carriers[b] += occ.segment<4>(kSmall).sum();
      t.adenoma[b] += occ[kSmall] + occ[kLarge];
      t.small[b] += occ[kSmall];
      t.alive[b] += occ.head<kCrcDeath>().sum();
      t.undiagnosed[b] += occ.head<kPreLate + 1>().sum();
      t.new_early[b] += occ[kPreEarly] * P(kPreEarly, kClinEarly);
      t.new_late[b] += occ[kPreLate] * P(kPreLate, kClinLate);
    }
    occ = occ * P;
    res.trace.row(c + 1) = occ;
  }
  res.outputs = summarize(res.tallies);
  return res;
}

// ---------------------------------------------------------------------------
// Microsimulation

namespace {

struct CountTallies {
  std::array<std::array<std::int64_t, kNumStates>, kTalliedCycles> occupancy{};
  std::array<std::int64_t, kTalliedCycles> new_early{};
  std::array<std::int64_t, kTalliedCycles> new_late{};

  void add(const CountTallies& o) {
    for (int c = 0; c < kTalliedCycles; ++c) {
      for (int s = 0; s < kNumStates; ++s) occupancy[c][s] += o.occupancy[c][s];
      new_early[c] += o.new_early[c];
      new_late[c] += o.new_late[c];
    }
  }
};

using CumulativeRows = std::array<std::array<double, kNumStates>, kNumStates>;

int draw(const std::array<double, kNumStates>& cum, double u) {
  for (int j = 0; j < kNumStates - 1; ++j) {
    if (u < cum[j]) return j;
  }
  return kNumStates - 1;
}

std::array<double, kNumStates> cumulative(const Eigen::Ref<const StateVector>& row) {
  std::array<double, kNumStates> cum{};
  double acc = 0.0;
  for (int j = 0; j < kNumStates; ++j) {
    acc += row[j];
    cum[j] = acc;
  }
  return cum;
}

void simulate_range(const std::array<double, kNumStates>& init_cum,
                    const std::vector<CumulativeRows>& cycles, std::int64_t begin,
                    std::int64_t end, std::uint64_t seed, CountTallies& out) {
  for (std::int64_t i = begin; i < end; ++i) {
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    int s = draw(init_cum, rng.uniform());
    for (int c = 0; c < kTalliedCycles; ++c) {
      if (!is_alive(s)) break;
      ++out.occupancy[c][s];
      const int next = draw(cycles[c][s], rng.uniform());
      if (s == kPreEarly && next == kClinEarly) ++out.new_early[c];
      if (s == kPreLate && next == kClinLate) ++out.new_late[c];
      s = next;
    }
  }
}

}  // namespace

MicrosimResult run_microsim_detailed(const NatHistParams& params, const LifeTable& lt,
                                     std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("microsimulation needs n >= 1");
  params.validate();

  std::vector<CumulativeRows> cycles(kTalliedCycles);
  for (int c = 0; c < kTalliedCycles; ++c) {
    const TransitionMatrix P = transition_probs(params, kStartAge + c, lt);
    for (int s = 0; s < kNumStates; ++s) cycles[c][s] = cumulative(P.row(s));
  }
  const auto init_cum = cumulative(initial_distribution(params));

  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  const std::int64_t workers = std::min<std::int64_t>(hw, std::max<std::int64_t>(1, n / 1000));
  std::vector<CountTallies> partial(static_cast<std::size_t>(workers));
  if (workers == 1) {
    simulate_range(init_cum, cycles, 0, n, seed, partial[0]);
  } else {
    std::vector<std::jthread> pool;
    for (std::int64_t w = 0; w < workers; ++w) {
      const std::int64_t begin = n * w / workers;
      const std::int64_t end = n * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] {
        simulate_range(init_cum, cycles, begin, end, seed, partial[static_cast<std::size_t>(w)]);
      });
    }
  }
  CountTallies total;
  for (const auto& p : partial) total.add(p);

  MicrosimResult res;
  auto& t = res.tallies;
  for (int c = 0; c < kTalliedCycles; ++c) {
    const int b = c / kBinWidth;
    const auto& occ = total.occupancy[c];
    t.carriers[b] += static_cast<double>(occ[kSmall] + occ[kLarge] + occ[kPreEarly] + occ[kPreLate]);
    t.adenoma[b] += static_cast<double>(occ[kSmall] + occ[kLarge]);
    t.small[b] += static_cast<double>(occ[kSmall]);
    std::int64_t alive = 0, undiag = 0;
    for (int s = 0; s < kCrcDeath; ++s) alive += occ[s];
    for (int s = 0; s <= kPreLate; ++s) undiag += occ[s];
    t.alive[b] += static_cast<double>(alive);
    t.undiagnosed[b] += static_cast<double>(undiag);
    t.new_early[b] += static_cast<double>(total.new_early[c]);
    t.new_late[b] += static_cast<double>(total.new_late[c]);
  }
  res.outputs = summarize(t);
  return res;
}

ModelOutputs run_microsim(const NatHistParams& params, const LifeTable& lt, std::int64_t n,
                          std::uint64_t seed) {
  return run_microsim_detailed(params, lt, n, seed).outputs;
}

// ---------------------------------------------------------------------------
// Targets

Eigen::VectorXd TargetSet::means() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) v[static_cast<Eigen::Index>(i)] = targets[i].mean;
  return v;
}

Eigen::VectorXd TargetSet::ses() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) v[static_cast<Eigen::Index>(i)] = targets[i].se;
  return v;
}

void TargetSet::write_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "target_id,series,age_bin,mean,se\n";
  for (const auto& t : targets) {
    out << t.id << ',' << series_name(t.series) << ',' << t.age_bin << '-'
        << (t.age_bin + kBinWidth - 1) << ',' << io::format_double(t.mean) << ','
        << io::format_double(t.se) << '\n';
  }
  io::write_text(path, out.str());
}

TargetSet TargetSet::from_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const auto c_id = table.column("target_id");
  const auto c_series = table.column("series");
  const auto c_bin = table.column("age_bin");
  const auto c_mean = table.column("mean");
  const auto c_se = table.column("se");
  TargetSet set;
  for (const auto& row : table.rows) {
    Target t;
    t.id = row[c_id];
    t.series = parse_series(row[c_series]);
    const auto dash = row[c_bin].find('-');
    t.age_bin = static_cast<int>(io::parse_double(row[c_bin].substr(0, dash)));
    t.mean = io::parse_double(row[c_mean]);
    t.se = io::parse_double(row[c_se]);
    if (!(t.se > 0.0)) throw std::invalid_argument("target '" + t.id + "' has se <= 0");
    set.targets.push_back(std::move(t));
  }
  if (set.targets.size() != static_cast<std::size_t>(kNumOutputs)) {
    throw std::invalid_argument("targets file must hold 36 rows");
  }
  const auto names = output_names();
  for (int i = 0; i < kNumOutputs; ++i) {
    if (set.targets[static_cast<std::size_t>(i)].id != names[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("targets file rows out of canonical order at row " +
                                  std::to_string(i + 1));
    }
  }
  return set;
}

double floor_se(double se, double mean) {
  return std::max(se, 1e-4 * std::max(std::abs(mean), 0.01));
}

TargetSet generate_targets(const NatHistParams& params, const LifeTable& lt,
                           const TargetGenOptions& opts) {
  if (opts.runs < 2) throw std::invalid_argument("target generation needs runs >= 2");
  if (opts.n_adenoma < 1 || opts.n_incid < 1) {
    throw std::invalid_argument("target generation needs positive population sizes");
  }
  const auto runs = static_cast<Eigen::Index>(opts.runs);
  Eigen::MatrixXd draws(runs, kNumOutputs);
  for (Eigen::Index r = 0; r < runs; ++r) {
    const auto run_index = static_cast<std::uint64_t>(opts.same_seed_each_run ? 0 : r);
    const auto adenoma = run_microsim(params, lt, opts.n_adenoma, derive_seed(opts.seed, run_index, 1));
    const auto incid = run_microsim(params, lt, opts.n_incid, derive_seed(opts.seed, run_index, 2));
    for (int b = 0; b < kNumBins; ++b) {
      for (Series s : {Series::AdenomaPrev, Series::PropSmall}) {
        draws(r, output_index(s, b)) = adenoma.at(s, b);
      }
      for (Series s : {Series::IncidEarly, Series::IncidLate}) {
        draws(r, output_index(s, b)) = incid.at(s, b);
      }
    }
  }

  TargetSet set;
  const auto names = output_names();
  for (int j = 0; j < kNumOutputs; ++j) {
    const auto col = draws.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(runs - 1);
    const double se = std::sqrt(var / static_cast<double>(runs));
    const double floored = floor_se(se, mean);
    if (floored != se) {
      set.warnings.push_back("target " + names[static_cast<std::size_t>(j)] +
                             ": se floored to " + io::format_double(floored));
    }
    set.targets.push_back({names[static_cast<std::size_t>(j)],
                           static_cast<Series>(j / kNumBins), bin_start_age(j % kNumBins), mean,
                           floored});
  }
  return set;
}

}  // namespace baycann::nathist
