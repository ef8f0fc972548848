#include "baycann/pipeline.hpp"

#include "baycann/io.hpp"
#include "baycann/rng.hpp"
#include "baycann/stats.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace baycann::pipeline {

namespace fs = std::filesystem;

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::Desk;
  if (s == "full") return Scale::Full;
  throw ConfigError("unknown scale '" + s + "' (expected desk or full)");
}

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::apply_scale(Scale s) {
  if (s == Scale::Desk) {
    doe_size = 2000;
    hmc.chains = 2;
    hmc.warmup = 500;
    hmc.iterations = 500;
  } else {
    doe_size = 10000;
    hmc.chains = 4;
    hmc.warmup = 1000;
    hmc.iterations = 1000;
  }
}

void PipelineConfig::validate() const {
  if (doe_size < 2) throw ConfigError("doe size must be >= 2");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  if (targets.runs < 2 || targets.n_adenoma < 1 || targets.n_incid < 1) {
    throw ConfigError("invalid target generation settings");
  }
  if (predictive_draws < 1 || density_grid_points < 2) {
    throw ConfigError("invalid plot-data settings");
  }
  if (!life_table.empty() && !fs::exists(life_table)) {
    throw ConfigError("life table not found: " + life_table.string());
  }
  try {
    ann.validate();
    hmc.validate();
    imis.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"life_table", life_table.string()},
          {"out_dir", out_dir.string()},
          {"seed", seed},
          {"doe", {{"size", doe_size}, {"split_fraction", split_fraction}}},
          {"targets",
           {{"runs", targets.runs}, {"n_adenoma", targets.n_adenoma}, {"n_incid", targets.n_incid}}},
          {"ann", ann.to_json()},
          {"train", train.to_json()},
          {"hmc", hmc.to_json()},
          {"imis", imis.to_json()},
          {"imis_match_budget", imis_match_budget},
          {"predictive_draws", predictive_draws},
          {"density_grid_points", density_grid_points}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.life_table = j.value("life_table", std::string());
    c.out_dir = j.value("out_dir", c.out_dir.string());
    c.seed = j.value("seed", c.seed);
    if (j.contains("doe")) {
      c.doe_size = j["doe"].value("size", c.doe_size);
      c.split_fraction = j["doe"].value("split_fraction", c.split_fraction);
    }
    if (j.contains("targets")) {
      c.targets.runs = j["targets"].value("runs", c.targets.runs);
      c.targets.n_adenoma = j["targets"].value("n_adenoma", c.targets.n_adenoma);
      c.targets.n_incid = j["targets"].value("n_incid", c.targets.n_incid);
    }
    if (j.contains("ann")) c.ann = ann::AnnConfig::from_json(j["ann"]);
    if (j.contains("train")) c.train = ann::TrainOptions::from_json(j["train"]);
    if (j.contains("hmc")) c.hmc = calibrate::HmcConfig::from_json(j["hmc"]);
    if (j.contains("imis")) c.imis = imis::ImisConfig::from_json(j["imis"]);
    c.imis_match_budget = j.value("imis_match_budget", c.imis_match_budget);
    c.predictive_draws = j.value("predictive_draws", c.predictive_draws);
    c.density_grid_points = j.value("density_grid_points", c.density_grid_points);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return from_json(nlohmann::json::parse(io::read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

std::string PipelineConfig::hash() const {
  auto j = to_json();
  j.erase("out_dir");
  return io::hex64(io::fnv1a64(j.dump()));
}

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const {
  return derive_seed(seed, io::fnv1a64(stage));
}

nathist::LifeTable PipelineConfig::load_life_table() const {
  if (life_table.empty()) return nathist::LifeTable::gompertz_makeham();
  if (!fs::exists(life_table)) throw ConfigError("life table not found: " + life_table.string());
  try {
    return nathist::LifeTable::from_csv(life_table);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad life table: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Comparison

int ComparisonReport::ratios_below_one() const {
  int n = 0;
  for (const auto& r : rows) n += (r.ratio && *r.ratio < 1.0) ? 1 : 0;
  return n;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& r : rows) {
    params.push_back({{"name", r.name},
                      {"truth", r.truth},
                      {"mean_a", r.mean_a},
                      {"mean_b", r.mean_b},
                      {"dev_a", r.dev_a},
                      {"dev_b", r.dev_b},
                      {"ratio", r.ratio ? nlohmann::json(*r.ratio) : nlohmann::json(nullptr)}});
  }
  return {{"label_a", label_a},
          {"label_b", label_b},
          {"parameters", params},
          {"ratios_below_one", ratios_below_one()},
          {"wall_seconds", wall_seconds}};
}

void ComparisonReport::write_csv(const fs::path& path) const {
  std::ostringstream out;
  out << "parameter,truth,mean_a,mean_b,dev_a,dev_b,ratio\n";
  for (const auto& r : rows) {
    out << r.name << ',' << io::format_double(r.truth) << ',' << io::format_double(r.mean_a) << ','
        << io::format_double(r.mean_b) << ',' << io::format_double(r.dev_a) << ','
        << io::format_double(r.dev_b) << ',' << (r.ratio ? io::format_double(*r.ratio) : "NA")
        << '\n';
  }
  io::write_text(path, out.str());
}

std::string ComparisonReport::render_table() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "Parameter" << std::right << std::setw(14) << "Truth"
      << std::setw(16) << (label_a + " mean") << std::setw(16) << (label_b + " mean")
      << std::setw(16) << (label_a + " dev") << std::setw(16) << (label_b + " dev")
      << std::setw(12) << "Ratio" << '\n';
  out << std::setprecision(7) << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << r.name << std::right << std::setw(14) << r.truth
        << std::setw(16) << r.mean_a << std::setw(16) << r.mean_b << std::setw(16) << r.dev_a
        << std::setw(16) << r.dev_b << std::setw(12);
    if (r.ratio) {
      out << *r.ratio;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  return out.str();
}

ComparisonReport compare_means(const std::vector<std::string>& names, const Eigen::VectorXd& mean_a,
                               const Eigen::VectorXd& mean_b, const Eigen::VectorXd& truth) {
  const auto n = static_cast<Eigen::Index>(names.size());
  if (mean_a.size() != n || mean_b.size() != n || truth.size() != n) {
    throw std::invalid_argument("compare: parameter count mismatch");
  }
  ComparisonReport rep;
  for (Eigen::Index i = 0; i < n; ++i) {
    ComparisonRow r;
    r.name = names[static_cast<std::size_t>(i)];
    r.truth = truth[i];
    r.mean_a = mean_a[i];
    r.mean_b = mean_b[i];
    r.dev_a = std::abs(mean_a[i] - truth[i]);
    r.dev_b = std::abs(mean_b[i] - truth[i]);
    if (r.dev_b > 0.0) r.ratio = r.dev_a / r.dev_b;
    rep.rows.push_back(r);
  }
  return rep;
}

ComparisonReport compare_posteriors(const calibrate::Posterior& a, const calibrate::Posterior& b,
                                    const std::map<std::string, double>& truth) {
  if (a.names != b.names) throw std::invalid_argument("compare: posterior columns differ");
  Eigen::VectorXd t(static_cast<Eigen::Index>(a.names.size()));
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    const auto it = truth.find(a.names[i]);
    if (it == truth.end()) {
      throw std::invalid_argument("compare: no truth value for '" + a.names[i] + "'");
    }
    t[static_cast<Eigen::Index>(i)] = it->second;
  }
  if (truth.size() != a.names.size()) {
    throw std::invalid_argument("compare: truth file has extra parameters");
  }
  return compare_means(a.names, a.means(), b.means(), t);
}

std::map<std::string, double> read_truth_csv(const fs::path& path) {
  const auto table = io::read_csv(path);
  const auto c_name = table.column("parameter");
  const auto c_value = table.column("value");
  std::map<std::string, double> out;
  for (const auto& row : table.rows) out[row[c_name]] = io::parse_double(row[c_value]);
  return out;
}

void write_truth_csv(const fs::path& path, const std::vector<std::string>& names,
                     const Eigen::VectorXd& values) {
  std::ostringstream out;
  out << "parameter,value\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i] << ',' << io::format_double(values[static_cast<Eigen::Index>(i)]) << '\n';
  }
  io::write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Plot data helpers

PredictiveBand posterior_predictive(const calibrate::Posterior& posterior,
                                    const nathist::LifeTable& lt, int draws) {
  const Eigen::Index n = posterior.draws.rows();
  if (n < 1) throw std::invalid_argument("posterior has no draws");
  const int k = std::min<int>(draws, static_cast<int>(n));
  Eigen::MatrixXd outs(k, nathist::kNumOutputs);
  const auto base = nathist::NatHistParams::base_case();
  for (int i = 0; i < k; ++i) {
    // Evenly spaced rows keep the selection deterministic.
    const Eigen::Index row = static_cast<Eigen::Index>(i) * n / k;
    const Eigen::VectorXd theta = posterior.draws.row(row).transpose();
    outs.row(i) = nathist::run_cohort(nathist::with_calibrated(base, theta), lt)
                      .outputs.as_vector()
                      .transpose();
  }
  PredictiveBand band;
  band.ids = nathist::output_names();
  band.mean = outs.colwise().mean().transpose();
  band.q025.resize(nathist::kNumOutputs);
  band.q975.resize(nathist::kNumOutputs);
  for (int j = 0; j < nathist::kNumOutputs; ++j) {
    std::vector<double> col(outs.col(j).data(), outs.col(j).data() + k);
    band.q025[j] = stats::quantile(col, 0.025);
    band.q975[j] = stats::quantile(col, 0.975);
  }
  return band;
}

imis::LogLikelihood simulator_log_likelihood(const nathist::TargetSet& targets,
                                             const nathist::LifeTable& lt) {
  const Eigen::VectorXd y = targets.means();
  const Eigen::VectorXd sigma = targets.ses();
  const auto base = nathist::NatHistParams::base_case();
  return [y, sigma, lt, base](const Eigen::VectorXd& theta) {
    const auto out = nathist::run_cohort(nathist::with_calibrated(base, theta), lt);
    return calibrate::normal_log_likelihood(y, sigma, out.outputs.as_vector());
  };
}

// ---------------------------------------------------------------------------
// Lock

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".baycann.lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw ConfigError("output directory is locked by another run: " + path_.string());
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), life_table_(cfg_.load_life_table()) {
  cfg_.validate();
  fs::create_directories(cfg_.out_dir);
}

nlohmann::json Pipeline::metadata(const std::string& stage) const {
  return {{"stage", stage},
          {"config_hash", cfg_.hash()},
          {"seed", cfg_.seed},
          {"stage_seed", cfg_.stage_seed(stage)}};
}

template <typename Fn>
auto Pipeline::timed(const std::string& stage, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      wall_seconds_[stage] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      auto result = fn();
      wall_seconds_[stage] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return result;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

const nathist::TargetSet& Pipeline::gen_targets() {
  targets_ = timed("gen-targets", [&] {
    auto opts = cfg_.targets;
    opts.seed = cfg_.stage_seed("gen-targets");
    return nathist::generate_targets(nathist::NatHistParams::base_case(), life_table_, opts);
  });
  targets_->write_csv(artifact("targets.csv"));
  write_truth_csv(artifact("truth.csv"), doe::PriorSpec::crc().names(),
                  nathist::calibrated_vector(nathist::NatHistParams::base_case()));
  auto meta = metadata("gen-targets");
  meta["warnings"] = targets_->warnings;
  meta["wall_seconds"] = wall_seconds_["gen-targets"];
  io::write_text(artifact("targets.json"), meta.dump(2) + "\n");
  for (const auto& w : targets_->warnings) std::cerr << "warning: " << w << '\n';
  return *targets_;
}

const nathist::TargetSet& Pipeline::targets() {
  if (!targets_) {
    const auto path = artifact("targets.csv");
    if (!fs::exists(path)) throw ConfigError("targets not found: run gen-targets first");
    targets_ = nathist::TargetSet::from_csv(path);
  }
  return *targets_;
}

const doe::Design& Pipeline::run_doe() {
  design_ = timed("doe", [&] {
    return doe::run_design(doe::PriorSpec::crc(), cfg_.doe_size, cfg_.stage_seed("doe"), life_table_);
  });
  auto meta = metadata("doe");
  meta["wall_seconds"] = wall_seconds_["doe"];
  design_->write(artifact("design.csv"), artifact("design.json"), meta);
  if (!design_->dropped.empty()) {
    std::cerr << "warning: " << design_->dropped.size() << " design rows dropped\n";
  }
  return *design_;
}

const doe::Design& Pipeline::design() {
  if (!design_) {
    if (!fs::exists(artifact("design.csv"))) throw ConfigError("design not found: run doe first");
    design_ = doe::Design::read(artifact("design.csv"), artifact("design.json"));
  }
  return *design_;
}

const ann::AnnModel& Pipeline::train() {
  const auto& d = design();
  auto [train_set, valid_set] = doe::split(d, cfg_.split_fraction, cfg_.stage_seed("split"));
  auto [model, report] = timed("train", [&] {
    return ann::train(train_set, valid_set, cfg_.ann, cfg_.train, cfg_.stage_seed("train"));
  });
  model_ = std::move(model);
  train_report_ = std::move(report);
  model_->save(artifact("model.json"));
  auto meta = metadata("train");
  meta["report"] = train_report_->to_json();
  meta["train_rows"] = train_set.rows();
  meta["valid_rows"] = valid_set.rows();
  meta["wall_seconds"] = wall_seconds_["train"];
  io::write_text(artifact("train_report.json"), meta.dump(2) + "\n");
  ann::validate(*model_, valid_set).write_scatter_csv(artifact("validation_scatter.csv"),
                                                      d.output_names);
  return *model_;
}

const ann::AnnModel& Pipeline::model() {
  if (!model_) {
    if (!fs::exists(artifact("model.json"))) throw ConfigError("model not found: run train first");
    model_ = ann::AnnModel::load(artifact("model.json"));
  }
  return *model_;
}

const calibrate::Posterior& Pipeline::calibrate() {
  const auto& m = model();
  const auto& t = targets();
  baycann_ = timed("calibrate", [&] {
    calibrate::LogPosterior lp(m, t, doe::PriorSpec::crc());
    auto hmc = cfg_.hmc;
    hmc.seed = cfg_.stage_seed("calibrate");
    auto post = calibrate::hmc_sample(lp, hmc);
    post.method = "baycann";
    return post;
  });
  diagnostics_ = calibrate::diagnostics(*baycann_);
  baycann_->write_csv(artifact("posterior_baycann.csv"));
  auto meta = metadata("calibrate");
  meta["summary"] = baycann_->summary_json();
  meta["diagnostics"] = diagnostics_->to_json();
  io::write_text(artifact("posterior_baycann.json"), meta.dump(2) + "\n");
  if (diagnostics_->status != calibrate::Status::Pass) {
    std::cerr << "warning: calibration diagnostics status "
              << calibrate::status_name(diagnostics_->status) << '\n';
    for (const auto& m : diagnostics_->messages) std::cerr << "  " << m << '\n';
  }
  return *baycann_;
}

const calibrate::Posterior& Pipeline::baycann_posterior() {
  if (!baycann_) {
    if (!fs::exists(artifact("posterior_baycann.csv"))) {
      throw ConfigError("surrogate posterior not found: run calibrate first");
    }
    baycann_ = calibrate::Posterior::read_csv(artifact("posterior_baycann.csv"));
    baycann_->method = "baycann";
  }
  return *baycann_;
}

const imis::ImisResult& Pipeline::run_imis() {
  const auto& t = targets();
  auto cfg = cfg_.imis;
  cfg.seed = cfg_.stage_seed("imis");
  long budget = 0;
  if (cfg_.imis_match_budget) {
    long surrogate_evals = 0;
    if (baycann_) {
      surrogate_evals = baycann_->model_evaluations;
    } else if (fs::exists(artifact("posterior_baycann.json"))) {
      const auto j = nlohmann::json::parse(io::read_text(artifact("posterior_baycann.json")));
      surrogate_evals = j.at("summary").at("model_evaluations").get<long>();
    } else {
      throw ConfigError("budget matching needs the surrogate posterior: run calibrate first");
    }
    budget = cfg_.doe_size + surrogate_evals;
    cfg.max_iterations = static_cast<int>(
        std::max<long>(0, (budget - cfg.n_initial + cfg.batch - 1) / cfg.batch));
  }
  imis_ = timed("imis", [&] {
    return imis::imis_run(simulator_log_likelihood(t, life_table_), doe::PriorSpec::crc(), cfg);
  });
  imis_posterior_ = imis_->posterior;
  imis_->posterior.write_csv(artifact("posterior_imis.csv"));
  auto meta = metadata("imis");
  meta["summary"] = imis_->summary_json();
  meta["max_iterations"] = cfg.max_iterations;
  meta["evaluation_budget"] = budget;
  io::write_text(artifact("posterior_imis.json"), meta.dump(2) + "\n");
  if (!imis_->converged) {
    std::cerr << "note: IMIS stopped at max iterations (unique fraction "
              << imis_->unique_fraction << ")\n";
  }
  return *imis_;
}

const ComparisonReport& Pipeline::compare() {
  const auto& a = baycann_posterior();
  if (!imis_posterior_) {
    if (!fs::exists(artifact("posterior_imis.csv"))) {
      throw ConfigError("IMIS posterior not found: run imis first");
    }
    imis_posterior_ = calibrate::Posterior::read_csv(artifact("posterior_imis.csv"));
  }
  std::map<std::string, double> truth;
  if (fs::exists(artifact("truth.csv"))) {
    truth = read_truth_csv(artifact("truth.csv"));
  } else {
    const auto names = doe::PriorSpec::crc().names();
    const auto v = nathist::calibrated_vector(nathist::NatHistParams::base_case());
    for (std::size_t i = 0; i < names.size(); ++i) truth[names[i]] = v[static_cast<Eigen::Index>(i)];
  }
  comparison_ = compare_posteriors(a, *imis_posterior_, truth);
  // Stage wall-clock, from this process or from the stage sidecars.
  for (const auto& [stage, file] : std::vector<std::pair<std::string, std::string>>{
           {"gen-targets", "targets.json"}, {"doe", "design.json"}, {"train", "train_report.json"},
           {"calibrate", "posterior_baycann.json"}, {"imis", "posterior_imis.json"}}) {
    if (wall_seconds_.count(stage)) {
      comparison_->wall_seconds[stage] = wall_seconds_.at(stage);
    } else if (fs::exists(artifact(file))) {
      const auto j = nlohmann::json::parse(io::read_text(artifact(file)));
      if (j.contains("wall_seconds")) comparison_->wall_seconds[stage] = j["wall_seconds"].get<double>();
    }
  }
  comparison_->write_csv(artifact("comparison.csv"));
  auto meta = metadata("compare");
  meta["report"] = comparison_->to_json();
  io::write_text(artifact("comparison.json"), meta.dump(2) + "\n");
  return *comparison_;
}

void Pipeline::write_plot_data() {
  timed("plot-data", [&] {
    const auto& a = baycann_posterior();
    if (!imis_posterior_) imis_posterior_ = calibrate::Posterior::read_csv(artifact("posterior_imis.csv"));
    const auto priors = doe::PriorSpec::crc();

    std::ostringstream dens;
    dens << "parameter,x,prior,baycann,imis\n";
    for (Eigen::Index j = 0; j < priors.size(); ++j) {
      const auto& b = priors.bounds()[static_cast<std::size_t>(j)];
      std::vector<double> grid;
      for (int g = 0; g < cfg_.density_grid_points; ++g) {
        grid.push_back(b.lower + (b.upper - b.lower) * g / (cfg_.density_grid_points - 1));
      }
      const std::vector<double> da(a.draws.col(j).data(), a.draws.col(j).data() + a.draws.rows());
      const std::vector<double> db(imis_posterior_->draws.col(j).data(),
                                   imis_posterior_->draws.col(j).data() + imis_posterior_->draws.rows());
      const auto ka = stats::kde(da, grid);
      const auto kb = stats::kde(db, grid);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        dens << b.name << ',' << io::format_double(grid[g]) << ','
             << io::format_double(1.0 / (b.upper - b.lower)) << ',' << io::format_double(ka[g])
             << ',' << io::format_double(kb[g]) << '\n';
      }
    }
    io::write_text(artifact("density_grid.csv"), dens.str());

    const auto band = posterior_predictive(a, life_table_, cfg_.predictive_draws);
    const auto& t = targets();
    std::ostringstream pred;
    pred << "target_id,series,age_bin,target_mean,target_se,pred_mean,pred_q025,pred_q975\n";
    for (int i = 0; i < nathist::kNumOutputs; ++i) {
      const auto& tg = t.targets[static_cast<std::size_t>(i)];
      pred << tg.id << ',' << nathist::series_name(tg.series) << ',' << tg.age_bin << '-'
           << tg.age_bin + nathist::kBinWidth - 1 << ',' << io::format_double(tg.mean) << ','
           << io::format_double(tg.se) << ',' << io::format_double(band.mean[i]) << ','
           << io::format_double(band.q025[i]) << ',' << io::format_double(band.q975[i]) << '\n';
    }
    io::write_text(artifact("posterior_predictive.csv"), pred.str());
  });
}

void Pipeline::run_all() {
  gen_targets();
  run_doe();
  train();
  calibrate();
  run_imis();
  compare();
  write_plot_data();
  write_manifest();
}

void Pipeline::write_manifest() const {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& name : {"targets.csv", "truth.csv", "design.csv", "model.json",
                           "validation_scatter.csv", "posterior_baycann.csv", "posterior_imis.csv",
                           "comparison.csv", "density_grid.csv", "posterior_predictive.csv"}) {
    const auto path = cfg_.out_dir / name;
    if (!fs::exists(path)) continue;
    artifacts.push_back({{"file", name}, {"fnv1a64", io::hex64(io::fnv1a64(io::read_text(path)))}});
  }
  nlohmann::json stage_seeds;
  for (const auto& s : {"gen-targets", "doe", "split", "train", "calibrate", "imis"}) {
    stage_seeds[s] = cfg_.stage_seed(s);
  }
  const nlohmann::json manifest = {{"config_hash", cfg_.hash()},
                                   {"config", cfg_.to_json()},
                                   {"seed", cfg_.seed},
                                   {"stage_seeds", stage_seeds},
                                   {"artifacts", artifacts},
                                   {"wall_seconds", wall_seconds_}};
  io::write_text(cfg_.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace baycann::pipeline
