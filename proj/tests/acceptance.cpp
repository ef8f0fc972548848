// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero when any criterion fails.

#include "baycann/ann.hpp"
#include "baycann/calibrate.hpp"
#include "baycann/doe.hpp"
#include "baycann/imis.hpp"
#include "baycann/io.hpp"
#include "baycann/nathist.hpp"
#include "baycann/pipeline.hpp"
#include "baycann/stats.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace baycann;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kBaseSeed = 20200101;
constexpr int kReplications = 10;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "):" << o.detail.str()
            << std::endl;
  if (!o.pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  return {m.col(j).data(), m.col(j).data() + m.rows()};
}

pipeline::PipelineConfig full_config(std::uint64_t seed, const fs::path& dir) {
  pipeline::PipelineConfig c;
  c.apply_scale(pipeline::Scale::Full);
  c.seed = seed;
  c.out_dir = dir;
  c.validate();
  return c;
}

bool covers_truth(const calibrate::Posterior& post, std::string& misses) {
  const Eigen::VectorXd truth = nathist::calibrated_vector(nathist::NatHistParams::base_case());
  const auto sum = post.summarize();
  bool all = true;
  for (std::size_t j = 0; j < sum.size(); ++j) {
    const double t = truth[static_cast<Eigen::Index>(j)];
    if (!(sum[j].q025 <= t && t <= sum[j].q975)) {
      all = false;
      misses += " " + sum[j].name;
    }
  }
  return all;
}

// ---------------------------------------------------------------------------

void criterion5() {
  Outcome o;
  {
    const auto t0 = Clock::now();
    calibrate::HmcConfig cfg;
    cfg.seed = 505;
    const auto post = calibrate::hmc_sample(calibrate::GaussianDensity::standard(9), cfg);
    double worst_z = 0.0, worst_var = 0.0, worst_rhat = 0.0;
    for (const auto& s : post.summarize()) {
      worst_z = std::max(worst_z, std::abs(s.mean) * std::sqrt(s.ess));
      worst_var = std::max(worst_var, std::abs(s.sd * s.sd - 1.0));
      worst_rhat = std::max(worst_rhat, s.rhat);
    }
    const double secs = seconds_since(t0);
    o.detail << " HMC max|mean|*sqrt(ESS)=" << worst_z << " max|var-1|=" << worst_var
             << " max R-hat=" << worst_rhat << " (" << secs << " s);";
    o.require(worst_z < 4.0, "HMC mean");
    o.require(worst_var < 0.1, "HMC variance");
    o.require(worst_rhat <= 1.02, "HMC R-hat");
    o.require(secs < 60.0, "HMC runtime");
  }
  {
    const auto t0 = Clock::now();
    const auto p = doe::PriorSpec::crc();
    const Eigen::VectorXd mu = 0.5 * (p.lower() + p.upper());
    const Eigen::VectorXd sd = 0.05 * (p.upper() - p.lower());
    const imis::LogLikelihood ll = [&](const Eigen::VectorXd& x) {
      return -0.5 * ((x - mu).array() / sd.array()).square().sum();
    };
    imis::ImisConfig cfg;
    cfg.max_iterations = 500;
    cfg.seed = 506;
    const Eigen::VectorXd m = imis::imis_run(ll, p, cfg).posterior.means();
    // Monte Carlo SE from independent replicates.
    constexpr int kReps = 10;
    Eigen::MatrixXd reps(kReps, 9);
    for (int k = 0; k < kReps; ++k) {
      cfg.seed = 600 + static_cast<std::uint64_t>(k);
      reps.row(k) = imis::imis_run(ll, p, cfg).posterior.means().transpose();
    }
    const Eigen::RowVectorXd rm = reps.colwise().mean();
    const Eigen::VectorXd mcse =
        ((reps.rowwise() - rm).array().square().colwise().sum() / (kReps - 1)).sqrt().transpose();
    const double worst = ((m - mu).array().abs() / mcse.array()).maxCoeff();
    const double secs = seconds_since(t0);
    o.detail << " IMIS max|mean-centre|/MCSE=" << worst << " (" << secs << " s, 11 runs)";
    o.require(worst < 4.0, "IMIS mean");
    o.require(secs < 60.0, "IMIS runtime");
  }
  report(5, "sampler oracles", o);
}

void criterion6() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto priors = doe::PriorSpec::crc();
  const auto lt = nathist::LifeTable::gompertz_makeham();
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto prior_draw = [&] {
    Eigen::VectorXd th(9);
    for (Eigen::Index i = 0; i < 9; ++i) th[i] = priors.lower()[i] + priors.range()[i] * unif(rng);
    return th;
  };

  // Jacobian vs central differences.
  double jac_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    ann::AnnConfig cfg;
    cfg.hidden_layers = {20, 20};
    const auto net = ann::AnnModel::initialize(cfg, 1000 + static_cast<std::uint64_t>(k));
    Eigen::VectorXd x(9);
    for (auto& v : x) v = 2.0 * unif(rng) - 1.0;
    const Eigen::MatrixXd J = net.input_gradient(x);
    for (Eigen::Index i = 0; i < 9; ++i) {
      Eigen::VectorXd a = x, b = x;
      a[i] += 1e-5;
      b[i] -= 1e-5;
      const Eigen::VectorXd fd = (net.forward(a) - net.forward(b)) / 2e-5;
      for (Eigen::Index r = 0; r < fd.size(); ++r) {
        jac_err = std::max(jac_err, std::abs(fd[r] - J(r, i)) / std::max(1.0, std::abs(fd[r])));
      }
    }
  }
  o.detail << " jacobian " << jac_err << ";";
  o.require(jac_err <= 1e-5, "jacobian");

  // Row sums.
  double row_err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto params = nathist::with_calibrated(nathist::NatHistParams::base_case(), prior_draw());
    const double age = 50.0 + std::floor(51.0 * unif(rng));
    const auto P = nathist::transition_probs(params, std::min(age, 100.0), lt);
    row_err = std::max(row_err, (P.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  o.detail << " row sums " << row_err << ";";
  o.require(row_err <= 1e-12, "row sums");

  // Trace conservation.
  double trace_err = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto params = nathist::with_calibrated(nathist::NatHistParams::base_case(), prior_draw());
    const auto res = nathist::run_cohort(params, lt);
    trace_err = std::max(trace_err, (res.trace.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  o.detail << " trace " << trace_err << ";";
  o.require(trace_err <= 1e-12, "trace conservation");

  // Microsim vs cohort, 5 binomial SEs with the denominator in individuals.
  int micro_bad = 0;
  for (int k = 0; k < 10; ++k) {
    const auto params = nathist::with_calibrated(nathist::NatHistParams::base_case(), prior_draw());
    const auto cohort = nathist::run_cohort(params, lt);
    const auto micro = nathist::run_microsim_detailed(params, lt, 50000, 700 + static_cast<std::uint64_t>(k));
    const auto& t = micro.tallies;
    for (int s = 0; s < nathist::kNumSeries; ++s) {
      for (int b = 0; b < nathist::kNumBins; ++b) {
        const auto series = static_cast<nathist::Series>(s);
        double den = series == nathist::Series::AdenomaPrev ? t.alive[b]
                     : series == nathist::Series::PropSmall ? t.adenoma[b]
                                                            : t.undiagnosed[b];
        den /= nathist::kBinWidth;
        if (den < 1.0) continue;
        const double q = cohort.outputs.at(series, b);
        const double se = std::sqrt(std::max(q * (1.0 - q), 1e-12) / den);
        if (std::abs(micro.outputs.at(series, b) - q) > 5.0 * se + 1e-12) ++micro_bad;
      }
    }
  }
  o.detail << " microsim outliers " << micro_bad << ";";
  o.require(micro_bad == 0, "microsim agreement");

  // Prior recovery, both samplers.
  double ks_hmc = 0.0, ks_imis = 0.0;
  {
    calibrate::HmcConfig cfg;
    cfg.warmup = 500;
    cfg.seed = 607;
    const auto post = calibrate::hmc_sample(calibrate::BoxPriorDensity(priors), cfg);
    for (Eigen::Index j = 0; j < 9; ++j) {
      ks_hmc = std::max(ks_hmc, stats::ks_uniform(column(post.draws, j), priors.lower()[j], priors.upper()[j]));
    }
    imis::ImisConfig icfg;
    icfg.seed = 608;
    const auto r = imis::imis_run([](const Eigen::VectorXd&) { return 0.0; }, priors, icfg);
    for (Eigen::Index j = 0; j < 9; ++j) {
      ks_imis = std::max(ks_imis,
                         stats::ks_uniform(column(r.posterior.draws, j), priors.lower()[j], priors.upper()[j]));
    }
  }
  o.detail << " KS hmc " << ks_hmc << " imis " << ks_imis << ";";
  o.require(ks_hmc < 0.05 && ks_imis < 0.05, "prior recovery");

  // Round trips.
  double rt = 0.0;
  {
    Eigen::MatrixXd x(100, 9);
    for (Eigen::Index i = 0; i < 100; ++i) x.row(i) = prior_draw().transpose();
    const auto sc = doe::ColumnScaler::fit(x);
    rt = std::max(rt, (sc.unscale(sc.scale(x)) - x).cwiseAbs().maxCoeff());
    const calibrate::BoxTransform tr(priors);
    for (int k = 0; k < 1000; ++k) {
      Eigen::VectorXd u(9);
      for (auto& v : u) v = 8.0 * unif(rng) - 4.0;
      rt = std::max(rt, (tr.transform(tr.untransform(u)) - u).cwiseAbs().maxCoeff());
    }
  }
  o.detail << " round trips " << rt << ";";
  o.require(rt <= 1e-10, "round trips");

  const double secs = seconds_since(t0);
  o.detail << " " << secs << " s";
  o.require(secs < 300.0, "runtime");
  report(6, "numerical properties", o);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BAYCANN_CLI) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Two desk-scale CLI runs from one config file. Returns the desk train report
// path for criterion 1.
fs::path criterion7(const fs::path& work, double& desk_seconds) {
  Outcome o;
  const auto dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  pipeline::PipelineConfig cfg;
  cfg.apply_scale(pipeline::Scale::Desk);
  cfg.seed = 707;
  auto j = cfg.to_json();
  j.erase("out_dir");
  std::ofstream(dir / "config.json") << j.dump(2) << "\n";

  std::vector<fs::path> runs{dir / "run_a", dir / "run_b"};
  for (const auto& r : runs) {
    const auto t0 = Clock::now();
    const int rc = run_cli("pipeline --config " + (dir / "config.json").string() + " --out-dir " + r.string());
    if (r == runs.front()) desk_seconds = seconds_since(t0);
    o.require(rc == 0, "pipeline exit code " + std::to_string(rc));
  }
  int csvs = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(runs[0])) {
    if (e.path().extension() != ".csv") continue;
    ++csvs;
    const auto other = runs[1] / e.path().filename();
    if (!fs::exists(other) || io::read_text(e.path()) != io::read_text(other)) {
      ++differing;
      o.detail << " differs: " << e.path().filename().string() << ";";
    }
  }
  o.detail << " " << csvs << " CSV artifacts compared, " << differing << " differ";
  o.require(csvs >= 9 && differing == 0, "byte identity");
  report(7, "reproducibility", o);
  return runs[0] / "train_report.json";
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--work-dir") work = argv[i + 1];
  }
  fs::create_directories(work);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);

  std::cerr << "[acceptance] sampler oracles\n";
  criterion5();
  std::cerr << "[acceptance] property suite\n";
  criterion6();

  std::cerr << "[acceptance] desk-scale reproducibility runs\n";
  double desk_seconds = 0.0;
  const auto desk_report = criterion7(work, desk_seconds);

  // Main full-scale run: every stage.
  std::cerr << "[acceptance] full-scale pipeline\n";
  const auto full_dir = work / "full";
  fs::remove_all(full_dir);
  auto t0 = Clock::now();
  pipeline::Pipeline full(full_config(kBaseSeed, full_dir));
  full.gen_targets();
  full.run_doe();
  full.train();
  const double full_seconds = seconds_since(t0);
  full.calibrate();
  full.run_imis();
  const auto& cmp = full.compare();
  full.write_plot_data();
  full.write_manifest();

  {
    Outcome o;
    const auto& rep = *full.train_report();
    double min_r2 = 1.0;
    for (const auto& r : rep.r2) {
      if (r) min_r2 = std::min(min_r2, *r);
    }
    const auto desk = nlohmann::json::parse(io::read_text(desk_report));
    const double desk_r2 = desk.at("report").at("aggregate_r2").get<double>();
    o.detail << " full aggregate R2 " << rep.aggregate_r2 << ", min per-output " << min_r2
             << " (targets+design+training " << full_seconds << " s); desk aggregate R2 " << desk_r2
             << " (desk pipeline " << desk_seconds << " s)";
    o.require(rep.aggregate_r2 >= 0.99, "full aggregate");
    o.require(min_r2 >= 0.95, "per-output");
    o.require(desk_r2 >= 0.95, "desk aggregate");
    o.require(full_seconds < 1800.0 && desk_seconds < 300.0, "runtime");
    report(1, "surrogate fidelity", o);
  }

  // Replications: independent seeds for targets, design, training and HMC.
  std::cerr << "[acceptance] coverage replications\n";
  int covered = 0;
  std::ostringstream cov_detail;
  for (int r = 0; r < kReplications; ++r) {
    std::string misses;
    bool ok = false;
    if (r == 0) {
      ok = covers_truth(full.baycann_posterior(), misses);
    } else {
      const auto dir = work / ("replication_" + std::to_string(r));
      fs::remove_all(dir);
      pipeline::Pipeline rep(full_config(kBaseSeed + static_cast<std::uint64_t>(r), dir));
      rep.gen_targets();
      rep.run_doe();
      rep.train();
      ok = covers_truth(rep.calibrate(), misses);
    }
    std::cerr << "[acceptance]   replication " << r << (ok ? " covers all" : " misses:" + misses) << "\n";
    covered += ok ? 1 : 0;
    cov_detail << " r" << r << (ok ? "=ok" : "=miss(" + misses.substr(1) + ")");
  }
  {
    Outcome o;
    o.detail << " " << covered << "/" << kReplications << " replications cover all 9 truths;" << cov_detail.str();
    o.require(covered >= 9, "coverage");
    report(2, "truth recovery", o);
  }

  {
    Outcome o;
    const int below = cmp.ratios_below_one();
    o.detail << " " << below << "/9 ratios below 1:";
    for (const auto& row : cmp.rows) {
      o.detail << " " << row.name << "=" << (row.ratio ? std::to_string(*row.ratio) : "NA");
    }
    o.require(below >= 7, "ratio count");
    report(3, "relative accuracy", o);
  }

  // Budget-matched IMIS on the same targets.
  std::cerr << "[acceptance] budget-matched IMIS\n";
  {
    Outcome o;
    const auto dir = work / "budget";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* f : {"targets.csv", "truth.csv", "posterior_baycann.json"}) {
      fs::copy_file(full_dir / f, dir / f);
    }
    auto cfg = full_config(kBaseSeed, dir);
    cfg.imis_match_budget = true;
    pipeline::Pipeline budget(cfg);
    const auto& res = budget.run_imis();
    const double hmc_s = full.wall_seconds().at("calibrate");
    const double imis_s = budget.wall_seconds().at("imis");
    const long hmc_evals = full.baycann_posterior().model_evaluations;
    o.detail << " budget " << cfg.doe_size + hmc_evals << " evaluations (" << cfg.doe_size << " design + "
             << hmc_evals << " surrogate); IMIS used " << res.evaluations << " in " << imis_s
             << " s vs surrogate calibration " << hmc_s << " s";
    o.require(hmc_s < imis_s, "wall-clock");
    report(4, "efficiency", o);
  }

  std::cerr << "[acceptance] " << failures << " criteria failed\n";
  return failures == 0 ? 0 : 1;
}
