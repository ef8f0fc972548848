// baycann: command-line driver for the calibration pipeline.

#include "baycann/io.hpp"
#include "baycann/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace bp = baycann::pipeline;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string scale;
  std::string life_table;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--scale", o.scale, "size preset")->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--life-table", o.life_table, "life-table CSV (age,mu)");
}

bp::PipelineConfig build_config(const CommonOptions& o) {
  bp::PipelineConfig cfg = o.config.empty() ? bp::PipelineConfig{} : bp::PipelineConfig::load(o.config);
  if (!o.scale.empty()) cfg.apply_scale(bp::parse_scale(o.scale));
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.life_table.empty()) cfg.life_table = o.life_table;
  cfg.validate();
  return cfg;
}

void print_seeds(const bp::PipelineConfig& cfg, const std::string& stage) {
  std::cerr << "config " << cfg.hash() << " seed " << cfg.seed << " stage-seed "
            << cfg.stage_seed(stage) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-based Bayesian calibration of a colorectal cancer natural-history model"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* gen = app.add_subcommand("gen-targets", "simulate the 36 calibration targets");
  auto* doe = app.add_subcommand("doe", "Latin hypercube design and simulator runs");
  auto* train = app.add_subcommand("train", "fit the neural-network surrogate");
  auto* cal = app.add_subcommand("calibrate", "HMC on the surrogate posterior");
  auto* imis = app.add_subcommand("imis", "IMIS against the simulator");
  auto* pipe = app.add_subcommand("pipeline", "run every stage");
  for (auto* c : {gen, doe, train, cal, imis, pipe}) add_common(c, common);

  auto* cmp = app.add_subcommand("compare", "compare two posteriors against the truth");
  std::string post_a, post_b, truth, cmp_out;
  cmp->add_option("posterior_a", post_a, "first posterior CSV")->required();
  cmp->add_option("posterior_b", post_b, "second posterior CSV")->required();
  cmp->add_option("truth", truth, "truth CSV (parameter,value)")->required();
  cmp->add_option("--out", cmp_out, "write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmp->parsed()) {
      const auto a = baycann::calibrate::Posterior::read_csv(post_a);
      const auto b = baycann::calibrate::Posterior::read_csv(post_b);
      const auto report = bp::compare_posteriors(a, b, bp::read_truth_csv(truth));
      std::cout << report.render_table();
      if (!cmp_out.empty()) baycann::io::write_text(cmp_out, report.to_json().dump(2) + "\n");
      return 0;
    }

    const auto cfg = build_config(common);
    bp::DirectoryLock lock(cfg.out_dir);
    bp::Pipeline p(cfg);
    if (gen->parsed()) {
      print_seeds(cfg, "gen-targets");
      p.gen_targets();
    } else if (doe->parsed()) {
      print_seeds(cfg, "doe");
      p.run_doe();
    } else if (train->parsed()) {
      print_seeds(cfg, "train");
      p.train();
      const auto& r = *p.train_report();
      std::cout << "validation R2 " << r.aggregate_r2 << '\n';
    } else if (cal->parsed()) {
      print_seeds(cfg, "calibrate");
      p.calibrate();
    } else if (imis->parsed()) {
      print_seeds(cfg, "imis");
      p.run_imis();
    } else if (pipe->parsed()) {
      print_seeds(cfg, "pipeline");
      p.run_all();
      std::cout << p.compare().render_table();
    }
    p.write_manifest();
    return 0;
  } catch (const bp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const bp::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
