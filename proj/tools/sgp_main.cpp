// Command-line harness: simulate | run | bench | validate.
// Exit codes: 0 success, 2 configuration error, 3 all windows failed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "sgp/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
  std::string csv;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value)");
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set admm.workers=4");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "run seed")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "max concurrent workers");
  cmd->add_option("--data", args.csv, "input CSV (overrides data.csv)");
}

sgp::RunConfig build_config(const CommonArgs& args) {
  sgp::RunConfig cfg = sgp::load_config(args.config_path, args.overrides);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed_set) cfg.seed = args.seed;
  if (args.threads >= 0) cfg.threads = args.threads;
  if (!args.csv.empty()) cfg.csv_path = args.csv;
  cfg.validate();
  return cfg;
}

std::filesystem::path prepare_out(const sgp::RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int cmd_simulate(const CommonArgs& args) {
  sgp::RunConfig cfg = build_config(args);
  sgp::SyntheticSpec spec = cfg.synth;
  spec.seed = cfg.synth_seed();
  const sgp::TimeSeriesDataset data = sgp::generate(spec);
  const auto dir = prepare_out(cfg);
  const auto path = dir / "synthetic.csv";
  sgp::write_csv(data, path.string());
  std::cout << "wrote " << path.string() << " (" << data.size()
            << " points, seed " << spec.seed << ")\n";
  return 0;
}

int cmd_run(const CommonArgs& args) {
  sgp::RunConfig cfg = build_config(args);
  const sgp::RunReport report = sgp::run_pipeline(cfg);
  const auto dir = prepare_out(cfg);
  sgp::write_predictions_csv(report, (dir / "predictions.csv").string());
  sgp::write_report_json(report, (dir / "report.json").string());
  sgp::write_admm_trace(report, (dir / "admm_trace.txt").string());
  std::cout << sgp::summarize(report);
  std::cout << "outputs in " << dir.string() << "\n";
  if (report.windows_failed == static_cast<int>(report.windows.size()))
    return 3;
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  sgp::RunConfig cfg = build_config(args);
  const sgp::BenchReport report = sgp::bench_pipeline(cfg);
  const auto dir = prepare_out(cfg);
  sgp::write_bench_json(report, (dir / "bench.json").string());
  std::cout << sgp::summarize(report);
  return 0;
}

int cmd_validate() {
  const auto checks = sgp::validate_suite();
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%-40s %s  (%s)\n", c.name.c_str(),
                c.passed ? "PASS" : "FAIL", c.detail.c_str());
    all = all && c.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scalable GP traffic forecasting"};
  app.require_subcommand(1);

  CommonArgs sim_args, run_args, bench_args;
  CLI::App* sim = app.add_subcommand("simulate", "write a synthetic CSV");
  add_common(sim, sim_args);
  CLI::App* run = app.add_subcommand("run", "rolling-window experiment");
  add_common(run, run_args);
  CLI::App* bench = app.add_subcommand("bench", "K-sweep timing benchmark");
  add_common(bench, bench_args);
  CLI::App* validate =
      app.add_subcommand("validate", "quick oracle self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (run->parsed()) return cmd_run(run_args);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (validate->parsed()) return cmd_validate();
  } catch (const sgp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
