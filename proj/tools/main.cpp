// Command-line experiment runner.
//
//   uncaps run <config-path> [--out DIR] [--seeds CSV] [--variants CSV] [--jobs N]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include "uncaps/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct RunOptions {
  std::string config_path;
  std::string out;
  std::string seeds;
  std::string variants;
  int jobs = 1;
};

void print_summary(const uncaps::ResultTable& table) {
  std::printf("%-12s %6s %14s %12s\n", "variant", "trials", "jumpstart", "stderr");
  for (const auto& a : table.aggregates()) {
    std::printf("%-12s %6d %14s %12s\n", a.variant.c_str(), a.trials, uncaps::format_short(a.jumpstart_mean).c_str(),
                uncaps::format_short(a.jumpstart_stderr).c_str());
  }
}

int run(const RunOptions& opt, CLI::App& app) {
  uncaps::ExperimentConfig cfg;
  try {
    cfg = uncaps::load_experiment_config(opt.config_path);
    uncaps::apply_env_overrides(cfg);
    if (app.count("--seeds")) uncaps::set_config_value(cfg, "experiment.seeds", opt.seeds);
    if (app.count("--variants")) uncaps::set_config_value(cfg, "experiment.variants", opt.variants);
    if (app.count("--out")) cfg.output_dir = opt.out;
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw uncaps::ConfigError(0, "output.dir", "cannot create '" + cfg.output_dir + "': " + ec.message());
  } catch (const uncaps::ConfigError& e) {
    std::cerr << "config error: " << opt.config_path << ": " << e.what() << "\n";
    return kExitConfig;
  }
  if (opt.jobs < 1) {
    std::cerr << "config error: --jobs must be >= 1\n";
    return kExitConfig;
  }

  uncaps::ExperimentResult result;
  try {
    result = uncaps::run_experiment(cfg, opt.jobs);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  try {
    uncaps::export_results(result, cfg, cfg.output_dir);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: export: " << e.what() << "\n";
    return kExitRuntime;
  }
  print_summary(result.table);
  for (const auto& f : result.failures) std::cerr << "runtime error: " << f.describe() << "\n";
  return result.ok() ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UncAPS experiment runner"};
  app.set_version_flag("--version", std::string(uncaps::kVersion));
  app.require_subcommand(1);

  RunOptions opt;
  CLI::App* run_cmd = app.add_subcommand("run", "Run every (variant, seed) cell of a config or manifest");
  run_cmd->add_option("config", opt.config_path, "Config file, or manifest.json of an earlier run")->required();
  run_cmd->add_option("--out", opt.out, "Output directory (overrides output.dir)");
  run_cmd->add_option("--seeds", opt.seeds, "Comma-separated trial seeds");
  run_cmd->add_option("--variants", opt.variants, "Comma-separated variants (StandardBO, UncAPS-EP, UncAPS+GA, UncAPS, DR)");
  run_cmd->add_option("--jobs", opt.jobs, "Cells to run concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  return run(opt, *run_cmd);
}
