#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "tasks.hpp"

using namespace mfgcn;

int main(int argc, char** argv) {
  CLI::App app{"Common-noise mean field game experiments"};
  std::string task, config_path, out_dir;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> names(std::begin(cli::kTasks), std::end(cli::kTasks));
  app.add_option("task", task, "Task to run")->required()->check(CLI::IsMember(names));
  app.add_option("--config", config_path, "YAML configuration file")->required();
  app.add_option("--out", out_dir, "Output directory (default: $MFGCN_OUT, then run.out, then ./out)");
  app.add_option("--threads", threads, "OpenMP threads (default: runtime choice)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Overrides run.seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cli::config_error;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return cli::config_error;
  }
  if (seed) cfg.seed = *seed;
  if (threads > 0) omp_set_num_threads(threads);

  std::filesystem::path out = "out";
  if (!cfg.out.empty()) out = cfg.out;
  if (const char* env = std::getenv("MFGCN_OUT"); env && *env) out = env;
  if (!out_dir.empty()) out = out_dir;

  cli::TaskContext ctx{cfg, config_hash(cfg), out, std::cout};
  RunRecord rec;
  const auto t0 = std::chrono::steady_clock::now();
  int code = cli::ok;
  try {
    code = cli::run_task(task, ctx, rec);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::config_error;
  } catch (const std::exception& e) {
    std::cerr << task << " failed: " << e.what() << "\n";
    return cli::not_converged;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.exit_code = code;
  std::cout << "  config hash " << rec.config_hash << ", " << rec.manifest.size() << " files in " << out.string() << ", " << rec.wall_seconds
            << " s\n";
  if (code == cli::not_converged) std::cerr << task << ": solver did not reach the tolerance\n";
  return code;
}
