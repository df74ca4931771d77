#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mfgcn/config.hpp"
#include "mfgcn/io.hpp"

namespace mfgcn::cli {

enum Exit : int { ok = 0, config_error = 2, not_converged = 3, check_failed = 4 };

struct TaskContext {
  ExperimentConfig cfg;
  std::string hash;
  std::filesystem::path out;
  std::ostream& screen;
};

inline const char* kTasks[] = {"solve", "turnpike", "ergodic", "discounted", "linearize", "corrector", "master-probe", "check"};

/// Runs one task, writing its artifacts under ctx.out. Returns the exit code.
int run_task(const std::string& task, TaskContext& ctx, RunRecord& rec);

/// The `check` task: invariants of every module on the configured grid.
int run_checks(TaskContext& ctx, RunRecord& rec);

}  // namespace mfgcn::cli
