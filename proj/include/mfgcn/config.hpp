#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfgcn/ergodic.hpp"

namespace mfgcn {

/// Bad configuration text or values. line is 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what);
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

// zero | flat (value) | cosine (amp * cos(2 pi mode x))
struct FieldSpec {
  std::string kind = "zero";
  double amp = 0.0;
  int mode = 1;
  double value = 0.0;
};

// uniform | bump (center, width) | cosine (1 + amp cos(2 pi mode x)) | point (cell)
struct DensitySpec {
  std::string kind = "uniform";
  double center = 0.5, width = 0.1;
  double amp = 0.5;
  int mode = 1;
  int cell = 0;
};

struct ExperimentConfig {
  // grid
  int n = 0;
  // noise
  double sigma = 0.5;
  int epochs = 4;
  double horizon = 4.0;
  // coupling
  FieldSpec potential{"cosine", 0.2, 1, 0.0};
  std::vector<double> f_eigs{0.0, 1.0};
  FieldSpec terminal;
  std::vector<double> g_eigs{0.0};
  bool test_mode = false;  // allows negative kernel eigenvalues
  // solver
  double dt = 2e-3;
  double tol = 1e-7;
  int max_iters = 5000;
  Damping damping = Damping::fictitious_play;
  double theta = 1.0;
  double cfl = 0.5;
  // initial law
  DensitySpec m0{"bump", 0.3, 0.1, 0.5, 1, 0};
  // ergodic / discounted / corrector
  std::vector<double> horizons{8.0 / 3.0, 4.0, 16.0 / 3.0};
  std::vector<double> deltas{0.2, 0.1, 0.05};
  double epoch_len = 4.0 / 3.0;
  double stationarity_tol = 1e-3;
  double max_horizon = 12.0;
  DensitySpec anchor;  // second anchor; uniform by default
  // turnpike
  int pad = 1;
  double noise_floor = 1e-12;
  // linearize
  std::vector<double> eps{0.04, 0.02, 0.01};
  int directions = 10;
  // master-probe
  std::vector<double> t_grid{0.0, 0.1, 0.25};
  double t_ref = 9.0;
  std::vector<double> probe_horizons{3.0, 6.0};
  int refresh_steps = 5;
  // run
  std::uint64_t seed = 0;
  std::string out;  // not part of the hash
};

/// Parses the YAML-subset text (sections of key: value pairs). Unknown keys
/// and invalid values throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text of every hashed field, one `key=value` per line.
std::string canonical_text(const ExperimentConfig& cfg);
/// FNV-1a 64 of canonical_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);

Grid make_grid(const ExperimentConfig& cfg);
CouplingSpec make_coupling(const ExperimentConfig& cfg);
DensityField make_density(const Grid& g, const DensitySpec& d);
SolveParams make_solve_params(const ExperimentConfig& cfg);
NoiseTree make_tree(const ExperimentConfig& cfg);
ErgodicParams make_ergodic_params(const ExperimentConfig& cfg);

}  // namespace mfgcn
