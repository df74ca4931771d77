#include "mfgcn/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace mfgcn {

ConfigError::ConfigError(const std::string& key, int line, const std::string& what)
    : Error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + (key.empty() ? "" : key + ": ") + what),
      key_(key),
      line_(line) {}

namespace {

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

class Reader {
 public:
  std::map<std::string, int> lines;  // key path -> line, for later validation messages

  void keys(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) {
    if (!map.IsMap()) throw ConfigError(path, line_of(map), "expected a section of key: value pairs");
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      const std::string full = path.empty() ? k : path + "." + k;
      if (!allowed.count(k)) throw ConfigError(full, line_of(kv.first), "unknown key");
      lines[full] = line_of(kv.first);
    }
  }

  template <class T>
  void read(const YAML::Node& map, const std::string& path, const char* key, T& out) {
    YAML::Node v = map[key];
    if (!v) return;
    const std::string full = path + "." + key;
    if (!v.IsScalar()) throw ConfigError(full, line_of(v), "expected a scalar");
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(full, line_of(v), "cannot read '" + v.Scalar() + "'");
    }
  }

  void read_list(const YAML::Node& map, const std::string& path, const char* key, std::vector<double>& out) {
    YAML::Node v = map[key];
    if (!v) return;
    const std::string full = path + "." + key;
    if (!v.IsSequence()) throw ConfigError(full, line_of(v), "expected a list like [0.1, 0.2]");
    out.clear();
    for (const auto& e : v) {
      try {
        out.push_back(e.as<double>());
      } catch (const YAML::Exception&) {
        throw ConfigError(full, line_of(e), "cannot read list entry");
      }
    }
  }

  void read_field(const YAML::Node& map, const std::string& path, const char* key, FieldSpec& f) {
    YAML::Node v = map[key];
    if (!v) return;
    const std::string full = path + "." + key;
    keys(v, full, {"kind", "amp", "mode", "value"});
    read(v, full, "kind", f.kind);
    read(v, full, "amp", f.amp);
    read(v, full, "mode", f.mode);
    read(v, full, "value", f.value);
  }

  void read_density(const YAML::Node& map, const std::string& path, const char* key, DensitySpec& d) {
    YAML::Node v = map[key];
    if (!v) return;
    const std::string full = path.empty() ? key : path + "." + key;
    keys(v, full, {"kind", "center", "width", "amp", "mode", "cell"});
    read(v, full, "kind", d.kind);
    read(v, full, "center", d.center);
    read(v, full, "width", d.width);
    read(v, full, "amp", d.amp);
    read(v, full, "mode", d.mode);
    read(v, full, "cell", d.cell);
  }

  int line(const std::string& key) const {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  }
};

void require(bool ok, const Reader& r, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, r.line(key), what);
}

void validate_field(const FieldSpec& f, const Reader& r, const std::string& key) {
  require(f.kind == "zero" || f.kind == "flat" || f.kind == "cosine", r, key + ".kind", "expected zero, flat or cosine");
  require(f.mode >= 1, r, key + ".mode", "mode must be at least 1");
}

void validate_density(const DensitySpec& d, const Reader& r, const std::string& key, int n) {
  require(d.kind == "uniform" || d.kind == "bump" || d.kind == "cosine" || d.kind == "point", r, key + ".kind",
          "expected uniform, bump, cosine or point");
  require(d.width > 0.0, r, key + ".width", "must be positive");
  require(std::abs(d.amp) <= 1.0, r, key + ".amp", "|amp| <= 1 keeps the density nonnegative");
  require(d.mode >= 1, r, key + ".mode", "mode must be at least 1");
  require(d.cell >= 0 && d.cell < n, r, key + ".cell", "outside the grid");
}

void validate(const ExperimentConfig& c, const Reader& r) {
  require(c.n >= 8, r, "grid.n", c.n == 0 ? "required (at least 8)" : "must be at least 8");
  require(c.sigma >= 0.0 && std::isfinite(c.sigma), r, "noise.sigma", "must be nonnegative");
  require(c.epochs >= 0, r, "noise.epochs", "must be nonnegative");
  require(c.epochs <= kMaxEpochs, r, "noise.epochs", "exceeds the tree cap of " + std::to_string(kMaxEpochs) + " epochs");
  require(c.horizon > 0.0, r, "noise.horizon", "must be positive");
  validate_field(c.potential, r, "coupling.potential");
  validate_field(c.terminal, r, "coupling.terminal");
  for (auto [name, eigs] : {std::pair{"coupling.f_eigs", &c.f_eigs}, std::pair{"coupling.g_eigs", &c.g_eigs}}) {
    require(!eigs->empty(), r, name, "needs at least the k = 0 entry");
    require(static_cast<int>(eigs->size()) <= c.n / 2, r, name, "more modes than the grid resolves");
    if (!c.test_mode) {
      for (std::size_t k = 0; k < eigs->size(); ++k)
        require((*eigs)[k] >= 0.0, r, name,
                "eigenvalue " + std::to_string(k) + " is negative: the coupling would not be monotone (set coupling.test_mode: true to allow)");
    }
  }
  require(c.dt > 0.0, r, "solver.dt", "must be positive");
  require(c.tol > 0.0, r, "solver.tol", "must be positive");
  require(c.max_iters >= 1, r, "solver.max_iters", "must be at least 1");
  require(c.theta > 0.0 && c.theta <= 1.0, r, "solver.theta", "must lie in (0, 1]");
  require(c.cfl > 0.0 && c.cfl <= 1.0, r, "solver.cfl", "must lie in (0, 1]");
  validate_density(c.m0, r, "initial", c.n);
  validate_density(c.anchor, r, "ergodic.anchor", c.n);
  require(std::is_sorted(c.horizons.begin(), c.horizons.end()) && !c.horizons.empty() && c.horizons.front() > 0.0, r, "ergodic.horizons",
          "must be a nonempty increasing list of positive times");
  for (double d : c.deltas) require(d > 0.0 && d <= 1.0, r, "ergodic.deltas", "entries must lie in (0, 1]");
  require(c.epoch_len > 0.0, r, "ergodic.epoch_len", "must be positive");
  require(c.stationarity_tol > 0.0, r, "ergodic.stationarity_tol", "must be positive");
  require(c.max_horizon > 0.0, r, "ergodic.max_horizon", "must be positive");
  require(c.pad >= 0, r, "turnpike.pad", "must be nonnegative");
  require(c.noise_floor >= 0.0, r, "turnpike.noise_floor", "must be nonnegative");
  require(!c.eps.empty(), r, "linearize.eps", "needs at least one step");
  for (double e : c.eps) require(e > 0.0, r, "linearize.eps", "entries must be positive");
  require(c.directions >= 1, r, "linearize.directions", "must be at least 1");
  require(!c.t_grid.empty(), r, "probe.t_grid", "needs at least one time");
  for (double t : c.t_grid) require(t >= 0.0, r, "probe.t_grid", "times must be nonnegative");
  require(c.t_ref > 0.0, r, "probe.t_ref", "must be positive");
  require(std::is_sorted(c.probe_horizons.begin(), c.probe_horizons.end()) && !c.probe_horizons.empty(), r, "probe.horizons",
          "must be a nonempty increasing list");
  require(c.refresh_steps >= 1, r, "probe.refresh_steps", "must be at least 1");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s + "]";
}

std::string fmt(const FieldSpec& f) { return f.kind + "," + fmt(f.amp) + "," + std::to_string(f.mode) + "," + fmt(f.value); }

std::string fmt(const DensitySpec& d) {
  return d.kind + "," + fmt(d.center) + "," + fmt(d.width) + "," + fmt(d.amp) + "," + std::to_string(d.mode) + "," + std::to_string(d.cell);
}

ValueField make_field(const Grid& g, const FieldSpec& f) {
  ValueField u(g);
  for (int j = 0; j < g.n(); ++j) {
    if (f.kind == "flat") u[j] = f.value;
    if (f.kind == "cosine") u[j] = f.amp * std::cos(2 * std::numbers::pi * f.mode * g.x(j));
  }
  return u;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, "parse error: " + e.msg);
  }
  ExperimentConfig c;
  Reader r;
  if (root.IsNull()) throw ConfigError("grid.n", 0, "empty configuration; grid.n is required");
  r.keys(root, "", {"grid", "noise", "coupling", "solver", "initial", "ergodic", "turnpike", "linearize", "probe", "run"});

  if (auto s = root["grid"]) {
    r.keys(s, "grid", {"n"});
    r.read(s, "grid", "n", c.n);
  }
  if (auto s = root["noise"]) {
    r.keys(s, "noise", {"sigma", "epochs", "horizon"});
    r.read(s, "noise", "sigma", c.sigma);
    r.read(s, "noise", "epochs", c.epochs);
    r.read(s, "noise", "horizon", c.horizon);
  }
  if (auto s = root["coupling"]) {
    r.keys(s, "coupling", {"potential", "f_eigs", "terminal", "g_eigs", "test_mode"});
    r.read_field(s, "coupling", "potential", c.potential);
    r.read_field(s, "coupling", "terminal", c.terminal);
    r.read_list(s, "coupling", "f_eigs", c.f_eigs);
    r.read_list(s, "coupling", "g_eigs", c.g_eigs);
    r.read(s, "coupling", "test_mode", c.test_mode);
  }
  if (auto s = root["solver"]) {
    r.keys(s, "solver", {"dt", "tol", "max_iters", "damping", "theta", "cfl"});
    r.read(s, "solver", "dt", c.dt);
    r.read(s, "solver", "tol", c.tol);
    r.read(s, "solver", "max_iters", c.max_iters);
    r.read(s, "solver", "theta", c.theta);
    r.read(s, "solver", "cfl", c.cfl);
    std::string damping;
    r.read(s, "solver", "damping", damping);
    if (damping == "fictitious-play") c.damping = Damping::fictitious_play;
    else if (damping == "fixed" || damping == "picard") c.damping = Damping::fixed;
    else if (!damping.empty()) throw ConfigError("solver.damping", r.line("solver.damping"), "expected fictitious-play, fixed or picard");
  }
  r.read_density(root, "", "initial", c.m0);
  if (auto s = root["ergodic"]) {
    r.keys(s, "ergodic", {"horizons", "deltas", "epoch_len", "stationarity_tol", "max_horizon", "anchor"});
    r.read_list(s, "ergodic", "horizons", c.horizons);
    r.read_list(s, "ergodic", "deltas", c.deltas);
    r.read(s, "ergodic", "epoch_len", c.epoch_len);
    r.read(s, "ergodic", "stationarity_tol", c.stationarity_tol);
    r.read(s, "ergodic", "max_horizon", c.max_horizon);
    r.read_density(s, "ergodic", "anchor", c.anchor);
  }
  if (auto s = root["turnpike"]) {
    r.keys(s, "turnpike", {"pad", "noise_floor"});
    r.read(s, "turnpike", "pad", c.pad);
    r.read(s, "turnpike", "noise_floor", c.noise_floor);
  }
  if (auto s = root["linearize"]) {
    r.keys(s, "linearize", {"eps", "directions"});
    r.read_list(s, "linearize", "eps", c.eps);
    r.read(s, "linearize", "directions", c.directions);
  }
  if (auto s = root["probe"]) {
    r.keys(s, "probe", {"t_grid", "t_ref", "horizons", "refresh_steps"});
    r.read_list(s, "probe", "t_grid", c.t_grid);
    r.read(s, "probe", "t_ref", c.t_ref);
    r.read_list(s, "probe", "horizons", c.probe_horizons);
    r.read(s, "probe", "refresh_steps", c.refresh_steps);
  }
  if (auto s = root["run"]) {
    r.keys(s, "run", {"seed", "out"});
    r.read(s, "run", "seed", c.seed);
    r.read(s, "run", "out", c.out);
  }
  validate(c, r);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "grid.n=" << c.n << "\n"
    << "noise.sigma=" << fmt(c.sigma) << "\nnoise.epochs=" << c.epochs << "\nnoise.horizon=" << fmt(c.horizon) << "\n"
    << "coupling.potential=" << fmt(c.potential) << "\ncoupling.f_eigs=" << fmt(c.f_eigs) << "\n"
    << "coupling.terminal=" << fmt(c.terminal) << "\ncoupling.g_eigs=" << fmt(c.g_eigs) << "\n"
    << "coupling.test_mode=" << c.test_mode << "\n"
    << "solver.dt=" << fmt(c.dt) << "\nsolver.tol=" << fmt(c.tol) << "\nsolver.max_iters=" << c.max_iters << "\n"
    << "solver.damping=" << (c.damping == Damping::fixed ? "fixed" : "fictitious-play") << "\nsolver.theta=" << fmt(c.theta) << "\n"
    << "solver.cfl=" << fmt(c.cfl) << "\n"
    << "initial=" << fmt(c.m0) << "\n"
    << "ergodic.horizons=" << fmt(c.horizons) << "\nergodic.deltas=" << fmt(c.deltas) << "\nergodic.epoch_len=" << fmt(c.epoch_len) << "\n"
    << "ergodic.stationarity_tol=" << fmt(c.stationarity_tol) << "\nergodic.max_horizon=" << fmt(c.max_horizon) << "\n"
    << "ergodic.anchor=" << fmt(c.anchor) << "\n"
    << "turnpike.pad=" << c.pad << "\nturnpike.noise_floor=" << fmt(c.noise_floor) << "\n"
    << "linearize.eps=" << fmt(c.eps) << "\nlinearize.directions=" << c.directions << "\n"
    << "probe.t_grid=" << fmt(c.t_grid) << "\nprobe.t_ref=" << fmt(c.t_ref) << "\nprobe.horizons=" << fmt(c.probe_horizons) << "\n"
    << "probe.refresh_steps=" << c.refresh_steps << "\n"
    << "run.seed=" << c.seed << "\n";
  return o.str();
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
  return buf;
}

Grid make_grid(const ExperimentConfig& cfg) { return Grid(cfg.n); }

CouplingSpec make_coupling(const ExperimentConfig& cfg) {
  Grid g = make_grid(cfg);
  auto a = make_field(g, cfg.potential);
  auto b = make_field(g, cfg.terminal);
  return cfg.test_mode ? CouplingSpec::make_unchecked(a, cfg.f_eigs, b, cfg.g_eigs) : CouplingSpec::make(a, cfg.f_eigs, b, cfg.g_eigs);
}

DensityField make_density(const Grid& g, const DensitySpec& d) {
  if (d.kind == "bump") return bump_density(g, d.center, d.width);
  if (d.kind == "point") return point_mass(g, d.cell);
  if (d.kind == "cosine") {
    DensityField m(g);
    for (int j = 0; j < g.n(); ++j) m[j] = 1.0 + d.amp * std::cos(2 * std::numbers::pi * d.mode * g.x(j));
    return m;
  }
  return uniform_density(g);
}

SolveParams make_solve_params(const ExperimentConfig& cfg) {
  SolveParams p;
  p.tol = cfg.tol;
  p.max_iters = cfg.max_iters;
  p.damping = cfg.damping;
  p.theta = cfg.theta;
  p.cfl_factor = cfg.cfl;
  return p;
}

NoiseTree make_tree(const ExperimentConfig& cfg) {
  const double epoch = cfg.epochs == 0 ? cfg.horizon : cfg.horizon / cfg.epochs;
  const int fine = std::max(1, static_cast<int>(std::lround(epoch / cfg.dt)));
  return NoiseTree::build(cfg.sigma, cfg.horizon, cfg.epochs, fine);
}

ErgodicParams make_ergodic_params(const ExperimentConfig& cfg) {
  ErgodicParams p;
  p.epoch_len = cfg.epoch_len;
  p.dt = cfg.dt;
  p.horizons = cfg.horizons;
  p.deltas = cfg.deltas;
  p.solve = make_solve_params(cfg);
  p.stationarity_tol = cfg.stationarity_tol;
  p.caps.max_horizon = cfg.max_horizon;
  p.caps.epoch_len = cfg.epoch_len;
  p.caps.dt = cfg.dt;
  return p;
}

}  // namespace mfgcn
