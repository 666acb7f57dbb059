#pragma once

/// \file config.hpp
/// Experiment configuration: JSON schema with defaults, strict key
/// checking, resolution back to JSON, a content hash, and builders that turn
/// the config into grids, models, initial data and noise.

#include "chaos.hpp"
#include "grid.hpp"
#include "mild_solver.hpp"
#include "models.hpp"
#include "noise.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavesde {

using json = nlohmann::json;

/// Schema violation; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelBlock {
  std::string name = "sine_gordon";
  int p = 3;
  int sign = 1;
  double g = 1.0;
  double k0 = 1.0;
  double m = 1.0;
  int N = 1;
  bool linear = false;
  bool inject_broken_J = false;
};

struct GridBlock {
  int dim = 1;
  std::vector<int> points{64};
  std::vector<double> lengths{2.0 * std::numbers::pi};
};

struct InitialBlock {
  std::string kind = "gaussian";  ///< gaussian | constant | random
  double amplitude = 0.5;
  double width = 0.5;
  double wavenumber = 0.0;
  std::uint64_t seed = 3;
};

struct SolverBlock {
  double T = 1.0;
  double dt = 1e-2;
  double Lambda = 1e6;
  std::string scheme = "exp_euler";  ///< exp_euler | strang (deterministic runs)
  std::size_t record_every = 10;
  std::vector<double> dt_ladder{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 1024};
};

struct NoiseBlock {
  bool enabled = false;
  std::size_t modes = 4;
  double lambda0 = 0.1;
  double gamma = 2.0;
};

struct ChaosBlock {
  int max_degree = 4;
};

struct PicardBlock {
  std::size_t nodes = 65;
  double tol = 1e-10;
  std::size_t max_iter = 200;
  std::vector<double> zeta;  ///< real test vector in noise-mode coordinates; default zeros
  std::vector<double> eta;   ///< default e_1
  double stencil = 1e-2;
};

struct VerifyBlock {
  std::size_t samples = 1000;
  int j_max = 1;
  double radius = 2.0;
  std::size_t wiener_paths = 4000;
  std::size_t wiener_steps = 64;
};

struct ExperimentConfig {
  ModelBlock model;
  GridBlock grid;
  InitialBlock initial;
  SolverBlock solver;
  NoiseBlock noise;
  ChaosBlock chaos;
  PicardBlock picard;
  VerifyBlock verify;
  std::string output = "wavesde_out";
  std::uint64_t master_seed = 1;
  std::size_t paths = 200;
  unsigned workers = 1;
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

}  // namespace detail

/// Parses and validates; throws ConfigError naming the offending key.
inline ExperimentConfig parse_config(const json& j) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, "", {"model", "grid", "initial", "solver", "noise", "chaos", "picard", "verify", "output", "master_seed",
                     "paths", "workers"});
  if (!j.contains("model")) throw ConfigError("missing required key 'model'");
  if (!j.contains("grid")) throw ConfigError("missing required key 'grid'");
  ExperimentConfig c;
  const auto& m = j.at("model");
  check_keys(m, "model", {"name", "p", "sign", "g", "k0", "m", "N", "linear", "inject_broken_J"});
  if (!m.contains("name")) throw ConfigError("missing required key 'model.name'");
  read(m, "name", c.model.name, "model");
  read(m, "p", c.model.p, "model");
  read(m, "sign", c.model.sign, "model");
  read(m, "g", c.model.g, "model");
  read(m, "k0", c.model.k0, "model");
  read(m, "m", c.model.m, "model");
  read(m, "N", c.model.N, "model");
  read(m, "linear", c.model.linear, "model");
  read(m, "inject_broken_J", c.model.inject_broken_J, "model");

  const auto& g = j.at("grid");
  check_keys(g, "grid", {"dim", "points", "lengths"});
  read(g, "dim", c.grid.dim, "grid");
  read(g, "points", c.grid.points, "grid");
  read(g, "lengths", c.grid.lengths, "grid");

  if (j.contains("initial")) {
    const auto& b = j.at("initial");
    check_keys(b, "initial", {"kind", "amplitude", "width", "wavenumber", "seed"});
    read(b, "kind", c.initial.kind, "initial");
    read(b, "amplitude", c.initial.amplitude, "initial");
    read(b, "width", c.initial.width, "initial");
    read(b, "wavenumber", c.initial.wavenumber, "initial");
    read(b, "seed", c.initial.seed, "initial");
  }
  if (j.contains("solver")) {
    const auto& b = j.at("solver");
    check_keys(b, "solver", {"T", "dt", "Lambda", "scheme", "record_every", "dt_ladder"});
    read(b, "T", c.solver.T, "solver");
    read(b, "dt", c.solver.dt, "solver");
    read(b, "Lambda", c.solver.Lambda, "solver");
    read(b, "scheme", c.solver.scheme, "solver");
    read(b, "record_every", c.solver.record_every, "solver");
    read(b, "dt_ladder", c.solver.dt_ladder, "solver");
  }
  if (j.contains("noise")) {
    const auto& b = j.at("noise");
    check_keys(b, "noise", {"enabled", "modes", "lambda0", "gamma"});
    read(b, "enabled", c.noise.enabled, "noise");
    read(b, "modes", c.noise.modes, "noise");
    read(b, "lambda0", c.noise.lambda0, "noise");
    read(b, "gamma", c.noise.gamma, "noise");
  }
  if (j.contains("chaos")) {
    const auto& b = j.at("chaos");
    check_keys(b, "chaos", {"max_degree"});
    read(b, "max_degree", c.chaos.max_degree, "chaos");
  }
  if (j.contains("picard")) {
    const auto& b = j.at("picard");
    check_keys(b, "picard", {"nodes", "tol", "max_iter", "zeta", "eta", "stencil"});
    read(b, "nodes", c.picard.nodes, "picard");
    read(b, "tol", c.picard.tol, "picard");
    read(b, "max_iter", c.picard.max_iter, "picard");
    read(b, "zeta", c.picard.zeta, "picard");
    read(b, "eta", c.picard.eta, "picard");
    read(b, "stencil", c.picard.stencil, "picard");
  }
  if (j.contains("verify")) {
    const auto& b = j.at("verify");
    check_keys(b, "verify", {"samples", "j_max", "radius", "wiener_paths", "wiener_steps"});
    read(b, "samples", c.verify.samples, "verify");
    read(b, "j_max", c.verify.j_max, "verify");
    read(b, "radius", c.verify.radius, "verify");
    read(b, "wiener_paths", c.verify.wiener_paths, "verify");
    read(b, "wiener_steps", c.verify.wiener_steps, "verify");
  }
  read(j, "output", c.output, "");
  read(j, "master_seed", c.master_seed, "");
  read(j, "paths", c.paths, "");
  read(j, "workers", c.workers, "");

  // value checks
  try {
    parse_model_kind(c.model.name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.name: ") + e.what());
  }
  if (c.solver.scheme != "exp_euler" && c.solver.scheme != "strang") throw ConfigError("solver.scheme must be exp_euler or strang");
  if (c.initial.kind != "gaussian" && c.initial.kind != "constant" && c.initial.kind != "random")
    throw ConfigError("initial.kind must be gaussian, constant or random");
  if (!(c.solver.T > 0.0) || !(c.solver.dt > 0.0)) throw ConfigError("solver.T and solver.dt must be positive");
  if (c.paths < 2) throw ConfigError("paths must be at least 2");
  if (c.noise.modes == 0) throw ConfigError("noise.modes must be positive");
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"name", c.model.name}, {"p", c.model.p},       {"sign", c.model.sign},     {"g", c.model.g},
                {"k0", c.model.k0},     {"m", c.model.m},       {"N", c.model.N},           {"linear", c.model.linear},
                {"inject_broken_J", c.model.inject_broken_J}};
  j["grid"] = {{"dim", c.grid.dim}, {"points", c.grid.points}, {"lengths", c.grid.lengths}};
  j["initial"] = {{"kind", c.initial.kind},
                  {"amplitude", c.initial.amplitude},
                  {"width", c.initial.width},
                  {"wavenumber", c.initial.wavenumber},
                  {"seed", c.initial.seed}};
  j["solver"] = {{"T", c.solver.T},
                 {"dt", c.solver.dt},
                 {"Lambda", c.solver.Lambda},
                 {"scheme", c.solver.scheme},
                 {"record_every", c.solver.record_every},
                 {"dt_ladder", c.solver.dt_ladder}};
  j["noise"] = {{"enabled", c.noise.enabled}, {"modes", c.noise.modes}, {"lambda0", c.noise.lambda0}, {"gamma", c.noise.gamma}};
  j["chaos"] = {{"max_degree", c.chaos.max_degree}};
  j["picard"] = {{"nodes", c.picard.nodes}, {"tol", c.picard.tol},   {"max_iter", c.picard.max_iter},
                 {"zeta", c.picard.zeta},   {"eta", c.picard.eta},   {"stencil", c.picard.stencil}};
  j["verify"] = {{"samples", c.verify.samples},
                 {"j_max", c.verify.j_max},
                 {"radius", c.verify.radius},
                 {"wiener_paths", c.verify.wiener_paths},
                 {"wiener_steps", c.verify.wiener_steps}};
  j["output"] = c.output;
  j["master_seed"] = c.master_seed;
  j["paths"] = c.paths;
  j["workers"] = c.workers;
  return j;
}

/// FNV-1a 64 over the canonical (key-sorted) dump of the resolved config,
/// as 16 hex digits. The output directory and worker count are excluded:
/// neither changes results.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output");
  j.erase("workers");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
}

// --------------------------------------------------------------------------
// Builders
// --------------------------------------------------------------------------

inline Grid build_grid(const ExperimentConfig& c) {
  try {
    return make_grid(c.grid.dim, c.grid.points, c.grid.lengths);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

inline Model build_model(const ExperimentConfig& c, const Grid& g) {
  ModelParams p;
  p.p = c.model.p;
  p.sign = c.model.sign;
  p.g = c.model.g;
  p.k0 = c.model.k0;
  p.m = c.model.m;
  p.N = c.model.N;
  try {
    Model m = build_model(c.model.name, g, p);
    m.linear = c.model.linear;
    m.scale_J_by_norm = c.model.inject_broken_J;
    return m;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

/// gaussian: first field component is amplitude * exp(-|x - center|^2 / width^2)
/// * exp(i wavenumber x_0) (real for sine_gordon), other components zero
/// (Maxwell-Dirac potentials are made gauge compatible); constant: every
/// field component of the first role equals amplitude; random: a smooth
/// random state with state norm amplitude.
inline State build_initial(const ExperimentConfig& c, const Model& m) {
  const auto& ib = c.initial;
  const auto& g = m.grid;
  if (ib.kind == "random") {
    NormalStream rng(ib.seed, 0x1417);
    return random_smooth_state(m, rng, ib.amplitude, m.params.N + 1);
  }
  State s = m.zero_state();
  if (ib.kind == "constant") {
    for (auto& v : s[0].values) v = ib.amplitude;
  } else {
    const bool real = m.kind == ModelKind::sine_gordon;
    s[0] = sample_field(g, [&](const std::vector<double>& x) {
      double r2 = 0.0;
      for (int a = 0; a < g.dim(); ++a) {
        const double d = x[a] - 0.5 * g.lengths()[a];
        r2 += d * d;
      }
      const double env = ib.amplitude * std::exp(-r2 / (ib.width * ib.width));
      return real ? cplx(env) : env * std::polar(1.0, ib.wavenumber * x[0]);
    });
  }
  if (m.kind == ModelKind::maxwell_dirac) s = maxwell_dirac_initial(m, s[0], s[1]);
  return s;
}

inline CovarianceSpec build_covariance(const ExperimentConfig& c, const Grid& g) {
  try {
    return default_covariance(g, c.noise.modes, c.noise.lambda0, c.noise.gamma);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
}

}  // namespace wavesde
