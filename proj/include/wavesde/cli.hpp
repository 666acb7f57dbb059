#pragma once

/// \file cli.hpp
/// Command-line driver: simulate / picard / converge / chaos / verify.
/// Exit codes: 0 ok, 1 verification failure, 2 config error, 3 blow-up.

#include "chaos.hpp"
#include "config.hpp"
#include "mc_harness.hpp"
#include "mild_solver.hpp"
#include "models.hpp"
#include "noise.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace wavesde {

namespace cli {

enum Exit : int { ok = 0, verification_failed = 1, config_error = 2, blowup = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<std::size_t> paths;
  std::optional<std::string> out;
  bool json = false;
  bool allow_stop = false;
};

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Number or null for JSON output.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

struct RunContext {
  ExperimentConfig cfg;
  std::string hash;
  std::filesystem::path dir;
  Flags flags;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

/// Loads the config, checks any embedded hash, applies flag overrides and
/// prepares the output directory (refusing one written by another config).
inline RunContext prepare(const Flags& f, std::ostream& out, std::ostream& err) {
  json j = load_json_file(f.config);
  std::optional<std::string> embedded;
  if (j.is_object() && j.contains("config_hash")) {
    if (!j["config_hash"].is_string()) throw ConfigError("config_hash must be a string");
    embedded = j["config_hash"].get<std::string>();
    j.erase("config_hash");
  }
  ExperimentConfig cfg = parse_config(j);
  if (embedded && *embedded != config_hash(cfg))
    throw ConfigError("config_hash " + *embedded + " does not match the config contents (" + config_hash(cfg) + ")");
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.dt) {
    if (!(*f.dt > 0.0)) throw ConfigError("--dt must be positive");
    cfg.solver.dt = *f.dt;
  }
  if (f.paths) {
    if (*f.paths < 2) throw ConfigError("--paths must be at least 2");
    cfg.paths = *f.paths;
  }
  if (f.out) cfg.output = *f.out;

  RunContext ctx;
  ctx.cfg = cfg;
  ctx.hash = config_hash(cfg);
  ctx.dir = cfg.output;
  ctx.flags = f;
  ctx.out = &out;
  ctx.err = &err;
  std::error_code ec;
  std::filesystem::create_directories(ctx.dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + ctx.dir.string() + "': " + ec.message());
  const auto resolved = ctx.dir / "config.resolved.json";
  if (std::filesystem::exists(resolved)) {
    std::string previous;
    try {
      std::ifstream in(resolved);
      previous = json::parse(in).value("config_hash", "");
    } catch (const json::exception&) {
      previous = "<unreadable>";
    }
    if (previous != ctx.hash)
      throw ConfigError("output directory '" + ctx.dir.string() + "' holds results of config " + previous +
                        "; refusing to mix them with config " + ctx.hash);
  }
  json rj = to_json(cfg);
  rj["config_hash"] = ctx.hash;
  std::ofstream(resolved) << rj.dump(2) << "\n";
  return ctx;
}

inline void write_report(const RunContext& ctx, json report) {
  report["config_hash"] = ctx.hash;
  report["master_seed"] = ctx.cfg.master_seed;
  std::ofstream(ctx.dir / "report.json") << report.dump(2) << "\n";
  if (ctx.flags.json) *ctx.out << report.dump(2) << "\n";
}

/// CSV with a leading "# config_hash=..." line.
inline void write_csv(const RunContext& ctx, const std::string& name, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream o(ctx.dir / name);
  if (!o) throw std::runtime_error("cannot write " + (ctx.dir / name).string());
  o << "# config_hash=" << ctx.hash << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) o << (i ? "," : "") << header[i];
  o << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << r[i];
    o << "\n";
  }
}

inline std::vector<std::string> conserved_keys(const Model& m) {
  std::vector<std::string> k;
  for (const auto& [name, v] : conserved(m, m.zero_state())) k.push_back(name);
  return k;
}

inline void write_trajectory(const RunContext& ctx, const Model& m, const Trajectory& tr) {
  std::vector<std::string> header{"time"};
  for (int j = 0; j <= tr.N; ++j) header.push_back("graph_norm_" + std::to_string(j));
  header.push_back("graph_norm_sum");
  const auto keys = conserved_keys(m);
  for (const auto& k : keys) header.push_back(k);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    std::vector<std::string> r{fmt(tr.times[i])};
    for (double v : graph_norms(m.generator, tr.states[i], tr.N)) r.push_back(fmt(v));
    r.push_back(fmt(tr.graph_norm_history[i]));
    const auto c = conserved(m, tr.states[i]);
    for (const auto& k : keys) r.push_back(fmt(c.at(k)));
    rows.push_back(std::move(r));
  }
  write_csv(ctx, "trajectory.csv", header, rows);
}

inline void summary(const RunContext& ctx, const std::string& line) {
  if (!ctx.flags.json) *ctx.out << line << "\n";
}

// --------------------------------------------------------------------------

inline int cmd_simulate(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const Grid g = build_grid(c);
  const Model m = build_model(c, g);
  const State phi0 = build_initial(c, m);
  Trajectory tr;
  if (c.noise.enabled) {
    const QWienerSampler sampler(build_covariance(c, g), c.master_seed, 0);
    ItoOptions o;
    o.record_every = c.solver.record_every;
    tr = solve_ito(m, phi0, c.solver.T, c.solver.dt, sampler, c.solver.Lambda, c.model.N, o);
  } else {
    tr = solve_deterministic(m, phi0, c.solver.T, c.solver.dt, c.solver.scheme == "strang" ? Scheme::strang : Scheme::exp_euler,
                             c.solver.record_every);
  }
  write_trajectory(ctx, m, tr);
  json rep;
  rep["command"] = "simulate";
  rep["stream"] = 0;
  rep["stop_time"] = tr.stop_time ? json(*tr.stop_time) : json(nullptr);
  rep["blew_up"] = tr.blew_up;
  rep["steps_recorded"] = tr.times.size();
  rep["final_graph_norm_sum"] = num(tr.graph_norm_history.back());
  json cons;
  const auto c0 = conserved(m, tr.states.front()), c1 = conserved(m, tr.final_state());
  for (const auto& [k, v] : c0) cons[k] = {{"initial", num(v)}, {"final", num(c1.at(k))}};
  rep["conserved"] = cons;
  write_report(ctx, rep);
  const bool early = tr.stop_time.has_value() || tr.blew_up;
  summary(ctx, "simulate: model=" + c.model.name + " T_reached=" + fmt(tr.times.back()) +
                   (tr.blew_up ? " blew_up" : tr.stop_time ? " stopped" : " ran_to_T") + " hash=" + ctx.hash);
  if (early && !ctx.flags.allow_stop) {
    *ctx.err << "run ended early at t=" << fmt(tr.times.back()) << (tr.blew_up ? " (blow-up)" : " (stopping threshold)")
             << "; pass --allow-stop to accept\n";
    return blowup;
  }
  return ok;
}

inline ThetaPotential picard_theta(const ExperimentConfig& c, const Grid& g, CVec& zeta, CVec& eta) {
  const auto cov = build_covariance(c, g);
  const std::size_t n = cov.size();
  zeta.assign(n, 0.0);
  eta.assign(n, 0.0);
  if (!c.picard.zeta.empty()) {
    if (c.picard.zeta.size() != n) throw ConfigError("picard.zeta must have noise.modes entries");
    for (std::size_t i = 0; i < n; ++i) zeta[i] = c.picard.zeta[i];
  }
  if (!c.picard.eta.empty()) {
    if (c.picard.eta.size() != n) throw ConfigError("picard.eta must have noise.modes entries");
    for (std::size_t i = 0; i < n; ++i) eta[i] = c.picard.eta[i];
  } else {
    eta[0] = 1.0;
  }
  return theta_from_covariance(cov);
}

inline int cmd_picard(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const Grid g = build_grid(c);
  const Model m = build_model(c, g);
  const State phi0 = build_initial(c, m);
  CVec zeta, eta;
  const ThetaPotential theta = picard_theta(c, g, zeta, eta);
  PicardOptions opt;
  opt.n_time_nodes = c.picard.nodes;
  opt.tol = c.picard.tol;
  opt.max_iter = c.picard.max_iter;
  const auto res = picard_solve(m, phi0, c.solver.T, theta, zeta, eta, 0.0, opt);
  write_trajectory(ctx, m, res.trajectory);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < res.iteration_residuals.size(); ++k)
    rows.push_back({std::to_string(k + 1), fmt(res.iteration_residuals[k])});
  write_csv(ctx, "residuals.csv", {"iteration", "residual"}, rows);

  json rep;
  rep["command"] = "picard";
  rep["converged"] = res.converged;
  rep["blew_up"] = res.blew_up;
  rep["iterations"] = res.iteration_residuals.size();
  rep["residuals"] = res.iteration_residuals;
  rep["fixed_point_residual"] = num(res.fixed_point_residual);
  double ratio = std::numeric_limits<double>::quiet_NaN();
  if (res.iteration_residuals.size() >= 4) {
    try {
      ratio = contraction_ratio(res.iteration_residuals);
    } catch (const std::invalid_argument&) {
    }
  }
  rep["contraction_ratio"] = num(ratio);
  double holo = std::numeric_limits<double>::quiet_NaN();
  if (res.converged) {
    HolomorphyStencil st;
    st.h = c.picard.stencil;
    holo = holomorphy_check(m, phi0, c.solver.T, theta, zeta, eta, st, phi0, opt);
  }
  rep["holomorphy_residual"] = num(holo);
  write_report(ctx, rep);
  summary(ctx, "picard: converged=" + std::string(res.converged ? "true" : "false") +
                   " iterations=" + std::to_string(res.iteration_residuals.size()) + " ratio=" + fmt(ratio) +
                   " holomorphy_residual=" + fmt(holo) + " hash=" + ctx.hash);
  if (res.blew_up) return blowup;
  return res.converged ? ok : verification_failed;
}

inline EnsembleConfig ensemble_from(const ExperimentConfig& c, const Model& m, const State& phi0, const Grid& g) {
  EnsembleConfig e;
  e.model = m;
  e.initial = phi0;
  e.T = c.solver.T;
  e.dt = c.solver.dt;
  e.Lambda = c.solver.Lambda;
  e.N = c.model.N;
  if (c.noise.enabled) e.covariance = build_covariance(c, g);
  e.n_paths = c.paths;
  e.master_seed = c.master_seed;
  e.workers = c.workers;
  return e;
}

inline int cmd_converge(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const Grid g = build_grid(c);
  const Model m = build_model(c, g);
  const State phi0 = build_initial(c, m);
  EnsembleConfig e = ensemble_from(c, m, phi0, g);
  e.Lambda = std::numeric_limits<double>::infinity();
  const OrderFit f = strong_order(e, c.solver.dt_ladder);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < f.dts.size(); ++i)
    rows.push_back({fmt(f.dts[i]), fmt(f.errors[i]), fmt(f.std_errors[i]), f.used[i] ? "1" : "0"});
  write_csv(ctx, "convergence.csv", {"dt", "strong_error", "std_error", "used_in_fit"}, rows);
  json rep;
  rep["command"] = "converge";
  rep["reference_dt"] = c.solver.dt_ladder.back();
  rep["strong_order"] = num(f.order);
  rep["fit_residual"] = num(f.fit_residual);
  rep["monotone"] = f.monotone;
  rep["fit_skipped"] = f.skipped;
  rep["paths"] = c.noise.enabled ? c.paths : 1;
  write_report(ctx, rep);
  summary(ctx, "converge: strong_order=" + fmt(f.order) + (f.monotone ? "" : " NON-MONOTONE") +
                   (f.skipped ? " fit_skipped" : "") + " hash=" + ctx.hash);
  return ok;
}

inline int cmd_chaos(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const Grid g = build_grid(c);
  const Model m = build_model(c, g);
  const State phi0 = build_initial(c, m);
  EnsembleConfig e = ensemble_from(c, m, phi0, g);
  e.Lambda = std::numeric_limits<double>::infinity();
  const ChaosSpace space(static_cast<int>(c.noise.modes), c.chaos.max_degree);
  const auto wick = solve_wick_evolution(m, phi0, WickNoise{e.covariance, 1}, c.solver.T, c.solver.dt, space);
  const auto rep_c = chaos_vs_mc(e, space, phi0);

  std::vector<std::vector<std::string>> rows;
  const auto& fin = wick.final_state();
  for (std::size_t a = 0; a < space.size(); ++a) {
    std::string idx;
    for (int v : space.alpha(a)) idx += (idx.empty() ? "" : " ") + std::to_string(v);
    for (std::size_t comp = 0; comp < fin.blocks[a].count(); ++comp)
      for (std::size_t x = 0; x < g.size(); ++x) {
        const cplx v = fin.blocks[a][comp].values[x];
        rows.push_back({idx, m.roles[comp], std::to_string(x), fmt(v.real()), fmt(v.imag())});
      }
  }
  write_csv(ctx, "chaos_coefficients.csv", {"multi_index", "component", "point", "real", "imag"}, rows);
  json rep;
  rep["command"] = "chaos";
  rep["space"] = {{"n_modes", space.n_modes()}, {"max_degree", space.max_degree()}, {"weights", space.weights()}, {"dimension", space.size()}};
  rep["pairing"] = {{"mc", num(rep_c.pairing_mc)}, {"mc_std_error", num(rep_c.pairing_mc_se)}, {"chaos", num(rep_c.pairing_chaos)}, {"z", num(rep_c.pairing_z)}};
  rep["second_moment"] = {{"mc", num(rep_c.second_moment_mc)}, {"mc_std_error", num(rep_c.second_moment_mc_se)}, {"chaos", num(rep_c.second_moment_chaos)}, {"z", num(rep_c.second_moment_z)}};
  rep["max_pointwise_z"] = num(rep_c.max_pointwise_z);
  rep["tail_fraction"] = num(rep_c.tail_fraction);
  rep["truncation_overflow"] = wick.truncation_overflow;
  rep["mean_within_3se"] = rep_c.mean_within_3se;
  write_report(ctx, rep);
  summary(ctx, "chaos: mean_z=" + fmt(rep_c.pairing_z) + " second_moment_z=" + fmt(rep_c.second_moment_z) +
                   " tail_fraction=" + fmt(rep_c.tail_fraction) + (rep_c.mean_within_3se ? " agree" : " DISAGREE") + " hash=" + ctx.hash);
  return rep_c.mean_within_3se ? ok : verification_failed;
}

inline int cmd_verify(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const Grid g = build_grid(c);
  const Model m = build_model(c, g);
  json items = json::array();
  std::vector<std::string> violated;
  auto add = [&](const std::string& id, std::size_t samples, std::size_t violations, double fitted,
                 std::optional<double> ref, const std::string& desc) {
    items.push_back({{"id", id},
                     {"samples", samples},
                     {"violations", violations},
                     {"fitted_constant", num(fitted)},
                     {"reference_constant", ref ? num(*ref) : json(nullptr)},
                     {"description", desc}});
    if (violations) violated.push_back(id);
  };
  for (const auto& r : verify_estimates(m, c.verify.samples, c.verify.j_max, c.verify.radius, c.master_seed))
    add(r.inequality_id, r.sample_count, r.violations, r.fitted_constant, r.reference_constant, r.description);

  // multiple Wiener integrals on [0, 1]
  const std::size_t K = c.verify.wiener_steps, P = c.verify.wiener_paths;
  const double dt = 1.0 / double(K);
  const auto f1 = WienerKernel::constant(1, K, 1.0), f2 = WienerKernel::constant(2, K, 1.0);
  auto within = [](const McEstimate& e, double target) { return std::abs(e.estimate - target) <= 3.0 * e.std_error + 1e-14; };
  const auto o12 = orthogonality_check(1, 2, f1, f2, P, K, 1.0, c.master_seed);
  add("wiener.orthogonality_1_2", P, within(o12, 0.0) ? 0 : 1, o12.estimate, 0.0, "E[I_1 I_2] = 0");
  const auto o11 = orthogonality_check(1, 1, f1, f1, P, K, 1.0, c.master_seed);
  add("wiener.isometry_1", P, within(o11, wiener_isometry(1, 1, f1, f1, dt)) ? 0 : 1, o11.estimate,
      wiener_isometry(1, 1, f1, f1, dt), "E[I_1(f)^2] = (f, f)");
  const auto o22 = orthogonality_check(2, 2, f2, f2, P, K, 1.0, c.master_seed);
  add("wiener.isometry_2", P, within(o22, wiener_isometry(2, 2, f2, f2, dt)) ? 0 : 1, o22.estimate,
      wiener_isometry(2, 2, f2, f2, dt), "E[I_2(f)^2] = (2!)^2 (f, f) on the ordered simplex");

  // Wick identities on a small chaos space
  const ChaosSpace space(static_cast<int>(c.noise.modes), std::max(4, c.chaos.max_degree));
  NormalStream rng(c.master_seed, 0xc4a05);
  auto random_deg2 = [&] {
    ChaosVector v(space);
    for (std::size_t a = 0; a < space.size(); ++a)
      if (space.degree(a) <= 2) v.c[a] = cplx(rng.normal(), rng.normal());
    return v;
  };
  auto random_zeta = [&] {
    CVec z(space.n_modes());
    for (auto& x : z) x = cplx(rng.normal(), rng.normal()) * 0.5;
    return z;
  };
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto a = random_deg2(), b = random_deg2();
    const auto ab = wick_product(a, b);
    const auto zeta = random_zeta();
    const cplx lhs = s_transform(ab, zeta), rhs = s_transform(a, zeta) * s_transform(b, zeta);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  add("wick.s_multiplicative", 20, worst < 1e-10 ? 0 : 1, worst, 1e-10, "S(a:b) = Sa Sb");
  {
    const auto y = random_zeta(), z = random_zeta();
    const auto A = annihilation_operator(space, y), C = creation_operator(space, z);
    const Eigen::MatrixXcd comm = A.matrix * C.matrix - C.matrix * A.matrix;
    cplx yz{};
    for (int i = 0; i < space.n_modes(); ++i) yz += y[i] * z[i];
    double err = 0.0;
    for (std::size_t a = 0; a < space.size(); ++a) {
      if (space.degree(a) >= space.max_degree()) continue;
      for (std::size_t b = 0; b < space.size(); ++b) {
        if (space.degree(b) >= space.max_degree()) continue;
        err = std::max(err, std::abs(comm(a, b) - (a == b ? yz : cplx{})));
      }
    }
    add("fock.ccr", 1, err < 1e-10 ? 0 : 1, err, 1e-10, "[a_y, a+_z] = <y, z> below the top degree");
  }

  json rep;
  rep["command"] = "verify";
  rep["model"] = c.model.name;
  rep["items"] = items;
  rep["violated"] = violated;
  rep["passed"] = violated.empty();
  write_report(ctx, rep);
  if (!ctx.flags.json) {
    for (const auto& it : items)
      *ctx.out << it["id"].get<std::string>() << " violations=" << it["violations"].get<std::size_t>() << "\n";
    summary(ctx, std::string("verify: ") + (violated.empty() ? "all inequalities hold" : "VIOLATIONS") + " hash=" + ctx.hash);
  }
  for (const auto& id : violated) *ctx.err << "violated: " << id << "\n";
  return violated.empty() ? ok : verification_failed;
}

}  // namespace cli

/// Entry point shared by the executable and the tests; args[0] is the
/// program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stochastic wave-equation toolkit"};
  app.require_subcommand(1);
  cli::Flags flags;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::size_t paths = 0;
  std::string outdir;
  auto* cmd_sim = app.add_subcommand("simulate", "Ito or deterministic run; writes trajectory.csv");
  auto* cmd_pic = app.add_subcommand("picard", "Picard iteration of the mild form plus holomorphy check");
  auto* cmd_conv = app.add_subcommand("converge", "Strong order on the solver.dt_ladder");
  auto* cmd_chs = app.add_subcommand("chaos", "Wiener chaos evolution vs Monte Carlo");
  auto* cmd_ver = app.add_subcommand("verify", "Estimate, Wiener integral and Wick identity checks");
  for (auto* sc : {cmd_sim, cmd_pic, cmd_conv, cmd_chs, cmd_ver}) {
    sc->add_option("--config", flags.config, "Config file (JSON)")->required();
    sc->add_option("--seed", seed, "Override master_seed");
    sc->add_option("--dt", dt, "Override solver.dt");
    sc->add_option("--paths", paths, "Override paths");
    sc->add_option("--out", outdir, "Override output directory");
    sc->add_flag("--json", flags.json, "Machine-readable report on stdout");
    sc->add_flag("--allow-stop", flags.allow_stop, "Accept runs that stop early");
  }
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return cli::ok;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return cli::config_error;
  }
  CLI::App* sc = app.get_subcommands().front();
  if (sc->count("--seed")) flags.seed = seed;
  if (sc->count("--dt")) flags.dt = dt;
  if (sc->count("--paths")) flags.paths = paths;
  if (sc->count("--out")) flags.out = outdir;
  try {
    const auto ctx = cli::prepare(flags, out, err);
    if (sc == cmd_sim) return cli::cmd_simulate(ctx);
    if (sc == cmd_pic) return cli::cmd_picard(ctx);
    if (sc == cmd_conv) return cli::cmd_converge(ctx);
    if (sc == cmd_chs) return cli::cmd_chaos(ctx);
    return cli::cmd_verify(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return cli::config_error;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return cli::config_error;
  } catch (const std::runtime_error& e) {
    err << "runtime failure: " << e.what() << "\n";
    return cli::blowup;
  }
}

}  // namespace wavesde
