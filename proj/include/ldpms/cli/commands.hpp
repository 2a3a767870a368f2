#pragma once

// Subcommand drivers for the ldpms tool. Each writes its outputs and a
// manifest.json into the output directory and returns a process exit code.

#include "ldpms/cli/config.hpp"
#include "ldpms/mc.hpp"

#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef LDPMS_VERSION
#define LDPMS_VERSION "unknown"
#endif

namespace ldpms::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kAssumption = 3,
  kConvergence = 4,
  kIo = 5,
  kNumeric = 6,
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::vector<double>> epsilons;
  int threads = 0;  ///< 0 = LDPMS_THREADS, then hardware
};

/// Parses a whitespace- or comma-separated list of numbers.
inline std::vector<double> parse_number_list(std::istream& in) {
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::stringstream ss(tok);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell.empty()) continue;
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        out.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("stdin: '" + cell + "' is not a number");
      }
    }
  }
  return out;
}

inline void apply(RunConfig& rc, const Overrides& ov) {
  if (ov.seed) {
    rc.seed = *ov.seed;
    rc.resolved["scheme"]["seed"] = rc.seed;
  }
  if (ov.out_dir) {
    rc.out_dir = *ov.out_dir;
    rc.resolved["output"]["directory"] = rc.out_dir;
  }
  if (ov.epsilons) {
    if (ov.epsilons->empty()) throw ConfigError("stdin: empty epsilon list");
    for (double e : *ov.epsilons)
      if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("stdin: epsilons must be positive");
    rc.epsilons = *ov.epsilons;
    rc.resolved["regime"]["epsilon"] = rc.epsilons;
  }
}

namespace detail {

inline std::filesystem::path output_dir(const RunConfig& rc) {
  std::filesystem::path dir(rc.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.imbue(std::locale::classic());
  writer(out);
  out.flush();
  if (!out) throw IoError("write to " + path.string() + " failed");
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

/// Resolved config plus hash, seed and build version; accepted back as --config.
/// The hash leaves out the output section so reruns elsewhere hash the same.
inline json manifest(const RunConfig& rc, const std::string& command, const std::vector<std::string>& outputs) {
  json hashed = rc.resolved;
  hashed.erase("output");
  const std::string canonical = hashed.dump();
  return {{"tool", "ldpms"},
          {"command", command},
          {"version", LDPMS_VERSION},
          {"config_hash", hex(fnv1a(canonical))},
          {"seed", rc.seed},
          {"outputs", outputs},
          {"config", rc.resolved}};
}

inline SimConfig sim_config(const RunConfig& rc, double eps) {
  SimConfig cfg;
  cfg.T = rc.T;
  cfg.dt = rc.dt;
  cfg.x0 = rc.x0;
  cfg.regime = ScaleRegime::from_law(eps, rc.law);
  cfg.seed = rc.seed;
  cfg.jump_budget = rc.jump_budget;
  return cfg;
}

struct CheckOutcome {
  json report;
  std::vector<std::pair<std::string, std::string>> failures;  ///< (assumption, detail)
};

inline CheckOutcome run_checks(const RunConfig& rc) {
  const json task = rc.task_section("check");
  cli::detail::closed(task, "task.check", {"samples_per_axis", "ellipticity_floor", "h2_scales"});
  const int per_axis = cli::detail::get_or<int>(task, "task.check", "samples_per_axis", kDefaultSamplesPerAxis);
  const double floor = cli::detail::get_or<double>(task, "task.check", "ellipticity_floor", kDefaultEllipticityFloor);
  const auto scales = cli::detail::get_or<std::vector<double>>(task, "task.check", "h2_scales", {1e-1, 1e-3, 1e-5});
  if (per_axis < 2) throw ConfigError("task.check.samples_per_axis: must be at least 2");

  CheckOutcome out;
  const auto& field = *rc.field;
  int n = per_axis;
  while (n > 2 && std::pow(static_cast<double>(n), rc.dimension) > 65536.0) --n;
  try {
    const double kappa = ellipticity_kappa(field, torus_grid(rc.dimension, n), floor);
    out.report[kEllipticity] = {{"pass", true}, {"kappa", kappa}, {"floor", floor}};
  } catch (const AssumptionViolation& e) {
    out.report[kEllipticity] = {{"pass", false}, {"detail", e.detail()}, {"floor", floor}};
    out.failures.emplace_back(kEllipticity, e.detail());
  }

  const auto h2 = verify_h2(field, rc.nu, standard_h2_pairs(rc.dimension, per_axis, scales));
  json by_scale = json::object();
  for (const auto& [decade, c1] : h2.C1_by_scale) by_scale["1e" + std::to_string(decade)] = c1;
  out.report[kLipschitzGrowth] = {{"pass", h2.pass},
                                  {"C1_hat", std::isfinite(h2.C1_hat) ? json(h2.C1_hat) : json("inf")},
                                  {"C2_hat", std::isfinite(h2.C2_hat) ? json(h2.C2_hat) : json("inf")},
                                  {"lipschitz_divergent", h2.lipschitz_divergent},
                                  {"C1_by_decade", by_scale}};
  if (!h2.pass)
    out.failures.emplace_back(kLipschitzGrowth, "sampled Lipschitz constant diverges as the pair distance shrinks");

  if (rc.epsilons.size() >= 2) {
    const auto h1 = check_scale_separation(rc.law, rc.epsilons);
    out.report[kScaleSeparation] = {{"pass", h1.pass}, {"epsilon", h1.epsilons}, {"delta_over_epsilon", h1.delta_over_eps}};
    if (!h1.pass) out.failures.emplace_back(kScaleSeparation, "delta/epsilon does not grow as epsilon decreases");
  } else {
    // a single point cannot show growth; judge the law itself
    const bool pass = rc.law.exponent < 1.0;
    out.report[kScaleSeparation] = {{"pass", pass}, {"epsilon", rc.epsilons}, {"exponent", rc.law.exponent}};
    if (!pass) out.failures.emplace_back(kScaleSeparation, "delta law exponent must be below 1");
  }
  out.report["pass"] = out.failures.empty();
  return out;
}

/// Throws the first failed assumption.
inline void require_checks(const RunConfig& rc) {
  const auto c = run_checks(rc);
  if (!c.failures.empty()) throw AssumptionViolation(c.failures.front().first, c.failures.front().second);
}

inline RateOptions rate_options(const RunConfig& rc) {
  const json task = rc.task_section("rate");
  closed(task, "task.rate", {"velocities", "L_schedule", "steps_per_unit", "drift_sign", "grad_tol", "max_iter",
                             "convexity_tol", "write_minimizers"});
  RateOptions o;
  o.L_schedule = get_or<std::vector<double>>(task, "task.rate", "L_schedule", o.L_schedule);
  o.steps_per_unit = get_or<int>(task, "task.rate", "steps_per_unit", o.steps_per_unit);
  o.lbfgs.grad_tol = get_or<double>(task, "task.rate", "grad_tol", o.lbfgs.grad_tol);
  o.lbfgs.max_iter = get_or<int>(task, "task.rate", "max_iter", o.lbfgs.max_iter);
  const auto sign = get_or<std::string>(task, "task.rate", "drift_sign", "c_minus_kbar");
  if (sign == "c_minus_kbar") o.v1.sign = DriftSign::c_minus_kbar;
  else if (sign == "c_plus_kbar") o.v1.sign = DriftSign::c_plus_kbar;
  else throw ConfigError("task.rate.drift_sign: expected c_minus_kbar or c_plus_kbar");
  if (o.steps_per_unit < 1) throw ConfigError("task.rate.steps_per_unit: must be positive");
  return o;
}

inline json estimate_to_json(const RateEstimate& e) {
  json values = json::array();
  for (const auto& [L, v] : e.values) values.push_back({{"L", L}, {"V_over_L", v}});
  return {{"velocity", to_json(e.velocity)},
          {"J", e.J},
          {"slope", e.slope},
          {"values", values},
          {"extrapolation_warning", e.extrapolation_warning},
          {"clamped", e.clamped},
          {"iterations", e.iterations},
          {"final_grad_norm", e.final_grad_norm}};
}

inline EventSet parse_event(const json& j, int d) {
  const std::string w = "task.ldp.event";
  closed(j, w, {"kind", "center", "radius", "normal", "offset", "lo", "hi"});
  const auto kind = get<std::string>(j.value("kind", json()), w + ".kind");
  auto bounds = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(w + "." + key + ": missing");
    const auto& arr = j.at(key);
    if (!arr.is_array() || static_cast<int>(arr.size()) != d)
      throw ConfigError(w + "." + key + ": expected " + std::to_string(d) + " entries");
    Vec v(d);
    for (int i = 0; i < d; ++i) {
      if (arr[i].is_string()) {
        const auto s = arr[i].get<std::string>();
        if (s == "inf") v[i] = std::numeric_limits<double>::infinity();
        else if (s == "-inf") v[i] = -std::numeric_limits<double>::infinity();
        else throw ConfigError(w + "." + key + ": '" + s + "' is not a bound");
      } else {
        v[i] = number(arr[i], w + "." + key);
      }
    }
    return v;
  };
  try {
    if (kind == "ball") return EventSet::ball(vec(j.at("center"), w + ".center", d), number(j.at("radius"), w + ".radius"));
    if (kind == "halfspace")
      return EventSet::halfspace(vec(j.at("normal"), w + ".normal", d), number(j.at("offset"), w + ".offset"));
    if (kind == "box") return EventSet::box(bounds("lo"), bounds("hi"));
  } catch (const InputError& e) {
    throw ConfigError(w + ": " + e.what());
  }
  throw ConfigError(w + ".kind: expected ball, halfspace or box");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_check(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto dir = detail::output_dir(rc);
  const auto c = detail::run_checks(rc);
  detail::write_json(dir / "check.json", c.report);
  detail::write_json(dir / "manifest.json", detail::manifest(rc, "check", {"check.json"}));
  if (c.report.contains(kEllipticity) && c.report[kEllipticity].value("pass", false))
    out << "uniform_ellipticity: pass (kappa = " << c.report[kEllipticity]["kappa"].get<double>() << ")\n";
  for (const char* name : {kLipschitzGrowth, kScaleSeparation})
    if (c.report[name].value("pass", false)) out << name << ": pass\n";
  for (const auto& [name, detail] : c.failures) err << "assumption violated: " << name << ": " << detail << '\n';
  return c.failures.empty() ? kOk : kAssumption;
}

inline int cmd_simulate(const RunConfig& rc, int threads, std::ostream& out, std::ostream&) {
  const json task = rc.task_section("simulate");
  detail::closed(task, "task.simulate", {"paths", "epsilon_index", "skip_check"});
  const int paths = detail::get_or<int>(task, "task.simulate", "paths", 1);
  const auto eps_index = detail::get_or<std::size_t>(task, "task.simulate", "epsilon_index", 0);
  const bool skip_check = detail::get_or<bool>(task, "task.simulate", "skip_check", false);
  if (paths < 1) throw ConfigError("task.simulate.paths: must be positive");
  if (eps_index >= rc.epsilons.size()) throw ConfigError("task.simulate.epsilon_index: out of range");
  if (!skip_check) detail::require_checks(rc);

  const auto dir = detail::output_dir(rc);
  const SimConfig cfg = detail::sim_config(rc, rc.epsilons[eps_index]);
  const auto batch = simulate_batch(*rc.field, rc.nu, cfg, static_cast<std::size_t>(paths), std::nullopt, threads);
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::ostringstream name;
    name << "trajectory_" << std::setw(5) << std::setfill('0') << i << ".csv";
    detail::write_file(dir / name.str(), [&](std::ostream& os) { write_trajectory_csv(os, batch[i].trajectory); });
    outputs.push_back(name.str());
  }
  if (batch.size() > 1) {
    json summary = batch_summary(batch);
    summary["epsilon"] = cfg.regime.epsilon;
    summary["delta"] = cfg.regime.delta;
    summary["n_steps"] = cfg.n_steps();
    detail::write_json(dir / "summary.json", summary);
    outputs.push_back("summary.json");
  }
  detail::write_json(dir / "manifest.json", detail::manifest(rc, "simulate", outputs));
  out << "wrote " << batch.size() << " trajectories to " << dir.string() << '\n';
  return kOk;
}

inline int cmd_rate(const RunConfig& rc, int threads, std::ostream& out, std::ostream&) {
  detail::require_checks(rc);
  const RateOptions opts = detail::rate_options(rc);
  const json task = rc.task_section("rate");
  std::vector<Vec> velocities;
  if (task.contains("velocities")) {
    const auto& vs = task.at("velocities");
    if (!vs.is_array() || vs.empty()) throw ConfigError("task.rate.velocities: expected a nonempty list");
    for (std::size_t i = 0; i < vs.size(); ++i)
      velocities.push_back(detail::vec(vs[i], "task.rate.velocities[" + std::to_string(i) + "]", rc.dimension));
  } else {
    for (int k = -2; k <= 2; ++k) velocities.push_back(Vec::Constant(rc.dimension, 0.5 * k));
  }
  const double convexity_tol = detail::get_or<double>(task, "task.rate", "convexity_tol", 1e-4);
  const bool write_minimizers = detail::get_or<bool>(task, "task.rate", "write_minimizers", false);

  std::vector<RateEstimate> estimates(velocities.size());
  parallel_for(velocities.size(), threads,
               [&](std::size_t i) { estimates[i] = estimate_J(*rc.field, rc.nu, velocities[i], opts); });

  const auto dir = detail::output_dir(rc);
  std::vector<std::string> outputs;
  if (rc.wants("csv")) {
    detail::write_file(dir / "rate_table.csv", [&](std::ostream& os) { write_rate_table_csv(os, estimates); });
    outputs.push_back("rate_table.csv");
    if (write_minimizers)
      for (std::size_t i = 0; i < estimates.size(); ++i) {
        const auto name = "minimizer_" + std::to_string(i) + ".csv";
        detail::write_file(dir / name, [&](std::ostream& os) { write_path_csv(os, *estimates[i].minimizer); });
        outputs.push_back(name);
      }
  }
  const auto convexity = convexity_check(estimates, convexity_tol);
  json rows = json::array();
  for (const auto& e : estimates) rows.push_back(detail::estimate_to_json(e));
  json violations = json::array();
  for (const auto& v : convexity.violations) violations.push_back({{"u", v.u}, {"w", v.w}, {"mid", v.mid}, {"excess", v.excess}});
  detail::write_json(dir / "rate.json", {{"estimates", rows},
                                         {"convexity", {{"triples", convexity.triples},
                                                        {"violations", violations},
                                                        {"tolerance", convexity_tol},
                                                        {"pass", convexity.pass()}}}});
  outputs.push_back("rate.json");
  detail::write_json(dir / "manifest.json", detail::manifest(rc, "rate", outputs));
  out.precision(10);
  for (const auto& e : estimates) out << "J(" << e.velocity.transpose() << ") = " << e.J << '\n';
  out << "midpoint convexity: " << (convexity.pass() ? "pass" : "fail") << " (" << convexity.triples << " triples)\n";
  return kOk;
}

inline int cmd_bound(const RunConfig& rc, int, std::ostream& out, std::ostream&) {
  const json task = rc.task_section("bound");
  detail::closed(task, "task.bound", {"t", "points_per_axis", "symbol_grid", "margin_radii", "tail_tolerance"});
  std::vector<double> times{1.0};
  if (task.contains("t"))
    times = task.at("t").is_array() ? detail::get<std::vector<double>>(task.at("t"), "task.bound.t")
                                    : std::vector<double>{detail::number(task.at("t"), "task.bound.t")};
  DensityBoundOptions opts;
  opts.points_per_axis = detail::get_or<int>(task, "task.bound", "points_per_axis", 0);
  opts.per_axis = detail::get_or<int>(task, "task.bound", "symbol_grid", 0);
  opts.margin_radii = detail::get_or<std::vector<double>>(task, "task.bound", "margin_radii", opts.margin_radii);
  opts.tail_tolerance = detail::get_or<double>(task, "task.bound", "tail_tolerance", opts.tail_tolerance);
  detail::require_checks(rc);

  json results = json::array();
  json margin;
  for (double t : times) {
    const auto b = density_upper_bound(*rc.field, rc.nu, t, opts);
    margin = margin_to_json(b.margin);
    results.push_back({{"t", t}, {"bound", b.value}, {"radius", b.radius}, {"kappa", b.kappa},
                       {"points_per_axis", b.points_per_axis}});
    out.precision(10);
    out << "density bound at t = " << t << ": " << b.value << '\n';
  }
  const auto dir = detail::output_dir(rc);
  detail::write_json(dir / "bound.json", {{"bounds", results}, {"margin", margin}});
  std::vector<std::string> outputs{"bound.json"};
  if (rc.wants("csv")) {
    std::vector<Vec> xis;
    for (int i = -20; i <= 20; ++i) xis.push_back(Vec::Constant(rc.dimension, 0.5 * i));
    detail::write_file(dir / "symbol_slice.csv",
                       [&](std::ostream& os) { write_symbol_slice_csv(os, *rc.field, rc.nu, rc.x0, xis); });
    outputs.push_back("symbol_slice.csv");
  }
  detail::write_json(dir / "manifest.json", detail::manifest(rc, "bound", outputs));
  return kOk;
}

inline int cmd_ldp(const RunConfig& rc, int threads, std::ostream& out, std::ostream& err) {
  const json task = rc.task_section("ldp");
  detail::closed(task, "task.ldp", {"event", "paths", "importance", "tolerance", "grid_resolution"});
  if (!task.contains("event")) throw ConfigError("task.ldp.event: missing");
  const EventSet A = detail::parse_event(task.at("event"), rc.dimension);
  SweepOptions opts;
  opts.n_paths = detail::get_or<std::size_t>(task, "task.ldp", "paths", opts.n_paths);
  opts.importance = detail::get_or<bool>(task, "task.ldp", "importance", opts.importance);
  opts.tolerance = detail::get_or<double>(task, "task.ldp", "tolerance", opts.tolerance);
  opts.grid_resolution = detail::get_or<int>(task, "task.ldp", "grid_resolution", opts.grid_resolution);
  opts.dt = rc.dt;
  opts.seed = rc.seed;
  opts.threads = threads;
  opts.jump_budget = rc.jump_budget;
  detail::require_checks(rc);

  std::vector<double> eps = rc.epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  const RateOptions ropts = detail::rate_options(rc);
  const auto sweep = ldp_sweep(*rc.field, rc.nu, rc.law, A, rc.x0, rc.T, eps, rate_function(*rc.field, rc.nu, ropts), opts);

  const auto dir = detail::output_dir(rc);
  std::vector<std::string> outputs;
  if (rc.wants("csv")) {
    detail::write_file(dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, sweep); });
    outputs.push_back("sweep.csv");
  }
  detail::write_json(dir / "sweep.json", sweep_to_json(sweep, A));
  outputs.push_back("sweep.json");
  detail::write_json(dir / "manifest.json", detail::manifest(rc, "ldp", outputs));
  out.precision(6);
  for (const auto& p : sweep.points) {
    if (p.failed) err << "eps = " << p.epsilon << ": " << p.error << '\n';
    else out << "eps = " << p.epsilon << ": eps log p = " << p.eps_log_p << " (target " << sweep.target << ")\n";
  }
  out << "verdict: " << (sweep.pass ? "pass" : "fail") << " (final gap " << sweep.final_gap << ", tolerance "
      << sweep.tolerance << ")\n";
  return kOk;
}

/// Runs a subcommand and maps library errors to exit codes.
inline int run(const std::string& command, const std::string& config_path, const Overrides& ov, std::ostream& out,
               std::ostream& err) {
  try {
    RunConfig rc = load_config(config_path);
    apply(rc, ov);
    const int threads = resolve_threads(ov.threads);
    if (command == "check") return cmd_check(rc, out, err);
    if (command == "simulate") return cmd_simulate(rc, threads, out, err);
    if (command == "rate") return cmd_rate(rc, threads, out, err);
    if (command == "bound") return cmd_bound(rc, threads, out, err);
    if (command == "ldp") return cmd_ldp(rc, threads, out, err);
    err << "unknown command " << command << '\n';
    return kConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const AssumptionViolation& e) {
    err << "assumption violated: " << e.what() << '\n';
    return kAssumption;
  } catch (const BoundDivergenceError& e) {
    err << "assumption violated: log-growth of the symbol: " << e.what() << '\n';
    return kAssumption;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << '\n';
    return kConvergence;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "unexpected failure: " << e.what() << '\n';
    return kUnexpected;
  }
}

}  // namespace ldpms::cli
