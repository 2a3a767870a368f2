#pragma once

// Run configuration: a JSON document with sections model, scheme, regime,
// task and output. The schema is closed; unknown keys are errors. Every
// defaulted value is written back into `resolved` so a manifest reproduces
// the run.

#include "ldpms/coeffs.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>

namespace ldpms::cli {

using nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void closed(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!keys.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

inline std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

template <class T>
T get(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type (" + std::string(j.type_name()) + ")");
  }
}

template <class T>
T get_or(const json& j, const std::string& where, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j.at(key), join(where, key)) : fallback;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": must be finite");
  return v;
}

inline Vec vec(const json& j, const std::string& where, int d) {
  const auto v = get<std::vector<double>>(j, where);
  if (d >= 0 && static_cast<int>(v.size()) != d)
    throw ConfigError(where + ": expected " + std::to_string(d) + " entries");
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError(where + ": entries must be finite");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Mat mat(const json& j, const std::string& where, int d) {
  const auto rows = get<std::vector<std::vector<double>>>(j, where);
  if (static_cast<int>(rows.size()) != d) throw ConfigError(where + ": expected " + std::to_string(d) + " rows");
  Mat m(d, d);
  for (int i = 0; i < d; ++i) {
    if (static_cast<int>(rows[i].size()) != d)
      throw ConfigError(where + ": row " + std::to_string(i) + " needs " + std::to_string(d) + " entries");
    for (int k = 0; k < d; ++k) m(i, k) = rows[i][k];
  }
  if (!m.allFinite()) throw ConfigError(where + ": entries must be finite");
  return m;
}

inline json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<int> frequency(const json& j, const std::string& where, int d) {
  const auto f = get<std::vector<int>>(j, where);
  if (static_cast<int>(f.size()) != d) throw ConfigError(where + ": expected " + std::to_string(d) + " entries");
  return f;
}

inline std::string table_path(const json& def, const std::string& where, const std::filesystem::path& base) {
  std::filesystem::path p = get<std::string>(def.at("path"), where + ".path");
  if (p.is_relative()) p = base / p;
  return std::filesystem::absolute(p).lexically_normal().string();
}

// Each builder parses a field def, stores the normalized def in `echo` and
// returns the evaluator.

inline MatrixMap matrix_field(const json& def, const std::string& where, int d,
                              const std::filesystem::path& base, json& echo) {
  closed(def, where, {"type", "value", "offset", "terms", "path"});
  const auto type = get<std::string>(def.value("type", json()), where + ".type");
  if (type == "identity") {
    echo = {{"type", "identity"}};
    return fields::identity(d);
  }
  if (type == "constant") {
    const Mat m = mat(def.at("value"), where + ".value", d);
    echo = {{"type", "constant"}, {"value", to_json(m)}};
    return fields::constant_matrix(m);
  }
  if (type == "diagonal") {
    const Vec v = vec(def.at("value"), where + ".value", d);
    echo = {{"type", "diagonal"}, {"value", to_json(v)}};
    return fields::constant_matrix(v.asDiagonal());
  }
  if (type == "trig") {
    const Mat offset = mat(def.at("offset"), where + ".offset", d);
    std::vector<fields::TrigTerm> terms;
    json te = json::array();
    for (std::size_t i = 0; i < def.value("terms", json::array()).size(); ++i) {
      const auto w = where + ".terms[" + std::to_string(i) + "]";
      const auto& t = def.at("terms")[i];
      closed(t, w, {"amplitude", "frequency", "phase"});
      fields::TrigTerm term{mat(t.at("amplitude"), w + ".amplitude", d), frequency(t.at("frequency"), w + ".frequency", d),
                            t.contains("phase") ? number(t.at("phase"), w + ".phase") : 0.0};
      te.push_back({{"amplitude", to_json(term.amplitude)}, {"frequency", term.frequency}, {"phase", term.phase}});
      terms.push_back(std::move(term));
    }
    echo = {{"type", "trig"}, {"offset", to_json(offset)}, {"terms", te}};
    return fields::trig_matrix(offset, std::move(terms));
  }
  if (type == "table") {
    const auto path = table_path(def, where, base);
    echo = {{"type", "table"}, {"path", path}};
    return fields::tabulated_matrix(fields::TabulatedField::load_csv(path, d), d);
  }
  throw ConfigError(where + ".type: unknown matrix field '" + type + "'");
}

inline VectorMap vector_field(const json& def, const std::string& where, int d,
                              const std::filesystem::path& base, json& echo) {
  closed(def, where, {"type", "value", "offset", "terms", "amplitude", "axis", "path"});
  const auto type = get<std::string>(def.value("type", json()), where + ".type");
  if (type == "zero") {
    echo = {{"type", "zero"}};
    return fields::zero_vector(d);
  }
  if (type == "constant") {
    const Vec v = vec(def.at("value"), where + ".value", d);
    echo = {{"type", "constant"}, {"value", to_json(v)}};
    return fields::constant_vector(v);
  }
  if (type == "trig") {
    const Vec offset = def.contains("offset") ? vec(def.at("offset"), where + ".offset", d) : Vec::Zero(d);
    std::vector<fields::TrigTerm> terms;
    json te = json::array();
    for (std::size_t i = 0; i < def.value("terms", json::array()).size(); ++i) {
      const auto w = where + ".terms[" + std::to_string(i) + "]";
      const auto& t = def.at("terms")[i];
      closed(t, w, {"amplitude", "frequency", "phase"});
      fields::TrigTerm term{Mat(vec(t.at("amplitude"), w + ".amplitude", d)), frequency(t.at("frequency"), w + ".frequency", d),
                            t.contains("phase") ? number(t.at("phase"), w + ".phase") : 0.0};
      te.push_back({{"amplitude", to_json(Vec(term.amplitude.col(0)))}, {"frequency", term.frequency}, {"phase", term.phase}});
      terms.push_back(std::move(term));
    }
    echo = {{"type", "trig"}, {"offset", to_json(offset)}, {"terms", te}};
    return fields::trig_vector(offset, std::move(terms));
  }
  if (type == "sawtooth") {
    const Vec amp = vec(def.at("amplitude"), where + ".amplitude", d);
    const int axis = get_or<int>(def, where, "axis", 0);
    if (axis < 0 || axis >= d) throw ConfigError(where + ".axis: out of range");
    echo = {{"type", "sawtooth"}, {"amplitude", to_json(amp)}, {"axis", axis}};
    return fields::sawtooth_vector(amp, axis);
  }
  if (type == "table") {
    const auto path = table_path(def, where, base);
    echo = {{"type", "table"}, {"path", path}};
    auto table = fields::TabulatedField::load_csv(path, d);
    if (table.components() != d) throw ConfigError(where + ": table needs " + std::to_string(d) + " value columns");
    return fields::tabulated_vector(std::move(table));
  }
  throw ConfigError(where + ".type: unknown vector field '" + type + "'");
}

inline KernelMap kernel_field(const json& def, const std::string& where, int d, json& echo) {
  closed(def, where, {"type", "scale", "offset", "amplitude", "frequency", "phase"});
  const auto type = get<std::string>(def.value("type", json()), where + ".type");
  if (type == "zero") {
    echo = {{"type", "zero"}};
    return fields::zero_kernel(d);
  }
  if (type == "linear_mark") {
    const double s = def.contains("scale") ? number(def.at("scale"), where + ".scale") : 1.0;
    echo = {{"type", "linear_mark"}, {"scale", s}};
    return fields::linear_mark(s);
  }
  if (type == "modulated_mark") {
    // k(x, y) = (offset + amplitude sin(2 pi <frequency, x> + phase)) y
    const double off = def.contains("offset") ? number(def.at("offset"), where + ".offset") : 1.0;
    const double amp = number(def.at("amplitude"), where + ".amplitude");
    const auto freq = frequency(def.at("frequency"), where + ".frequency", d);
    const double ph = def.contains("phase") ? number(def.at("phase"), where + ".phase") : 0.0;
    echo = {{"type", "modulated_mark"}, {"offset", off}, {"amplitude", amp}, {"frequency", freq}, {"phase", ph}};
    fields::TrigTerm t{Mat::Constant(1, 1, amp), freq, ph};
    return fields::modulated_mark([off, t](const Vec& x) { return off + t.amplitude(0, 0) * fields::harmonic(t, x); });
  }
  throw ConfigError(where + ".type: unknown kernel '" + type + "'");
}

inline json unit(int d, int axis, double value) {
  std::vector<double> v(d, 0.0);
  v[axis] = value;
  return v;
}

inline std::vector<int> first_axis(int d) {
  std::vector<int> f(d, 0);
  f[0] = 1;
  return f;
}

/// Field specs of a named suite.
inline json suite_model(const std::string& name, int d) {
  if (name == "gaussian")
    return {{"sigma", {{"type", "identity"}}}, {"b", {{"type", "zero"}}}, {"c", {{"type", "zero"}}},
            {"k", {{"type", "zero"}}}, {"nu", json::array()}};
  if (name == "periodic_drift")
    return {{"sigma", {{"type", "identity"}}},
            {"b", {{"type", "zero"}}},
            {"c", {{"type", "trig"}, {"terms", json::array({{{"amplitude", unit(d, 0, 0.1)}, {"frequency", first_axis(d)}}})}}},
            {"k", {{"type", "zero"}}},
            {"nu", json::array()}};
  if (name == "degenerate") {
    std::vector<double> diag(d, 1.0);
    diag.back() = 0.0;
    return {{"sigma", {{"type", "diagonal"}, {"value", diag}}}, {"b", {{"type", "zero"}}}, {"c", {{"type", "zero"}}},
            {"k", {{"type", "zero"}}}, {"nu", json::array()}};
  }
  if (name == "seam")
    return {{"sigma", {{"type", "identity"}}}, {"b", {{"type", "zero"}}},
            {"c", {{"type", "sawtooth"}, {"amplitude", unit(d, 0, 1.0)}, {"axis", 0}}},
            {"k", {{"type", "zero"}}}, {"nu", json::array()}};
  if (name == "jump_gaussian")
    return {{"sigma", {{"type", "identity"}}}, {"b", {{"type", "zero"}}}, {"c", {{"type", "zero"}}},
            {"k", {{"type", "linear_mark"}, {"scale", 1.0}}},
            {"nu", json::array({{{"mark", unit(d, 0, 0.5)}, {"mass", 1.0}}, {{"mark", unit(d, 0, -0.5)}, {"mass", 1.0}}})}};
  throw ConfigError("model.suite: unknown suite '" + name + "'");
}

}  // namespace detail

struct RunConfig {
  json resolved;
  int dimension = 1;
  std::shared_ptr<const CoefficientField> field;
  LevyMeasure nu;
  // scheme
  double T = 1.0;
  double dt = 0.0;
  Vec x0;
  std::uint64_t seed = 0;
  unsigned jump_budget = 16;
  // regime
  std::vector<double> epsilons{0.1};
  RegimeLaw law{};
  // task and output
  json task = json::object();
  std::string out_dir = "out";
  std::vector<std::string> formats{"csv", "json"};

  bool wants(const std::string& format) const {
    return std::find(formats.begin(), formats.end(), format) != formats.end();
  }

  /// The named task subsection, or an empty object.
  json task_section(const std::string& name) const {
    return task.contains(name) ? task.at(name) : json::object();
  }
};

inline void parse_model(const json& m, RunConfig& rc, const std::filesystem::path& base) {
  using namespace detail;
  closed(m, "model", {"suite", "dimension", "sigma", "b", "c", "k", "nu"});
  const std::string suite = get_or<std::string>(m, "model", "suite", "");
  rc.dimension = get_or<int>(m, "model", "dimension", suite == "periodic_drift" || suite == "degenerate" || suite == "seam" ? 2 : 1);
  const int d = rc.dimension;
  if (d < 1 || d > 8) throw ConfigError("model.dimension: must be between 1 and 8");
  if (suite == "degenerate" && d < 2) throw ConfigError("model.dimension: degenerate suite needs d >= 2");

  json def = suite.empty() ? json::object() : suite_model(suite, d);
  for (const char* key : {"sigma", "b", "c", "k", "nu"})
    if (m.contains(key)) def[key] = m.at(key);
  for (const char* key : {"sigma", "b", "c", "k"})
    if (!def.contains(key)) throw ConfigError(std::string("model.") + key + ": missing (no suite given)");

  json echo = {{"dimension", d}};
  if (!suite.empty()) echo["suite"] = suite;
  auto sigma = matrix_field(def.at("sigma"), "model.sigma", d, base, echo["sigma"]);
  auto b = vector_field(def.at("b"), "model.b", d, base, echo["b"]);
  auto c = vector_field(def.at("c"), "model.c", d, base, echo["c"]);
  auto k = kernel_field(def.at("k"), "model.k", d, echo["k"]);

  std::vector<Atom> atoms;
  json nu_echo = json::array();
  const json nu = def.value("nu", json::array());
  if (!nu.is_array()) throw ConfigError("model.nu: expected a list of atoms");
  for (std::size_t i = 0; i < nu.size(); ++i) {
    const auto w = "model.nu[" + std::to_string(i) + "]";
    closed(nu[i], w, {"mark", "mass"});
    Atom a{vec(nu[i].at("mark"), w + ".mark", d), number(nu[i].at("mass"), w + ".mass")};
    nu_echo.push_back({{"mark", to_json(a.mark)}, {"mass", a.mass}});
    atoms.push_back(std::move(a));
  }
  echo["nu"] = nu_echo;
  try {
    rc.nu = LevyMeasure(std::move(atoms));
    rc.field = std::make_shared<const CoefficientField>(d, std::move(sigma), std::move(b), std::move(c), std::move(k));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  rc.resolved["model"] = echo;
}

inline void parse_scheme(const json& s, RunConfig& rc) {
  using namespace detail;
  closed(s, "scheme", {"T", "dt", "x0", "seed", "jump_budget"});
  rc.T = s.contains("T") ? number(s.at("T"), "scheme.T") : 1.0;
  if (!(rc.T > 0.0)) throw ConfigError("scheme.T: must be positive");
  rc.dt = s.contains("dt") ? number(s.at("dt"), "scheme.dt") : 1e-3 * rc.T;
  if (!(rc.dt > 0.0) || rc.dt > rc.T) throw ConfigError("scheme.dt: must lie in (0, T]");
  rc.x0 = s.contains("x0") ? vec(s.at("x0"), "scheme.x0", rc.dimension) : Vec::Zero(rc.dimension);
  rc.seed = get_or<std::uint64_t>(s, "scheme", "seed", 0);
  const int budget = get_or<int>(s, "scheme", "jump_budget", 16);
  if (budget < 1) throw ConfigError("scheme.jump_budget: must be positive");
  rc.jump_budget = static_cast<unsigned>(budget);
  rc.resolved["scheme"] = {{"T", rc.T}, {"dt", rc.dt}, {"x0", to_json(rc.x0)}, {"seed", rc.seed},
                           {"jump_budget", rc.jump_budget}};
}

inline void parse_regime(const json& r, RunConfig& rc) {
  using namespace detail;
  closed(r, "regime", {"epsilon", "delta_law"});
  if (r.contains("epsilon")) {
    const auto& e = r.at("epsilon");
    rc.epsilons = e.is_array() ? get<std::vector<double>>(e, "regime.epsilon") : std::vector<double>{number(e, "regime.epsilon")};
  }
  if (rc.epsilons.empty()) throw ConfigError("regime.epsilon: empty list");
  for (double e : rc.epsilons)
    if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("regime.epsilon: values must be positive");
  if (r.contains("delta_law")) {
    const auto& l = r.at("delta_law");
    closed(l, "regime.delta_law", {"coefficient", "exponent"});
    if (l.contains("coefficient")) rc.law.coefficient = number(l.at("coefficient"), "regime.delta_law.coefficient");
    if (l.contains("exponent")) rc.law.exponent = number(l.at("exponent"), "regime.delta_law.exponent");
  }
  if (!(rc.law.coefficient > 0.0)) throw ConfigError("regime.delta_law.coefficient: must be positive");
  rc.resolved["regime"] = {{"epsilon", rc.epsilons},
                           {"delta_law", {{"coefficient", rc.law.coefficient}, {"exponent", rc.law.exponent}}}};
}

inline void parse_output(const json& o, RunConfig& rc) {
  using namespace detail;
  closed(o, "output", {"directory", "formats"});
  rc.out_dir = get_or<std::string>(o, "output", "directory", "out");
  if (o.contains("formats")) rc.formats = get<std::vector<std::string>>(o.at("formats"), "output.formats");
  for (const auto& f : rc.formats)
    if (f != "csv" && f != "json") throw ConfigError("output.formats: unknown format '" + f + "'");
  rc.resolved["output"] = {{"directory", rc.out_dir}, {"formats", rc.formats}};
}

/// Builds a RunConfig from a parsed document. `base` resolves relative table paths.
inline RunConfig parse_config(const json& doc, const std::filesystem::path& base = ".") {
  using namespace detail;
  closed(doc, "config", {"model", "scheme", "regime", "task", "output"});
  RunConfig rc;
  rc.resolved = json::object();
  if (!doc.contains("model")) throw ConfigError("model: missing section");
  parse_model(doc.at("model"), rc, base);
  parse_scheme(doc.value("scheme", json::object()), rc);
  parse_regime(doc.value("regime", json::object()), rc);
  rc.task = doc.value("task", json::object());
  closed(rc.task, "task", {"check", "simulate", "rate", "bound", "ldp"});
  rc.resolved["task"] = rc.task;
  parse_output(doc.value("output", json::object()), rc);
  return rc;
}

/// Loads a config file, or the "config" member of a run manifest.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (doc.is_object() && doc.contains("config") && doc.contains("config_hash")) doc = doc.at("config");
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_config(doc, base);
}

/// 64-bit FNV-1a
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

}  // namespace ldpms::cli
