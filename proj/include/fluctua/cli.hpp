#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "atomsurface.hpp"
#include "errors.hpp"
#include "materials.hpp"
#include "scattering.hpp"
#include "spectral.hpp"
#include "thermal.hpp"

namespace fluctua::cli {

using json = nlohmann::json;

enum class Scenario { SlabForce, SlabHeat, AtomForce, EqForce };
enum class SweepVariable { D, T3, ZA };
enum class Spacing { Linear, Log };
enum class Format { Csv, Json };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::SlabForce: return "slab-force";
    case Scenario::SlabHeat: return "slab-heat";
    case Scenario::AtomForce: return "atom-force";
    case Scenario::EqForce: return "eq-force";
  }
  return "";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "slab-force") return Scenario::SlabForce;
  if (s == "slab-heat") return Scenario::SlabHeat;
  if (s == "atom-force") return Scenario::AtomForce;
  if (s == "eq-force") return Scenario::EqForce;
  throw ConfigError("scenario", "unknown scenario '" + s +
                                    "' (expected slab-force, slab-heat, atom-force or eq-force)");
}

inline Format parse_format(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  throw ConfigError("output.format", "expected csv or json, got '" + s + "'");
}

struct Sweep {
  SweepVariable variable = SweepVariable::D;
  double min = 0.0;
  double max = 0.0;
  int points = 1;
  Spacing spacing = Spacing::Linear;

  std::vector<double> values() const {
    std::vector<double> v(static_cast<std::size_t>(points));
    if (points == 1) {
      v[0] = min;
      return v;
    }
    for (int i = 0; i < points; ++i) {
      const double f = static_cast<double>(i) / (points - 1);
      v[static_cast<std::size_t>(i)] = spacing == Spacing::Log
                                           ? min * std::pow(max / min, f)
                                           : min + (max - min) * f;
    }
    v.back() = max;
    return v;
  }
};

struct RunConfig {
  Scenario scenario = Scenario::SlabForce;
  SlabBody body1;
  SlabBody body2;
  double d = 1e-6;
  AtomConfig atom;
  TemperatureTriple temps;
  std::optional<Sweep> sweep;
  double tol = 1e-3;
  std::string output_path;
  Format format = Format::Csv;
};

// ---------------------------------------------------------------------------
// Parsing.

namespace detail {

/// Scale factor to SI for a length or temperature unit.
inline double unit_scale(const std::string& unit, bool temperature, const std::string& field) {
  if (temperature) {
    if (unit == "K") return 1.0;
    throw ConfigError(field, "unknown temperature unit '" + unit + "' (expected K)");
  }
  if (unit == "m") return 1.0;
  if (unit == "mm") return 1e-3;
  if (unit == "um" || unit == "µm" || unit == "μm") return 1e-6;
  if (unit == "nm") return 1e-9;
  throw ConfigError(field, "unknown length unit '" + unit + "' (expected m, mm, um, µm or nm)");
}

/// Number (SI), "<value> <unit>", or {"value": x, "unit": u}.
inline double quantity(const json& j, bool temperature, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_object()) {
    if (!j.contains("value") || !j["value"].is_number()) {
      throw ConfigError(field, "quantity object needs a numeric 'value'");
    }
    const double v = j["value"].get<double>();
    if (!j.contains("unit")) return v;
    if (!j["unit"].is_string()) throw ConfigError(field, "'unit' must be a string");
    return v * unit_scale(j["unit"].get<std::string>(), temperature, field);
  }
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError(field, "cannot parse quantity '" + s + "'");
    }
    std::string unit = s.substr(pos);
    unit.erase(0, unit.find_first_not_of(' '));
    unit.erase(unit.find_last_not_of(' ') + 1);
    if (unit.empty()) return v;
    return v * unit_scale(unit, temperature, field);
  }
  throw ConfigError(field, "expected a number, a string with unit, or {value, unit}");
}

inline double number(const json& j, const std::string& key, const std::string& field) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw ConfigError(field + "." + key, "missing or not a number");
  }
  return j[key].get<double>();
}

inline cplx complex_number(const json& j, const std::string& field) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  throw ConfigError(field, "expected a number or [re, im]");
}

inline DielectricModel material(const json& j, const std::string& field) {
  if (j.is_string()) {
    try {
      return preset(j.get<std::string>());
    } catch (const UnsupportedModelError& e) {
      throw ConfigError(field, e.what());
    }
  }
  if (!j.is_object() || !j.contains("model") || !j["model"].is_string()) {
    throw ConfigError(field, "expected a preset name or an object with a 'model' key");
  }
  const std::string model = j["model"].get<std::string>();
  if (model == "constant") {
    if (!j.contains("eps")) throw ConfigError(field + ".eps", "missing");
    return material::Constant{complex_number(j["eps"], field + ".eps")};
  }
  if (model == "drude") {
    return material::Drude{number(j, "omega_p", field), number(j, "gamma", field)};
  }
  if (model == "lorentz") {
    material::LorentzOscillators m;
    m.eps_inf = j.contains("eps_inf") ? number(j, "eps_inf", field) : 1.0;
    if (!j.contains("oscillators") || !j["oscillators"].is_array()) {
      throw ConfigError(field + ".oscillators", "missing or not an array");
    }
    for (std::size_t i = 0; i < j["oscillators"].size(); ++i) {
      const json& o = j["oscillators"][i];
      const std::string f = field + ".oscillators[" + std::to_string(i) + "]";
      m.oscillators.push_back({number(o, "omega", f), number(o, "omega_p", f), number(o, "gamma", f)});
    }
    return m;
  }
  if (model == "tabulated") {
    material::Tabulated t;
    if (!j.contains("samples") || !j["samples"].is_array() || j["samples"].size() < 2) {
      throw ConfigError(field + ".samples", "need at least two [omega, re, im] rows");
    }
    for (const json& r : j["samples"]) {
      if (!r.is_array() || r.size() != 3) {
        throw ConfigError(field + ".samples", "each row must be [omega, re, im]");
      }
      t.samples.push_back({r[0].get<double>(), {r[1].get<double>(), r[2].get<double>()}});
    }
    for (std::size_t i = 1; i < t.samples.size(); ++i) {
      if (!(t.samples[i].omega > t.samples[i - 1].omega)) {
        throw ConfigError(field + ".samples", "omega must be strictly increasing");
      }
    }
    return t;
  }
  if (model == "perfect-mirror") return material::PerfectMirror{};
  throw ConfigError(field + ".model", "unknown model '" + model +
                                          "' (expected constant, drude, lorentz, tabulated or "
                                          "perfect-mirror)");
}

inline SlabBody slab(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  if (!j.contains("material")) throw ConfigError(field + ".material", "missing");
  const DielectricModel m = material(j["material"], field + ".material");
  double t = std::numeric_limits<double>::infinity();
  if (j.contains("thickness")) t = quantity(j["thickness"], false, field + ".thickness");
  if (!(t > 0.0)) throw ConfigError(field + ".thickness", "must be > 0");
  return SlabBody(t, m);
}

inline PolarizabilityModel polarizability_model(const json& j, const std::string& field) {
  if (j.is_number()) return polarizability::Static{j.get<double>()};
  if (!j.is_object() || !j.contains("model") || !j["model"].is_string()) {
    throw ConfigError(field, "expected a number (static, SI) or an object with a 'model' key");
  }
  const std::string model = j["model"].get<std::string>();
  if (model == "static") return polarizability::Static{number(j, "alpha0", field)};
  if (model == "lorentz") {
    return polarizability::Lorentz{number(j, "alpha0", field), number(j, "omega0", field),
                                   number(j, "gamma", field)};
  }
  throw ConfigError(field + ".model", "unknown polarizability model '" + model + "'");
}

}  // namespace detail

/// Parses and validates a JSON run configuration. Lengths accept m, mm, um,
/// µm and nm; temperatures accept K.
inline RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("", "top level must be an object");

  RunConfig c;
  if (j.contains("scenario")) {
    if (!j["scenario"].is_string()) throw ConfigError("scenario", "must be a string");
    c.scenario = parse_scenario(j["scenario"].get<std::string>());
  }
  const bool atom = c.scenario == Scenario::AtomForce;

  if (j.contains("temperatures")) {
    const json& t = j["temperatures"];
    if (!t.is_object()) throw ConfigError("temperatures", "expected an object");
    double v[3] = {0.0, 0.0, 0.0};
    const char* keys[3] = {"T1", "T2", "T3"};
    if (t.contains("T")) {
      const double all = detail::quantity(t["T"], true, "temperatures.T");
      v[0] = v[1] = v[2] = all;
    }
    for (int i = 0; i < 3; ++i) {
      if (t.contains(keys[i])) {
        v[i] = detail::quantity(t[keys[i]], true, std::string("temperatures.") + keys[i]);
      }
      if (!(v[i] >= 0.0) || !std::isfinite(v[i])) {
        throw ConfigError(std::string("temperatures.") + keys[i], "must be finite and >= 0");
      }
    }
    c.temps = TemperatureTriple(v[0], v[1], v[2]);
  }

  if (atom) {
    if (!j.contains("atom")) throw ConfigError("atom", "missing");
    const json& a = j["atom"];
    if (!a.is_object()) throw ConfigError("atom", "expected an object");
    if (!a.contains("polarizability")) throw ConfigError("atom.polarizability", "missing");
    if (!a.contains("z_A")) throw ConfigError("atom.z_A", "missing");
    if (!a.contains("slab")) throw ConfigError("atom.slab", "missing");
    const double z = detail::quantity(a["z_A"], false, "atom.z_A");
    if (!(z < 0.0)) throw ConfigError("atom.z_A", "must be < 0 (atom left of the slab)");
    c.atom = AtomConfig(detail::polarizability_model(a["polarizability"], "atom.polarizability"),
                        z, detail::slab(a["slab"], "atom.slab"));
  } else {
    if (!j.contains("body1")) throw ConfigError("body1", "missing");
    if (!j.contains("body2")) throw ConfigError("body2", "missing");
    c.body1 = detail::slab(j["body1"], "body1");
    c.body2 = detail::slab(j["body2"], "body2");
    if (j.contains("d")) {
      c.d = detail::quantity(j["d"], false, "d");
      if (!(c.d > 0.0)) throw ConfigError("d", "must be > 0");
    } else if (!j.contains("sweep")) {
      throw ConfigError("d", "missing");
    }
  }
  if (c.scenario == Scenario::EqForce && !c.temps.equilibrium()) {
    throw ConfigError("temperatures", "eq-force needs T1 = T2 = T3 (or the shorthand 'T')");
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    if (!s.is_object()) throw ConfigError("sweep", "expected an object");
    Sweep sw;
    if (!s.contains("variable") || !s["variable"].is_string()) {
      throw ConfigError("sweep.variable", "missing (expected d, T3 or z_A)");
    }
    const std::string var = s["variable"].get<std::string>();
    if (var == "d") {
      sw.variable = SweepVariable::D;
    } else if (var == "T3") {
      sw.variable = SweepVariable::T3;
    } else if (var == "z_A") {
      sw.variable = SweepVariable::ZA;
    } else {
      throw ConfigError("sweep.variable", "unknown variable '" + var + "' (expected d, T3 or z_A)");
    }
    if ((sw.variable == SweepVariable::ZA) != atom) {
      throw ConfigError("sweep.variable", "'" + var + "' does not apply to scenario " +
                                              to_string(c.scenario));
    }
    const bool temp = sw.variable == SweepVariable::T3;
    if (!s.contains("min")) throw ConfigError("sweep.min", "missing");
    if (!s.contains("max")) throw ConfigError("sweep.max", "missing");
    sw.min = detail::quantity(s["min"], temp, "sweep.min");
    sw.max = detail::quantity(s["max"], temp, "sweep.max");
    if (!(sw.min < sw.max)) throw ConfigError("sweep", "min must be < max");
    if (s.contains("points")) {
      if (!s["points"].is_number_integer() || s["points"].get<long long>() < 1) {
        throw ConfigError("sweep.points", "must be an integer >= 1");
      }
      sw.points = static_cast<int>(s["points"].get<long long>());
    }
    if (s.contains("spacing")) {
      const std::string sp = s["spacing"].is_string() ? s["spacing"].get<std::string>() : "";
      if (sp == "linear") {
        sw.spacing = Spacing::Linear;
      } else if (sp == "log") {
        sw.spacing = Spacing::Log;
      } else {
        throw ConfigError("sweep.spacing", "expected linear or log");
      }
    }
    if (sw.spacing == Spacing::Log && (sw.min <= 0.0) != (sw.max <= 0.0)) {
      throw ConfigError("sweep.spacing", "log spacing needs min and max of the same sign");
    }
    if (sw.variable == SweepVariable::D && !(sw.min > 0.0)) {
      throw ConfigError("sweep.min", "separation must be > 0");
    }
    if (sw.variable == SweepVariable::T3 && !(sw.min >= 0.0)) {
      throw ConfigError("sweep.min", "temperature must be >= 0");
    }
    if (sw.variable == SweepVariable::ZA && !(sw.max < 0.0)) {
      throw ConfigError("sweep.max", "z_A must stay < 0");
    }
    c.sweep = sw;
  }

  if (j.contains("tol")) {
    if (!j["tol"].is_number()) throw ConfigError("tol", "must be a number");
    c.tol = j["tol"].get<double>();
  }
  if (!(c.tol > 0.0 && c.tol <= 0.1)) throw ConfigError("tol", "must lie in (0, 0.1]");

  if (j.contains("output")) {
    const json& o = j["output"];
    if (!o.is_object()) throw ConfigError("output", "expected an object");
    if (o.contains("path")) {
      if (!o["path"].is_string()) throw ConfigError("output.path", "must be a string");
      c.output_path = o["path"].get<std::string>();
    }
    if (o.contains("format")) {
      if (!o["format"].is_string()) throw ConfigError("output.format", "must be a string");
      c.format = parse_format(o["format"].get<std::string>());
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct Table {
  std::vector<std::string> columns;  ///< numeric columns; `error` is appended on output
  std::vector<std::vector<double>> rows;
  std::vector<std::string> errors;  ///< per row, empty when the point succeeded
};

namespace detail {

inline std::string sweep_column(const RunConfig& c) {
  if (!c.sweep) return c.scenario == Scenario::AtomForce ? "z_A_m" : "d_m";
  switch (c.sweep->variable) {
    case SweepVariable::D: return "d_m";
    case SweepVariable::T3: return "T3_K";
    case SweepVariable::ZA: return "z_A_m";
  }
  return "";
}

inline std::vector<std::string> value_columns(Scenario s) {
  switch (s) {
    case Scenario::SlabForce:
      return {"total_Pa",      "eq_T1_Pa",      "eq_T2_Pa", "delta2_n12_Pa",
              "delta2_n13_Pa", "delta2_n23_Pa", "err_Pa"};
    case Scenario::SlabHeat:
      return {"heat_W_m2", "heat_n12_W_m2", "heat_n13_W_m2", "heat_n23_W_m2", "err_W_m2"};
    case Scenario::EqForce:
      return {"total_Pa", "TE_Pa", "TM_Pa", "err_Pa"};
    case Scenario::AtomForce:
      return {"total_N",        "eq_N",          "delta2_distance_independent_N",
              "delta2_propagative_N", "delta2_evanescent_N", "err_N"};
  }
  return {};
}

/// Evaluates one sweep point; `x` is the sweep value in SI units.
inline std::vector<double> evaluate_point(const RunConfig& c, double x) {
  TemperatureTriple temps = c.temps;
  double d = c.d;
  AtomConfig atom = c.atom;
  if (c.sweep) {
    switch (c.sweep->variable) {
      case SweepVariable::D: d = x; break;
      case SweepVariable::T3:
        temps = c.scenario == Scenario::EqForce ? TemperatureTriple(x, x, x)
                                                : TemperatureTriple(temps.T1, temps.T2, x);
        break;
      case SweepVariable::ZA: atom.z_A = x; break;
    }
  }
  switch (c.scenario) {
    case Scenario::SlabForce: {
      const FluxResult r = total_force(temps, CavityConfig(c.body1, c.body2, d), c.tol);
      std::vector<double> v{r.value};
      for (const auto& t : r.breakdown) v.push_back(t.value);
      v.push_back(r.quadrature_error);
      return v;
    }
    case Scenario::SlabHeat: {
      const FluxResult r = noneq_flux(1, temps, CavityConfig(c.body1, c.body2, d), c.tol);
      std::vector<double> v{r.value};
      for (const auto& t : r.breakdown) v.push_back(t.value);
      v.push_back(r.quadrature_error);
      return v;
    }
    case Scenario::EqForce: {
      const FluxResult r = eq_pressure(temps.T1, CavityConfig(c.body1, c.body2, d), c.tol);
      return {r.value, r.breakdown[0].value, r.breakdown[1].value, r.quadrature_error};
    }
    case Scenario::AtomForce: {
      const AtomForceResult r = atom_total_force(atom, temps, c.tol);
      return {r.total,          r.eq_part,        r.term_distance_independent,
              r.term_propagative, r.term_evanescent, r.quadrature_error};
    }
  }
  return {};
}

inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLUCTUA_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

}  // namespace detail

/// Runs every sweep point (concurrently, capped by FLUCTUA_THREADS) and
/// returns the rows in sweep order. Failed points keep NaN values and an
/// error message.
inline Table run_sweep(const RunConfig& c) {
  Table t;
  t.columns.push_back(detail::sweep_column(c));
  for (const auto& col : detail::value_columns(c.scenario)) t.columns.push_back(col);
  std::vector<double> xs;
  if (c.sweep) {
    xs = c.sweep->values();
  } else {
    xs = {c.scenario == Scenario::AtomForce ? c.atom.z_A : c.d};
  }
  const std::size_t ncols = t.columns.size();
  t.rows.assign(xs.size(), std::vector<double>(ncols, std::numeric_limits<double>::quiet_NaN()));
  t.errors.assign(xs.size(), "");

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < xs.size(); i = next++) {
      t.rows[i][0] = xs[i];
      try {
        const std::vector<double> v = detail::evaluate_point(c, xs[i]);
        std::copy(v.begin(), v.end(), t.rows[i].begin() + 1);
      } catch (const ConvergenceError& e) {
        t.errors[i] = std::string("convergence: ") + e.what();
      } catch (const Error& e) {
        t.errors[i] = e.what();
      }
    }
  };
  const unsigned nw = detail::worker_count(xs.size());
  if (nw <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < nw; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Output.

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char ch : s) {
    if (ch == '"') o += '"';
    o += ch == '\n' ? ' ' : ch;
  }
  return o + "\"";
}

}  // namespace detail

inline std::string to_csv(const Table& t) {
  std::string out;
  for (const auto& col : t.columns) out += col + ",";
  out += "error\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (double v : t.rows[i]) out += detail::format_double(v) + ",";
    out += detail::csv_escape(t.errors[i]) + "\n";
  }
  return out;
}

/// Array of objects keyed like the CSV header; NaN becomes null, a
/// successful row has "error": null.
inline std::string to_json(const Table& t) {
  json arr = json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    json row = json::object();
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      const double v = t.rows[i][k];
      row[t.columns[k]] = std::isnan(v) ? json(nullptr) : json(v);
    }
    row["error"] = t.errors[i].empty() ? json(nullptr) : json(t.errors[i]);
    arr.push_back(row);
  }
  return arr.dump(2) + "\n";
}

/// Writes the table to `path` (stdout when empty).
inline void emit(const Table& t, Format format, const std::string& path) {
  const std::string text = format == Format::Csv ? to_csv(t) : to_json(t);
  if (path.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path + "'");
}

}  // namespace fluctua::cli
