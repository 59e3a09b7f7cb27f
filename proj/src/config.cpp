#include <lidar/config.hpp>
#include <lidar/errors.hpp>

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

namespace lidar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_issues(const std::string &kind, const std::vector<ConfigIssue> &issues) {
  std::string msg = kind + ":";
  for (const auto &i : issues) {
    msg += "\n  " + (i.path.empty() ? std::string("/") : i.path) + ": " + i.message;
  }
  return msg;
}

std::string child(const std::string &path, const std::string &key) { return path + "/" + key; }
std::string child(const std::string &path, std::size_t index) {
  return path + "/" + std::to_string(index);
}

// Collects schema and invariant issues while walking the document, so that
// every failure can be reported at once.
class Reader {
public:
  std::vector<ConfigIssue> schema;
  std::vector<ConfigIssue> invariant;

  void schema_issue(const std::string &path, std::string msg) {
    schema.push_back({path, std::move(msg)});
  }
  void invariant_issue(const std::string &path, std::string msg) {
    invariant.push_back({path, std::move(msg)});
  }

  // Checks that `j` is an object and carries no keys outside `allowed`.
  bool object(const json &j, const std::string &path, std::initializer_list<const char *> allowed) {
    if (!j.is_object()) {
      schema_issue(path, "expected an object");
      return false;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &[key, value] : j.items()) {
      if (!ok.contains(key)) {
        schema_issue(child(path, key), "unknown key");
      }
    }
    return true;
  }

  std::optional<double> number(const json &obj, const char *key, const std::string &path,
                               bool required) {
    if (!obj.contains(key)) {
      if (required) {
        schema_issue(child(path, key), "required number missing");
      }
      return std::nullopt;
    }
    const json &v = obj.at(key);
    if (!v.is_number()) {
      schema_issue(child(path, key), "expected a number");
      return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      schema_issue(child(path, key), "expected a finite number");
      return std::nullopt;
    }
    return d;
  }

  double number_or(const json &obj, const char *key, const std::string &path, double fallback) {
    return number(obj, key, path, false).value_or(fallback);
  }

  std::optional<std::uint64_t> count(const json &obj, const char *key, const std::string &path,
                                     bool required) {
    auto d = number(obj, key, path, required);
    if (!d) {
      return std::nullopt;
    }
    if (*d < 0.0 || std::floor(*d) != *d || *d > 1.8e19) {
      schema_issue(child(path, key), "expected a non-negative integer");
      return std::nullopt;
    }
    if (obj.at(key).is_number_unsigned()) {
      return obj.at(key).get<std::uint64_t>();
    }
    return static_cast<std::uint64_t>(*d);
  }

  std::optional<bool> boolean(const json &obj, const char *key, const std::string &path) {
    if (!obj.contains(key)) {
      return std::nullopt;
    }
    if (!obj.at(key).is_boolean()) {
      schema_issue(child(path, key), "expected true or false");
      return std::nullopt;
    }
    return obj.at(key).get<bool>();
  }

  std::optional<std::string> string(const json &obj, const char *key, const std::string &path,
                                    bool required) {
    if (!obj.contains(key)) {
      if (required) {
        schema_issue(child(path, key), "required string missing");
      }
      return std::nullopt;
    }
    if (!obj.at(key).is_string()) {
      schema_issue(child(path, key), "expected a string");
      return std::nullopt;
    }
    return obj.at(key).get<std::string>();
  }

  std::optional<std::vector<double>> numbers(const json &obj, const char *key,
                                             const std::string &path, bool required) {
    if (!obj.contains(key)) {
      if (required) {
        schema_issue(child(path, key), "required array missing");
      }
      return std::nullopt;
    }
    return number_array(obj.at(key), child(path, key));
  }

  std::optional<std::vector<double>> number_array(const json &v, const std::string &path) {
    if (!v.is_array() || v.empty()) {
      schema_issue(path, "expected a non-empty array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        schema_issue(child(path, i), "expected a finite number");
        ok = false;
      } else {
        out.push_back(v[i].get<double>());
      }
    }
    return ok ? std::optional(out) : std::nullopt;
  }

  // Runs a constructor and turns its invalid-argument or domain errors into
  // invariant issues at `path`.
  template <class F>
  auto build(const std::string &path, F &&f) -> std::optional<decltype(f())> {
    try {
      return f();
    } catch (const std::invalid_argument &e) {
      invariant_issue(path, e.what());
    } catch (const std::domain_error &e) {
      invariant_issue(path, e.what());
    }
    return std::nullopt;
  }
};

// Scalar or {z_nodes, values} profile.
std::optional<Profile> read_profile(Reader &r, const json &obj, const char *key,
                                    const std::string &path) {
  if (!obj.contains(key)) {
    r.schema_issue(child(path, key), "required profile missing");
    return std::nullopt;
  }
  const json &v = obj.at(key);
  const std::string p = child(path, key);
  if (v.is_number()) {
    const double d = v.get<double>();
    return r.build(p, [&] { return Profile::constant(d); });
  }
  if (!r.object(v, p, {"z_nodes", "values"})) {
    return std::nullopt;
  }
  auto z = r.numbers(v, "z_nodes", p, true);
  auto vals = r.numbers(v, "values", p, true);
  if (!z || !vals) {
    return std::nullopt;
  }
  return r.build(p, [&] { return Profile(*z, *vals); });
}

std::optional<PhaseFunction> read_phase(Reader &r, const json &obj, const std::string &path) {
  if (!obj.contains("phase")) {
    r.schema_issue(child(path, "phase"), "required object missing");
    return std::nullopt;
  }
  const json &ph = obj.at("phase");
  const std::string p = child(path, "phase");
  if (!ph.is_object()) {
    r.schema_issue(p, "expected an object");
    return std::nullopt;
  }
  const auto type = r.string(ph, "type", p, true);
  if (!type) {
    return std::nullopt;
  }
  if (*type == "isotropic") {
    r.object(ph, p, {"type", "scattering"});
    auto b = read_profile(r, ph, "scattering", p);
    if (!b) {
      return std::nullopt;
    }
    return PhaseFunction::isotropic(*b);
  }
  if (*type == "henyey_greenstein") {
    r.object(ph, p, {"type", "g", "scattering"});
    auto g = r.number(ph, "g", p, true);
    auto b = read_profile(r, ph, "scattering", p);
    if (!g || !b) {
      return std::nullopt;
    }
    return r.build(child(p, "g"), [&] { return PhaseFunction::henyey_greenstein(*g, *b); });
  }
  if (*type == "table") {
    r.object(ph, p, {"type", "mu_nodes", "z_nodes", "values"});
    auto mu = r.numbers(ph, "mu_nodes", p, true);
    auto z = r.numbers(ph, "z_nodes", p, true);
    if (!ph.contains("values") || !ph.at("values").is_array()) {
      r.schema_issue(child(p, "values"), "expected an array of rows (one per mu node)");
      return std::nullopt;
    }
    std::vector<std::vector<double>> table;
    bool ok = true;
    const json &rows = ph.at("values");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto row = r.number_array(rows[i], child(child(p, "values"), i));
      ok = ok && row.has_value();
      if (row) {
        table.push_back(*row);
      }
    }
    if (!mu || !z || !ok) {
      return std::nullopt;
    }
    return r.build(p, [&] { return PhaseFunction::tabulated(*mu, *z, table); });
  }
  r.schema_issue(child(p, "type"), "expected isotropic, henyey_greenstein or table");
  return std::nullopt;
}

std::optional<Medium> read_medium(Reader &r, const json &m, const std::string &path) {
  if (!m.is_object()) {
    r.schema_issue(path, "expected an object");
    return std::nullopt;
  }
  const auto kind = r.string(m, "kind", path, true);
  if (!kind) {
    return std::nullopt;
  }
  if (*kind == "homogeneous") {
    r.object(m, path, {"kind", "sigma_t", "phase"});
    auto st = r.number(m, "sigma_t", path, true);
    auto ph = read_phase(r, m, path);
    if (!st || !ph) {
      return std::nullopt;
    }
    return r.build(path, [&] { return Medium::homogeneous(*st, *ph); });
  }
  if (*kind == "tabulated") {
    r.object(m, path, {"kind", "sigma_t", "phase"});
    auto st = read_profile(r, m, "sigma_t", path);
    auto ph = read_phase(r, m, path);
    if (!st || !ph) {
      return std::nullopt;
    }
    return r.build(path, [&] { return Medium::tabulated(*st, *ph); });
  }
  if (*kind == "layer") {
    r.object(m, path, {"kind", "thickness", "sigma_t", "phase"});
    auto d = r.number(m, "thickness", path, true);
    auto st = r.number(m, "sigma_t", path, true);
    auto ph = read_phase(r, m, path);
    if (!d || !st || !ph) {
      return std::nullopt;
    }
    return r.build(path, [&] { return Medium::layer(*d, *st, *ph); });
  }
  r.schema_issue(child(path, "kind"), "expected homogeneous, tabulated or layer");
  return std::nullopt;
}

json read_json_file(const fs::path &file, const std::string &field) {
  std::ifstream in(file);
  if (!in) {
    throw MissingFileError(file, field);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error &e) {
    throw SchemaError({{field, fmt::format("{}: {}", file.string(), e.what())}});
  }
}

void throw_if_issues(const Reader &r) {
  if (!r.schema.empty()) {
    throw SchemaError(r.schema);
  }
  if (!r.invariant.empty()) {
    throw InvariantError(r.invariant);
  }
}

} // namespace

ConfigError::ConfigError(const std::string &kind, std::vector<ConfigIssue> issues)
    : std::runtime_error(join_issues(kind, issues)), issues_(std::move(issues)) {}

MissingFileError::MissingFileError(const fs::path &file, const std::string &field)
    : ConfigError("missing file", {{field, "cannot read " + file.string()}}), file_(file) {}

const char *mode_name(RunMode m) {
  switch (m) {
  case RunMode::single:
    return "single";
  case RunMode::double_scatter:
    return "double";
  case RunMode::mc:
    return "mc";
  case RunMode::validate:
    return "validate";
  }
  return "single";
}

std::optional<RunMode> parse_mode(const std::string &s) {
  if (s == "single") {
    return RunMode::single;
  }
  if (s == "double") {
    return RunMode::double_scatter;
  }
  if (s == "mc") {
    return RunMode::mc;
  }
  if (s == "validate") {
    return RunMode::validate;
  }
  return std::nullopt;
}

const char *phase_approximation_name(PhaseApproximation p) {
  switch (p) {
  case PhaseApproximation::exact:
    return "exact";
  case PhaseApproximation::backscatter:
    return "backscatter";
  case PhaseApproximation::half_aperture_shift:
    return "half_aperture_shift";
  }
  return "backscatter";
}

const char *estimator_name(Estimator e) {
  return e == Estimator::analog ? "analog" : "next_event";
}

Medium load_medium(const fs::path &path) {
  const json doc = read_json_file(path, "/medium/file");
  Reader r;
  auto m = read_medium(r, doc, "/medium");
  throw_if_issues(r);
  return *m;
}

RunConfig load_config(const fs::path &path) { return load_config(path, json::object()); }

RunConfig load_config(const fs::path &path, const json &overrides) {
  json doc = read_json_file(path, "");
  if (doc.is_object() && !overrides.empty()) {
    doc.merge_patch(overrides);
  }
  return parse_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

RunConfig parse_config(const json &doc, const fs::path &base_dir) {
  Reader r;
  if (!r.object(doc, "", {"medium", "geometry", "time_grid", "mode", "phase_approximation",
                          "quadrature", "monte_carlo", "diagnostics", "output"})) {
    throw SchemaError(r.schema);
  }
  json eff;
  const json empty = json::object();

  // medium
  std::optional<Medium> medium;
  if (!doc.contains("medium")) {
    r.schema_issue("/medium", "required object missing");
  } else {
    json m = doc.at("medium");
    if (m.is_object() && m.contains("file")) {
      r.object(m, "/medium", {"file"});
      if (auto f = r.string(m, "file", "/medium", true)) {
        fs::path file(*f);
        if (file.is_relative()) {
          file = base_dir / file;
        }
        m = read_json_file(file, "/medium/file");
      }
    }
    medium = read_medium(r, m, "/medium");
    eff["medium"] = m;
  }

  // geometry
  std::optional<DetectorGeometry> geom;
  if (!doc.contains("geometry")) {
    r.schema_issue("/geometry", "required object missing");
  } else if (const json &g = doc.at("geometry"); r.object(g, "/geometry", {"rho0", "theta0", "epsilon"})) {
    auto rho0 = r.number(g, "rho0", "/geometry", true);
    auto theta0 = r.number(g, "theta0", "/geometry", false);
    auto eps = r.number(g, "epsilon", "/geometry", false);
    if (g.contains("theta0") == g.contains("epsilon")) {
      r.schema_issue("/geometry", "exactly one of theta0 and epsilon is required");
    } else if (rho0 && theta0) {
      if (!(*theta0 > 0.0 && *theta0 < 0.5 * std::numbers::pi)) {
        r.invariant_issue("/geometry/theta0", "theta0 must lie in (0, pi/2)");
      } else {
        geom = r.build("/geometry", [&] { return DetectorGeometry(*rho0, *theta0); });
      }
    } else if (rho0 && eps) {
      geom = r.build("/geometry", [&] { return DetectorGeometry::from_epsilon(*rho0, *eps); });
    }
    if (geom) {
      eff["geometry"] = {{"rho0", geom->rho0()}, {"theta0", geom->theta0()},
                         {"epsilon", geom->epsilon()}};
    }
  }

  // time grid
  std::optional<TimeGrid> grid;
  if (!doc.contains("time_grid")) {
    r.schema_issue("/time_grid", "required object missing");
  } else if (const json &tg = doc.at("time_grid");
             r.object(tg, "/time_grid", {"times", "t_min", "t_max", "n", "spacing"})) {
    if (tg.contains("times")) {
      if (tg.contains("t_min") || tg.contains("t_max") || tg.contains("n") ||
          tg.contains("spacing")) {
        r.schema_issue("/time_grid", "use either times or t_min/t_max/n/spacing, not both");
      }
      if (auto times = r.numbers(tg, "times", "/time_grid", true)) {
        grid = r.build("/time_grid/times", [&] { return TimeGrid(*times); });
      }
    } else {
      auto lo = r.number(tg, "t_min", "/time_grid", true);
      auto hi = r.number(tg, "t_max", "/time_grid", true);
      auto n = r.count(tg, "n", "/time_grid", true);
      const std::string spacing = r.string(tg, "spacing", "/time_grid", false).value_or("linear");
      if (spacing != "linear" && spacing != "log") {
        r.schema_issue("/time_grid/spacing", "expected linear or log");
      } else if (lo && hi && n) {
        grid = r.build("/time_grid", [&] {
          return spacing == "linear" ? TimeGrid::linear(*lo, *hi, *n)
                                     : TimeGrid::logarithmic(*lo, *hi, *n);
        });
      }
    }
    if (grid) {
      eff["time_grid"] = {{"times", grid->times()}};
    }
  }

  RunMode mode = RunMode::single;
  if (auto s = r.string(doc, "mode", "", false)) {
    if (auto m = parse_mode(*s)) {
      mode = *m;
    } else {
      r.schema_issue("/mode", "expected single, double, mc or validate");
    }
  }
  eff["mode"] = mode_name(mode);

  PhaseApproximation phase_mode = PhaseApproximation::backscatter;
  if (auto s = r.string(doc, "phase_approximation", "", false)) {
    if (*s == "exact") {
      phase_mode = PhaseApproximation::exact;
    } else if (*s == "backscatter") {
      phase_mode = PhaseApproximation::backscatter;
    } else if (*s == "half_aperture_shift") {
      phase_mode = PhaseApproximation::half_aperture_shift;
    } else {
      r.schema_issue("/phase_approximation", "expected exact, backscatter or half_aperture_shift");
    }
  }
  eff["phase_approximation"] = phase_approximation_name(phase_mode);

  QuadratureConfig q;
  {
    const json &qj = doc.value("quadrature", empty);
    if (r.object(qj, "/quadrature",
                 {"rel_tol", "abs_tol", "max_subdivisions", "corner_substitution"})) {
      q.rel_tol = r.number_or(qj, "rel_tol", "/quadrature", q.rel_tol);
      q.abs_tol = r.number_or(qj, "abs_tol", "/quadrature", q.abs_tol);
      q.max_subdivisions = static_cast<std::size_t>(
          r.count(qj, "max_subdivisions", "/quadrature", false).value_or(q.max_subdivisions));
      q.corner_substitution =
          r.boolean(qj, "corner_substitution", "/quadrature").value_or(q.corner_substitution);
    }
    if (!(q.rel_tol > 0.0)) {
      r.invariant_issue("/quadrature/rel_tol", "must be > 0");
    }
    if (q.abs_tol < 0.0) {
      r.invariant_issue("/quadrature/abs_tol", "must be >= 0");
    }
    if (q.max_subdivisions < 1) {
      r.invariant_issue("/quadrature/max_subdivisions", "must be >= 1");
    }
    eff["quadrature"] = {{"rel_tol", q.rel_tol},
                         {"abs_tol", q.abs_tol},
                         {"max_subdivisions", q.max_subdivisions},
                         {"corner_substitution", q.corner_substitution}};
  }

  McConfig mc;
  std::optional<double> bin_width;
  {
    const json &mj = doc.value("monte_carlo", empty);
    const std::string p = "/monte_carlo";
    if (r.object(mj, p, {"histories", "blocks", "seed", "estimator", "horizon", "bin_width",
                         "workers", "log_histories"})) {
      mc.histories = r.count(mj, "histories", p, false).value_or(mc.histories);
      mc.blocks = r.count(mj, "blocks", p, false).value_or(mc.blocks);
      mc.seed = r.count(mj, "seed", p, false).value_or(mc.seed);
      mc.horizon = r.number_or(mj, "horizon", p, mc.horizon);
      mc.workers = static_cast<unsigned>(r.count(mj, "workers", p, false).value_or(mc.workers));
      mc.log_histories = r.count(mj, "log_histories", p, false).value_or(mc.log_histories);
      bin_width = r.number(mj, "bin_width", p, false);
      if (auto e = r.string(mj, "estimator", p, false)) {
        if (*e == "analog") {
          mc.estimator = Estimator::analog;
        } else if (*e == "next_event") {
          mc.estimator = Estimator::next_event;
        } else {
          r.schema_issue(child(p, "estimator"), "expected analog or next_event");
        }
      }
    }
    if (mc.histories < 2) {
      r.invariant_issue("/monte_carlo/histories", "must be >= 2");
    }
    if (mc.blocks < 1) {
      r.invariant_issue("/monte_carlo/blocks", "must be >= 1");
    }
    if (mc.horizon < 0.0) {
      r.invariant_issue("/monte_carlo/horizon", "must be >= 0 (0 selects the last bin edge)");
    }
    if (bin_width && !(*bin_width > 0.0)) {
      r.invariant_issue("/monte_carlo/bin_width", "must be > 0");
    }
    if (grid && (mode == RunMode::mc || mode == RunMode::validate)) {
      r.build(bin_width ? "/monte_carlo/bin_width" : "/time_grid",
              [&] { return TimeBins::around(*grid, bin_width); });
    }
    eff["monte_carlo"] = {{"histories", mc.histories},
                          {"blocks", mc.blocks},
                          {"seed", mc.seed},
                          {"estimator", estimator_name(mc.estimator)},
                          {"horizon", mc.horizon},
                          {"bin_width", bin_width ? json(*bin_width) : json(nullptr)},
                          {"workers", mc.workers},
                          {"log_histories", mc.log_histories}};
  }

  DiagnosticsConfig diag;
  {
    const json &dj = doc.value("diagnostics", empty);
    if (r.object(dj, "/diagnostics", {"smallness_threshold"})) {
      diag.smallness_threshold =
          r.number_or(dj, "smallness_threshold", "/diagnostics", diag.smallness_threshold);
    }
    if (!(diag.smallness_threshold > 0.0)) {
      r.invariant_issue("/diagnostics/smallness_threshold", "must be > 0");
    }
    eff["diagnostics"] = {{"smallness_threshold", diag.smallness_threshold}};
  }

  OutputConfig out;
  {
    const json &oj = doc.value("output", empty);
    if (r.object(oj, "/output", {"path", "format"})) {
      if (auto s = r.string(oj, "path", "/output", false)) {
        out.path = *s;
      }
      out.format = r.string(oj, "format", "/output", false).value_or(out.format);
      if (out.format != "csv") {
        r.schema_issue("/output/format", "only csv is supported");
      }
    }
    eff["output"] = {{"path", out.path.string()}, {"format", out.format}};
  }

  throw_if_issues(r);
  RunConfig cfg{.medium = *medium,
                .geometry = *geom,
                .time_grid = *grid,
                .mode = mode,
                .phase_approximation = phase_mode,
                .quadrature = q,
                .monte_carlo = mc,
                .bin_width = bin_width,
                .diagnostics = diag,
                .output = out,
                .effective = std::move(eff)};
  return cfg;
}

std::string fnv1a_hex(const std::string &text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

std::string config_hash(const RunConfig &cfg) {
  json canon = cfg.effective;
  if (canon.contains("monte_carlo")) {
    canon["monte_carlo"].erase("workers");
  }
  canon.erase("output");
  return fnv1a_hex(canon.dump());
}

} // namespace lidar
