#include <lidar/errors.hpp>
#include <lidar/run.hpp>
#include <lidar/single_scatter.hpp>

#include <boost/version.hpp>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace lidar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  return fmt::format("{:.17g}", v);
}

template <class F>
auto at_time(double t, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConvergenceError &) {
    throw;
  } catch (const std::exception &e) {
    throw std::runtime_error(fmt::format("at t = {}: {}", num(t), e.what()));
  }
}

double safe_i23(double t, const RunConfig &cfg) {
  const auto &g = cfg.geometry;
  if (!(g.epsilon() * t > 2.0 * g.rho0())) {
    return kNaN;
  }
  return i23_bound(t, g, cfg.medium);
}

struct I21Value {
  double value, error;
  bool empty, converged;
};

I21Value eval_i21(double t, const RunConfig &cfg) {
  try {
    const auto r = double_scatter_return(t, cfg.geometry, cfg.medium, cfg.phase_approximation,
                                         cfg.quadrature);
    return {r.value, r.error, r.empty_domain, true};
  } catch (const ConvergenceError &e) {
    return {e.estimate(), e.error(), false, false};
  }
}

double z_score(double mc, double se, double analytic) {
  if (se > 0.0 && std::isfinite(se)) {
    return (mc - analytic) / se;
  }
  return mc == analytic ? 0.0 : kNaN;
}

bool bad(const PointDiagnostics &d) { return !d.far_field_ok || !d.q_reliable; }

} // namespace

PointDiagnostics diagnose(double t, const RunConfig &cfg) {
  PointDiagnostics d;
  const auto ff = check_far_field(t, cfg.geometry);
  d.far_field_margin = ff.margin;
  d.far_field_ok = ff.satisfied;
  if (t > cfg.geometry.rho0()) {
    const auto s = check_double_scatter_validity(t, cfg.geometry, cfg.medium,
                                                 cfg.diagnostics.smallness_threshold);
    d.q = s.q;
    d.q_reliable = s.reliable;
  } else {
    d.q = kNaN;
    d.q_reliable = false;
  }
  return d;
}

std::size_t ReturnSignal::violations() const {
  std::size_t n = 0;
  for (const auto &p : points) {
    const bool smallness = mode != RunMode::single && !p.diag.q_reliable;
    n += (!p.diag.far_field_ok || smallness || !p.converged) ? 1 : 0;
  }
  for (const auto &b : bins) {
    n += (bad(b.diag) || !b.converged) ? 1 : 0;
  }
  return n;
}

double bin_average(double lo, double hi, const std::function<double(double)> &f) {
  static constexpr double x[4] = {-0.86113631159405257522, -0.33998104358485626480,
                                  0.33998104358485626480, 0.86113631159405257522};
  static constexpr double w[4] = {0.34785484513745385737, 0.65214515486254614263,
                                  0.65214515486254614263, 0.34785484513745385737};
  const double c = 0.5 * (lo + hi);
  const double h = 0.5 * (hi - lo);
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    sum += w[i] * f(c + h * x[i]);
  }
  return 0.5 * sum;
}

ReturnSignal compute(const RunConfig &cfg, TrajectoryLog *log) {
  ReturnSignal sig;
  sig.mode = cfg.mode;
  const auto &geom = cfg.geometry;

  if (cfg.mode == RunMode::single || cfg.mode == RunMode::double_scatter) {
    for (double t : cfg.time_grid.times()) {
      at_time(t, [&] {
        AnalyticPoint p;
        p.t = t;
        p.diag = diagnose(t, cfg);
        p.i1 = single_scatter_return(t, geom, cfg.medium);
        if (cfg.mode == RunMode::double_scatter) {
          const I21Value v = eval_i21(t, cfg);
          p.i21 = v.value;
          p.i21_error = v.error;
          p.empty_d0 = v.empty;
          p.converged = v.converged;
          p.i22_bound = i22_bound(t, geom, cfg.medium);
          p.i23_bound = safe_i23(t, cfg);
        }
        sig.points.push_back(p);
        return 0;
      });
    }
    return sig;
  }

  const TimeBins bins = TimeBins::around(cfg.time_grid, cfg.bin_width);
  const McTally tally = estimate_returns(cfg.monte_carlo, geom, cfg.medium, bins, log);
  sig.histories = tally.n_histories();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double t = cfg.time_grid[i];
    at_time(t, [&] {
      McBin b;
      b.t = t;
      b.lo = bins.lo(i);
      b.hi = bins.hi(i);
      for (std::size_t c = 0; c < kChannelCount; ++c) {
        b.rate[c] = tally.rate(static_cast<Channel>(c), i);
        b.std_error[c] = tally.std_error(static_cast<Channel>(c), i);
        b.count[c] = tally.count(static_cast<Channel>(c), i);
      }
      b.diag = diagnose(t, cfg);
      if (cfg.mode == RunMode::validate) {
        b.i1_bin = bin_average(b.lo, b.hi, [&](double s) {
          return single_scatter_return(s, geom, cfg.medium);
        });
        double err = 0.0;
        b.i21_bin = bin_average(b.lo, b.hi, [&](double s) {
          const I21Value v = eval_i21(s, cfg);
          b.converged = b.converged && v.converged;
          err += 0.25 * v.error;
          return v.value;
        });
        b.i21_bin_error = err;
        b.i22_bound = i22_bound(t, geom, cfg.medium);
        b.i23_bound = safe_i23(t, cfg);
        const auto o1 = static_cast<std::size_t>(Channel::order1);
        const auto d0 = static_cast<std::size_t>(Channel::order2_d0);
        b.z_order1 = z_score(b.rate[o1], b.std_error[o1], b.i1_bin);
        b.z_order2_d0 = z_score(b.rate[d0], b.std_error[d0], b.i21_bin);
      }
      sig.bins.push_back(b);
      return 0;
    });
  }
  return sig;
}

std::string format_csv(const ReturnSignal &sig, const RunConfig &cfg) {
  std::string out;
  auto line = [&](const std::string &s) {
    out += s;
    out += '\n';
  };
  line(fmt::format("# {}", kCsvFormat));
  line(fmt::format("# mode: {}", mode_name(sig.mode)));
  line(fmt::format("# config_hash: {}", config_hash(cfg)));
  line("# units: times in path length (c = 1); rates per emitted particle per unit time");
  line("# columns:");
  auto doc = [&](const char *name, const char *what) { line(fmt::format("#   {}: {}", name, what)); };

  const char *diag_header = "far_field_margin,far_field_ok,q,q_reliable";
  auto diag_cells = [&](const PointDiagnostics &d) {
    return fmt::format("{},{},{},{}", num(d.far_field_margin), d.far_field_ok ? 1 : 0, num(d.q),
                       d.q_reliable ? 1 : 0);
  };
  auto doc_diag = [&] {
    doc("far_field_margin", "(t/2) / (rho0/epsilon); far field when > 1");
    doc("far_field_ok", "1 when t/2 > rho0/epsilon");
    doc("q", "smallness parameter epsilon * sigma_max * rho0 * ln(t/rho0)");
    doc("q_reliable", "1 when q <= smallness_threshold");
  };

  if (sig.mode == RunMode::single || sig.mode == RunMode::double_scatter) {
    const bool dbl = sig.mode == RunMode::double_scatter;
    doc("t", "return time");
    doc("I1", "single-scatter return");
    if (dbl) {
      doc("I21", "double-scatter return over the full-acceptance domain D0");
      doc("I21_error", "quadrature error estimate of I21");
      doc("i22_bound", "upper bound of the partial-acceptance term with rho0 <= xi_max");
      doc("i23_bound", "upper bound of the partial-acceptance term with xi_max <= rho0");
      doc("empty_d0", "1 when t <= 2 rho0 / epsilon (D0 empty, I21 = 0)");
      doc("converged", "0 when the quadrature missed its tolerance (I21 is the best estimate)");
    }
    doc_diag();
    line(dbl ? fmt::format("t,I1,I21,I21_error,i22_bound,i23_bound,empty_d0,converged,{}",
                           diag_header)
             : fmt::format("t,I1,{}", diag_header));
    for (const auto &p : sig.points) {
      if (dbl) {
        line(fmt::format("{},{},{},{},{},{},{},{},{}", num(p.t), num(p.i1), num(p.i21),
                         num(p.i21_error), num(p.i22_bound), num(p.i23_bound),
                         p.empty_d0 ? 1 : 0, p.converged ? 1 : 0, diag_cells(p.diag)));
      } else {
        line(fmt::format("{},{},{}", num(p.t), num(p.i1), diag_cells(p.diag)));
      }
    }
    return out;
  }

  const bool val = sig.mode == RunMode::validate;
  doc("t", "bin centre (grid time)");
  doc("bin_lo, bin_hi", "bin edges; rates are averages over [bin_lo, bin_hi)");
  doc("rate_<ch>, stderr_<ch>, count_<ch>",
      "Monte Carlo rate, its standard error and the number of scores, for channels order1, "
      "order2, order3plus, order2_d0 (order 2 inside D0), order2_outside_d0 and total");
  if (val) {
    doc("I1_bin", "single-scatter return averaged over the bin");
    doc("I21_bin", "double-scatter return averaged over the bin");
    doc("I21_bin_error", "quadrature error of I21_bin");
    doc("i22_bound, i23_bound", "partial-acceptance bounds at t");
    doc("z_order1", "(rate_order1 - I1_bin) / stderr_order1");
    doc("z_order2_d0", "(rate_order2_d0 - I21_bin) / stderr_order2_d0");
    doc("converged", "0 when a quadrature inside the bin missed its tolerance");
  }
  doc_diag();
  std::string header = "t,bin_lo,bin_hi";
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const char *n = channel_name(static_cast<Channel>(c));
    header += fmt::format(",rate_{0},stderr_{0},count_{0}", n);
  }
  if (val) {
    header += ",I1_bin,I21_bin,I21_bin_error,i22_bound,i23_bound,z_order1,z_order2_d0,converged";
  }
  header += ",";
  header += diag_header;
  line(header);
  for (const auto &b : sig.bins) {
    std::string row = fmt::format("{},{},{}", num(b.t), num(b.lo), num(b.hi));
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      row += fmt::format(",{},{},{}", num(b.rate[c]), num(b.std_error[c]), b.count[c]);
    }
    if (val) {
      row += fmt::format(",{},{},{},{},{},{},{},{}", num(b.i1_bin), num(b.i21_bin),
                         num(b.i21_bin_error), num(b.i22_bound), num(b.i23_bound),
                         num(b.z_order1), num(b.z_order2_d0), b.converged ? 1 : 0);
    }
    row += "," + diag_cells(b.diag);
    line(row);
  }
  return out;
}

std::string format_summary(const ReturnSignal &sig, const RunConfig &cfg) {
  json canon = cfg.effective;
  if (canon.contains("monte_carlo")) {
    canon["monte_carlo"].erase("workers");
  }
  canon.erase("output");
  const bool mc = sig.mode == RunMode::mc || sig.mode == RunMode::validate;
  json s = {
      {"format", kSummaryFormat},
      {"version", kVersion},
      {"mode", mode_name(sig.mode)},
      {"config_hash", config_hash(cfg)},
      {"seed", mc ? json(cfg.monte_carlo.seed) : json(nullptr)},
      {"histories", mc ? json(sig.histories) : json(nullptr)},
      {"rows", sig.points.size() + sig.bins.size()},
      {"diagnostic_violations", sig.violations()},
      {"libraries",
       {{"boost", BOOST_LIB_VERSION},
        {"fmt", FMT_VERSION},
        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                      NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)}}},
      {"config", canon},
  };
  return s.dump(2) + "\n";
}

RunOutcome run(const RunConfig &cfg, const RunOptions &opts) {
  RunOutcome out;
  TrajectoryLog log;
  out.signal = compute(cfg, opts.trajectory_log ? &log : nullptr);
  out.csv_path = cfg.output.path;
  out.summary_path = fs::path(cfg.output.path.string() + ".summary.json");
  auto write = [](const fs::path &p, const std::string &text) {
    if (p.has_parent_path()) {
      fs::create_directories(p.parent_path());
    }
    std::ofstream f(p, std::ios::binary);
    if (!f) {
      throw std::runtime_error("cannot write " + p.string());
    }
    f << text;
  };
  write(out.csv_path, format_csv(out.signal, cfg));
  write(out.summary_path, format_summary(out.signal, cfg));
  if (opts.trajectory_log) {
    write(*opts.trajectory_log, "# history event x y z ux uy uz t order\n" + log.text());
  }
  out.exit_code = (opts.strict && out.signal.violations() > 0) ? 3 : 0;
  return out;
}

} // namespace lidar
