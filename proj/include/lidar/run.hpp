#pragma once

#include <lidar/config.hpp>
#include <lidar/montecarlo.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lidar {

inline constexpr const char *kVersion = "1.0.0";
inline constexpr const char *kCsvFormat = "lidar-return csv v1";
inline constexpr const char *kSummaryFormat = "lidar-return summary v1";

struct PointDiagnostics {
  double far_field_margin{0};
  bool far_field_ok{false};
  double q{0}; ///< NaN where undefined (t <= rho0)
  bool q_reliable{false};
};

PointDiagnostics diagnose(double t, const RunConfig &cfg);

struct AnalyticPoint {
  double t{0};
  double i1{0};
  double i21{0};
  double i21_error{0};
  double i22_bound{0}; ///< NaN where undefined
  double i23_bound{0}; ///< NaN where undefined (eps t <= 2 rho0)
  bool empty_d0{false};
  bool converged{true};
  PointDiagnostics diag;
};

struct McBin {
  double t{0}, lo{0}, hi{0};
  std::array<double, kChannelCount> rate{};
  std::array<double, kChannelCount> std_error{};
  std::array<std::uint64_t, kChannelCount> count{};
  PointDiagnostics diag;
  // Filled in validate mode: analytic bin averages and z-scores.
  double i1_bin{0}, i21_bin{0}, i21_bin_error{0};
  double i22_bound{0}, i23_bound{0};
  double z_order1{0}, z_order2_d0{0};
  bool converged{true};
};

struct ReturnSignal {
  RunMode mode{RunMode::single};
  std::vector<AnalyticPoint> points; ///< single and double modes
  std::vector<McBin> bins;           ///< mc and validate modes
  std::uint64_t histories{0};

  /// Rows whose diagnostics fail (far field, smallness, or no convergence).
  std::size_t violations() const;
};

/// Analytic rate averaged over [lo, hi] by 4-point Gauss-Legendre.
double bin_average(double lo, double hi, const std::function<double(double)> &f);

/// Computes the configured mode over the time grid. Module errors are
/// rethrown as std::runtime_error naming the time point.
ReturnSignal compute(const RunConfig &cfg, TrajectoryLog *log = nullptr);

std::string format_csv(const ReturnSignal &signal, const RunConfig &cfg);
std::string format_summary(const ReturnSignal &signal, const RunConfig &cfg);

struct RunOptions {
  bool strict = false;
  std::optional<std::filesystem::path> trajectory_log;
};

struct RunOutcome {
  ReturnSignal signal;
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  int exit_code{0}; ///< 3 when --strict and a diagnostic fails
};

/// compute + write the CSV, `<csv>.summary.json` and the optional trajectory log.
RunOutcome run(const RunConfig &cfg, const RunOptions &opts = {});

} // namespace lidar
