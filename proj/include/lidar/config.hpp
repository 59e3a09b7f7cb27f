#pragma once

#include <lidar/double_scatter.hpp>
#include <lidar/geometry.hpp>
#include <lidar/medium.hpp>
#include <lidar/montecarlo.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lidar {

/// One validation failure, located by a JSON-pointer-like field path.
struct ConfigIssue {
  std::string path;
  std::string message;
};

/// Base of all configuration errors. what() lists every issue.
class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string &kind, std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue> &issues() const { return issues_; }

private:
  std::vector<ConfigIssue> issues_;
};

/// A referenced file (config or profile) does not exist or cannot be read.
class MissingFileError : public ConfigError {
public:
  MissingFileError(const std::filesystem::path &file, const std::string &field);
  const std::filesystem::path &file() const { return file_; }

private:
  std::filesystem::path file_;
};

/// Malformed JSON, unknown keys, missing keys or wrong types.
class SchemaError : public ConfigError {
public:
  explicit SchemaError(std::vector<ConfigIssue> issues)
      : ConfigError("schema violation", std::move(issues)) {}
};

/// Well-formed values that break a model invariant (e.g. theta0 >= pi/2).
class InvariantError : public ConfigError {
public:
  explicit InvariantError(std::vector<ConfigIssue> issues)
      : ConfigError("invariant violation", std::move(issues)) {}
};

enum class RunMode { single, double_scatter, mc, validate };

const char *mode_name(RunMode m);
std::optional<RunMode> parse_mode(const std::string &s);
const char *phase_approximation_name(PhaseApproximation p);
const char *estimator_name(Estimator e);

struct OutputConfig {
  std::filesystem::path path = "lidar_return.csv";
  std::string format = "csv";
};

struct DiagnosticsConfig {
  double smallness_threshold = kDefaultSmallnessThreshold;
};

struct RunConfig {
  Medium medium;
  DetectorGeometry geometry;
  TimeGrid time_grid;
  RunMode mode = RunMode::single;
  PhaseApproximation phase_approximation = PhaseApproximation::backscatter;
  QuadratureConfig quadrature;
  McConfig monte_carlo;
  /// Explicit MC bin width; bins sit halfway between grid times when unset.
  std::optional<double> bin_width;
  DiagnosticsConfig diagnostics;
  OutputConfig output;
  /// Effective configuration with every default filled in and the medium
  /// inlined; the basis of the config hash.
  nlohmann::json effective;
};

/// Reads and validates a JSON run configuration. Relative profile paths are
/// resolved against the directory of the config file.
RunConfig load_config(const std::filesystem::path &path);

/// load_config with `overrides` merged into the document first (RFC 7386
/// merge patch), so overridden values are validated like the rest.
RunConfig load_config(const std::filesystem::path &path, const nlohmann::json &overrides);

/// Same as load_config for an already-parsed document.
RunConfig parse_config(const nlohmann::json &doc,
                       const std::filesystem::path &base_dir = std::filesystem::current_path());

/// Reads a profile file (the `medium` object on its own).
Medium load_medium(const std::filesystem::path &path);

/// 64-bit FNV-1a of a string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string &text);

/// Hash of the effective configuration, excluding settings that cannot change
/// results (worker count, output location).
std::string config_hash(const RunConfig &cfg);

} // namespace lidar
