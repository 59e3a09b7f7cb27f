#pragma once

#include <lidar/geometry.hpp>
#include <lidar/medium.hpp>
#include <lidar/vec3.hpp>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lidar {

/// Independent random stream identified by (seed, stream_id). The same pair
/// always yields the same sequence, on any platform.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

struct Photon {
  Vec3 position;
  Vec3 direction{0.0, 0.0, 1.0};
  double path_time{0};
  int order{0};
  double weight{1};
  double first_depth{0}; ///< depth of the first scattering, once order >= 1
  double last_depth{0};  ///< depth of the latest scattering
  double last_offset{0}; ///< distance of the latest scattering from the beam axis
};

struct FreePath {
  double distance; ///< infinite when the photon leaves the medium
  bool collided;   ///< false on escape or when max_distance is exceeded
};

/// Distance to the next collision along a ray, sampled from the exact
/// piecewise-linear optical depth.
FreePath sample_free_path(const Vec3 &start, const Vec3 &direction, const Medium &medium,
                          RngStream &rng,
                          double max_distance = std::numeric_limits<double>::infinity());

/// Rotates `direction` by polar angle acos(cos_gamma) and azimuth phi.
Vec3 rotate_direction(const Vec3 &direction, double cos_gamma, double phi);

/// Samples scattering directions from sigma(mu, z) / integral sigma dOmega.
/// Tabulated phases use per-column inverse CDFs built once at construction.
class ScatterSampler {
public:
  explicit ScatterSampler(const Medium &medium);

  /// Throws NoScatterError where the medium does not scatter.
  double sample_cosine(double z, RngStream &rng) const;
  Vec3 sample_direction(const Vec3 &direction, double z, RngStream &rng) const;

private:
  struct Column {
    std::vector<double> cumulative; ///< mass up to each mu node
  };

  const Medium *medium_;
  std::vector<Column> columns_;
};

Vec3 sample_scatter_direction(const Vec3 &direction, double z, const Medium &medium,
                              RngStream &rng);

enum class Estimator {
  analog,     ///< count physical crossings of the receiver disk
  next_event, ///< score the probability of reaching the receiver from each collision
};

/// Structured per-event lines, one per event:
/// `history event x y z ux uy uz t order`.
class TrajectoryLog {
public:
  void record(std::uint64_t history, const char *event, const Photon &ph);
  const std::string &text() const { return text_; }
  void append(const TrajectoryLog &other) { text_ += other.text_; }

private:
  std::string text_;
};

struct Detection {
  double time;
  int order;
  double weight;
  double first_depth;  ///< depth of the first scattering
  double second_depth; ///< depth of the last scattering before detection
  double second_offset; ///< its horizontal distance from the beam axis
};

/// Return time of a double-scatter trajectory with the last leg counted as
/// vertical: z1 + |P2 - P1| + z2. In these kinematics
/// (t - 2 z1)(t - 2 z2) is the squared axis offset of the second point, which
/// is how D0 is parametrised.
double kinematic_time(const Detection &d);

struct TraceOptions {
  Estimator estimator = Estimator::analog;
  double horizon = std::numeric_limits<double>::infinity();
  std::uint64_t history_id = 0;
  TrajectoryLog *log = nullptr;
};

/// One history from the point source at the origin, launched along +z.
std::vector<Detection> trace_history(const DetectorGeometry &geom, const Medium &medium,
                                     const ScatterSampler &sampler, const TraceOptions &opts,
                                     RngStream &rng);

/// Time bins [lo_i, hi_i); non-overlapping and sorted.
class TimeBins {
public:
  TimeBins(std::vector<double> lo, std::vector<double> hi);
  /// Bins centred on the grid times. Without `width`, edges sit halfway
  /// between neighbours and the outer bins mirror their inner edge.
  static TimeBins around(const TimeGrid &grid, std::optional<double> width = std::nullopt);

  std::size_t size() const { return lo_.size(); }
  double lo(std::size_t i) const { return lo_[i]; }
  double hi(std::size_t i) const { return hi_[i]; }
  double width(std::size_t i) const { return hi_[i] - lo_[i]; }
  double centre(std::size_t i) const { return 0.5 * (lo_[i] + hi_[i]); }
  std::optional<std::size_t> find(double t) const;

private:
  std::vector<double> lo_, hi_;
};

enum class Channel : std::size_t {
  order1,
  order2,
  order3plus,
  order2_d0,          ///< order 2 whose scattering points lie in D0 (see kinematic_time)
  order2_outside_d0,  ///< order 2 outside D0 (the partial-acceptance remainder)
  total,
};
inline constexpr std::size_t kChannelCount = 6;

const char *channel_name(Channel c);

/// Per-bin, per-channel first and second moments of the per-history score.
class McTally {
public:
  explicit McTally(TimeBins bins);

  void add_history(std::span<const Detection> detections, const DetectorGeometry &geom);
  /// Adds another tally over the same bins.
  void merge(const McTally &other);

  const TimeBins &bins() const { return bins_; }
  std::uint64_t n_histories() const { return n_histories_; }

  double sum(Channel c, std::size_t bin) const { return sum_[index(c, bin)]; }
  double sum_sq(Channel c, std::size_t bin) const { return sum_sq_[index(c, bin)]; }
  /// Number of individual detections or scores that landed in the cell.
  std::uint64_t count(Channel c, std::size_t bin) const { return count_[index(c, bin)]; }

  /// sum / (N * width): rate per emitted particle per unit time.
  double rate(Channel c, std::size_t bin) const;
  double std_error(Channel c, std::size_t bin) const;

private:
  std::size_t index(Channel c, std::size_t bin) const {
    return static_cast<std::size_t>(c) * bins_.size() + bin;
  }

  TimeBins bins_;
  std::vector<double> sum_, sum_sq_;
  std::vector<std::uint64_t> count_;
  std::uint64_t n_histories_ = 0;
};

struct McConfig {
  std::uint64_t histories = 1'000'000;
  std::uint64_t blocks = 64;
  std::uint64_t seed = 1;
  Estimator estimator = Estimator::analog;
  /// Path-length cutoff; 0 means the upper edge of the last bin.
  double horizon = 0.0;
  unsigned workers = 1;
  /// Histories (by global id) written to the trajectory log, if one is given.
  std::uint64_t log_histories = 1000;
};

/// Runs `histories` histories split into `blocks` blocks, block b drawing
/// from stream (seed, b). Blocks are merged in block order, so the tally is
/// bit-identical for any worker count.
McTally estimate_returns(const McConfig &cfg, const DetectorGeometry &geom, const Medium &medium,
                         const TimeBins &bins, TrajectoryLog *log = nullptr);

} // namespace lidar
