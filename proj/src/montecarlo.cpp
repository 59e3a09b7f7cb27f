#include <lidar/double_scatter.hpp>
#include <lidar/errors.hpp>
#include <lidar/montecarlo.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace lidar {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return std::mt19937_64(seq);
}

// Column k and (k+1) of a z-node list with weight w on k+1, flat outside.
std::pair<std::size_t, double> column_weight(const std::vector<double> &z_nodes, double z) {
  if (z_nodes.size() == 1 || z <= z_nodes.front()) {
    return {0, 0.0};
  }
  if (z >= z_nodes.back()) {
    return {z_nodes.size() - 2, 1.0};
  }
  auto it = std::upper_bound(z_nodes.begin(), z_nodes.end(), z);
  const std::size_t k = static_cast<std::size_t>(it - z_nodes.begin()) - 1;
  return {k, (z - z_nodes[k]) / (z_nodes[k + 1] - z_nodes[k])};
}

double sample_shape(const AngularShape &shape, double u) {
  if (std::holds_alternative<Isotropic>(shape)) {
    return 2.0 * u - 1.0;
  }
  const double g = std::get<HenyeyGreenstein>(shape).g;
  if (std::abs(g) < 1e-6) {
    return 2.0 * u - 1.0;
  }
  const double f = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
  return std::clamp((1.0 + g * g - f * f) / (2.0 * g), -1.0, 1.0);
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : engine_(make_engine(seed, stream_id)), seed_(seed), stream_id_(stream_id) {}

FreePath sample_free_path(const Vec3 &start, const Vec3 &direction, const Medium &medium,
                          RngStream &rng, double max_distance) {
  const double target = -std::log(rng.uniform());
  const double dz = direction.z;
  double distance = std::numeric_limits<double>::infinity();
  if (dz == 0.0) {
    const double s = medium.sigma_t(start.z);
    if (s > 0.0) {
      distance = target / s;
    }
  } else {
    const double a = std::abs(dz);
    if (auto vertical = medium.distance_to_optical_depth(start.z, dz > 0.0 ? 1 : -1, target * a)) {
      distance = *vertical / a;
    }
  }
  return {distance, std::isfinite(distance) && distance <= max_distance};
}

Vec3 rotate_direction(const Vec3 &d, double cos_gamma, double phi) {
  cos_gamma = std::clamp(cos_gamma, -1.0, 1.0);
  const double sin_gamma = std::sqrt(std::max(0.0, 1.0 - cos_gamma * cos_gamma));
  const double cp = std::cos(phi);
  const double sp = std::sin(phi);
  // Orthonormal frame around d (Duff et al. 2017), valid for every d.
  const double sign = d.z >= 0.0 ? 1.0 : -1.0;
  const double a = -1.0 / (sign + d.z);
  const double b = d.x * d.y * a;
  const Vec3 e1{1.0 + sign * d.x * d.x * a, sign * b, -sign * d.x};
  const Vec3 e2{b, sign + d.y * d.y * a, -d.y};
  const Vec3 out{sin_gamma * (cp * e1.x + sp * e2.x) + cos_gamma * d.x,
                 sin_gamma * (cp * e1.y + sp * e2.y) + cos_gamma * d.y,
                 sin_gamma * (cp * e1.z + sp * e2.z) + cos_gamma * d.z};
  return out.normalized();
}

// ---------------------------------------------------------------------------
// ScatterSampler

ScatterSampler::ScatterSampler(const Medium &medium) : medium_(&medium) {
  const auto *tab = std::get_if<TabulatedPhase>(&medium.phase().representation());
  if (tab == nullptr) {
    return;
  }
  const std::size_t nmu = tab->mu_nodes.size();
  for (std::size_t j = 0; j < tab->z_nodes.size(); ++j) {
    Column col;
    col.cumulative.assign(nmu, 0.0);
    for (std::size_t i = 0; i + 1 < nmu; ++i) {
      col.cumulative[i + 1] =
          col.cumulative[i] +
          0.5 * (tab->mu_nodes[i + 1] - tab->mu_nodes[i]) * (tab->at(i, j) + tab->at(i + 1, j));
    }
    columns_.push_back(std::move(col));
  }
}

double ScatterSampler::sample_cosine(double z, RngStream &rng) const {
  const auto &rep = medium_->phase().representation();
  if (const auto *sep = std::get_if<SeparablePhase>(&rep)) {
    if (!(sep->scattering(z) > 0.0)) {
      throw NoScatterError("sample_cosine: no scattering at z = " + std::to_string(z));
    }
    return sample_shape(sep->shape, rng.uniform());
  }
  const auto &tab = std::get<TabulatedPhase>(rep);
  const auto [k, w] = column_weight(tab.z_nodes, z);
  const double m0 = (1.0 - w) * columns_[k].cumulative.back();
  const double m1 = columns_.size() > 1 ? w * columns_[k + 1].cumulative.back() : 0.0;
  if (!(m0 + m1 > 0.0)) {
    throw NoScatterError("sample_cosine: no scattering at z = " + std::to_string(z));
  }
  const std::size_t j = rng.uniform() * (m0 + m1) < m0 ? k : k + 1;
  const auto &cum = columns_[j].cumulative;
  const double mass = rng.uniform() * cum.back();
  auto it = std::upper_bound(cum.begin(), cum.end(), mass);
  std::size_t i = it == cum.begin() ? 0 : static_cast<std::size_t>(it - cum.begin()) - 1;
  i = std::min(i, cum.size() - 2);
  // Invert a x + (b - a) x^2 / (2 h) = r on the linear piece.
  const double a = tab.at(i, j);
  const double b = tab.at(i + 1, j);
  const double h = tab.mu_nodes[i + 1] - tab.mu_nodes[i];
  const double r = mass - cum[i];
  const double root = std::sqrt(std::max(0.0, a * a + 2.0 * (b - a) * r / h));
  const double denom = a + root;
  const double x = denom > 0.0 ? 2.0 * r / denom : 0.5 * h;
  return std::clamp(tab.mu_nodes[i] + std::clamp(x, 0.0, h), -1.0, 1.0);
}

Vec3 ScatterSampler::sample_direction(const Vec3 &direction, double z, RngStream &rng) const {
  const double mu = sample_cosine(z, rng);
  return rotate_direction(direction, mu, 2.0 * kPi * rng.uniform());
}

Vec3 sample_scatter_direction(const Vec3 &direction, double z, const Medium &medium,
                              RngStream &rng) {
  return ScatterSampler(medium).sample_direction(direction, z, rng);
}

void TrajectoryLog::record(std::uint64_t history, const char *event, const Photon &ph) {
  fmt::format_to(std::back_inserter(text_), "{} {} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {}\n",
                 history, event, ph.position.x, ph.position.y, ph.position.z, ph.direction.x,
                 ph.direction.y, ph.direction.z, ph.path_time, ph.order);
}

// ---------------------------------------------------------------------------
// History tracing

std::vector<Detection> trace_history(const DetectorGeometry &geom, const Medium &medium,
                                     const ScatterSampler &sampler, const TraceOptions &opts,
                                     RngStream &rng) {
  std::vector<Detection> out;
  Photon ph;
  const double rho0 = geom.rho0();
  const double cos0 = geom.cos_theta0();
  auto log = [&](const char *event) {
    if (opts.log != nullptr) {
      opts.log->record(opts.history_id, event, ph);
    }
  };
  log("launch");

  while (true) {
    const double remaining = opts.horizon - ph.path_time;
    if (!(remaining > 0.0)) {
      log("horizon");
      break;
    }
    const FreePath step = sample_free_path(ph.position, ph.direction, medium, rng, remaining);
    if (!step.collided) {
      if (opts.estimator == Estimator::analog && ph.direction.z < 0.0 &&
          std::isinf(step.distance)) {
        const double s = ph.position.z / -ph.direction.z;
        const Vec3 hit = ph.position + ph.direction * s;
        const double t = ph.path_time + s;
        if (-ph.direction.z >= cos0 && std::hypot(hit.x, hit.y) <= rho0 && t <= opts.horizon &&
            ph.order > 0) {
          out.push_back({t, ph.order, ph.weight, ph.first_depth, ph.last_depth, ph.last_offset});
          ph.position = hit;
          ph.path_time = t;
          log("detect");
          break;
        }
      }
      log(std::isinf(step.distance) ? "escape" : "horizon");
      break;
    }
    ph.position = ph.position + ph.direction * step.distance;
    ph.path_time += step.distance;
    const double z = ph.position.z;
    const double sigma_t = medium.sigma_t(z);
    const int next_order = ph.order + 1;
    const double first = ph.order == 0 ? z : ph.first_depth;

    if (opts.estimator == Estimator::next_event && sigma_t > 0.0) {
      // Uniform point on the receiver disk.
      const double r = rho0 * std::sqrt(rng.uniform());
      const double phi = 2.0 * kPi * rng.uniform();
      const Vec3 q{r * std::cos(phi), r * std::sin(phi), 0.0};
      const Vec3 leg = q - ph.position;
      const double len = leg.norm();
      const Vec3 d = leg * (1.0 / len);
      const double t = ph.path_time + len;
      if (-d.z >= cos0 && t <= opts.horizon) {
        const double sigma = medium.sigma_scatter(std::clamp(ph.direction.dot(d), -1.0, 1.0), z);
        if (sigma > 0.0) {
          const double w = ph.weight * sigma / sigma_t * kPi * rho0 * rho0 * (-d.z) /
                           (len * len) * std::exp(-len * medium.mean_extinction(0.0, z));
          out.push_back({t, next_order, w, first, z, std::hypot(ph.position.x, ph.position.y)});
        }
      }
    }

    const double albedo = sigma_t > 0.0 ? medium.scattering_coefficient(z) / sigma_t : 0.0;
    if (!(rng.uniform() < albedo)) {
      log("absorb");
      break;
    }
    ph.order = next_order;
    ph.first_depth = first;
    ph.last_depth = z;
    ph.last_offset = std::hypot(ph.position.x, ph.position.y);
    ph.direction = sampler.sample_direction(ph.direction, z, rng);
    log("scatter");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tallies

TimeBins::TimeBins(std::vector<double> lo, std::vector<double> hi)
    : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size() || lo_.empty()) {
    throw std::invalid_argument("TimeBins: lo and hi must be non-empty and of equal size");
  }
  for (std::size_t i = 0; i < lo_.size(); ++i) {
    if (!(std::isfinite(lo_[i]) && std::isfinite(hi_[i]) && lo_[i] < hi_[i])) {
      throw std::invalid_argument("TimeBins: each bin needs finite lo < hi");
    }
    if (i > 0 && lo_[i] < hi_[i - 1]) {
      throw std::invalid_argument("TimeBins: bins must be sorted and non-overlapping");
    }
  }
}

TimeBins TimeBins::around(const TimeGrid &grid, std::optional<double> width) {
  const auto &t = grid.times();
  std::vector<double> lo(t.size()), hi(t.size());
  if (width) {
    if (!(*width > 0.0)) {
      throw std::invalid_argument("TimeBins: bin width must be > 0");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      lo[i] = t[i] - 0.5 * *width;
      hi[i] = t[i] + 0.5 * *width;
    }
    return TimeBins(std::move(lo), std::move(hi));
  }
  if (t.size() < 2) {
    throw std::invalid_argument("TimeBins: a single time point needs an explicit bin width");
  }
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    hi[i] = lo[i + 1] = 0.5 * (t[i] + t[i + 1]);
  }
  lo.front() = std::max(0.0, 2.0 * t.front() - hi.front());
  hi.back() = 2.0 * t.back() - lo.back();
  return TimeBins(std::move(lo), std::move(hi));
}

std::optional<std::size_t> TimeBins::find(double t) const {
  auto it = std::upper_bound(lo_.begin(), lo_.end(), t);
  if (it == lo_.begin()) {
    return std::nullopt;
  }
  const std::size_t i = static_cast<std::size_t>(it - lo_.begin()) - 1;
  if (t < hi_[i]) {
    return i;
  }
  return std::nullopt;
}

double kinematic_time(const Detection &d) {
  return d.first_depth + std::hypot(d.second_offset, d.second_depth - d.first_depth) +
         d.second_depth;
}

const char *channel_name(Channel c) {
  switch (c) {
  case Channel::order1:
    return "order1";
  case Channel::order2:
    return "order2";
  case Channel::order3plus:
    return "order3plus";
  case Channel::order2_d0:
    return "order2_d0";
  case Channel::order2_outside_d0:
    return "order2_outside_d0";
  case Channel::total:
    return "total";
  }
  return "unknown";
}

McTally::McTally(TimeBins bins)
    : bins_(std::move(bins)), sum_(kChannelCount * bins_.size(), 0.0),
      sum_sq_(kChannelCount * bins_.size(), 0.0), count_(kChannelCount * bins_.size(), 0) {}

void McTally::add_history(std::span<const Detection> detections, const DetectorGeometry &geom) {
  ++n_histories_;
  // Per-history score per cell; a history rarely touches more than a few.
  struct Cell {
    std::size_t index;
    double weight;
  };
  std::vector<Cell> cells;
  auto add = [&](Channel c, std::size_t bin, double w) {
    const std::size_t idx = index(c, bin);
    ++count_[idx];
    for (auto &cell : cells) {
      if (cell.index == idx) {
        cell.weight += w;
        return;
      }
    }
    cells.push_back({idx, w});
  };
  for (const Detection &d : detections) {
    const auto bin = bins_.find(d.time);
    if (!bin) {
      continue;
    }
    add(Channel::total, *bin, d.weight);
    if (d.order == 1) {
      add(Channel::order1, *bin, d.weight);
    } else if (d.order == 2) {
      add(Channel::order2, *bin, d.weight);
      const bool inside =
          d0_contains({d.first_depth, d.second_depth}, kinematic_time(d), geom);
      add(inside ? Channel::order2_d0 : Channel::order2_outside_d0, *bin, d.weight);
    } else {
      add(Channel::order3plus, *bin, d.weight);
    }
  }
  for (const auto &cell : cells) {
    sum_[cell.index] += cell.weight;
    sum_sq_[cell.index] += cell.weight * cell.weight;
  }
}

void McTally::merge(const McTally &other) {
  if (other.sum_.size() != sum_.size()) {
    throw std::invalid_argument("McTally::merge: bin layouts differ");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    sum_sq_[i] += other.sum_sq_[i];
    count_[i] += other.count_[i];
  }
  n_histories_ += other.n_histories_;
}

double McTally::rate(Channel c, std::size_t bin) const {
  if (n_histories_ == 0) {
    return 0.0;
  }
  return sum(c, bin) / (static_cast<double>(n_histories_) * bins_.width(bin));
}

double McTally::std_error(Channel c, std::size_t bin) const {
  if (n_histories_ < 2) {
    return std::numeric_limits<double>::infinity();
  }
  const double n = static_cast<double>(n_histories_);
  const double s = sum(c, bin);
  const double var = std::max(0.0, (sum_sq(c, bin) - s * s / n) / (n - 1.0));
  return std::sqrt(var / n) / bins_.width(bin);
}

McTally estimate_returns(const McConfig &cfg, const DetectorGeometry &geom, const Medium &medium,
                         const TimeBins &bins, TrajectoryLog *log) {
  if (cfg.histories == 0 || cfg.blocks == 0) {
    throw std::invalid_argument("estimate_returns: histories and blocks must be >= 1");
  }
  const std::uint64_t blocks = std::min(cfg.blocks, cfg.histories);
  const std::uint64_t base = cfg.histories / blocks;
  const std::uint64_t extra = cfg.histories % blocks;
  const double horizon = cfg.horizon > 0.0 ? cfg.horizon : bins.hi(bins.size() - 1);
  const ScatterSampler sampler(medium);

  std::vector<McTally> partial(blocks, McTally(bins));
  std::vector<TrajectoryLog> logs(log != nullptr ? blocks : 0);
  std::atomic<std::uint64_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto run_block = [&](std::uint64_t b) {
    RngStream rng(cfg.seed, b);
    const std::uint64_t count = base + (b < extra ? 1 : 0);
    const std::uint64_t first_id = b * base + std::min(b, extra);
    McTally &tally = partial[b];
    TraceOptions opts;
    opts.estimator = cfg.estimator;
    opts.horizon = horizon;
    for (std::uint64_t h = 0; h < count; ++h) {
      opts.history_id = first_id + h;
      opts.log = (log != nullptr && opts.history_id < cfg.log_histories) ? &logs[b] : nullptr;
      const auto det = trace_history(geom, medium, sampler, opts, rng);
      tally.add_history(det, geom);
    }
  };
  auto worker = [&] {
    for (std::uint64_t b = next++; b < blocks; b = next++) {
      try {
        run_block(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
        next = blocks;
      }
    }
  };

  const unsigned workers =
      static_cast<unsigned>(std::clamp<std::uint64_t>(cfg.workers == 0 ? 1 : cfg.workers, 1, blocks));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) {
      pool.emplace_back(worker);
    }
    for (auto &th : pool) {
      th.join();
    }
  }

  if (failure) {
    std::rethrow_exception(failure);
  }
  McTally total(bins);
  for (std::uint64_t b = 0; b < blocks; ++b) {
    total.merge(partial[b]);
    if (log != nullptr) {
      log->append(logs[b]);
    }
  }
  return total;
}

} // namespace lidar
