#include <lidar/errors.hpp>
#include <lidar/geometry.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lidar {

DetectorGeometry::DetectorGeometry(double rho0, double theta0)
    : rho0_(rho0), theta0_(theta0), epsilon_(std::tan(theta0)), cos_theta0_(std::cos(theta0)) {
  if (!(std::isfinite(rho0) && rho0 > 0.0)) {
    throw std::invalid_argument("DetectorGeometry: rho0 must be > 0");
  }
  if (!(theta0 > 0.0 && theta0 < std::numbers::pi / 2)) {
    throw std::invalid_argument("DetectorGeometry: theta0 must lie in (0, pi/2)");
  }
}

DetectorGeometry DetectorGeometry::from_epsilon(double rho0, double epsilon) {
  if (!(std::isfinite(epsilon) && epsilon > 0.0)) {
    throw std::invalid_argument("DetectorGeometry: epsilon must be > 0");
  }
  DetectorGeometry g(rho0, std::atan(epsilon));
  g.epsilon_ = epsilon;
  return g;
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) {
    throw std::invalid_argument("TimeGrid: at least one time required");
  }
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!(std::isfinite(times_[i]) && times_[i] > 0.0)) {
      throw std::invalid_argument("TimeGrid: times must be finite and > 0");
    }
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      throw std::invalid_argument("TimeGrid: times must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::linear(double t_min, double t_max, std::size_t n) {
  if (n == 1) {
    return TimeGrid({t_min});
  }
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = t_min + (t_max - t_min) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  t.back() = t_max;
  return TimeGrid(std::move(t));
}

TimeGrid TimeGrid::logarithmic(double t_min, double t_max, std::size_t n) {
  if (!(t_min > 0.0)) {
    throw std::invalid_argument("TimeGrid: log spacing requires t_min > 0");
  }
  if (n == 1) {
    return TimeGrid({t_min});
  }
  std::vector<double> t(n);
  const double ratio = std::log(t_max / t_min);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = t_min * std::exp(ratio * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  t.front() = t_min;
  t.back() = t_max;
  return TimeGrid(std::move(t));
}

FarFieldCheck check_far_field(double t, const DetectorGeometry &geom) {
  if (!(t > 0.0)) {
    throw DomainError("check_far_field: t must be > 0");
  }
  const double range = geom.rho0() / geom.epsilon();
  return {t / 2.0 > range, (t / 2.0) / range};
}

SmallnessCheck check_double_scatter_validity(double t, const DetectorGeometry &geom,
                                             const Medium &medium, double threshold) {
  if (!(t > geom.rho0())) {
    throw DomainError("check_double_scatter_validity: requires t > rho0 (t = " +
                      std::to_string(t) + ")");
  }
  const double q = geom.epsilon() * medium.sigma_max() * geom.rho0() * std::log(t / geom.rho0());
  return {q, q <= threshold};
}

} // namespace lidar
