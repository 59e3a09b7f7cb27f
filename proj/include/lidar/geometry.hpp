#pragma once

#include <lidar/medium.hpp>

#include <vector>

namespace lidar {

/// Monostatic receiver: a disk of radius rho0 in the plane z = 0, centred on
/// the beam axis, accepting directions within theta0 of -z.
class DetectorGeometry {
public:
  DetectorGeometry(double rho0, double theta0);
  static DetectorGeometry from_epsilon(double rho0, double epsilon);

  double rho0() const { return rho0_; }
  double theta0() const { return theta0_; }
  double epsilon() const { return epsilon_; }
  double cos_theta0() const { return cos_theta0_; }

private:
  double rho0_;
  double theta0_;
  double epsilon_;
  double cos_theta0_;
};

/// Return times in path-length units (c = 1), strictly increasing and > 0.
class TimeGrid {
public:
  explicit TimeGrid(std::vector<double> times);
  static TimeGrid linear(double t_min, double t_max, std::size_t n);
  static TimeGrid logarithmic(double t_min, double t_max, std::size_t n);

  const std::vector<double> &times() const { return times_; }
  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t i) const { return times_[i]; }

private:
  std::vector<double> times_;
};

struct FarFieldCheck {
  bool satisfied;
  double margin; ///< (t/2) / (rho0/epsilon)
};

/// Whether t/2 > rho0/epsilon, the regime where the single-scatter return
/// reduces to the closed form.
FarFieldCheck check_far_field(double t, const DetectorGeometry &geom);

inline constexpr double kDefaultSmallnessThreshold = 0.01;

struct SmallnessCheck {
  double q; ///< epsilon * sigma_max * rho0 * ln(t / rho0)
  bool reliable; ///< q <= threshold
};

/// Smallness parameter controlling the neglect of the partial-acceptance
/// double-scatter terms. Requires t > rho0.
SmallnessCheck check_double_scatter_validity(double t, const DetectorGeometry &geom,
                                             const Medium &medium,
                                             double threshold = kDefaultSmallnessThreshold);

} // namespace lidar
