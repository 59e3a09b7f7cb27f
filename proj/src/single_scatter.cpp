#include <lidar/errors.hpp>
#include <lidar/single_scatter.hpp>

#include <cmath>
#include <numbers>

namespace lidar {

double attenuation(const AttenuationQuery &q, const Medium &medium) {
  if (!(q.path_length >= 0.0) || !(std::abs(q.direction_cosine) <= 1.0)) {
    throw DomainError("attenuation: requires path_length >= 0 and |direction_cosine| <= 1");
  }
  const double end = q.start_depth - q.path_length * q.direction_cosine;
  // Line integral = path length times mean sigma_t over the depth interval;
  // mean_extinction degrades to sigma_t(z) for horizontal rays.
  return std::exp(-q.path_length * medium.mean_extinction(q.start_depth, end));
}

double single_scatter_return(double t, const DetectorGeometry &geom, const Medium &medium) {
  if (!(t > 0.0)) {
    throw DomainError("single_scatter_return: t must be > 0");
  }
  const double half = t / 2.0;
  const double prefactor = 2.0 * std::numbers::pi * geom.rho0() * geom.rho0() / (t * t);
  const double backscatter = medium.sigma_scatter(-1.0, half);
  if (backscatter == 0.0) {
    return 0.0;
  }
  return prefactor * std::exp(-2.0 * medium.optical_depth(0.0, half)) * backscatter;
}

} // namespace lidar
