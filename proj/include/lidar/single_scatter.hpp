#pragma once

#include <lidar/geometry.hpp>
#include <lidar/medium.hpp>

namespace lidar {

/// A straight path of length `path_length` that ends at depth `start_depth`
/// and whose direction makes angle theta with +z; it covers depths between
/// start_depth and start_depth - path_length * direction_cosine.
struct AttenuationQuery {
  double path_length;
  double start_depth;
  double direction_cosine;
};

/// exp(-integral_0^L sigma_t(z - tau cos(theta)) dtau), closed form.
double attenuation(const AttenuationQuery &q, const Medium &medium);

/// Single-scattering return rate per emitted particle at time t:
/// (2 pi rho0^2 / t^2) exp(-2 tau(t/2)) sigma(-1, t/2).
double single_scatter_return(double t, const DetectorGeometry &geom, const Medium &medium);

} // namespace lidar
