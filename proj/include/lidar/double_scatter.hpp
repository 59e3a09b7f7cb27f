#pragma once

#include <lidar/geometry.hpp>
#include <lidar/medium.hpp>
#include <lidar/quadrature.hpp>

#include <cstddef>

namespace lidar {

/// How the second scattering angle is evaluated in the double-scatter
/// integrand. The first scattering angle is always exact.
enum class PhaseApproximation {
  /// Angle between the middle leg and the ray aimed at the disk centre.
  exact,
  /// sigma(cos(pi - theta1)): the return leg taken as exactly vertical.
  backscatter,
  /// sigma(cos(pi - theta1 - theta0/2)): return leg tilted by half the aperture.
  half_aperture_shift,
};

/// Heights of the two scattering events of a double-scatter trajectory. The
/// beam travels straight down to `first_depth`, scatters, flies to
/// `second_depth`, scatters again and returns (nearly vertically) to the
/// receiver. Both lie in [0, t/2] for a return at time t.
struct ScatterPair {
  double first_depth;
  double second_depth;
};

struct QuadratureConfig {
  double rel_tol = 1e-6;
  double abs_tol = 0.0;
  std::size_t max_subdivisions = 2000;
  /// Integrate D0 in coordinates (u, v) with u = 2 (t - z1 - z2), which
  /// removes the 1/(t - z1 - z2) corner singularity. When off, the corner is
  /// resolved by adaptive (graded) subdivision in (z1, z2).
  bool corner_substitution = true;
};

/// Membership in D0, the part of the (first, second) square where the whole
/// receiver disk is inside the aperture cone seen from the second scattering
/// point:  eps*z2 > rho0  and  (t - 2 z1)(t - 2 z2) < (eps*z2 - rho0)^2.
bool d0_contains(const ScatterPair &p, double t, const DetectorGeometry &geom);

/// Attenuation along the three-leg trajectory (down, across, back up):
/// exp[-2 tau(0, z1) - (t - 2 z1) * mean_sigma_t(z1, z2)].
/// Requires z1 + z2 < t.
double double_attenuation(const ScatterPair &p, double t, const Medium &medium);

/// E * sigma(cos_theta1, z1) * sigma(second_mu, z2) / (z2^2 (t - z1 - z2)),
/// with cos_theta1 = (z2 - z1) / (t - z1 - z2) and second_mu chosen by `mode`.
/// Throws SingularPointError at z2 = 0 or z1 + z2 = t.
double double_scatter_integrand(const ScatterPair &p, double t, const DetectorGeometry &geom,
                                const Medium &medium, PhaseApproximation mode);

struct DoubleScatterResult {
  double value{0};
  double error{0};
  std::size_t evaluations{0};
  bool empty_domain{false};
};

/// I21(t) = 2 pi^2 rho0^2 * integral over D0 of the integrand. Throws
/// ConvergenceError (carrying the best estimate) when the tolerance is not
/// met within the subdivision budget.
DoubleScatterResult double_scatter_return(double t, const DetectorGeometry &geom,
                                          const Medium &medium, PhaseApproximation mode,
                                          const QuadratureConfig &qcfg = {});

/// Upper bound on the partial-acceptance term with rho0 <= xi_max:
/// 8 pi^2 sigma_max^2 rho0^3 eps / t^2.
double i22_bound(double t, const DetectorGeometry &geom, const Medium &medium);

/// Upper bound on the partial-acceptance term with xi_max <= rho0:
/// 16 pi^2 sigma_max^2 rho0^3 eps (2 + pi + ln(eps t / (2 rho0))) / t^2.
/// Requires eps * t > 2 rho0.
double i23_bound(double t, const DetectorGeometry &geom, const Medium &medium);

} // namespace lidar
