#include <lidar/double_scatter.hpp>
#include <lidar/errors.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lidar {

namespace {

constexpr double kPi = std::numbers::pi;

// Root of a monotone function on [lo, hi] with f(lo) < 0 < f(hi).
template <class F>
double bisect(F &&f, double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) {
      break;
    }
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double second_cosine(double cos1, const ScatterPair &p, double middle,
                     const DetectorGeometry &geom, PhaseApproximation mode) {
  switch (mode) {
  case PhaseApproximation::backscatter:
    return -cos1;
  case PhaseApproximation::half_aperture_shift:
    return std::cos(kPi - std::acos(cos1) - 0.5 * geom.theta0());
  case PhaseApproximation::exact: {
    // The middle leg starts on the axis, so the second point sits a
    // horizontal distance xi off axis; aim the return leg at the disk centre.
    const double dz = p.second_depth - p.first_depth;
    const double xi = std::sqrt(std::max(0.0, middle * middle - dz * dz));
    const double sin1 = xi / middle;
    const double mu = -(xi * sin1 + p.second_depth * cos1) / std::hypot(xi, p.second_depth);
    return std::clamp(mu, -1.0, 1.0);
  }
  }
  return -cos1;
}

struct Tolerances {
  double rel_outer, abs_outer, rel_inner, abs_inner;
};

Tolerances split_tolerances(const QuadratureConfig &q, double prefactor, double outer_len) {
  const double abs_total = q.abs_tol / prefactor;
  return {0.5 * q.rel_tol, 0.5 * abs_total, 0.25 * q.rel_tol,
          0.25 * abs_total / std::max(outer_len, 1e-300)};
}

} // namespace

bool d0_contains(const ScatterPair &p, double t, const DetectorGeometry &geom) {
  const double z1 = p.first_depth;
  const double z2 = p.second_depth;
  if (!(z1 >= 0.0 && z1 <= 0.5 * t && z2 >= 0.0 && z2 < 0.5 * t)) {
    return false;
  }
  const double reach = geom.epsilon() * z2 - geom.rho0();
  if (!(reach > 0.0)) {
    return false;
  }
  return (t - 2.0 * z1) * (t - 2.0 * z2) < reach * reach;
}

double double_attenuation(const ScatterPair &p, double t, const Medium &medium) {
  const double z1 = p.first_depth;
  const double z2 = p.second_depth;
  if (!(z1 + z2 < t)) {
    throw DomainError("double_attenuation: requires z1 + z2 < t");
  }
  const double exponent =
      2.0 * medium.optical_depth(0.0, z1) + (t - 2.0 * z1) * medium.mean_extinction(z1, z2);
  return std::exp(-exponent);
}

double double_scatter_integrand(const ScatterPair &p, double t, const DetectorGeometry &geom,
                                const Medium &medium, PhaseApproximation mode) {
  const double middle = t - p.first_depth - p.second_depth;
  if (p.second_depth == 0.0 || !(middle > 0.0)) {
    throw SingularPointError("double_scatter_integrand: singular point (z1 = " +
                             std::to_string(p.first_depth) +
                             ", z2 = " + std::to_string(p.second_depth) + ")");
  }
  const double cos1 = std::clamp((p.second_depth - p.first_depth) / middle, -1.0, 1.0);
  const double first = medium.sigma_scatter(cos1, p.first_depth);
  if (first == 0.0) {
    return 0.0;
  }
  const double second =
      medium.sigma_scatter(second_cosine(cos1, p, middle, geom, mode), p.second_depth);
  if (second == 0.0) {
    return 0.0;
  }
  return double_attenuation(p, t, medium) * first * second /
         (p.second_depth * p.second_depth * middle);
}

DoubleScatterResult double_scatter_return(double t, const DetectorGeometry &geom,
                                          const Medium &medium, PhaseApproximation mode,
                                          const QuadratureConfig &qcfg) {
  if (!(qcfg.rel_tol > 0.0) || qcfg.max_subdivisions < 1) {
    throw std::invalid_argument("QuadratureConfig: rel_tol must be > 0, max_subdivisions >= 1");
  }
  DoubleScatterResult out;
  const double eps = geom.epsilon();
  const double rho0 = geom.rho0();
  if (!(t > 2.0 * rho0 / eps)) {
    out.empty_domain = true;
    return out;
  }
  if (medium.sigma_max() == 0.0) {
    return out;
  }
  const double prefactor = 2.0 * kPi * kPi * rho0 * rho0;
  bool inner_failed = false;
  auto integrand = [&](double z1, double z2) {
    return double_scatter_integrand({z1, z2}, t, geom, medium, mode);
  };

  QuadratureResult outer;
  auto accumulate = [&](const QuadratureResult &piece) {
    outer.value += piece.value;
    outer.error += piece.error;
    outer.evaluations += piece.evaluations;
    outer.converged = outer.converged && piece.converged;
  };
  outer.converged = true;

  if (qcfg.corner_substitution) {
    // A = t - 2 z1 = u v, B = t - 2 z2 = u (1 - v); D0 becomes 0 <= u < U(v).
    const double reach = 0.5 * eps * t - rho0;
    auto u_max = [&](double v) {
      const double dz = std::sqrt(v * (1.0 - v)) + 0.5 * eps * (1.0 - v);
      const double cap = v > 0.0 ? t / v : std::numeric_limits<double>::infinity();
      return std::min(reach / dz, cap);
    };
    const Tolerances tol = split_tolerances(qcfg, prefactor, 1.0);
    auto inner = [&](double v) -> Estimate {
      const double top = u_max(v);
      auto f = [&](double u) {
        return 0.25 * u * integrand(0.5 * (t - u * v), 0.5 * (t - u * (1.0 - v)));
      };
      const QuadratureResult r =
          integrate_adaptive(f, 0.0, top, tol.rel_inner, tol.abs_inner, qcfg.max_subdivisions);
      inner_failed = inner_failed || !r.converged;
      outer.evaluations += r.evaluations;
      return {r.value, r.error};
    };
    // Kink where the hyperbola meets the z1 = 0 edge.
    const double v_kink = bisect(
        [&](double v) {
          const double dz = std::sqrt(v * (1.0 - v)) + 0.5 * eps * (1.0 - v);
          return reach * v / dz - t;
        },
        0.0, 1.0);
    accumulate(integrate_adaptive(inner, 0.0, v_kink, tol.rel_outer, tol.abs_outer,
                                  qcfg.max_subdivisions));
    accumulate(integrate_adaptive(inner, v_kink, 1.0, tol.rel_outer, tol.abs_outer,
                                  qcfg.max_subdivisions));
  } else {
    const double lo = rho0 / eps;
    const double hi = 0.5 * t;
    auto z1_min = [&](double z2) {
      const double reach = eps * z2 - rho0;
      return std::max(0.0, 0.5 * t - reach * reach / (2.0 * (t - 2.0 * z2)));
    };
    const Tolerances tol = split_tolerances(qcfg, prefactor, hi - lo);
    auto inner = [&](double z2) -> Estimate {
      auto f = [&](double z1) { return integrand(z1, z2); };
      const QuadratureResult r = integrate_adaptive(f, z1_min(z2), 0.5 * t, tol.rel_inner,
                                                    tol.abs_inner, qcfg.max_subdivisions);
      inner_failed = inner_failed || !r.converged;
      outer.evaluations += r.evaluations;
      return {r.value, r.error};
    };
    const double z2_kink = bisect(
        [&](double z2) {
          const double reach = eps * z2 - rho0;
          return reach * reach - t * (t - 2.0 * z2);
        },
        lo, hi);
    accumulate(integrate_adaptive(inner, lo, z2_kink, tol.rel_outer, tol.abs_outer,
                                  qcfg.max_subdivisions));
    accumulate(integrate_adaptive(inner, z2_kink, hi, tol.rel_outer, tol.abs_outer,
                                  qcfg.max_subdivisions));
  }

  out.value = prefactor * outer.value;
  out.error = prefactor * outer.error;
  out.evaluations = outer.evaluations;
  const bool within = out.error <= std::max(qcfg.rel_tol * std::abs(out.value), qcfg.abs_tol);
  if (inner_failed || !outer.converged || !within) {
    throw ConvergenceError("double_scatter_return: tolerance not met at t = " +
                               std::to_string(t),
                           out.value, out.error);
  }
  return out;
}

double i22_bound(double t, const DetectorGeometry &geom, const Medium &medium) {
  if (!(t > 0.0)) {
    throw DomainError("i22_bound: t must be > 0");
  }
  const double s = medium.sigma_max();
  const double r = geom.rho0();
  return 8.0 * kPi * kPi * s * s * r * r * r * geom.epsilon() / (t * t);
}

double i23_bound(double t, const DetectorGeometry &geom, const Medium &medium) {
  const double r = geom.rho0();
  const double eps = geom.epsilon();
  if (!(eps * t > 2.0 * r)) {
    throw DomainError("i23_bound: requires eps * t > 2 rho0");
  }
  const double s = medium.sigma_max();
  return 16.0 * kPi * kPi * s * s * r * r * r * eps / (t * t) *
         (2.0 + kPi + std::log(eps * t / (2.0 * r)));
}

} // namespace lidar
