#pragma once

#include <limits>
#include <optional>
#include <variant>
#include <vector>

namespace lidar {

/// Piecewise-linear function of depth z >= 0.
///
/// Between nodes the value is interpolated linearly; before the first node and
/// past the last node it is held constant. Integrals are evaluated exactly
/// (trapezoid per linear piece), which makes optical depths closed-form.
class Profile {
public:
  static Profile constant(double value);

  /// Nodes must be finite, non-negative and strictly increasing; values finite
  /// and non-negative.
  Profile(std::vector<double> z_nodes, std::vector<double> values);

  double operator()(double z) const;

  /// Signed integral from a to b.
  double integral(double a, double b) const;

  /// Walks from `start` in `direction` (+1 deeper, -1 shallower) until the
  /// accumulated integral equals `target` and returns the distance walked.
  /// Returns nullopt if `limit` is reached first. `limit` lies on the
  /// `direction` side of `start` and may be infinite for direction +1.
  std::optional<double> advance(double start, int direction, double target,
                                double limit) const;

  double max_value() const;
  bool is_constant() const { return z_.size() == 1; }
  const std::vector<double> &nodes() const { return z_; }
  const std::vector<double> &values() const { return v_; }

private:
  Profile() = default;

  double integral_ordered(double a, double b) const;

  std::vector<double> z_;
  std::vector<double> v_;
};

struct Isotropic {};

struct HenyeyGreenstein {
  double g{0};
};

using AngularShape = std::variant<Isotropic, HenyeyGreenstein>;

/// sigma(mu, z) = b(z) * p(mu), with p normalised to one over the sphere, so
/// b is the scattering coefficient.
struct SeparablePhase {
  Profile scattering;
  AngularShape shape;
};

/// sigma(mu, z) tabulated on a (mu x z) grid, bilinear between nodes and held
/// constant in z outside the z-node range.
struct TabulatedPhase {
  std::vector<double> mu_nodes;
  std::vector<double> z_nodes;
  std::vector<double> values; ///< row-major, values[i_mu * z_nodes.size() + j_z]
  std::vector<double> column_totals; ///< 2 pi * integral over mu of each z column

  double at(std::size_t i_mu, std::size_t j_z) const {
    return values[i_mu * z_nodes.size() + j_z];
  }
};

/// Differential elastic-scattering cross-section sigma(mu, z), per unit length
/// per steradian, with mu the cosine of the scattering angle.
class PhaseFunction {
public:
  using Representation = std::variant<SeparablePhase, TabulatedPhase>;

  static PhaseFunction isotropic(double scattering);
  static PhaseFunction isotropic(Profile scattering);
  static PhaseFunction henyey_greenstein(double g, double scattering);
  static PhaseFunction henyey_greenstein(double g, Profile scattering);
  /// `table[i][j]` is sigma at mu_nodes[i], z_nodes[j]. mu_nodes must be
  /// strictly increasing and span exactly [-1, 1].
  static PhaseFunction tabulated(std::vector<double> mu_nodes,
                                 std::vector<double> z_nodes,
                                 const std::vector<std::vector<double>> &table);

  double operator()(double mu, double z) const;
  /// Integral of sigma over the full sphere at depth z.
  double scattering_coefficient(double z) const;
  /// Max of sigma over mu in [-1, 1] and the given depth candidates.
  double max_over(const std::vector<double> &depths) const;
  /// Depths where the z-dependence changes slope.
  std::vector<double> z_breakpoints() const;

  const Representation &representation() const { return rep_; }

private:
  explicit PhaseFunction(Representation rep) : rep_(std::move(rep)) {}
  Representation rep_;
};

/// Normalised angular density of a separable shape, per steradian.
double shape_density(const AngularShape &shape, double mu);

enum class ProfileKind { homogeneous, tabulated, layer };

/// Stratified half-space z >= 0 (z is depth; the source sits at z = 0 and
/// z < 0 is vacuum). A layer medium is also vacuum for z >= thickness.
///
/// Immutable after construction.
class Medium {
public:
  static Medium homogeneous(double sigma_t, PhaseFunction phase);
  static Medium tabulated(Profile sigma_t, PhaseFunction phase);
  static Medium layer(double thickness, double sigma_t, PhaseFunction phase);

  double sigma_t(double z) const;
  double sigma_scatter(double mu, double z) const;
  double scattering_coefficient(double z) const;

  /// Unsigned integral of sigma_t between two depths.
  double optical_depth(double za, double zb) const;
  /// Integral of sigma_t from za to zb, negative when zb < za.
  double signed_optical_depth(double za, double zb) const;
  /// optical_depth / |zb - za|, with the limit sigma_t(za) when they coincide.
  double mean_extinction(double za, double zb) const;

  /// Global max of sigma(mu, z) over mu and the medium's extent.
  double sigma_max() const { return sigma_max_; }

  /// Vertical distance from `start` in `direction` (+1 deeper, -1 towards
  /// the surface) over which the optical depth reaches `target`, or nullopt
  /// if the path leaves the medium first.
  std::optional<double> distance_to_optical_depth(double start, int direction,
                                                  double target) const;

  ProfileKind kind() const { return kind_; }
  double bottom() const { return bottom_; }
  const Profile &extinction() const { return extinction_; }
  const PhaseFunction &phase() const { return phase_; }

private:
  Medium(ProfileKind kind, Profile extinction, PhaseFunction phase,
         double bottom);

  bool inside(double z) const { return z >= 0.0 && z < bottom_; }

  ProfileKind kind_;
  Profile extinction_;
  PhaseFunction phase_;
  double bottom_ = std::numeric_limits<double>::infinity();
  double sigma_max_ = 0.0;
};

} // namespace lidar
