#include <lidar/errors.hpp>
#include <lidar/medium.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lidar {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;

void require(bool cond, const std::string &msg) {
  if (!cond) {
    throw std::invalid_argument(msg);
  }
}

void check_nodes(const std::vector<double> &z, const char *what) {
  require(!z.empty(), std::string(what) + ": at least one node required");
  for (std::size_t i = 0; i < z.size(); ++i) {
    require(std::isfinite(z[i]) && z[i] >= 0.0,
            std::string(what) + ": nodes must be finite and >= 0");
    if (i > 0) {
      require(z[i] > z[i - 1], std::string(what) + ": nodes must be strictly increasing");
    }
  }
}

// Index k with nodes[k] <= x < nodes[k+1], clamped to [0, n-2]. Requires n >= 2.
std::size_t segment_of(const std::vector<double> &nodes, double x) {
  auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  std::size_t k = it == nodes.begin() ? 0 : static_cast<std::size_t>(it - nodes.begin()) - 1;
  return std::min(k, nodes.size() - 2);
}

double clamp_mu(double mu) {
  if (!(std::abs(mu) <= 1.0 + 1e-12)) {
    throw DomainError("sigma_scatter: |mu| > 1 (mu = " + std::to_string(mu) + ")");
  }
  return std::clamp(mu, -1.0, 1.0);
}

void check_depth(double z, const char *who) {
  if (!std::isfinite(z)) {
    throw DomainError(std::string(who) + ": non-finite depth");
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Profile

Profile Profile::constant(double value) {
  require(std::isfinite(value) && value >= 0.0, "Profile: value must be finite and >= 0");
  Profile p;
  p.z_ = {0.0};
  p.v_ = {value};
  return p;
}

Profile::Profile(std::vector<double> z_nodes, std::vector<double> values)
    : z_(std::move(z_nodes)), v_(std::move(values)) {
  check_nodes(z_, "Profile");
  require(z_.size() == v_.size(), "Profile: node and value counts differ");
  for (double v : v_) {
    require(std::isfinite(v) && v >= 0.0, "Profile: values must be finite and >= 0");
  }
}

double Profile::operator()(double z) const {
  if (z_.size() == 1 || z <= z_.front()) {
    return v_.front();
  }
  if (z >= z_.back()) {
    return v_.back();
  }
  const std::size_t k = segment_of(z_, z);
  const double w = (z - z_[k]) / (z_[k + 1] - z_[k]);
  return v_[k] + w * (v_[k + 1] - v_[k]);
}

double Profile::integral_ordered(double a, double b) const {
  if (z_.size() == 1) {
    return v_.front() * (b - a);
  }
  double sum = 0.0;
  double x0 = a;
  double f0 = (*this)(a);
  auto it = std::upper_bound(z_.begin(), z_.end(), a);
  for (; it != z_.end() && *it < b; ++it) {
    const double x1 = *it;
    const double f1 = v_[static_cast<std::size_t>(it - z_.begin())];
    sum += 0.5 * (x1 - x0) * (f0 + f1);
    x0 = x1;
    f0 = f1;
  }
  sum += 0.5 * (b - x0) * (f0 + (*this)(b));
  return sum;
}

double Profile::integral(double a, double b) const {
  return a <= b ? integral_ordered(a, b) : -integral_ordered(b, a);
}

std::optional<double> Profile::advance(double start, int direction, double target,
                                       double limit) const {
  if (target <= 0.0) {
    return 0.0;
  }
  double remaining = target;
  double walked = 0.0;
  double x0 = start;
  while (direction > 0 ? x0 < limit : x0 > limit) {
    // Next breakpoint in the direction of travel, capped at the limit.
    double x1 = limit;
    if (direction > 0) {
      auto it = std::upper_bound(z_.begin(), z_.end(), x0);
      if (it != z_.end()) {
        x1 = std::min(x1, *it);
      }
    } else {
      auto it = std::lower_bound(z_.begin(), z_.end(), x0);
      if (it != z_.begin()) {
        x1 = std::max(x1, *(it - 1));
      }
    }
    const double f0 = (*this)(x0);
    const double len = std::abs(x1 - x0);
    if (std::isinf(len)) {
      // Constant tail.
      if (f0 <= 0.0) {
        return std::nullopt;
      }
      return walked + remaining / f0;
    }
    const double f1 = (*this)(x1);
    const double piece = 0.5 * len * (f0 + f1);
    if (piece < remaining) {
      remaining -= piece;
      walked += len;
      x0 = x1;
      continue;
    }
    const double slope = (f1 - f0) / len;
    double s;
    if (slope == 0.0) {
      s = remaining / f0;
    } else {
      const double disc = std::max(0.0, f0 * f0 + 2.0 * slope * remaining);
      s = 2.0 * remaining / (f0 + std::sqrt(disc));
    }
    return walked + std::min(s, len);
  }
  return std::nullopt;
}

double Profile::max_value() const { return *std::max_element(v_.begin(), v_.end()); }

// ---------------------------------------------------------------------------
// PhaseFunction

double shape_density(const AngularShape &shape, double mu) {
  if (std::holds_alternative<Isotropic>(shape)) {
    return 1.0 / kFourPi;
  }
  const double g = std::get<HenyeyGreenstein>(shape).g;
  const double denom = 1.0 + g * g - 2.0 * g * mu;
  return (1.0 - g * g) / (kFourPi * denom * std::sqrt(denom));
}

PhaseFunction PhaseFunction::isotropic(double scattering) {
  return isotropic(Profile::constant(scattering));
}

PhaseFunction PhaseFunction::isotropic(Profile scattering) {
  return PhaseFunction(SeparablePhase{std::move(scattering), Isotropic{}});
}

PhaseFunction PhaseFunction::henyey_greenstein(double g, double scattering) {
  return henyey_greenstein(g, Profile::constant(scattering));
}

PhaseFunction PhaseFunction::henyey_greenstein(double g, Profile scattering) {
  require(std::isfinite(g) && std::abs(g) < 1.0, "henyey_greenstein: |g| must be < 1");
  return PhaseFunction(SeparablePhase{std::move(scattering), HenyeyGreenstein{g}});
}

PhaseFunction PhaseFunction::tabulated(std::vector<double> mu_nodes,
                                       std::vector<double> z_nodes,
                                       const std::vector<std::vector<double>> &table) {
  require(mu_nodes.size() >= 2, "tabulated phase: at least two mu nodes required");
  require(mu_nodes.front() == -1.0 && mu_nodes.back() == 1.0,
          "tabulated phase: mu nodes must span [-1, 1]");
  for (std::size_t i = 1; i < mu_nodes.size(); ++i) {
    require(mu_nodes[i] > mu_nodes[i - 1], "tabulated phase: mu nodes must be strictly increasing");
  }
  check_nodes(z_nodes, "tabulated phase z");
  require(table.size() == mu_nodes.size(), "tabulated phase: one row per mu node required");

  TabulatedPhase tab;
  tab.values.reserve(mu_nodes.size() * z_nodes.size());
  for (const auto &row : table) {
    require(row.size() == z_nodes.size(), "tabulated phase: one column per z node required");
    for (double v : row) {
      require(std::isfinite(v) && v >= 0.0, "tabulated phase: values must be finite and >= 0");
      tab.values.push_back(v);
    }
  }
  tab.mu_nodes = std::move(mu_nodes);
  tab.z_nodes = std::move(z_nodes);
  tab.column_totals.assign(tab.z_nodes.size(), 0.0);
  for (std::size_t j = 0; j < tab.z_nodes.size(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < tab.mu_nodes.size(); ++i) {
      sum += 0.5 * (tab.mu_nodes[i + 1] - tab.mu_nodes[i]) * (tab.at(i, j) + tab.at(i + 1, j));
    }
    tab.column_totals[j] = 2.0 * std::numbers::pi * sum;
  }
  return PhaseFunction(std::move(tab));
}

namespace {

// Interpolation weight of z into the z-node list: column k and (k+1) with
// weight w on k+1. Flat outside the node range.
std::pair<std::size_t, double> z_weight(const std::vector<double> &z_nodes, double z) {
  if (z_nodes.size() == 1 || z <= z_nodes.front()) {
    return {0, 0.0};
  }
  if (z >= z_nodes.back()) {
    return {z_nodes.size() - 2, 1.0};
  }
  const std::size_t k = segment_of(z_nodes, z);
  return {k, (z - z_nodes[k]) / (z_nodes[k + 1] - z_nodes[k])};
}

double table_value(const TabulatedPhase &tab, double mu, double z) {
  const std::size_t i = segment_of(tab.mu_nodes, mu);
  const double wm = (mu - tab.mu_nodes[i]) / (tab.mu_nodes[i + 1] - tab.mu_nodes[i]);
  auto column = [&](std::size_t j) {
    return tab.at(i, j) + wm * (tab.at(i + 1, j) - tab.at(i, j));
  };
  if (tab.z_nodes.size() == 1) {
    return column(0);
  }
  const auto [k, wz] = z_weight(tab.z_nodes, z);
  return (1.0 - wz) * column(k) + wz * column(k + 1);
}

} // namespace

double PhaseFunction::operator()(double mu, double z) const {
  mu = clamp_mu(mu);
  if (const auto *sep = std::get_if<SeparablePhase>(&rep_)) {
    return sep->scattering(z) * shape_density(sep->shape, mu);
  }
  return table_value(std::get<TabulatedPhase>(rep_), mu, z);
}

double PhaseFunction::scattering_coefficient(double z) const {
  if (const auto *sep = std::get_if<SeparablePhase>(&rep_)) {
    return sep->scattering(z);
  }
  const auto &tab = std::get<TabulatedPhase>(rep_);
  if (tab.z_nodes.size() == 1) {
    return tab.column_totals.front();
  }
  const auto [k, wz] = z_weight(tab.z_nodes, z);
  return (1.0 - wz) * tab.column_totals[k] + wz * tab.column_totals[k + 1];
}

double PhaseFunction::max_over(const std::vector<double> &depths) const {
  double best = 0.0;
  if (const auto *sep = std::get_if<SeparablePhase>(&rep_)) {
    double peak = 1.0 / kFourPi;
    if (const auto *hg = std::get_if<HenyeyGreenstein>(&sep->shape)) {
      peak = shape_density(sep->shape, hg->g >= 0.0 ? 1.0 : -1.0);
    }
    for (double z : depths) {
      best = std::max(best, sep->scattering(z) * peak);
    }
    return best;
  }
  // Bilinear data peaks at a mu node for any fixed z.
  const auto &tab = std::get<TabulatedPhase>(rep_);
  for (double z : depths) {
    for (double mu : tab.mu_nodes) {
      best = std::max(best, table_value(tab, mu, z));
    }
  }
  return best;
}

std::vector<double> PhaseFunction::z_breakpoints() const {
  if (const auto *sep = std::get_if<SeparablePhase>(&rep_)) {
    return sep->scattering.nodes();
  }
  return std::get<TabulatedPhase>(rep_).z_nodes;
}

// ---------------------------------------------------------------------------
// Medium

Medium::Medium(ProfileKind kind, Profile extinction, PhaseFunction phase, double bottom)
    : kind_(kind), extinction_(std::move(extinction)), phase_(std::move(phase)),
      bottom_(bottom) {
  require(bottom_ > 0.0, "Medium: layer thickness must be > 0");

  // Both sigma_t and the scattering coefficient are linear between the union
  // of their breakpoints, so checking there covers every depth.
  std::vector<double> depths{0.0};
  for (double z : extinction_.nodes()) {
    depths.push_back(z);
  }
  for (double z : phase_.z_breakpoints()) {
    depths.push_back(z);
  }
  if (std::isfinite(bottom_)) {
    depths.push_back(bottom_);
  }
  std::erase_if(depths, [&](double z) { return z > bottom_; });
  std::sort(depths.begin(), depths.end());

  for (double z : depths) {
    const double st = extinction_(z);
    const double ss = phase_.scattering_coefficient(z);
    if (ss > st * (1.0 + 1e-12)) {
      throw std::invalid_argument("Medium: scattering coefficient " + std::to_string(ss) +
                                  " exceeds sigma_t " + std::to_string(st) +
                                  " at z = " + std::to_string(z));
    }
  }
  sigma_max_ = phase_.max_over(depths);
}

Medium Medium::homogeneous(double sigma_t, PhaseFunction phase) {
  return Medium(ProfileKind::homogeneous, Profile::constant(sigma_t), std::move(phase),
                std::numeric_limits<double>::infinity());
}

Medium Medium::tabulated(Profile sigma_t, PhaseFunction phase) {
  return Medium(ProfileKind::tabulated, std::move(sigma_t), std::move(phase),
                std::numeric_limits<double>::infinity());
}

Medium Medium::layer(double thickness, double sigma_t, PhaseFunction phase) {
  require(std::isfinite(thickness), "Medium: layer thickness must be finite");
  return Medium(ProfileKind::layer, Profile::constant(sigma_t), std::move(phase), thickness);
}

double Medium::sigma_t(double z) const {
  check_depth(z, "sigma_t");
  return inside(z) ? extinction_(z) : 0.0;
}

double Medium::sigma_scatter(double mu, double z) const {
  check_depth(z, "sigma_scatter");
  mu = clamp_mu(mu);
  return inside(z) ? phase_(mu, z) : 0.0;
}

double Medium::scattering_coefficient(double z) const {
  check_depth(z, "scattering_coefficient");
  return inside(z) ? phase_.scattering_coefficient(z) : 0.0;
}

double Medium::signed_optical_depth(double za, double zb) const {
  check_depth(za, "optical_depth");
  check_depth(zb, "optical_depth");
  const double lo = std::max(std::min(za, zb), 0.0);
  const double hi = std::min(std::max(za, zb), bottom_);
  if (!(hi > lo)) {
    return 0.0;
  }
  const double od = extinction_.integral(lo, hi);
  return za <= zb ? od : -od;
}

double Medium::optical_depth(double za, double zb) const {
  return std::abs(signed_optical_depth(za, zb));
}

double Medium::mean_extinction(double za, double zb) const {
  if (za == zb) {
    return sigma_t(za);
  }
  return optical_depth(za, zb) / std::abs(zb - za);
}

std::optional<double> Medium::distance_to_optical_depth(double start, int direction,
                                                        double target) const {
  if (direction > 0) {
    if (start >= bottom_) {
      return std::nullopt;
    }
    const double entry = std::max(start, 0.0);
    auto walked = extinction_.advance(entry, +1, target, bottom_);
    return walked ? std::optional<double>(*walked + (entry - start)) : std::nullopt;
  }
  if (start <= 0.0) {
    return std::nullopt;
  }
  const double entry = std::min(start, bottom_);
  auto walked = extinction_.advance(entry, -1, target, 0.0);
  return walked ? std::optional<double>(*walked + (start - entry)) : std::nullopt;
}

} // namespace lidar
