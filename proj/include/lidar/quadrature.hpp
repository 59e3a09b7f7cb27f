#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <queue>
#include <vector>

namespace lidar {

/// A value together with an error bound already attached to it, e.g. an
/// inner integral in an iterated quadrature.
struct Estimate {
  double value{0};
  double error{0};
};

struct QuadratureResult {
  double value{0};
  double error{0};
  std::size_t evaluations{0};
  std::size_t subdivisions{0};
  bool converged{false};
};

/// 21-point Gauss-Kronrod rule with its embedded 10-point Gauss rule, on
/// [-1, 1], non-negative half only. Gauss nodes sit at the odd indices.
struct KronrodRule21 {
  std::array<double, 11> abscissa;
  std::array<double, 11> kronrod_weight;
  std::array<double, 11> gauss_weight; ///< zero at even indices
};

const KronrodRule21 &kronrod21();

namespace detail {

struct Panel {
  double a, b;
  double value, error;
};

template <class F>
Estimate as_estimate(F &f, double x) {
  if constexpr (std::same_as<std::invoke_result_t<F &, double>, Estimate>) {
    return f(x);
  } else {
    return {static_cast<double>(f(x)), 0.0};
  }
}

// One GK21 application with QUADPACK-style error scaling. Errors carried by
// the integrand values are added with the Kronrod weights.
template <class F>
Panel apply_rule(F &f, double a, double b) {
  const auto &rule = kronrod21();
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<double, 21> fv{};
  double carried = 0.0;

  const Estimate fc = as_estimate(f, centre);
  fv[0] = fc.value;
  carried += rule.kronrod_weight[0] * std::abs(fc.error);
  double kronrod = rule.kronrod_weight[0] * fc.value;
  double gauss = 0.0;
  double abs_sum = rule.kronrod_weight[0] * std::abs(fc.value);
  for (std::size_t i = 1; i < 11; ++i) {
    const double dx = half * rule.abscissa[i];
    const Estimate lo = as_estimate(f, centre - dx);
    const Estimate hi = as_estimate(f, centre + dx);
    fv[2 * i - 1] = lo.value;
    fv[2 * i] = hi.value;
    const double pair = lo.value + hi.value;
    kronrod += rule.kronrod_weight[i] * pair;
    gauss += rule.gauss_weight[i] * pair;
    abs_sum += rule.kronrod_weight[i] * (std::abs(lo.value) + std::abs(hi.value));
    carried += rule.kronrod_weight[i] * (std::abs(lo.error) + std::abs(hi.error));
  }
  const double mean = 0.5 * kronrod;
  double asc = rule.kronrod_weight[0] * std::abs(fv[0] - mean);
  for (std::size_t i = 1; i < 11; ++i) {
    asc += rule.kronrod_weight[i] * (std::abs(fv[2 * i - 1] - mean) + std::abs(fv[2 * i] - mean));
  }

  const double ah = std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  const double resasc = asc * ah;
  const double resabs = abs_sum * ah;
  if (resasc != 0.0 && err != 0.0) {
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) {
    err = std::max(50.0 * eps * resabs, err);
  }
  return {a, b, kronrod * half, err + carried * ah};
}

} // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b]: bisects the
/// panel with the largest error until the total error is at most
/// max(abs_tol, rel_tol * |value|) or `max_subdivisions` bisections were
/// spent. f may return double or Estimate; in the latter case the carried
/// errors are folded into the reported bound.
template <class F>
QuadratureResult integrate_adaptive(F &&f, double a, double b, double rel_tol, double abs_tol,
                                    std::size_t max_subdivisions) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  std::vector<detail::Panel> panels;
  panels.reserve(max_subdivisions + 1);
  auto worse = [&](std::size_t i, std::size_t j) { return panels[i].error < panels[j].error; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> queue(worse);

  panels.push_back(detail::apply_rule(f, a, b));
  queue.push(0);
  out.evaluations = 21;
  double value = panels[0].value;
  double error = panels[0].error;

  auto target = [&] { return std::max(abs_tol, rel_tol * std::abs(value)); };
  while (error > target() && out.subdivisions < max_subdivisions) {
    const std::size_t worst = queue.top();
    const detail::Panel p = panels[worst];
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > std::min(p.a, p.b) && mid < std::max(p.a, p.b))) {
      break; // panel at floating-point resolution
    }
    queue.pop();
    const detail::Panel left = detail::apply_rule(f, p.a, mid);
    const detail::Panel right = detail::apply_rule(f, mid, p.b);
    out.evaluations += 42;
    ++out.subdivisions;
    panels[worst] = left;
    queue.push(worst);
    panels.push_back(right);
    queue.push(panels.size() - 1);
    // Re-summing keeps the total independent of accumulated cancellation.
    value = 0.0;
    error = 0.0;
    for (const auto &q : panels) {
      value += q.value;
      error += q.error;
    }
  }
  out.value = value;
  out.error = error;
  out.converged = error <= target();
  return out;
}

} // namespace lidar
