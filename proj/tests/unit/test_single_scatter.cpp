#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <lidar/errors.hpp>
#include <lidar/single_scatter.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

using namespace lidar;

namespace {

const double kPi = std::numbers::pi;

Medium haze() {
  Profile st({0.0, 20.0, 60.0}, {0.02, 0.06, 0.01});
  Profile b({0.0, 20.0, 60.0}, {0.016, 0.048, 0.008});
  return Medium::tabulated(st, PhaseFunction::isotropic(b));
}

// Line integral of sigma_t sampled along the ray itself.
double ray_attenuation(const AttenuationQuery &q, const Medium &m) {
  auto f = [&](double s) { return m.sigma_t(q.start_depth - s * q.direction_cosine); };
  return std::exp(-boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, 0.0, q.path_length, 15, 1e-14));
}

} // namespace

TEST_CASE("closed form in a homogeneous medium") {
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  for (double t : {20.0, 50.0, 100.0}) {
    const double hand =
        2.0 * kPi * 0.01 / (t * t) * std::exp(-0.1 * t) * 0.05 / (4.0 * kPi);
    CHECK(single_scatter_return(t, g, m) == doctest::Approx(hand).epsilon(1e-12));
  }
}

TEST_CASE("two-way attenuation uses the optical depth to t/2 twice") {
  const auto g = DetectorGeometry::from_epsilon(0.2, 0.05);
  const Medium m = haze();
  const double t = 70.0;
  const double expected = 2.0 * kPi * 0.04 / (t * t) *
                          std::exp(-2.0 * m.optical_depth(0.0, 35.0)) *
                          m.sigma_scatter(-1.0, 35.0);
  CHECK(single_scatter_return(t, g, m) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("backscatter beyond a layer bottom returns nothing") {
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const Medium m = Medium::layer(30.0, 0.01, PhaseFunction::isotropic(0.01));
  CHECK(single_scatter_return(50.0, g, m) > 0.0);
  CHECK(single_scatter_return(70.0, g, m) == 0.0);
}

TEST_CASE("single_scatter_return domain") {
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  CHECK_THROWS_AS(single_scatter_return(0.0, g, m), DomainError);
  CHECK_THROWS_AS(single_scatter_return(-3.0, g, m), DomainError);
}

TEST_CASE("attenuation along slanted and horizontal paths") {
  const Medium m = haze();
  for (const AttenuationQuery q : {AttenuationQuery{40.0, 50.0, 0.5},
                                   AttenuationQuery{25.0, 10.0, -0.8},
                                   AttenuationQuery{12.0, 15.0, 0.0},
                                   AttenuationQuery{80.0, 30.0, 1.0}}) {
    CHECK(attenuation(q, m) == doctest::Approx(ray_attenuation(q, m)).epsilon(1e-11));
  }
  CHECK(attenuation({0.0, 5.0, 0.3}, m) == 1.0);
  CHECK_THROWS_AS(attenuation({-1.0, 5.0, 0.3}, m), DomainError);
  CHECK_THROWS_AS(attenuation({1.0, 5.0, 1.3}, m), DomainError);
}
