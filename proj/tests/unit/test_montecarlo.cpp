#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <lidar/double_scatter.hpp>
#include <lidar/errors.hpp>
#include <lidar/montecarlo.hpp>
#include <lidar/single_scatter.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace lidar;

namespace {

const double kPi = std::numbers::pi;

// Two-sided Kolmogorov-Smirnov statistic against the uniform CDF on [-1, 1].
double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 0.5 * (x[i] + 1.0);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

Medium haze() {
  Profile st({0.0, 20.0, 60.0}, {0.02, 0.06, 0.01});
  Profile b({0.0, 20.0, 60.0}, {0.016, 0.048, 0.008});
  return Medium::tabulated(st, PhaseFunction::isotropic(b));
}

} // namespace

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differ_c = false, differ_d = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x > 0.0);
    CHECK(x < 1.0);
    differ_c = differ_c || x != c.uniform();
    differ_d = differ_d || x != d.uniform();
  }
  CHECK(differ_c);
  CHECK(differ_d);
  CHECK(a.seed() == 42);
  CHECK(a.stream_id() == 7);
}

TEST_CASE("free-path sample mean in a homogeneous medium") {
  const double sigma = 0.1;
  const Medium m = Medium::homogeneous(sigma, PhaseFunction::isotropic(0.05));
  RngStream rng(1, 0);
  const int n = 1'000'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const FreePath p = sample_free_path({0, 0, 5.0}, {0, 0, 1.0}, m, rng);
    REQUIRE(p.collided);
    sum += p.distance;
  }
  CHECK(std::abs(sum / n - 1.0 / sigma) < 3.0 * (1.0 / sigma) / 1e3);
}

TEST_CASE("free-path survival in a tabulated medium along a slanted ray") {
  const Medium m = haze();
  const Vec3 dir = Vec3{0.6, 0.0, 0.8};
  const double length = 40.0;
  // Slant optical depth: vertical depth over the direction cosine.
  const double tau = m.optical_depth(3.0, 3.0 + length * 0.8) / 0.8;
  const double p = std::exp(-tau);
  RngStream rng(5, 1);
  const int n = 200'000;
  int survived = 0;
  for (int i = 0; i < n; ++i) {
    survived += sample_free_path({0, 0, 3.0}, dir, m, rng).distance > length ? 1 : 0;
  }
  const double se = std::sqrt(p * (1.0 - p) / n);
  CHECK(std::abs(survived / double(n) - p) < 4.0 * se);
}

TEST_CASE("purely absorbing medium: fraction reaching depth L") {
  const double sigma = 0.05;
  const Medium m = Medium::homogeneous(sigma, PhaseFunction::isotropic(0.0));
  const double depth = 30.0;
  RngStream rng(9, 0);
  const int n = 200'000;
  int reached = 0;
  for (int i = 0; i < n; ++i) {
    reached += sample_free_path({0, 0, 0}, {0, 0, 1}, m, rng).distance > depth ? 1 : 0;
  }
  const double p = std::exp(-sigma * depth);
  CHECK(std::abs(reached / double(n) - p) < 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("escape cases") {
  RngStream rng(3, 3);
  const Medium vac = Medium::homogeneous(0.0, PhaseFunction::isotropic(0.0));
  for (int i = 0; i < 100; ++i) {
    const auto p = sample_free_path({0, 0, 5.0}, {0, 0, 1.0}, vac, rng);
    CHECK_FALSE(p.collided);
    CHECK(std::isinf(p.distance));
  }
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  // Upward from just below the surface: mostly escapes.
  int escaped = 0;
  for (int i = 0; i < 10000; ++i) {
    escaped += sample_free_path({0, 0, 1.0}, {0, 0, -1.0}, m, rng).collided ? 0 : 1;
  }
  CHECK(std::abs(escaped / 1e4 - std::exp(-0.1)) < 0.015);
  // Horizontal ray.
  const auto h = sample_free_path({0, 0, 4.0}, {1.0, 0, 0}, m, rng);
  CHECK(h.collided);
  // Beyond the horizon.
  const auto far = sample_free_path({0, 0, 4.0}, {0, 0, 1.0}, m, rng, 1e-9);
  CHECK_FALSE(far.collided);
  CHECK(std::isfinite(far.distance));
}

TEST_CASE("rotation keeps unit norm and the requested polar angle") {
  RngStream rng(11, 0);
  Vec3 d{0, 0, 1};
  for (int i = 0; i < 100000; ++i) {
    const double mu = 2.0 * rng.uniform() - 1.0;
    const Vec3 next = rotate_direction(d, mu, 2.0 * kPi * rng.uniform());
    CHECK(std::abs(next.norm() - 1.0) < 1e-12);
    CHECK(next.dot(d) == doctest::Approx(mu).epsilon(1e-9).scale(1.0));
    d = next;
  }
}

TEST_CASE("isotropic scattering cosines pass a KS test") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  const ScatterSampler s(m);
  RngStream rng(2024, 0);
  const int n = 100'000;
  std::vector<double> mu(n);
  for (auto &x : mu) {
    x = s.sample_cosine(10.0, rng);
  }
  CHECK(ks_uniform(mu) < 1.628 / std::sqrt(double(n)));

  // Frame alignment: for dir = +z the output z component is the cosine.
  std::vector<double> cz(n);
  for (auto &x : cz) {
    x = sample_scatter_direction({0, 0, 1}, 10.0, m, rng).z;
  }
  CHECK(ks_uniform(cz) < 1.628 / std::sqrt(double(n)));
}

TEST_CASE("henyey-greenstein mean cosine equals g") {
  for (double g : {-0.5, 0.3, 0.9}) {
    const Medium m = Medium::homogeneous(0.1, PhaseFunction::henyey_greenstein(g, 0.05));
    const ScatterSampler s(m);
    RngStream rng(77, 0);
    const int n = 200'000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double mu = s.sample_cosine(1.0, rng);
      sum += mu;
      sq += mu * mu;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - g) < 4.0 * se);
  }
}

TEST_CASE("tabulated phase sampling reproduces the table density") {
  // Linear density in mu at z = 0 and a different one at z = 10; sample at
  // z = 5 where the density is the average of the two columns.
  const PhaseFunction ph =
      PhaseFunction::tabulated({-1.0, 0.0, 1.0}, {0.0, 10.0}, {{0.0, 0.02}, {0.01, 0.01}, {0.02, 0.0}});
  const Medium m = Medium::homogeneous(0.5, ph);
  const ScatterSampler s(m);
  RngStream rng(8, 8);
  const int n = 200'000;
  const int bins = 8;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const double mu = s.sample_cosine(2.5, rng);
    counts[std::min(bins - 1, int((mu + 1.0) / 2.0 * bins))]++;
  }
  // Density at z = 2.5: 0.75 * col0 + 0.25 * col1, col0 = 0.01 (1 + mu), col1 = 0.01 (1 - mu).
  auto cdf = [](double mu) {
    const double a = 0.75, b = 0.25;
    const double c0 = 0.5 * (mu + 1) * (mu + 1);       // integral of 1 + mu
    const double c1 = 2.0 - 0.5 * (1 - mu) * (1 - mu); // integral of 1 - mu
    return (a * c0 + b * c1) / 2.0;
  };
  double chi2 = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double lo = -1.0 + 2.0 * k / bins, hi = lo + 2.0 / bins;
    const double e = n * (cdf(hi) - cdf(lo));
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  CHECK(chi2 < 20.09); // chi-square 99th percentile, 7 dof

  // Forward delta-like table: output stays close to the input direction.
  const PhaseFunction fwd =
      PhaseFunction::tabulated({-1.0, 0.999, 1.0}, {0.0}, {{0.0}, {0.0}, {1.0}});
  const Medium mf = Medium::homogeneous(10.0, fwd);
  const ScatterSampler sf(mf);
  const Vec3 in = Vec3{0.3, -0.4, 0.5}.normalized();
  for (int i = 0; i < 100; ++i) {
    CHECK(sf.sample_direction(in, 1.0, rng).dot(in) > 0.999);
  }
}

TEST_CASE("no-scatter depths raise NoScatterError") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.0));
  const ScatterSampler s(m);
  RngStream rng(1, 1);
  CHECK_THROWS_AS(s.sample_cosine(3.0, rng), NoScatterError);
}

TEST_CASE("zero scattering gives no detections") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.0));
  const auto g = DetectorGeometry::from_epsilon(1.0, 0.5);
  const ScatterSampler s(m);
  RngStream rng(4, 0);
  for (auto est : {Estimator::analog, Estimator::next_event}) {
    TraceOptions o;
    o.estimator = est;
    o.horizon = 100.0;
    for (int i = 0; i < 1000; ++i) {
      CHECK(trace_history(g, m, s, o, rng).empty());
    }
  }
}

TEST_CASE("logged trajectories: conservation and order-1 structure") {
  // No absorption, wide receiver so analog detections are frequent.
  const Medium m = Medium::homogeneous(0.2, PhaseFunction::isotropic(0.2));
  const auto g = DetectorGeometry(5.0, 1.2);
  const ScatterSampler s(m);
  RngStream rng(6, 0);
  int order1 = 0;
  for (std::uint64_t h = 0; h < 3000; ++h) {
    TrajectoryLog log;
    TraceOptions o;
    o.horizon = 60.0;
    o.history_id = h;
    o.log = &log;
    const auto det = trace_history(g, m, s, o, rng);
    std::istringstream in(log.text());
    std::string line, last_event;
    int scatters = 0;
    while (std::getline(in, line)) {
      std::istringstream f(line);
      std::uint64_t id;
      std::string ev;
      f >> id >> ev;
      CHECK(id == h);
      scatters += ev == "scatter" ? 1 : 0;
      last_event = ev;
    }
    // Without absorption every history ends by escape, horizon or detection.
    CHECK((last_event == "escape" || last_event == "horizon" || last_event == "detect"));
    if (!det.empty()) {
      CHECK(last_event == "detect");
      CHECK(det.size() == 1);
      CHECK(det[0].order == scatters);
      CHECK(det[0].weight == 1.0);
      CHECK(det[0].time <= 60.0);
      order1 += det[0].order == 1 ? 1 : 0;
    }
  }
  CHECK(order1 > 0);
}

TEST_CASE("time bins") {
  const TimeBins b = TimeBins::around(TimeGrid({10.0, 20.0, 40.0}));
  CHECK(b.size() == 3);
  CHECK(b.lo(0) == 5.0);
  CHECK(b.hi(0) == 15.0);
  CHECK(b.hi(1) == 30.0);
  CHECK(b.hi(2) == 50.0);
  CHECK(b.find(4.9) == std::nullopt);
  CHECK(b.find(15.0) == 1u);
  CHECK(b.find(49.999) == 2u);
  CHECK(b.find(50.0) == std::nullopt);
  const TimeBins w = TimeBins::around(TimeGrid({10.0, 20.0}), 4.0);
  CHECK(w.lo(1) == 18.0);
  CHECK(w.find(15.0) == std::nullopt);
  CHECK_THROWS_AS(TimeBins::around(TimeGrid({10.0, 12.0}), 4.0), std::invalid_argument);
  CHECK_THROWS_AS(TimeBins::around(TimeGrid({10.0})), std::invalid_argument);
}

TEST_CASE("tally moments, merge and standard error") {
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const TimeBins bins({0.0, 10.0}, {10.0, 20.0});
  McTally a(bins), b(bins);
  const Detection d1{5.0, 1, 0.5, 2.5, 2.5, 0.0};
  const Detection d2{5.5, 1, 0.25, 2.7, 2.7, 0.0};
  const Detection d3{15.0, 3, 1.0, 1.0, 5.0, 0.3};
  a.add_history(std::vector{d1, d2}, g); // one history, two scores in one bin
  a.add_history(std::vector<Detection>{}, g);
  b.add_history(std::vector{d3}, g);
  a.merge(b);
  CHECK(a.n_histories() == 3);
  CHECK(a.sum(Channel::order1, 0) == 0.75);
  CHECK(a.sum_sq(Channel::order1, 0) == 0.5625);
  CHECK(a.count(Channel::order1, 0) == 2);
  CHECK(a.sum(Channel::order3plus, 1) == 1.0);
  CHECK(a.sum(Channel::total, 1) == 1.0);
  CHECK(a.rate(Channel::order1, 0) == doctest::Approx(0.75 / 30.0));
  // Per-history scores {0.75, 0, 0}.
  const double mean = 0.25;
  const double var = ((0.75 - mean) * (0.75 - mean) + 2 * mean * mean) / 2.0;
  CHECK(a.std_error(Channel::order1, 0) == doctest::Approx(std::sqrt(var / 3.0) / 10.0));
  McTally c(TimeBins({0.0}, {1.0}));
  CHECK_THROWS_AS(a.merge(c), std::invalid_argument);
}

TEST_CASE("order-2 scores are split by D0 membership of the scattering points") {
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  McTally t(TimeBins({90.0}, {110.0}));
  // Second point 40 deep, 1 off axis: eps z2 - rho0 = 3.9 > 1.
  const Detection in{100.0, 2, 1.0, 45.0, 40.0, 1.0};
  // Same depths but 5 off axis.
  const Detection out{100.0, 2, 1.0, 45.0, 40.0, 5.0};
  t.add_history(std::vector{in}, g);
  t.add_history(std::vector{out}, g);
  CHECK(t.sum(Channel::order2, 0) == 2.0);
  CHECK(t.sum(Channel::order2_d0, 0) == 1.0);
  CHECK(t.sum(Channel::order2_outside_d0, 0) == 1.0);
  CHECK(kinematic_time(in) == doctest::Approx(45.0 + std::hypot(1.0, 5.0) + 40.0));
}

TEST_CASE("estimate_returns is identical for any worker count") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const TimeBins bins = TimeBins::around(TimeGrid::linear(5.0, 60.0, 12));
  McConfig cfg;
  cfg.histories = 40'000;
  cfg.blocks = 16;
  cfg.seed = 99;
  cfg.estimator = Estimator::next_event;
  cfg.workers = 1;
  const McTally one = estimate_returns(cfg, g, m, bins);
  for (unsigned w : {2u, 8u}) {
    cfg.workers = w;
    const McTally many = estimate_returns(cfg, g, m, bins);
    CHECK(many.n_histories() == one.n_histories());
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      for (std::size_t i = 0; i < bins.size(); ++i) {
        CHECK(many.sum(Channel(c), i) == one.sum(Channel(c), i));
        CHECK(many.sum_sq(Channel(c), i) == one.sum_sq(Channel(c), i));
      }
    }
  }
  cfg.seed = 100;
  CHECK(estimate_returns(cfg, g, m, bins).sum(Channel::total, 3) != one.sum(Channel::total, 3));
}

TEST_CASE("order decomposition is exhaustive and errors shrink like 1/sqrt(N)") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const TimeBins bins = TimeBins::around(TimeGrid::linear(10.0, 40.0, 4));
  McConfig cfg;
  cfg.histories = 100'000;
  cfg.estimator = Estimator::next_event;
  const McTally small = estimate_returns(cfg, g, m, bins);
  cfg.histories = 400'000;
  cfg.seed = 2;
  const McTally big = estimate_returns(cfg, g, m, bins);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double parts = big.sum(Channel::order1, i) + big.sum(Channel::order2, i) +
                         big.sum(Channel::order3plus, i);
    CHECK(parts == doctest::Approx(big.sum(Channel::total, i)).epsilon(1e-12));
    CHECK(big.sum(Channel::order2, i) ==
          doctest::Approx(big.sum(Channel::order2_d0, i) + big.sum(Channel::order2_outside_d0, i))
              .epsilon(1e-12));
    const double ratio = big.std_error(Channel::order1, i) / small.std_error(Channel::order1, i);
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.1));
  }
}

TEST_CASE("next-event order-1 rate matches the single-scatter closed form") {
  const Medium m = Medium::homogeneous(0.1, PhaseFunction::isotropic(0.05));
  const auto g = DetectorGeometry::from_epsilon(0.1, 0.1);
  const TimeBins bins({19.0, 49.0}, {21.0, 51.0});
  McConfig cfg;
  cfg.histories = 400'000;
  cfg.estimator = Estimator::next_event;
  cfg.seed = 31;
  const McTally t = estimate_returns(cfg, g, m, bins);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    // Gauss-Legendre 2-point bin average of the closed form.
    const double c = bins.centre(i), h = 0.5 * bins.width(i) / std::sqrt(3.0);
    const double ref =
        0.5 * (single_scatter_return(c - h, g, m) + single_scatter_return(c + h, g, m));
    CHECK(std::abs(t.rate(Channel::order1, i) - ref) < 3.0 * t.std_error(Channel::order1, i));
  }
}
