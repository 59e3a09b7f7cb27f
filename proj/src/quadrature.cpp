#include <lidar/quadrature.hpp>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace lidar {

const KronrodRule21 &kronrod21() {
  static const KronrodRule21 rule = [] {
    KronrodRule21 r{};
    const auto &ka = boost::math::quadrature::gauss_kronrod<double, 21>::abscissa();
    const auto &kw = boost::math::quadrature::gauss_kronrod<double, 21>::weights();
    const auto &gw = boost::math::quadrature::gauss<double, 10>::weights();
    for (std::size_t i = 0; i < 11; ++i) {
      r.abscissa[i] = ka[i];
      r.kronrod_weight[i] = kw[i];
      r.gauss_weight[i] = (i % 2 == 1) ? gw[i / 2] : 0.0;
    }
    return r;
  }();
  return rule;
}

} // namespace lidar
