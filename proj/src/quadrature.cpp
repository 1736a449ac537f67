#include "fpam/quadrature.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "fpam/error.hpp"

namespace fpam::quad {

namespace {

void check(double value, double err, double rel_tol, double abs_tol, const char* where) {
  const double floor = std::max(abs_tol, 1e-300);
  if (!std::isfinite(value) || err > std::max(rel_tol * std::abs(value), floor)) {
    std::ostringstream os;
    os << where << ": estimate " << value << " with error " << err
       << " misses relative tolerance " << rel_tol;
    throw Error(ErrorKind::NonConvergent, os.str());
  }
}

}  // namespace

double finite(const EndpointAwareFn& f, double a, double b, double rel_tol, double abs_tol) {
  if (!(b > a)) return 0.0;
  thread_local boost::math::quadrature::tanh_sinh<double> integrator(15);
  auto g = [&](double x, double xc) {
    // boost passes xc as a signed complement: distance to the nearer endpoint.
    double dist = std::abs(xc);
    if (!(dist > 0.0)) dist = std::min(x - a, b - x);
    return f(x, dist);
  };
  double err = 0.0;
  double l1 = 0.0;
  const double value = integrator.integrate(g, a, b, std::sqrt(std::numeric_limits<double>::epsilon()) * 1e-3,
                                            &err, &l1);
  check(value, err, rel_tol, abs_tol, "tanh_sinh");
  return value;
}

double half_line(const std::function<double(double)>& f, double a, double rel_tol, double abs_tol) {
  thread_local boost::math::quadrature::exp_sinh<double> integrator(12);
  double err = 0.0;
  double l1 = 0.0;
  const double value = integrator.integrate([&](double x) { return f(x); }, a,
                                            std::numeric_limits<double>::infinity(),
                                            std::sqrt(std::numeric_limits<double>::epsilon()) * 1e-3,
                                            &err, &l1);
  check(value, err, rel_tol, abs_tol, "exp_sinh");
  return value;
}

double gauss_box(const std::function<double(const double*)>& f, int dim,
                 const double* lower, const double* upper) {
  using rule = boost::math::quadrature::gauss<double, 10>;
  // boost stores the non-negative half of the symmetric rule.
  std::vector<double> nodes;
  std::vector<double> weights;
  const auto& abs = rule::abscissa();
  const auto& wts = rule::weights();
  for (std::size_t i = 0; i < abs.size(); ++i) {
    if (abs[i] == 0.0) {
      nodes.push_back(0.0);
      weights.push_back(wts[i]);
    } else {
      nodes.push_back(abs[i]);
      weights.push_back(wts[i]);
      nodes.push_back(-abs[i]);
      weights.push_back(wts[i]);
    }
  }
  const int q = static_cast<int>(nodes.size());
  std::vector<int> idx(dim, 0);
  std::vector<double> point(dim);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      const double half = 0.5 * (upper[k] - lower[k]);
      point[k] = lower[k] + half * (1.0 + nodes[idx[k]]);
      w *= half * weights[idx[k]];
    }
    total += w * f(point.data());
    int k = 0;
    while (k < dim && ++idx[k] == q) idx[k++] = 0;
    if (k == dim) break;
  }
  return total;
}

}  // namespace fpam::quad
