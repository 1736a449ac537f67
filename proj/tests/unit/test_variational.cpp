#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fpam/error.hpp"
#include "fpam/variational.hpp"

using namespace fpam;

namespace {

SpaceTimeField random_field(const TorusGrid& g, int n_t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  SpaceTimeField f{g, n_t, std::vector<double>(g.size() * n_t)};
  for (double& v : f.values) v = u(rng);
  f.normalize();
  return f;
}

SpaceTimeField constant_field(const TorusGrid& g, int n_t) {
  SpaceTimeField f{g, n_t, std::vector<double>(g.size() * n_t, 1.0)};
  f.normalize();
  return f;
}

}  // namespace

TEST_CASE("slice normalization") {
  const TorusGrid g{4.0, 16, 1};
  auto f = random_field(g, 3, 1);
  CHECK(f.normalization_error() < 1e-14);
  double s = 0.0;
  for (double v : f.slice(1)) s += v * v;
  CHECK(s * g.cell_volume() == doctest::Approx(1.0));
  f.values[0] *= 1.1;
  CHECK(f.normalization_error() > 1e-3);
  VariationalProblem prob(NoiseSpec::riesz(1.5, 0.0, 0.4, 1), g, 3);
  try {
    (void)prob.evaluate(f);
    FAIL("expected NotNormalized");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotNormalized);
  }
}

TEST_CASE("time weights tile the unit square") {
  for (double b0 : {0.0, 0.3, 0.7}) {
    VariationalProblem prob(NoiseSpec::riesz(1.5, b0, 0.4, 1), TorusGrid{4.0, 8, 1}, 10);
    double s = 0.0;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) s += prob.time_weight(i, j);
    }
    CHECK(s == doctest::Approx(2.0 / ((1.0 - b0) * (2.0 - b0))).epsilon(1e-10));
  }
}

TEST_CASE("flat kernel: a constant field has value half the time integral") {
  for (double b0 : {0.0, 0.4}) {
    const auto spec = NoiseSpec::riesz(1.5, b0, 0.0, 1);
    const TorusGrid g{4.0, 16, 1};
    const auto f = constant_field(g, 6);
    CHECK(functional_eval(f, spec) == doctest::Approx(1.0 / ((1.0 - b0) * (2.0 - b0))).epsilon(1e-10));
  }
}

TEST_CASE("energy of a single mode") {
  // g^2 = 1 + cos(2 pi x / M) / 2 shape; use g = (1 + a cos) / norm and compare
  // the energy part against the spectral sum computed by hand.
  const double M = 2.0;
  const TorusGrid g{M, 32, 1};
  const double alpha = 1.5;
  const auto spec = NoiseSpec::riesz(alpha, 0.0, 0.0, 1);
  VariationalProblem prob(spec, g, 1);
  SpaceTimeField f{g, 1, std::vector<double>(g.size())};
  const double a = 0.3;
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.values[i] = 1.0 + a * std::cos(2.0 * std::numbers::pi * (M * i / 32.0) / M);
  }
  f.normalize();
  // g = (1 + a cos) / sqrt(M (1 + a^2/2)): the +-1 coefficients are a M / 2 / norm.
  const double norm = std::sqrt(M * (1.0 + 0.5 * a * a));
  const double ck = a * M / 2.0 / norm;
  const double psi = default_c_conv(alpha) * std::pow(M, -alpha);
  const auto parts = prob.evaluate_parts(f.values);
  CHECK(parts.energy == doctest::Approx(2.0 * psi * ck * ck / M).epsilon(1e-12));
  CHECK(parts.interaction == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences") {
  const auto spec = NoiseSpec::riesz(1.5, 0.3, 0.4, 1);
  const TorusGrid g{8.0, 16, 1};
  VariationalProblem prob(spec, g, 4, 1.3);
  const auto f = random_field(g, 4, 7);
  std::vector<double> grad(f.values.size());
  prob.gradient(f.values, grad);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> v(f.values.size());
    for (double& x : v) x = n(rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) analytic += grad[i] * v[i];
    analytic *= g.cell_volume();
    const double eps = 1e-5;
    std::vector<double> p = f.values, m = f.values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      p[i] += eps * v[i];
      m[i] -= eps * v[i];
    }
    const double fd = (prob.evaluate_raw(p) - prob.evaluate_raw(m)) / (2.0 * eps);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-6));
  }
}

TEST_CASE("degenerate kernel optimum is one half") {
  VariationalOptions o;
  o.grid = {8.0, 32, 1};
  o.n_t = 4;
  o.restarts = 2;
  const auto r = maximize_M(NoiseSpec::riesz(1.5, 0.0, 0.0, 1), o);
  CHECK(r.M_estimate == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.converged);
  CHECK(r.field.normalization_error() < 1e-10);
}

TEST_CASE("maximizer properties") {
  const auto spec = NoiseSpec::riesz(1.5, 0.3, 0.4, 1);
  VariationalOptions o;
  o.grid = {32.0, 128, 1};
  o.n_t = 4;
  o.restarts = 2;
  o.seed = 5;
  const auto r = maximize_M(spec, o);
  CHECK(r.M_estimate > 0.0);
  CHECK(r.restart_values.size() == 2);
  CHECK(r.M_estimate == doctest::Approx(*std::max_element(r.restart_values.begin(), r.restart_values.end())));
  // The reported field attains the reported value.
  CHECK(functional_eval(r.field, spec) == doctest::Approx(r.M_estimate).epsilon(1e-10));
  // Time-constant fields are a subset.
  const auto s = stationary_M(spec, o);
  CHECK(s.field.n_t == 1);
  CHECK(s.M_estimate <= r.M_estimate * (1.0 + 1e-3));
  // Same seed, same answer.
  CHECK(maximize_M(spec, o).M_estimate == r.M_estimate);
  // Coupling strength: M(theta gamma) = theta^{alpha/(alpha-beta)} M(gamma).
  o.theta = 2.0;
  CHECK(maximize_M(spec, o).M_estimate / r.M_estimate == doctest::Approx(std::pow(2.0, 1.5 / 1.1)).epsilon(0.02));
}

TEST_CASE("regime and ceiling") {
  VariationalOptions o;
  o.grid = {8.0, 32, 1};
  o.n_t = 2;
  try {
    (void)maximize_M(NoiseSpec::riesz(1.0, 0.5, 0.6, 1), o);
    FAIL("expected RegimeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RegimeMismatch);
  }
  o.ceiling = 1e-3;
  try {
    (void)maximize_M(NoiseSpec::riesz(1.5, 0.0, 0.0, 1), o);
    FAIL("expected Diverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
  }
}

TEST_CASE("critical constant and predictions") {
  CHECK(critical_constant(NoiseSpec::riesz(2.0, 0.0, 1.0, 3), 1.0) == doctest::Approx(1.0 / 16.0));
  const auto spec = NoiseSpec::riesz(1.5, 0.2, 0.5, 1);
  const double c1 = critical_constant(spec, 1.0);
  CHECK(critical_constant(spec, 2.0) == doctest::Approx(c1 * std::pow(2.0, -2.0)));
  CHECK(lyapunov_prediction(spec, 3.0, 1.0, 0.4) == doctest::Approx(std::pow(2.0, 1.5) * 0.4));
  CHECK(lyapunov_prediction(spec, 2.0, 0.0, 0.4) == doctest::Approx(std::pow(2.0, 1.5) * 0.4));
  CHECK_THROWS_AS((void)lyapunov_prediction(spec, 1.0, 1.0, 0.4), Error);
  CHECK_THROWS_AS((void)critical_constant(spec, -1.0), Error);
}

TEST_CASE("options serialization") {
  VariationalOptions o;
  o.grid = {5.0, 64, 2};
  o.theta = 0.5;
  o.seed = 99;
  nlohmann::json j = o;
  const auto b = j.get<VariationalOptions>();
  CHECK(b.grid == o.grid);
  CHECK(b.theta == 0.5);
  CHECK(b.seed == 99);
  CHECK(b.n_t == o.n_t);
}
