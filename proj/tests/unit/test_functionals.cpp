#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fpam/error.hpp"
#include "fpam/functionals.hpp"
#include "fpam/rng.hpp"
#include "fpam/stats.hpp"

using namespace fpam;

namespace {

constexpr double pi = std::numbers::pi;

// int_0^t int_0^t |r-s|^{-k} dr ds
double power_square(double k, double t) { return 2.0 * std::pow(t, 2.0 - k) / ((1.0 - k) * (2.0 - k)); }

// E|Z|^{-b}, Z standard normal in R^d.
double normal_neg_moment(double b, int d) {
  return std::pow(2.0, -0.5 * b) * std::tgamma(0.5 * (d - b)) / std::tgamma(0.5 * d);
}

// E S^{-q} for the positive (alpha/2)-stable S with E e^{-sS} = e^{-s^{alpha/2}}.
double subordinator_neg_moment(double alpha, double q) { return std::tgamma(1.0 + 2.0 * q / alpha) / std::tgamma(1.0 + q); }

// E|X|^q, 1-d, E e^{ilX} = e^{-|l|^alpha}.
double stable_abs_moment(double alpha, double q) {
  return std::pow(2.0, q) * std::tgamma(0.5 * (1.0 + q)) * std::tgamma(1.0 - q / alpha) /
         (std::sqrt(pi) * std::tgamma(1.0 - 0.5 * q));
}

Path constant_path(int n_steps, double horizon, std::vector<double> x) {
  Path p;
  p.dim = static_cast<int>(x.size());
  for (int k = 0; k <= n_steps; ++k) {
    p.times.push_back(horizon * k / n_steps);
    for (double v : x) p.positions.push_back(v);
  }
  return p;
}

}  // namespace

TEST_CASE("cell pair weights") {
  for (double k : {0.0, 0.3, 0.7}) {
    const double c = 1.0 / ((1.0 - k) * (2.0 - k));
    CHECK(cell_pair_weight(k, 0) == doctest::Approx(2.0 * c).epsilon(1e-13));
    for (int m : {1, 2, 10, 1000}) {
      const double e = c * (std::pow(m + 1.0, 2.0 - k) - 2.0 * std::pow(m, 2.0 - k) + std::pow(m - 1.0, 2.0 - k));
      CHECK(cell_pair_weight(k, m) == doctest::Approx(e).epsilon(1e-8));
    }
    // The n x n cells tile the square.
    const int n = 50;
    double total = n * cell_pair_weight(k, 0);
    for (int m = 1; m < n; ++m) total += 2.0 * (n - m) * cell_pair_weight(k, m);
    CHECK(total == doctest::Approx(power_square(k, n)).epsilon(1e-9));
  }
}

TEST_CASE("mean of gamma at unit time") {
  // Gaussian: X = sqrt(2) Z.
  for (int d : {1, 2, 3}) {
    const double b = 0.4 * d;
    CHECK(mean_gamma_unit(NoiseSpec::riesz(2.0, 0.0, b, d)) ==
          doctest::Approx(std::pow(2.0, -0.5 * b) * normal_neg_moment(b, d)).epsilon(1e-8));
  }
  // 1-d stable.
  for (double alpha : {0.8, 1.0, 1.5}) {
    CHECK(mean_gamma_unit(NoiseSpec::riesz(alpha, 0.0, 0.3, 1)) ==
          doctest::Approx(stable_abs_moment(alpha, -0.3)).epsilon(1e-7));
  }
  // Isotropic stable in d >= 2: X = sqrt(2 S) Z.
  for (double alpha : {1.0, 1.5}) {
    const double b = 0.7;
    const double e = std::pow(2.0, -0.5 * b) * subordinator_neg_moment(alpha, 0.5 * b) * normal_neg_moment(b, 2);
    CHECK(mean_gamma_unit(NoiseSpec::riesz(alpha, 0.0, b, 2)) == doctest::Approx(e).epsilon(1e-7));
  }
  // Product kernel: independent coordinates given S.
  {
    const double e = std::pow(2.0, -0.1) * normal_neg_moment(0.2, 1) * std::pow(2.0, -0.15) * normal_neg_moment(0.3, 1);
    CHECK(mean_gamma_unit(NoiseSpec::product(2.0, 0.0, {0.2, 0.3})) == doctest::Approx(e).epsilon(1e-8));
    const double alpha = 1.5;
    const double e2 = std::pow(2.0, -0.25) * subordinator_neg_moment(alpha, 0.25) * normal_neg_moment(0.2, 1) *
                      normal_neg_moment(0.3, 1);
    CHECK(mean_gamma_unit(NoiseSpec::product(alpha, 0.0, {0.2, 0.3})) == doctest::Approx(e2).epsilon(1e-7));
  }
}

TEST_CASE("closed-form expected Hamiltonian") {
  const auto spec = NoiseSpec::riesz(1.5, 0.2, 0.3, 1);
  const double k = 0.2 + 0.3 / 1.5;
  for (double t : {0.5, 1.0, 3.0}) {
    CHECK(expected_H(spec, t) ==
          doctest::Approx(stable_abs_moment(1.5, -0.3) * power_square(k, t)).epsilon(1e-7));
  }
  // Scaling in t.
  CHECK(expected_H(spec, 2.0) / expected_H(spec, 1.0) == doctest::Approx(std::pow(2.0, 2.0 - k)).epsilon(1e-12));
  CHECK_THROWS_AS((void)expected_H(NoiseSpec::riesz(1.0, 0.5, 0.6, 1), 1.0), Error);
}

TEST_CASE("flat spatial kernel gives the time integral exactly") {
  for (double b0 : {0.0, 0.4}) {
    const auto spec = NoiseSpec::riesz(1.2, b0, 0.0, 1);
    const Path p = sample_path(PathSpec{1, 1.2, 2.0, 40, 3});
    const auto v = hamiltonian(p, p, spec, QuadratureRule{});
    CHECK(v.H == doctest::Approx(power_square(b0, 2.0)).epsilon(1e-10));
    CHECK(v.Z == doctest::Approx(std::sqrt(v.H)));
  }
}

TEST_CASE("cross Hamiltonian of separated constant paths") {
  const auto spec = NoiseSpec::riesz(2.0, 0.3, 0.5, 2);
  const Path a = constant_path(32, 1.5, {0.0, 0.0});
  const Path b = constant_path(32, 1.5, {0.6, 0.8});
  const auto v = hamiltonian(a, b, spec, QuadratureRule{});
  CHECK(v.H == doctest::Approx(power_square(0.3, 1.5)).epsilon(1e-10));  // gamma = 1 at distance 1
  CHECK(hamiltonian(b, a, spec, QuadratureRule{}).H == v.H);
}

TEST_CASE("cross Hamiltonian converges for a moving path") {
  // a = 0, b(s) = 1 + s, beta0 = 0: H = t int_0^t (1 + s)^{-beta} ds.
  const auto spec = NoiseSpec::riesz(2.0, 0.0, 0.5, 1);
  const double t = 1.0;
  const double exact = t * (std::pow(1.0 + t, 0.5) - 1.0) / 0.5;
  double prev_err = 1.0;
  for (int n : {16, 64, 256}) {
    const Path a = constant_path(n, t, {0.0});
    Path b = constant_path(n, t, {0.0});
    for (int k = 0; k <= n; ++k) b.positions[k] = 1.0 + b.times[k];
    const double err = std::abs(hamiltonian(a, b, spec, QuadratureRule{}).H - exact);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-2 * exact);
}

TEST_CASE("self Hamiltonian is refused outside the Full regime") {
  const auto spec = NoiseSpec::riesz(1.0, 0.5, 0.6, 1);
  const Path p = sample_path(PathSpec{1, 1.0, 1.0, 16, 1});
  try {
    (void)hamiltonian(p, p, spec, QuadratureRule{});
    FAIL("expected DivergentDiagonal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DivergentDiagonal);
  }
  CHECK(std::isfinite(hamiltonian(p, p, spec, QuadratureRule{}, true).H));
}

TEST_CASE("grids must agree") {
  const auto spec = NoiseSpec::riesz(2.0, 0.0, 0.5, 1);
  const Path a = sample_path(PathSpec{1, 2.0, 1.0, 16, 1});
  const Path b = sample_path(PathSpec{1, 2.0, 1.0, 32, 2});
  try {
    (void)hamiltonian(a, b, spec, QuadratureRule{});
    FAIL("expected GridMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::GridMismatch);
  }
}

TEST_CASE("moment exponent combines pair Hamiltonians") {
  const auto spec = NoiseSpec::riesz(1.5, 0.1, 0.4, 1);
  std::vector<Path> paths;
  for (int j = 0; j < 3; ++j) paths.push_back(sample_path(PathSpec{1, 1.5, 1.0, 32, 100 + static_cast<std::uint64_t>(j)}));
  const QuadratureRule rule;
  double cross = 0.0;
  double diag = 0.0;
  for (int i = 0; i < 3; ++i) {
    diag += hamiltonian(paths[i], paths[i], spec, rule).H;
    for (int j = i + 1; j < 3; ++j) cross += hamiltonian(paths[i], paths[j], spec, rule).H;
  }
  for (double rho : {0.0, 0.5, 1.0}) {
    CHECK(n_moment_exponent(paths, spec, rho, rule) == doctest::Approx(cross + 0.5 * (1.0 - rho) * diag).epsilon(1e-12));
  }
  // rho = 1 never touches the diagonal, so the Skorohod-only regime works.
  const auto sk = NoiseSpec::riesz(1.0, 0.5, 0.6, 1);
  std::vector<Path> p1;
  for (int j = 0; j < 2; ++j) p1.push_back(sample_path(PathSpec{1, 1.0, 1.0, 32, 7 + static_cast<std::uint64_t>(j)}));
  CHECK(std::isfinite(n_moment_exponent(p1, sk, 1.0, rule)));
  CHECK_THROWS_AS((void)n_moment_exponent(p1, sk, 0.0, rule), Error);
}

TEST_CASE("diagonal policies") {
  const auto spec = NoiseSpec::riesz(2.0, 0.2, 0.6, 1);
  QuadratureRule excl;
  excl.diagonal_policy = DiagonalPolicy::ExcludeBand;
  const QuadratureRule corr;
  for (int s = 0; s < 5; ++s) {
    const Path p = sample_path(PathSpec{1, 2.0, 1.0, 64, static_cast<std::uint64_t>(s)});
    const auto a = hamiltonian(p, p, spec, excl);
    const auto b = hamiltonian(p, p, spec, corr);
    CHECK(a.H < b.H);
    CHECK(b.diagonal_correction > 0.0);
    CHECK(a.H > 0.0);
  }
  nlohmann::json j = corr;
  CHECK(j.get<QuadratureRule>().diagonal_policy == DiagonalPolicy::PowerLawCorrection);
  QuadratureRule bad;
  bad.band = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scaling witness exponent and sample sizes") {
  const auto spec = NoiseSpec::riesz(1.5, 0.2, 0.3, 1);
  const auto w = scaling_witness(spec, 1.0, 2.0, 200, 11, 32);
  CHECK(w.exponent == doctest::Approx(2.0 - 0.3 / 1.5 - 0.2));
  CHECK(w.H_at.size() == 200);
  CHECK(w.H_scaled.size() == 200);
  CHECK(stats::ks_two_sample(w.H_at, w.H_scaled).p_value > 1e-4);
}
