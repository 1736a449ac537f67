#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fpam/error.hpp"
#include "fpam/montecarlo.hpp"
#include "fpam/rng.hpp"

using namespace fpam;

namespace {

ExperimentConfig small_config(NoiseSpec spec, int n = 200, int steps = 16) {
  ExperimentConfig c;
  c.spec = std::move(spec);
  c.n_replicas = n;
  c.n_steps = steps;
  c.master_seed = 17;
  return c;
}

LatticeTestFunction pair_mode(double tau_sp, double xi_sp, int tau, int xi, std::complex<double> v) {
  LatticeTestFunction h;
  h.tau_spacing = tau_sp;
  h.xi_spacing = xi_sp;
  h.dim = 1;
  h.modes.push_back({tau, {xi}, v});
  h.modes.push_back({-tau, {-xi}, std::conj(v)});
  return h;
}

}  // namespace

TEST_CASE("log-weight summary against direct sums") {
  const std::vector<double> lw{0.0, std::log(2.0), std::log(3.0), std::log(6.0)};
  const auto s = summarize_log_weights(lw);
  CHECK(s.log_mean == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  // w = 1,2,3,6: mean 3, sample sd sqrt(14/3), stderr sqrt(14/3)/2.
  CHECK(s.rel_stderr == doctest::Approx(std::sqrt(14.0 / 3.0) / 2.0 / 3.0).epsilon(1e-12));
  CHECK(s.ess == doctest::Approx(144.0 / 50.0).epsilon(1e-12));

  // Huge log-weights do not overflow.
  const std::vector<double> big{1000.0, 1000.0 + std::log(3.0)};
  const auto b = summarize_log_weights(big);
  CHECK(b.log_mean == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));

  const std::vector<double> flat(10, 2.5);
  const auto f = summarize_log_weights(flat);
  CHECK(f.log_mean == doctest::Approx(2.5));
  CHECK(f.rel_stderr == 0.0);
  CHECK(f.ess == doctest::Approx(10.0));
}

TEST_CASE("flat kernel makes the moments deterministic") {
  const auto flat = small_config(NoiseSpec::riesz(2.0, 0.0, 0.0, 1));
  const auto r = exp_moment(flat, 0.7, 1.5);
  CHECK(r.log_estimate == doctest::Approx(0.7 * 2.25).epsilon(1e-12));
  CHECK(r.point_estimate == doctest::Approx(std::exp(0.7 * 2.25)).epsilon(1e-12));
  CHECK(r.stderr_ == doctest::Approx(0.0).epsilon(1e-12));

  const auto c = small_config(NoiseSpec::riesz(2.0, 0.0, 0.5, 1));

  auto c1 = c;
  c1.p = 1.0;
  const auto m = moment_u_rho(c1, 2.0);
  CHECK(m.point_estimate == 1.0);
  CHECK(m.log_stderr == 0.0);

  LatticeTestFunction empty;
  const auto lb = variational_lower_bound_mc(empty, c, 1.0);
  CHECK(lb.point_estimate == 1.0);
}

TEST_CASE("results do not depend on the thread count") {
  auto c = small_config(NoiseSpec::riesz(1.5, 0.2, 0.3, 1), 64, 16);
  c.threads = 1;
  const nlohmann::json a = exp_moment(c, 0.5, 1.0);
  c.threads = 3;
  const nlohmann::json b = exp_moment(c, 0.5, 1.0);
  CHECK(a.dump() == b.dump());
  c.master_seed += 1;
  const nlohmann::json other = exp_moment(c, 0.5, 1.0);
  CHECK(a.dump() != other.dump());
}

TEST_CASE("exp_moment is the mean of exp(theta H) over the replica paths") {
  const auto c = small_config(NoiseSpec::riesz(1.5, 0.2, 0.3, 1), 50, 16);
  const auto H = sample_self_hamiltonians(c, 1.0);
  REQUIRE(H.size() == 50);
  const double theta = 0.3;
  double s = 0.0;
  for (double h : H) s += std::exp(theta * h);
  CHECK(exp_moment(c, theta, 1.0).point_estimate == doctest::Approx(s / 50.0).epsilon(1e-12));

  // The sweep uses the same sample.
  const std::vector<double> thetas{0.1, 0.3};
  const auto sweep = exp_moment_sweep(c, thetas, 1.0);
  CHECK(sweep[1].point_estimate == doctest::Approx(s / 50.0).epsilon(1e-12));

  // Self path r is the replica-seeded path 0.
  const auto p0 = sample_path(PathSpec{1, 1.5, 1.0, 16, replica_seed(c.master_seed, 0, 0)});
  CHECK(hamiltonian(p0, p0, c.spec, c.rule).H == doctest::Approx(H[0]).epsilon(1e-14));
}

TEST_CASE("p-th moment uses p independent paths per replica") {
  auto c = small_config(NoiseSpec::riesz(2.0, 0.1, 0.5, 1), 30, 16);
  c.p = 2.0;
  c.rho = 1.0;
  double s = 0.0;
  for (int r = 0; r < 30; ++r) {
    const auto a = sample_path(PathSpec{1, 2.0, 0.5, 16, replica_seed(c.master_seed, r, 0)});
    const auto b = sample_path(PathSpec{1, 2.0, 0.5, 16, replica_seed(c.master_seed, r, 1)});
    s += std::exp(hamiltonian(a, b, c.spec, c.rule).H);
  }
  CHECK(moment_u_rho(c, 0.5).point_estimate == doctest::Approx(s / 30.0).epsilon(1e-12));

  c.p = 2.5;
  CHECK_THROWS_AS((void)moment_u_rho(c, 0.5), Error);
}

TEST_CASE("regime checks") {
  const auto sk = small_config(NoiseSpec::riesz(1.0, 0.5, 0.6, 1));
  try {
    (void)exp_moment(sk, 0.1, 1.0);
    FAIL("expected RegimeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RegimeMismatch);
  }
  auto sk2 = sk;
  sk2.p = 2.0;
  sk2.rho = 1.0;
  CHECK_NOTHROW((void)moment_u_rho(sk2, 0.5));
  sk2.rho = 0.0;
  CHECK_THROWS_AS((void)moment_u_rho(sk2, 0.5), Error);
}

TEST_CASE("Lyapunov exponent chi and t_p") {
  CHECK(lyapunov_chi(NoiseSpec::riesz(2.0, 0.0, 1.0, 3)) == doctest::Approx(3.0));
  CHECK(lyapunov_chi(NoiseSpec::riesz(2.0, 0.4, 1.0, 2)) == doctest::Approx(2.2));
  CHECK(lyapunov_chi(NoiseSpec::riesz(1.5, 0.2, 0.3, 1)) == doctest::Approx(2.0));
  const auto spec = NoiseSpec::riesz(2.0, 0.0, 1.0, 3);
  CHECK(t_p(spec, 2.0, 3.0, 1.0) == doctest::Approx(8.0 * 4.0));
  CHECK_THROWS_AS((void)t_p(spec, 2.0, 1.0, 1.0), Error);
}

TEST_CASE("Lyapunov fit on synthetic records") {
  const auto spec = NoiseSpec::riesz(1.5, 0.2, 0.3, 1);  // chi = 2
  std::vector<LyapunovPoint> pts;
  for (double t : {1.0, 2.0, 3.0, 4.0}) pts.push_back({t, 0.25 + 0.7 * t * t, 0.01, 900.0, 1000});
  const auto fit = lyapunov_fit(pts, spec, 2.0, 1.0);
  CHECK(fit.slope == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(fit.intercept == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(fit.normalized_slope == doctest::Approx(0.35).epsilon(1e-10));
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK(fit.n_used == 4);
  CHECK(fit.warnings.empty());

  // A degenerate-ESS record is dropped with a warning.
  auto noisy = pts;
  noisy.push_back({5.0, 100.0, 0.01, 3.0, 1000});
  const auto f2 = lyapunov_fit(noisy, spec, 2.0, 1.0);
  CHECK(f2.n_used == 4);
  CHECK(f2.warnings.size() == 1);
  CHECK(f2.slope == doctest::Approx(0.7).epsilon(1e-10));

  std::vector<LyapunovPoint> two(pts.begin(), pts.begin() + 2);
  try {
    (void)lyapunov_fit(two, spec, 2.0, 1.0);
    FAIL("expected IllConditioned");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IllConditioned);
  }
  std::vector<LyapunovPoint> narrow{{1.0, 1.0, 0.1, 900, 1000}, {1.2, 1.5, 0.1, 900, 1000}, {1.5, 2.0, 0.1, 900, 1000}};
  CHECK_THROWS_AS((void)lyapunov_fit(narrow, spec, 2.0, 1.0), Error);
}

TEST_CASE("lattice test functions") {
  auto h = pair_mode(0.5, 2.0, 1, 3, {0.3, -0.4});
  CHECK_NOTHROW(h.check_hermitian());
  nlohmann::json j = h;
  const auto back = j.get<LatticeTestFunction>();
  CHECK(back.modes.size() == 2);
  CHECK(back.modes[0].value == std::complex<double>(0.3, -0.4));
  CHECK(back.modes[1].xi[0] == -3);

  auto bad = h;
  bad.modes[1].value = {0.3, -0.4};
  try {
    bad.check_hermitian();
    FAIL("expected AsymmetricInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AsymmetricInput);
  }

  const auto spec = NoiseSpec::riesz(2.0, 0.3, 0.5, 1);
  const auto w = lattice_weights(h, spec);
  const auto sc = spectral_constants(spec, 1e-10);
  const int xi[1] = {3};
  CHECK(w[0] == doctest::Approx(mu0_cell_mass(spec, sc, 1, 0.5) * mu_cell_mass(spec, sc, xi, 2.0)));
  CHECK(w[1] == doctest::Approx(w[0]));
  CHECK(lattice_norm2(h, spec) == doctest::Approx(2.0 * 0.25 * w[0]));

  // F h(s, x) = 2 w Re(v e^{-2 pi i (0.5 s + 6 x)}).
  const double s = 0.37;
  const std::vector<double> x{0.11};
  const double ph = 2.0 * std::numbers::pi * (0.5 * s + 6.0 * x[0]);
  const double expected = 2.0 * w[0] * (std::complex<double>(0.3, -0.4) * std::polar(1.0, -ph)).real();
  CHECK(lattice_transform(h, w, s, x) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("lower bound with a constant test function is deterministic") {
  LatticeTestFunction h;
  h.dim = 1;
  h.modes.push_back({0, {0}, {0.8, 0.0}});
  auto c = small_config(NoiseSpec::riesz(2.0, 0.0, 0.0, 1), 20, 8);
  c.p = 3.0;
  c.rho = 1.0;
  // Flat kernel: both masses are unit point masses at the origin.
  const double t = 1.5;
  const auto r = variational_lower_bound_mc(h, c, t);
  CHECK(r.log_estimate == doctest::Approx(t * 0.8 - 0.64 / 4.0).epsilon(1e-13));
  CHECK(r.log_stderr == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Feynman-Kac estimate of a constant potential") {
  const TorusGrid g{1.0, 8, 1};
  const auto f = make_family(g, 1, [](double, std::span<const double>) { return 0.7; });
  auto c = small_config(NoiseSpec::riesz(1.0, 0.0, 0.0, 1), 20, 10);
  const auto r = fk_limit_mc(f, 4.0, c);
  CHECK(r.point_estimate == doctest::Approx(0.7).epsilon(1e-13));
  CHECK(r.stderr_ == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("config and record serialization") {
  auto c = small_config(NoiseSpec::product(1.5, 0.1, {0.2, 0.3}));
  c.t_grid = {1.0, 2.0};
  c.threads = 4;
  nlohmann::json j = c;
  CHECK_FALSE(j.contains("threads"));
  const auto back = j.get<ExperimentConfig>();
  CHECK(back.spec == c.spec);
  CHECK(back.t_grid == c.t_grid);
  CHECK(back.master_seed == c.master_seed);

  auto rc = small_config(NoiseSpec::riesz(2.0, 0.0, 0.5, 1), 16, 8);
  const auto rec = exp_moment(rc, 0.2, 1.0);
  nlohmann::json rj = rec;
  CHECK_FALSE(rj.contains("wall_time"));
  CHECK(rj.at("seeds").at("master") == rc.master_seed);
  const auto rb = rj.get<EstimateRecord>();
  CHECK(rb.point_estimate == rec.point_estimate);
  CHECK(rb.kind == "exp_moment");
  CHECK(nlohmann::json(rb).dump() == rj.dump());

  ExperimentConfig bad = c;
  bad.rho = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}
