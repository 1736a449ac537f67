#include "fpam/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fpam/error.hpp"
#include "fpam/quadrature.hpp"

namespace fpam {

namespace {

constexpr double kPi = std::numbers::pi;

// F(x) = |x|^{2-k} / ((1-k)(2-k)); the double integral of |r-s|^{-k} over a
// pair of unit cells at offset m is the second difference of F.
double second_difference(double kappa, int m) {
  const double c = 1.0 / ((1.0 - kappa) * (2.0 - kappa));
  auto F = [&](double x) { return x == 0.0 ? 0.0 : c * std::pow(x, 2.0 - kappa); };
  if (m == 0) return 2.0 * F(1.0);
  return F(m + 1.0) - 2.0 * F(m) + F(m - 1.0);
}

// E[(m+T)^{-kappa}] with T = u - v triangular; even moments 1/6, 1/15, 1/28.
double series_weight(double kappa, int m) {
  const double x = 1.0 / (static_cast<double>(m) * m);
  const double k = kappa;
  const double c2 = k * (k + 1.0) / 2.0 / 6.0;
  const double c4 = k * (k + 1.0) * (k + 2.0) * (k + 3.0) / 24.0 / 15.0;
  const double c6 = k * (k + 1.0) * (k + 2.0) * (k + 3.0) * (k + 4.0) * (k + 5.0) / 720.0 / 28.0;
  return std::pow(static_cast<double>(m), -k) * (1.0 + x * (c2 + x * (c4 + x * c6)));
}

int cells_for(const QuadratureRule& rule, int n_steps) {
  const int n = rule.n_cells == 0 ? n_steps : rule.n_cells;
  if (n_steps % n != 0) {
    throw Error(ErrorKind::InvalidArgument, "QuadratureRule.n_cells must divide the path step count");
  }
  return n;
}

void check_grids(const Path& a, const Path& b) {
  if (a.dim != b.dim || a.times != b.times) {
    throw Error(ErrorKind::GridMismatch, "paths must share the time grid and dimension");
  }
}

}  // namespace

void QuadratureRule::validate() const {
  if (n_cells < 0) throw Error(ErrorKind::InvalidArgument, "n_cells must be >= 0");
  if (band < 1) throw Error(ErrorKind::InvalidArgument, "band width must be >= 1");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  if (!(kernel_cap > 0.0)) throw Error(ErrorKind::InvalidArgument, "kernel_cap must be positive");
}

void to_json(nlohmann::json& j, const QuadratureRule& rule) {
  j = nlohmann::json{{"n_cells", rule.n_cells},
                     {"diagonal_policy", rule.diagonal_policy == DiagonalPolicy::ExcludeBand ? "exclude_band"
                                                                                             : "power_law"},
                     {"band", rule.band},
                     {"tolerance", rule.tolerance},
                     {"kernel_cap", rule.kernel_cap}};
}

void from_json(const nlohmann::json& j, QuadratureRule& rule) {
  rule = QuadratureRule{};
  if (j.contains("n_cells")) rule.n_cells = j.at("n_cells").get<int>();
  if (j.contains("diagonal_policy")) {
    const auto p = j.at("diagonal_policy").get<std::string>();
    if (p == "exclude_band") {
      rule.diagonal_policy = DiagonalPolicy::ExcludeBand;
    } else if (p == "power_law") {
      rule.diagonal_policy = DiagonalPolicy::PowerLawCorrection;
    } else {
      throw Error(ErrorKind::ConfigInvalid, "diagonal_policy must be \"exclude_band\" or \"power_law\"");
    }
  }
  if (j.contains("band")) rule.band = j.at("band").get<int>();
  if (j.contains("tolerance")) rule.tolerance = j.at("tolerance").get<double>();
  if (j.contains("kernel_cap")) rule.kernel_cap = j.at("kernel_cap").get<double>();
  rule.validate();
}

double cell_pair_weight(double kappa, int m) {
  if (m < 0) m = -m;
  if (kappa == 0.0) return 1.0;
  if (m >= 20) return series_weight(kappa, m);
  return second_difference(kappa, m);
}

double mean_gamma_unit(const NoiseSpec& spec, double quad_tol) {
  spec.validate();
  const double beta = spec.beta();
  if (beta == 0.0) return 1.0;
  const int d = spec.dim;
  const double alpha = spec.alpha;
  auto gaussian_abs_moment = [&](double power, int dim) {
    // E|N|^{-power} for a standard normal vector in R^dim, radial quadrature.
    auto num = [&](double r) { return std::pow(r, dim - 1 - power) * std::exp(-0.5 * r * r); };
    auto den = [&](double r) { return std::pow(r, dim - 1) * std::exp(-0.5 * r * r); };
    auto fin = [&](auto& f) {
      return quad::finite([&](double r, double) { return f(r); }, 0.0, 1.0, quad_tol) +
             quad::half_line(f, 1.0, quad_tol);
    };
    return fin(num) / fin(den);
  };
  if (alpha == 2.0) {
    // X_1 = sqrt(2) N.
    if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
      return std::pow(2.0, -0.5 * r->beta) * gaussian_abs_moment(r->beta, d);
    }
    double v = 1.0;
    for (double b : std::get<ProductKernel>(spec.spatial).betas) {
      if (b > 0.0) v *= std::pow(2.0, -0.5 * b) * gaussian_abs_moment(b, 1);
    }
    return v;
  }
  if (spec.is_riesz() || d == 1) {
    // Parseval: E gamma(X_1) = int mu(d xi) exp(-|2 pi xi|^alpha), radial for Riesz.
    const double c = spec.is_riesz() ? riesz_fourier_constant(beta, d, quad_tol)
                                     : riesz_fourier_constant(beta, 1, quad_tol);
    const double sphere = 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
    auto f = [&](double r) { return std::pow(r, beta - 1.0) * std::exp(-std::pow(2.0 * kPi * r, alpha)); };
    const double radial = quad::finite([&](double r, double) { return f(r); }, 0.0, 1.0, quad_tol) +
                          quad::half_line(f, 1.0, quad_tol);
    return c * sphere * radial;
  }
  // Product kernel, d >= 2: X_1 = sqrt(2 S) N with E exp(-u S) = exp(-u^{alpha/2}),
  // and E S^{-q} = Gamma(1 + q/a) / Gamma(1 + q) for the positive a-stable law.
  const double a = 0.5 * alpha;
  const double q = 0.5 * beta;
  double v = std::pow(2.0, -q) * std::tgamma(1.0 + q / a) / std::tgamma(1.0 + q);
  for (double b : std::get<ProductKernel>(spec.spatial).betas) {
    if (b > 0.0) v *= gaussian_abs_moment(b, 1);
  }
  return v;
}

HamiltonianEvaluator::HamiltonianEvaluator(NoiseSpec spec, QuadratureRule rule)
    : spec_(std::move(spec)), rule_(rule), regime_(dalang_check(spec_)) {
  spec_.validate();
  rule_.validate();
  if (regime_ == Regime::None) {
    throw Error(ErrorKind::RegimeMismatch, "Hamiltonian needs beta < alpha");
  }
  mean_gamma_ = mean_gamma_unit(spec_, rule_.tolerance);
  const double b = spec_.beta() / spec_.alpha;
  const double beta0 = spec_.beta0;
  // Origin cell of a cross pair: both paths start at the same point.
  auto f = [&](double q, double) {
    const double inner = (std::pow(2.0 - q, 1.0 - b) - std::pow(q, 1.0 - b)) / (1.0 - b);
    return (beta0 == 0.0 ? 1.0 : std::pow(q, -beta0)) * inner;
  };
  origin_cell_ = quad::finite(f, 0.0, 1.0, rule_.tolerance);
}

double HamiltonianEvaluator::kernel(const double* x, const double* y) const {
  const int d = spec_.dim;
  if (const auto* r = std::get_if<RieszKernel>(&spec_.spatial)) {
    if (r->beta == 0.0) return 1.0;
    double s = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dx = x[c] - y[c];
      s += dx * dx;
    }
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    return std::pow(s, -0.5 * r->beta);
  }
  const auto& betas = std::get<ProductKernel>(spec_.spatial).betas;
  double v = 1.0;
  for (int c = 0; c < d; ++c) {
    if (betas[c] == 0.0) continue;
    const double dx = std::abs(x[c] - y[c]);
    if (dx == 0.0) return std::numeric_limits<double>::infinity();
    v *= std::pow(dx, -betas[c]);
  }
  return v;
}

HamiltonianValue HamiltonianEvaluator::evaluate(const Path& a, const Path& b, bool allow_divergence) const {
  check_grids(a, b);
  if (a.dim != spec_.dim) throw Error(ErrorKind::GridMismatch, "path dimension does not match the noise spec");
  if (&a == &b || a.positions == b.positions) return self_pair(a, allow_divergence);
  // Canonical order so that H(i,j) and H(j,i) accumulate identically.
  const bool swap = std::lexicographical_compare(b.positions.begin(), b.positions.end(), a.positions.begin(),
                                                 a.positions.end());
  return swap ? cross_pair(b, a) : cross_pair(a, b);
}

HamiltonianValue HamiltonianEvaluator::self_pair(const Path& p, bool allow_divergence) const {
  if (regime_ != Regime::Full && !allow_divergence) {
    throw Error(ErrorKind::DivergentDiagonal,
                "self-Hamiltonian is infinite in expectation unless alpha*beta0 + beta < alpha");
  }
  const int n = cells_for(rule_, p.n_steps());
  const int per_cell = p.n_steps() / n;
  const double h = p.horizon() / n;
  const double beta0 = spec_.beta0;
  const double b = spec_.beta() / spec_.alpha;
  const double kappa = beta0 + b;
  const bool power_law = rule_.diagonal_policy == DiagonalPolicy::PowerLawCorrection && kappa < 1.0;
  const int band = rule_.band;

  std::vector<int> idx(n);
  for (int a = 0; a < n; ++a) idx[a] = a * per_cell + per_cell / 2;

  // Weight per offset. The power-law weights make each cell pair unbiased for
  // its expectation under self-similarity, E gamma(X_a - X_b) ~ |a-b|^{-b}.
  std::vector<double> w(n, 0.0);
  const double hb = std::pow(h, 2.0 - beta0);
  for (int m = band; m < n; ++m) {
    w[m] = power_law ? hb * cell_pair_weight(kappa, m) * std::pow(static_cast<double>(m), b)
                     : hb * cell_pair_weight(beta0, m);
  }

  double off = 0.0;
  const int d = p.dim;
  for (int a = 0; a < n; ++a) {
    const double* xa = p.positions.data() + static_cast<std::size_t>(idx[a]) * d;
    double row = 0.0;
    for (int c = a + band; c < n; ++c) {
      const double* xc = p.positions.data() + static_cast<std::size_t>(idx[c]) * d;
      row += w[c - a] * std::min(kernel(xa, xc), rule_.kernel_cap);
    }
    off += row;
  }
  off *= 2.0;

  double diag = 0.0;
  if (power_law) {
    const double hk = std::pow(h, 2.0 - kappa);
    for (int m = 0; m < std::min(band, n); ++m) {
      const double count = m == 0 ? n : 2.0 * (n - m);
      diag += count * mean_gamma_ * hk * cell_pair_weight(kappa, m);
    }
  }
  HamiltonianValue v;
  v.H = off + diag;
  v.Z = std::sqrt(v.H);
  v.diagonal_correction = diag;
  return v;
}

HamiltonianValue HamiltonianEvaluator::cross_pair(const Path& p, const Path& q) const {
  const int n = cells_for(rule_, p.n_steps());
  const int per_cell = p.n_steps() / n;
  const double h = p.horizon() / n;
  const double beta0 = spec_.beta0;
  const double b = spec_.beta() / spec_.alpha;
  const int d = p.dim;
  const double cap = rule_.kernel_cap;

  std::vector<double> w(n);
  const double hb = std::pow(h, 2.0 - beta0);
  for (int m = 0; m < n; ++m) w[m] = hb * cell_pair_weight(beta0, m);

  auto point = [&](const Path& path, int step) {
    return path.positions.data() + static_cast<std::size_t>(step) * d;
  };

  double total = 0.0;
  double correction = 0.0;
  for (int a = 0; a < n; ++a) {
    const int ia = a * per_cell + per_cell / 2;
    double row = 0.0;
    for (int c = 0; c < n; ++c) {
      const int ic = c * per_cell + per_cell / 2;
      const double k = kernel(point(p, ia), point(q, ic));
      if (k < cap) {
        row += w[std::abs(a - c)] * k;
        continue;
      }
      if (ia == 0 && ic == 0) {
        // Both paths sit at the common start: mean-field value of the cell.
        const double v = mean_gamma_ * std::pow(h, 2.0 - beta0 - b) * origin_cell_;
        row += v;
        correction += v;
        continue;
      }
      if (per_cell >= 2) {
        // One level of subdivision on the path grid.
        const int half = per_cell / 2;
        const double hs = std::pow(0.5 * h, 2.0 - beta0);
        double sub = 0.0;
        for (int sa = 0; sa < 2; ++sa) {
          for (int sc = 0; sc < 2; ++sc) {
            const int ja = a * per_cell + sa * half + half / 2;
            const int jc = c * per_cell + sc * half + half / 2;
            const int offset = std::abs(2 * a + sa - 2 * c - sc);
            sub += hs * cell_pair_weight(beta0, offset) * std::min(kernel(point(p, ja), point(q, jc)), cap);
          }
        }
        row += sub;
      } else {
        row += w[std::abs(a - c)] * cap;
      }
    }
    total += row;
  }
  HamiltonianValue v;
  v.H = total;
  v.Z = std::sqrt(total);
  v.diagonal_correction = correction;
  return v;
}

HamiltonianValue hamiltonian(const Path& path_i, const Path& path_j, const NoiseSpec& spec,
                             const QuadratureRule& rule, bool allow_divergence) {
  HamiltonianEvaluator eval(spec, rule);
  return eval.evaluate(path_i, path_j, allow_divergence);
}

double expected_H(const NoiseSpec& spec, double t) {
  if (dalang_check(spec) != Regime::Full) {
    throw Error(ErrorKind::NotIntegrable, "E[H] is finite iff alpha*beta0 + beta < alpha");
  }
  if (!(t > 0.0)) throw Error(ErrorKind::InvalidArgument, "expected_H needs t > 0");
  const double kappa = spec.beta0 + spec.beta() / spec.alpha;
  const double time = 2.0 * std::pow(t, 2.0 - kappa) / ((1.0 - kappa) * (2.0 - kappa));
  return mean_gamma_unit(spec) * time;
}

double n_moment_exponent(std::span<const Path> paths, const HamiltonianEvaluator& eval, double rho) {
  if (paths.empty()) throw Error(ErrorKind::InvalidArgument, "n_moment_exponent needs at least one path");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1]");
  const std::size_t n = paths.size();
  double cross = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) cross += eval.evaluate(paths[j], paths[k]).H;
  }
  if (rho == 1.0) return cross;
  double diag = 0.0;
  for (std::size_t j = 0; j < n; ++j) diag += eval.evaluate(paths[j], paths[j]).H;
  return cross + 0.5 * (1.0 - rho) * diag;
}

double n_moment_exponent(std::span<const Path> paths, const NoiseSpec& spec, double rho,
                         const QuadratureRule& rule) {
  HamiltonianEvaluator eval(spec, rule);
  return n_moment_exponent(paths, eval, rho);
}

ScalingSamples scaling_witness(const NoiseSpec& spec, double t, double a, int n_samples, std::uint64_t seed,
                               int n_steps, const QuadratureRule& rule) {
  if (!(a > 0.0)) throw Error(ErrorKind::InvalidArgument, "scaling_witness needs a > 0");
  HamiltonianEvaluator eval(spec, rule);
  ScalingSamples out;
  out.exponent = 2.0 - spec.beta() / spec.alpha - spec.beta0;
  const double factor = std::pow(a, out.exponent);
  out.H_at.reserve(n_samples);
  out.H_scaled.reserve(n_samples);
  for (int r = 0; r < n_samples; ++r) {
    PathSpec long_spec{spec.dim, spec.alpha, a * t, n_steps, derive_seed(seed, {0, static_cast<std::uint64_t>(r)})};
    PathSpec short_spec{spec.dim, spec.alpha, t, n_steps, derive_seed(seed, {1, static_cast<std::uint64_t>(r)})};
    const Path pl = sample_path(long_spec);
    const Path ps = sample_path(short_spec);
    out.H_at.push_back(eval.evaluate(pl, pl).H);
    out.H_scaled.push_back(factor * eval.evaluate(ps, ps).H);
  }
  return out;
}

}  // namespace fpam
