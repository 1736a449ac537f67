#include "fpam/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fpam/error.hpp"
#include "fpam/quadrature.hpp"

namespace fpam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

// int_R |u|^{-p} |u - D|^{-p} du for D > 0 and 1/2 < p < 1.
double two_point_line_integral(double p, double D, double tol) {
  const double inner_tol = tol * 0.1;
  // Middle piece: singular at both endpoints.
  auto middle = [&](double x, double dist) {
    (void)x;
    return std::pow(dist, -p) * std::pow(D - dist, -p);
  };
  // Outer pieces: w = distance beyond the nearer point, singular at w = 0.
  auto outer = [&](double w) { return std::pow(w, -p) * std::pow(w + D, -p); };
  const double mid = quad::finite(middle, 0.0, D, inner_tol);
  // The half-lines left and right of [0, D] are mirror images.
  auto outer_piece = [&] {
    return quad::finite([&](double w, double) { return outer(w); }, 0.0, D, inner_tol) +
           quad::half_line(outer, D, inner_tol);
  };
  return mid + 2.0 * outer_piece();
}

double riesz_two_center_integral(int d, double beta, double R, double tol) {
  // int_{R^d} |y - x|^{-a} |y|^{-a} dy with |x| = R, a = (d+beta)/2, in
  // cylindrical coordinates: z along x, rho the distance from the axis.
  const double a = 0.5 * (d + beta);
  const double sphere = 2.0 * std::pow(std::numbers::pi, 0.5 * (d - 1)) / std::tgamma(0.5 * (d - 1));
  const double inner_tol = tol * 0.05;
  // Integral over rho at axial distances near <= far from the two singular points.
  auto radial = [&](double near, double far) {
    // rho = near v on [0, near], rho = e^s on [near, far], then the tail. The
    // head dominates; the other pieces only need accuracy relative to it.
    const double head = std::pow(near, d - 1 - a) *
                        quad::finite(
                            [&](double v, double) {
                              return std::pow(v, d - 2) * std::pow(std::hypot(1.0, v), -a) *
                                     std::pow(std::hypot(far, near * v), -a);
                            },
                            0.0, 1.0, inner_tol);
    const double floor = inner_tol * head;
    const double lo = std::log(near);
    const double hi = std::log(far);
    auto log_f = [&](double s) {
      // rho^{d-1} |.|^{-a} |.|^{-a} in logs; each factor alone can overflow
      const double rho = std::exp(s);
      return std::exp((d - 1) * s - a * (std::log(std::hypot(near, rho)) + std::log(std::hypot(far, rho))));
    };
    // Short log-intervals (z close to R/2) are smooth enough for a fixed Gauss rule.
    const double middle = hi - lo < 0.5
                              ? quad::gauss_box([&](const double* s) { return log_f(*s); }, 1, &lo, &hi)
                              : quad::finite([&](double s, double) { return log_f(s); }, lo, hi, inner_tol, floor);
    // rho = far v on [far, inf), scale-free so huge far does not starve exp_sinh
    const double q = near / far;
    const double tail = std::pow(far, d - 1 - 2 * a) *
                        quad::half_line(
                            [&](double v) {
                              return std::pow(v, d - 2) * std::pow(std::hypot(q, v), -a) * std::pow(std::hypot(1.0, v), -a);
                            },
                            1.0, inner_tol, floor * std::pow(far, 2 * a + 1 - d));
    return sphere * (head + middle + tail);
  };
  // Near the left endpoint the distance argument is the accurate coordinate.
  auto left = [](double x, double dist, double width) { return x < 0.5 * width && dist > 0.0 ? dist : x; };
  const double mid = quad::finite(
      [&](double z, double dist) {
        const double zz = left(z, dist, 0.5 * R);
        return radial(zz, R - zz);
      },
      0.0, 0.5 * R, tol * 0.2);
  auto outer = [&](double w) { return radial(w, w + R); };
  const double near_out = quad::finite([&](double w, double dist) { return outer(left(w, dist, R)); }, 0.0, R, tol * 0.2);
  const double far_out = quad::half_line(outer, R, tol * 0.2);
  return 2.0 * (mid + near_out + far_out);
}

}  // namespace

double NoiseSpec::beta() const {
  if (const auto* r = std::get_if<RieszKernel>(&spatial)) return r->beta;
  double s = 0.0;
  for (double b : std::get<ProductKernel>(spatial).betas) s += b;
  return s;
}

void NoiseSpec::validate() const {
  std::ostringstream os;
  require(dim >= 1, "dim must be a positive integer");
  require(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0, 2]");
  require(beta0 >= 0.0 && beta0 < 1.0, "beta0 must lie in [0, 1)");
  if (const auto* r = std::get_if<RieszKernel>(&spatial)) {
    require(r->beta >= 0.0 && r->beta < dim, "Riesz beta must lie in [0, dim)");
  } else {
    const auto& p = std::get<ProductKernel>(spatial);
    require(static_cast<int>(p.betas.size()) == dim, "Product kernel needs one beta per coordinate");
    for (double b : p.betas) require(b >= 0.0 && b < 1.0, "Product betas must lie in [0, 1)");
    require(beta() < dim, "sum of Product betas must lie in [0, dim)");
  }
}

NoiseSpec NoiseSpec::riesz(double alpha, double beta0, double beta, int dim) {
  NoiseSpec s{alpha, beta0, RieszKernel{beta}, dim};
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::product(double alpha, double beta0, std::vector<double> betas) {
  const int d = static_cast<int>(betas.size());
  NoiseSpec s{alpha, beta0, ProductKernel{std::move(betas)}, d};
  s.validate();
  return s;
}

void to_json(nlohmann::json& j, const NoiseSpec& spec) {
  nlohmann::json kernel;
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    kernel = {{"type", "riesz"}, {"beta", r->beta}};
  } else {
    kernel = {{"type", "product"}, {"betas", std::get<ProductKernel>(spec.spatial).betas}};
  }
  j = nlohmann::json{{"alpha", spec.alpha}, {"beta0", spec.beta0}, {"kernel", kernel}, {"dim", spec.dim}};
}

void from_json(const nlohmann::json& j, NoiseSpec& spec) {
  try {
    spec.alpha = j.at("alpha").get<double>();
    spec.beta0 = j.at("beta0").get<double>();
    spec.dim = j.at("dim").get<int>();
    const auto& k = j.at("kernel");
    const auto type = k.at("type").get<std::string>();
    if (type == "riesz") {
      spec.spatial = RieszKernel{k.at("beta").get<double>()};
    } else if (type == "product") {
      spec.spatial = ProductKernel{k.at("betas").get<std::vector<double>>()};
    } else {
      throw Error(ErrorKind::ConfigInvalid, "kernel.type must be \"riesz\" or \"product\", got \"" + type + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("noise spec: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::None: return "None";
    case Regime::SkorohodOnly: return "SkorohodOnly";
    case Regime::Full: return "Full";
  }
  return "Unknown";
}

Regime dalang_check(const NoiseSpec& spec) {
  const double beta = spec.beta();
  if (beta >= spec.alpha) return Regime::None;
  if (spec.alpha * spec.beta0 + beta < spec.alpha) return Regime::Full;
  return Regime::SkorohodOnly;
}

double gamma_eval(const NoiseSpec& spec, std::span<const double> x) {
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    if (r->beta == 0.0) return 1.0;
    const double n = norm(x);
    return n == 0.0 ? kInf : std::pow(n, -r->beta);
  }
  const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
  double v = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    if (betas[j] == 0.0) continue;
    const double a = std::abs(x[j]);
    if (a == 0.0) return kInf;
    v *= std::pow(a, -betas[j]);
  }
  return v;
}

double temporal_eval(const NoiseSpec& spec, double u) {
  if (spec.beta0 == 0.0) return 1.0;
  const double a = std::abs(u);
  return a == 0.0 ? kInf : std::pow(a, -spec.beta0);
}

double K_eval(const NoiseSpec& spec, std::span<const double> x) {
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    const double n = norm(x);
    return n == 0.0 ? kInf : std::pow(n, -0.5 * (spec.dim + r->beta));
  }
  const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
  double v = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    const double a = std::abs(x[j]);
    if (a == 0.0) return kInf;
    v *= std::pow(a, -0.5 * (1.0 + betas[j]));
  }
  return v;
}

double bump(double u) {
  if (u <= 1.0) return 1.0;
  if (u >= 2.0) return 0.0;
  const double v = u - 1.0;
  return std::exp(1.0 - 1.0 / (1.0 - v * v));
}

double truncated_time_kernel(const NoiseSpec& spec, double A, double a, double u) {
  require(a > 0.0 && a < A, "truncated_time_kernel needs 0 < a < A");
  const double m = std::abs(u);
  if (m >= 2.0 * A || m <= a) return 0.0;
  return std::pow(m, -0.5 * (1.0 + spec.beta0)) * bump(m / A) * (1.0 - bump(m / a));
}

double truncated_space_kernel(const NoiseSpec& spec, double B, double b, std::span<const double> x) {
  require(b > 0.0 && b < B, "truncated_space_kernel needs 0 < b < B");
  const double m = norm(x);
  if (m >= 2.0 * B || m <= b) return 0.0;
  return K_eval(spec, x) * bump(m / B) * (1.0 - bump(m / b));
}

double temporal_decomposition_integral(double beta0, double s, double r, double quad_tol) {
  require(s != r, "temporal decomposition needs s != r");
  require(beta0 > 0.0 && beta0 < 1.0, "temporal decomposition needs beta0 in (0, 1)");
  return two_point_line_integral(0.5 * (1.0 + beta0), std::abs(s - r), quad_tol);
}

double spatial_decomposition_integral(const NoiseSpec& spec, std::span<const double> x, double quad_tol) {
  require(static_cast<int>(x.size()) == spec.dim, "point dimension does not match spec.dim");
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    if (r->beta == 0.0) {
      throw Error(ErrorKind::NotIntegrable, "beta = 0: K(y-x)K(y) is not integrable");
    }
    const double rho = norm(x);
    require(rho > 0.0, "spatial decomposition needs x != 0");
    if (spec.dim == 1) return two_point_line_integral(0.5 * (1.0 + r->beta), rho, quad_tol);
    return riesz_two_center_integral(spec.dim, r->beta, rho, quad_tol);
  }
  const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
  double v = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    if (betas[j] == 0.0) continue;  // flat coordinate, excluded from the decomposition
    require(x[j] != 0.0, "product decomposition needs every x_j != 0");
    v *= two_point_line_integral(0.5 * (1.0 + betas[j]), std::abs(x[j]), quad_tol / spec.dim);
  }
  return v;
}

double riesz_fourier_constant(double beta, int dim, double quad_tol) {
  require(beta > 0.0 && beta < dim, "riesz_fourier_constant needs 0 < beta < dim");
  // |x|^{-beta} = Gamma(beta/2)^{-1} int_0^inf t^{beta/2-1} e^{-t|x|^2} dt and the
  // transform of e^{-t|x|^2} is (pi/t)^{d/2} e^{-pi^2 |xi|^2 / t}; evaluate at
  // |xi| = 1 and integrate in u = 1/t, where the tail decays exponentially.
  const double c = 0.5 * (dim - beta) - 1.0;
  auto f = [&](double u) {
    if (u <= 0.0) return 0.0;
    return std::exp(c * std::log(u) - std::numbers::pi * std::numbers::pi * u);
  };
  const double integral = quad::finite([&](double u, double) { return f(u); }, 0.0, 1.0, quad_tol * 0.1) +
                          quad::half_line(f, 1.0, quad_tol * 0.1);
  return std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * beta) * integral;
}

KernelConstants compute_constants(const NoiseSpec& spec, double quad_tol) {
  require(quad_tol > 0.0, "quad_tol must be positive");
  spec.validate();
  KernelConstants kc;
  if (spec.beta0 == 0.0) {
    kc.flat_time = true;
    kc.C0 = 1.0;
    kc.mu0_density_const = 0.0;
  } else {
    kc.C0 = 1.0 / temporal_decomposition_integral(spec.beta0, 1.0, 0.0, quad_tol);
    kc.mu0_density_const = riesz_fourier_constant(spec.beta0, 1, quad_tol);
  }
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    if (r->beta == 0.0) {
      kc.flat_space = true;
      kc.C_gamma = 1.0;
      kc.mu_density_const = {0.0};
    } else {
      std::vector<double> e(spec.dim, 0.0);
      e[0] = 1.0;
      kc.C_gamma = 1.0 / spatial_decomposition_integral(spec, e, quad_tol);
      kc.mu_density_const = {riesz_fourier_constant(r->beta, spec.dim, quad_tol)};
    }
  } else {
    const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
    kc.flat_space = std::all_of(betas.begin(), betas.end(), [](double b) { return b == 0.0; });
    std::vector<double> ones(spec.dim, 1.0);
    kc.C_gamma = kc.flat_space ? 1.0 : 1.0 / spatial_decomposition_integral(spec, ones, quad_tol);
    for (double b : betas) kc.mu_density_const.push_back(b == 0.0 ? 0.0 : riesz_fourier_constant(b, 1, quad_tol));
  }
  return kc;
}

double mu_density(const NoiseSpec& spec, const KernelConstants& kc, std::span<const double> xi) {
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    if (r->beta == 0.0) return 0.0;
    const double n = norm(xi);
    return n == 0.0 ? kInf : kc.mu_density_const[0] * std::pow(n, r->beta - spec.dim);
  }
  const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
  double v = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    if (betas[j] == 0.0) return 0.0;
    const double a = std::abs(xi[j]);
    if (a == 0.0) return kInf;
    v *= kc.mu_density_const[j] * std::pow(a, betas[j] - 1.0);
  }
  return v;
}

double mu0_density(const NoiseSpec& spec, const KernelConstants& kc, double tau) {
  if (spec.beta0 == 0.0) return 0.0;
  const double a = std::abs(tau);
  return a == 0.0 ? kInf : kc.mu0_density_const * std::pow(a, spec.beta0 - 1.0);
}

SpectralConstants spectral_constants(const NoiseSpec& spec, double quad_tol) {
  spec.validate();
  SpectralConstants sc;
  if (spec.beta0 > 0.0) sc.mu0 = riesz_fourier_constant(spec.beta0, 1, quad_tol);
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    sc.mu = {r->beta > 0.0 ? riesz_fourier_constant(r->beta, spec.dim, quad_tol) : 0.0};
  } else {
    for (double b : std::get<ProductKernel>(spec.spatial).betas) {
      sc.mu.push_back(b > 0.0 ? riesz_fourier_constant(b, 1, quad_tol) : 0.0);
    }
  }
  return sc;
}

namespace {

// Mass of c |x|^{b-1} dx on the 1-d cell at index i.
double line_cell_mass(double c, double b, int i, double h) {
  if (c == 0.0) return i == 0 ? 1.0 : 0.0;
  if (i == 0) return 2.0 * c * std::pow(0.5 * h, b) / b;
  const double k = std::abs(i);
  return c * std::pow(h, b) * (std::pow(k + 0.5, b) - std::pow(k - 0.5, b)) / b;
}

// int over [-a, a]^d of |x|^{beta - d}: the shell between the cube and its
// half is smooth, and the homogeneity gives int_C = int_{C \ C/2} / (1 - 2^{-beta}).
double riesz_zero_cell(double beta, int dim, double a) {
  auto f = [&](const double* x) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) s += x[c] * x[c];
    return std::pow(s, 0.5 * (beta - dim));
  };
  const double cuts[4] = {-a, -0.5 * a, 0.5 * a, a};
  int boxes = 1;
  for (int c = 0; c < dim; ++c) boxes *= 3;
  std::vector<double> lo(dim), hi(dim);
  double shell = 0.0;
  for (int b = 0; b < boxes; ++b) {
    int r = b;
    bool centre = true;
    for (int c = 0; c < dim; ++c) {
      const int k = r % 3;
      r /= 3;
      lo[c] = cuts[k];
      hi[c] = cuts[k + 1];
      if (k != 1) centre = false;
    }
    if (!centre) shell += quad::gauss_box(f, dim, lo.data(), hi.data());
  }
  return shell / (1.0 - std::pow(2.0, -beta));
}

}  // namespace

double mu0_cell_mass(const NoiseSpec& spec, const SpectralConstants& sc, int index, double spacing) {
  return line_cell_mass(sc.mu0, spec.beta0, index, spacing);
}

double mu_cell_mass(const NoiseSpec& spec, const SpectralConstants& sc, std::span<const int> index,
                    double spacing) {
  if (const auto* r = std::get_if<RieszKernel>(&spec.spatial)) {
    const bool origin = std::all_of(index.begin(), index.end(), [](int k) { return k == 0; });
    if (sc.mu[0] == 0.0) return origin ? 1.0 : 0.0;
    if (spec.dim == 1) return line_cell_mass(sc.mu[0], r->beta, index[0], spacing);
    if (origin) return sc.mu[0] * riesz_zero_cell(r->beta, spec.dim, 0.5 * spacing);
    const int reach = *std::max_element(index.begin(), index.end(), [](int a, int b) { return std::abs(a) < std::abs(b); });
    if (std::abs(reach) <= 3) {
      // Near the singularity the density varies across the cell.
      auto f = [&](const double* x) {
        double s2 = 0.0;
        for (int c = 0; c < spec.dim; ++c) s2 += x[c] * x[c];
        return std::pow(s2, 0.5 * (r->beta - spec.dim));
      };
      std::vector<double> lo(spec.dim), hi(spec.dim);
      for (int c = 0; c < spec.dim; ++c) {
        lo[c] = (index[c] - 0.5) * spacing;
        hi[c] = (index[c] + 0.5) * spacing;
      }
      return sc.mu[0] * quad::gauss_box(f, spec.dim, lo.data(), hi.data());
    }
    double k2 = 0.0;
    for (int k : index) k2 += static_cast<double>(k) * k;
    return sc.mu[0] * std::pow(std::sqrt(k2) * spacing, r->beta - spec.dim) * std::pow(spacing, spec.dim);
  }
  const auto& betas = std::get<ProductKernel>(spec.spatial).betas;
  double m = 1.0;
  for (std::size_t j = 0; j < betas.size(); ++j) m *= line_cell_mass(sc.mu[j], betas[j], index[j], spacing);
  return m;
}

}  // namespace fpam
