#pragma once

#include <span>
#include <string_view>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace fpam {

// Spatial covariance |x|^{-beta}, beta in [0, d).
struct RieszKernel {
  double beta = 0.0;
  bool operator==(const RieszKernel&) const = default;
};

// Spatial covariance prod_j |x_j|^{-beta_j}, each beta_j in [0, 1).
struct ProductKernel {
  std::vector<double> betas;
  bool operator==(const ProductKernel&) const = default;
};

using SpatialKernel = std::variant<RieszKernel, ProductKernel>;

// Parameters of the space-time Gaussian noise together with the stability
// index of the driving process. Covariance is |r-s|^{-beta0} gamma(x-y).
struct NoiseSpec {
  double alpha = 2.0;
  double beta0 = 0.0;
  SpatialKernel spatial = RieszKernel{};
  int dim = 1;

  // beta for Riesz, sum of betas for Product.
  [[nodiscard]] double beta() const;
  [[nodiscard]] bool is_riesz() const { return std::holds_alternative<RieszKernel>(spatial); }

  // Throws Error(InvalidArgument) when a parameter is out of range.
  void validate() const;

  static NoiseSpec riesz(double alpha, double beta0, double beta, int dim);
  static NoiseSpec product(double alpha, double beta0, std::vector<double> betas);

  bool operator==(const NoiseSpec&) const = default;
};

void to_json(nlohmann::json& j, const NoiseSpec& spec);
void from_json(const nlohmann::json& j, NoiseSpec& spec);

// Solvability regime from the Dalang-type conditions.
enum class Regime { None, SkorohodOnly, Full };

std::string_view to_string(Regime r);

// Full iff alpha*beta0 + beta < alpha; SkorohodOnly iff beta < alpha <= alpha*beta0 + beta.
Regime dalang_check(const NoiseSpec& spec);

// gamma(x); returns +infinity at the singular set.
double gamma_eval(const NoiseSpec& spec, std::span<const double> x);

// |u|^{-beta0}; identically 1 when beta0 == 0.
double temporal_eval(const NoiseSpec& spec, double u);

// Square-root kernel K with gamma = C_gamma * (K * K).
double K_eval(const NoiseSpec& spec, std::span<const double> x);

// Smooth cutoff: 1 on [0,1], 0 on [2,inf), exp(1 - 1/(1-(u-1)^2)) in between.
double bump(double u);

// |u|^{-(1+beta0)/2} * bump(|u|/A) * (1 - bump(|u|/a)), requires 0 < a < A.
double truncated_time_kernel(const NoiseSpec& spec, double A, double a, double u);

// K(x) * bump(|x|/B) * (1 - bump(|x|/b)), requires 0 < b < B.
double truncated_space_kernel(const NoiseSpec& spec, double B, double b, std::span<const double> x);

struct KernelConstants {
  // beta0 == 0: the temporal kernel is constant and has no square-root
  // decomposition; C0 is then unused (set to 1) and mu0 is a unit point mass.
  bool flat_time = false;
  // beta == 0 (Riesz) likewise: gamma == 1, mu is a unit point mass.
  bool flat_space = false;
  double C0 = 1.0;
  double C_gamma = 1.0;
  double mu0_density_const = 0.0;
  // One entry for Riesz (C_{beta,d}); one entry per coordinate for Product.
  // A zero entry marks a coordinate whose spectral measure is a point mass.
  std::vector<double> mu_density_const;
};

// Computes the decomposition and spectral-density constants by adaptive
// quadrature. Throws Error(NonConvergent) if quadrature misses quad_tol.
KernelConstants compute_constants(const NoiseSpec& spec, double quad_tol);

// int_R |s-u|^{-(1+beta0)/2} |r-u|^{-(1+beta0)/2} du by adaptive quadrature.
double temporal_decomposition_integral(double beta0, double s, double r, double quad_tol);

// int_{R^d} K(y-x) K(y) dy by adaptive quadrature (polar coordinates for
// Riesz with d >= 2, coordinate factorization for Product).
double spatial_decomposition_integral(const NoiseSpec& spec, std::span<const double> x, double quad_tol);

// Constant c with int e^{-2 pi i xi.x} |x|^{-beta} dx = c |xi|^{beta-d} in R^d,
// from the Gaussian-mixture representation of |x|^{-beta}.
double riesz_fourier_constant(double beta, int dim, double quad_tol);

// mu-density at frequency xi under the e^{-2 pi i x.xi} transform, +inf at the singular set.
double mu_density(const NoiseSpec& spec, const KernelConstants& kc, std::span<const double> xi);

// mu0-density at tau.
double mu0_density(const NoiseSpec& spec, const KernelConstants& kc, double tau);

// Spectral-density constants only (cheap; no decomposition integrals).
// A zero entry marks a point-mass coordinate (or the whole measure for Riesz).
struct SpectralConstants {
  double mu0 = 0.0;
  std::vector<double> mu;
};

SpectralConstants spectral_constants(const NoiseSpec& spec, double quad_tol);

// mu0 mass of the cell [(i - 1/2) h, (i + 1/2) h], exact.
double mu0_cell_mass(const NoiseSpec& spec, const SpectralConstants& sc, int index, double spacing);

// mu mass of the cube of side h centred at index * h: exact in one dimension
// and for product kernels; tensor Gauss-Legendre near the origin and the
// midpoint rule further out for Riesz kernels in d >= 2.
double mu_cell_mass(const NoiseSpec& spec, const SpectralConstants& sc, std::span<const int> index,
                    double spacing);

}  // namespace fpam
