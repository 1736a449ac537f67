#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "fpam/kernels.hpp"
#include "fpam/stable_process.hpp"

namespace fpam {

enum class DiagonalPolicy {
  // Drop cell pairs with |a-b| < band for a self-Hamiltonian. Underestimates H.
  ExcludeBand,
  // Cell pairs with |a-b| < band carry the mean-field value
  // E[gamma(X_1)] * int int |r-s|^{-beta0-beta/alpha}; the remaining cell
  // pairs use weights built from the same local exponent.
  PowerLawCorrection,
};

struct QuadratureRule {
  int n_cells = 0;  // cells per time axis; 0 means one cell per path step
  DiagonalPolicy diagonal_policy = DiagonalPolicy::PowerLawCorrection;
  int band = 1;
  double tolerance = 1e-10;   // quadrature tolerance for the mean-field constants
  double kernel_cap = 1e12;   // off-diagonal cells above this are subdivided once, then capped

  void validate() const;
};

void to_json(nlohmann::json& j, const QuadratureRule& rule);
void from_json(const nlohmann::json& j, QuadratureRule& rule);

struct HamiltonianValue {
  double H = 0.0;
  double Z = 0.0;  // sqrt(H)
  double diagonal_correction = 0.0;
  int i = 0;
  int j = 0;
};

// E[gamma(X_1)] for the unit-time symmetric alpha-stable variable.
// alpha = 2 integrates against the Gaussian density; alpha < 2 integrates the
// spectral density of gamma against the explicit transform exp(-|2 pi xi|^alpha)
// of the stable density (Product kernels in d >= 2 use the subordinated
// Gaussian representation).
double mean_gamma_unit(const NoiseSpec& spec, double quad_tol = 1e-10);

// int_0^1 int_0^1 |m + u - v|^{-kappa} du dv for integer m >= 0, kappa < 1.
double cell_pair_weight(double kappa, int m);

// Precomputed weights and constants for repeated Hamiltonian evaluation
// with one NoiseSpec, rule and time grid size.
class HamiltonianEvaluator {
 public:
  HamiltonianEvaluator(NoiseSpec spec, QuadratureRule rule);

  // H for the pair (a, b). Self-pairs are detected by value equality.
  // Throws DivergentDiagonal for a self-pair outside the Full regime unless
  // allow_divergence is set, GridMismatch if the time grids differ.
  [[nodiscard]] HamiltonianValue evaluate(const Path& a, const Path& b, bool allow_divergence = false) const;

  [[nodiscard]] const NoiseSpec& spec() const { return spec_; }
  [[nodiscard]] const QuadratureRule& rule() const { return rule_; }
  [[nodiscard]] double mean_gamma() const { return mean_gamma_; }

 private:
  [[nodiscard]] HamiltonianValue self_pair(const Path& p, bool allow_divergence) const;
  [[nodiscard]] HamiltonianValue cross_pair(const Path& a, const Path& b) const;
  [[nodiscard]] double kernel(const double* x, const double* y) const;

  NoiseSpec spec_;
  QuadratureRule rule_;
  Regime regime_;
  double mean_gamma_ = 1.0;
  double origin_cell_ = 1.0;  // int_0^1 int_0^1 |u-v|^{-beta0} (u+v)^{-beta/alpha}
};

HamiltonianValue hamiltonian(const Path& path_i, const Path& path_j, const NoiseSpec& spec,
                             const QuadratureRule& rule, bool allow_divergence = false);

// E int_0^t int_0^t |r-s|^{-beta0} gamma(X_r - X_s) dr ds; requires the Full regime.
double expected_H(const NoiseSpec& spec, double t);

// 1/2 sum_{j,k} H_jk - rho/2 sum_j H_jj. With rho == 1 the diagonal terms are
// never evaluated, so SkorohodOnly specs are accepted.
double n_moment_exponent(std::span<const Path> paths, const NoiseSpec& spec, double rho,
                         const QuadratureRule& rule);
double n_moment_exponent(std::span<const Path> paths, const HamiltonianEvaluator& eval, double rho);

struct ScalingSamples {
  std::vector<double> H_at;      // H over [0, a t]
  std::vector<double> H_scaled;  // a^{2 - beta/alpha - beta0} * H over [0, t]
  double exponent = 0.0;
};

// Independent samples on both sides of the self-similarity identity; the
// caller runs the two-sample test.
ScalingSamples scaling_witness(const NoiseSpec& spec, double t, double a, int n_samples, std::uint64_t seed,
                               int n_steps = 64, const QuadratureRule& rule = {});

}  // namespace fpam
