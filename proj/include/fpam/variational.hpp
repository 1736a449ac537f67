#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "fpam/kernels.hpp"
#include "fpam/spectral.hpp"

namespace fpam {

// g(s_i, x) on n_t time cells of [0,1] (cell i is [i/n_t, (i+1)/n_t)) over a
// periodic box. Each slice is normalized: h^d sum_x g^2 = 1.
struct SpaceTimeField {
  TorusGrid grid;
  int n_t = 1;
  std::vector<double> values;  // slice-major

  [[nodiscard]] std::span<double> slice(int i) {
    return {values.data() + static_cast<std::size_t>(i) * grid.size(), grid.size()};
  }
  [[nodiscard]] std::span<const double> slice(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * grid.size(), grid.size()};
  }
  // Largest |h^d sum g_i^2 - 1| over slices.
  [[nodiscard]] double normalization_error() const;
  // Rescales every slice to unit norm.
  void normalize();
};

struct VariationalOptions {
  TorusGrid grid{16.0, 128, 1};
  int n_t = 16;
  double theta = 1.0;    // kernel scale: gamma -> theta * gamma
  double c_conv = -1.0;  // negative selects default_c_conv(alpha)
  double step = 1e-2;
  int max_iter = 5000;
  double tol = 1e-8;
  int restarts = 4;
  std::uint64_t seed = 0;
  double ceiling = 1e8;
  int threads = 0;
};

void to_json(nlohmann::json& j, const VariationalOptions& o);
void from_json(const nlohmann::json& j, VariationalOptions& o);

struct VariationalResult {
  double M_estimate = 0.0;
  SpaceTimeField field;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  int best_restart = 0;
  std::vector<double> restart_values;
};

// Result summary without the field values.
void to_json(nlohmann::json& j, const VariationalResult& r);

// Discretized functional
//   1/2 sum_ij T_ij sum_k m(k) u^_i(k) conj u^_j(k)  -  ds sum_i E(g_i),   u_i = g_i^2,
// with T_ij the exact cell integrals of |r-s|^{-beta0}, m(k) the mu-mass of
// the lattice cell at k/M (times theta) and E the torus Dirichlet form.
// Holds FFT workspaces: one instance per thread.
class VariationalProblem {
 public:
  VariationalProblem(NoiseSpec spec, TorusGrid grid, int n_t, double theta = 1.0, double c_conv = -1.0);

  // Throws NotNormalized if a slice is off the unit sphere by more than 1e-10.
  [[nodiscard]] double evaluate(const SpaceTimeField& g);

  struct Parts {
    double interaction = 0.0;
    double energy = 0.0;
  };
  // No normalization check; used for finite differences.
  [[nodiscard]] Parts evaluate_parts(std::span<const double> values);
  [[nodiscard]] double evaluate_raw(std::span<const double> values) {
    const auto p = evaluate_parts(values);
    return p.interaction - p.energy;
  }

  // L^2(h^d) gradient: d/d eps F(g + eps v) = h^d sum grad * v.
  void gradient(std::span<const double> values, std::span<double> grad);

  // (c0 + psi_k)^{-1} applied slice-wise in Fourier space.
  void precondition(std::span<const double> in, std::span<double> out, double c0);

  // Potential V_i = sum_j T_ij (Gamma u_j) / ds of the last gradient() call.
  [[nodiscard]] double last_potential_max() const { return potential_max_; }

  [[nodiscard]] const TorusGrid& grid() const { return grid_; }
  [[nodiscard]] int n_t() const { return n_t_; }
  [[nodiscard]] double time_weight(int i, int j) const { return T_[static_cast<std::size_t>(i) * n_t_ + j]; }
  [[nodiscard]] std::span<const double> spectral_weights() const { return m_; }

 private:
  void transform_all(std::span<const double> values);

  NoiseSpec spec_;
  TorusGrid grid_;
  int n_t_;
  double ds_;
  std::vector<double> T_;
  std::vector<double> m_;
  std::vector<double> psi_;
  Dft dft_;
  std::vector<cplx> g_hat_;
  std::vector<cplx> u_hat_;
  std::vector<cplx> w_hat_;
  std::vector<double> scratch_;
  double potential_max_ = 0.0;
};

double functional_eval(const SpaceTimeField& g, const NoiseSpec& spec, double theta = 1.0, double c_conv = -1.0);

// Preconditioned projected gradient ascent with backtracking; best of
// opts.restarts random starts. Throws RegimeMismatch outside the Full
// regime and Diverged if the value exceeds opts.ceiling.
VariationalResult maximize_M(const NoiseSpec& spec, const VariationalOptions& opts);

// The same ascent on a single time slice carrying the full time coupling.
VariationalResult stationary_M(const NoiseSpec& spec, const VariationalOptions& opts);

// (beta/(alpha-beta)) ((alpha-beta)/(2 alpha))^{alpha/beta} M^{(beta-alpha)/beta}.
double critical_constant(const NoiseSpec& spec, double M_value);

// (p - rho)^{alpha/(alpha-beta)} M.
double lyapunov_prediction(const NoiseSpec& spec, double p, double rho, double M_value);

}  // namespace fpam
