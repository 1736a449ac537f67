#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpam/functionals.hpp"
#include "fpam/kernels.hpp"
#include "fpam/spectral.hpp"

namespace fpam {

struct ExperimentConfig {
  NoiseSpec spec;
  double p = 2.0;
  double rho = 1.0;
  std::vector<double> t_grid;
  int n_replicas = 1000;
  int n_steps = 64;
  std::uint64_t master_seed = 0;
  QuadratureRule rule;
  int threads = 0;  // 0 = hardware concurrency; never affects results

  void validate() const;
  // p as a moment count; throws InvalidArgument unless p is a positive integer.
  [[nodiscard]] int integer_p() const;
};

// threads is run-time only and is not serialized.
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct EstimateRecord {
  std::string kind;
  ExperimentConfig config;
  nlohmann::json params;  // operation arguments (t, theta, ...)
  double point_estimate = 0.0;
  double stderr_ = 0.0;
  double log_estimate = 0.0;
  double log_stderr = 0.0;
  double effective_sample_size = 0.0;
  int n_replicas = 0;
  double wall_time = 0.0;  // seconds; kept out of the serialized record
};

// Deterministic serialization (no wall time).
void to_json(nlohmann::json& j, const EstimateRecord& r);
void from_json(const nlohmann::json& j, EstimateRecord& r);

// Summary of a sample of log-weights l_i = log w_i.
struct LogMeanSummary {
  double log_mean = 0.0;     // log (1/n) sum w_i
  double rel_stderr = 0.0;   // stderr of the mean divided by the mean
  double ess = 0.0;          // (sum w)^2 / sum w^2
};

LogMeanSummary summarize_log_weights(std::span<const double> log_w);

// Seed of path j in replica r.
std::uint64_t replica_seed(std::uint64_t master, int replica, int path);

// Self-Hamiltonians of n_replicas independent paths on [0, t].
std::vector<double> sample_self_hamiltonians(const ExperimentConfig& config, double t);

// E exp(theta H) over [0, t]; requires the Full regime.
EstimateRecord exp_moment(const ExperimentConfig& config, double theta, double t);

// One record per theta, all on the same Hamiltonian sample.
std::vector<EstimateRecord> exp_moment_sweep(const ExperimentConfig& config, std::span<const double> thetas,
                                             double t);

// E exp(n_moment_exponent) with n = config.p paths per replica.
EstimateRecord moment_u_rho(const ExperimentConfig& config, double t);

struct LyapunovPoint {
  double t = 0.0;
  double log_estimate = 0.0;
  double stderr_ = 0.0;
  double ess = 0.0;
  int n_replicas = 0;
};

struct LyapunovFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double chi = 0.0;
  double normalized_slope = 0.0;  // slope / p, comparable with lyapunov_prediction
  int n_used = 0;
  std::vector<std::string> warnings;
};

// (2 alpha - beta - alpha beta0) / (alpha - beta).
double lyapunov_chi(const NoiseSpec& spec);

// t^chi (p - rho)^{alpha/(alpha-beta)}.
double t_p(const NoiseSpec& spec, double t, double p, double rho);

// Weighted least squares of log_estimate against t^chi. Points with
// ess < 1% of n_replicas are dropped with a warning. Throws IllConditioned
// with fewer than 3 usable horizons or a horizon span below a factor 2.
LyapunovFit lyapunov_fit(std::span<const LyapunovPoint> records, const NoiseSpec& spec, double p, double rho);

// Test function on the lattice (tau_spacing * i, xi_spacing * k), k in Z^d.
struct LatticeTestFunction {
  struct Mode {
    int tau = 0;
    std::vector<int> xi;
    std::complex<double> value;
  };
  double tau_spacing = 1.0;
  double xi_spacing = 1.0;
  int dim = 1;
  std::vector<Mode> modes;

  // Throws AsymmetricInput unless h(-tau, -xi) = conj h(tau, xi) within tol.
  void check_hermitian(double tol = 1e-12) const;
};

void to_json(nlohmann::json& j, const LatticeTestFunction& h);
void from_json(const nlohmann::json& j, LatticeTestFunction& h);

// Cell masses of mu0 (x) mu at the modes of h.
std::vector<double> lattice_weights(const LatticeTestFunction& h, const NoiseSpec& spec, double quad_tol = 1e-10);

// sum |h|^2 mu0-mass mu-mass.
double lattice_norm2(const LatticeTestFunction& h, const NoiseSpec& spec);

// Real part of sum e^{-2 pi i (tau s + xi.x)} h mu0-mass mu-mass.
double lattice_transform(const LatticeTestFunction& h, std::span<const double> weights, double s,
                         std::span<const double> x);

// E exp(int_0^t (F h)(s, X_s) ds - |h|^2 / (2 (p - rho))) with the time
// integral by the midpoint rule.
EstimateRecord variational_lower_bound_mc(const LatticeTestFunction& h, const ExperimentConfig& config, double t);

// (1/t) log E exp(int_0^t f(s/t, X^M_s) ds) on the torus of period f.grid.M.
// point_estimate and stderr are on the (1/t) log scale.
EstimateRecord fk_limit_mc(const SliceFamily& f, double t, const ExperimentConfig& config);

}  // namespace fpam
