#include "fpam/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "fpam/error.hpp"
#include "fpam/parallel.hpp"
#include "fpam/rng.hpp"
#include "fpam/stable_process.hpp"
#include "fpam/stats.hpp"

namespace fpam {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

PathSpec path_spec(const ExperimentConfig& c, double t, int n_steps, std::uint64_t seed) {
  PathSpec ps;
  ps.dim = c.spec.dim;
  ps.alpha = c.spec.alpha;
  ps.horizon = t;
  ps.n_steps = n_steps;
  ps.seed = seed;
  return ps;
}

EstimateRecord make_record(std::string kind, const ExperimentConfig& c, nlohmann::json params,
                           std::span<const double> log_w) {
  const auto s = summarize_log_weights(log_w);
  EstimateRecord r;
  r.kind = std::move(kind);
  r.config = c;
  r.params = std::move(params);
  r.log_estimate = s.log_mean;
  r.point_estimate = std::exp(s.log_mean);
  r.log_stderr = s.rel_stderr;
  r.stderr_ = r.point_estimate * s.rel_stderr;
  r.effective_sample_size = s.ess;
  r.n_replicas = static_cast<int>(log_w.size());
  return r;
}

void require_positive_t(double t) {
  if (!(t > 0.0)) throw Error(ErrorKind::InvalidArgument, "t must be positive");
}

// Midpoint-rule time integral of F(s, X_s) over [0, t]: the path is sampled
// on a doubled grid and evaluated at the odd points.
template <class F>
double midpoint_integral(const Path& path, double t, F&& f) {
  const int n = path.n_steps() / 2;
  const double h = t / n;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += f((k + 0.5) * h, path.at(2 * k + 1));
  return h * sum;
}

}  // namespace

void ExperimentConfig::validate() const {
  spec.validate();
  rule.validate();
  if (!(p >= 1.0)) throw Error(ErrorKind::InvalidArgument, "p must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1]");
  if (n_replicas < 1) throw Error(ErrorKind::InvalidArgument, "n_replicas must be positive");
  if (n_steps < 1) throw Error(ErrorKind::InvalidArgument, "n_steps must be positive");
  for (double t : t_grid) {
    if (!(t > 0.0)) throw Error(ErrorKind::InvalidArgument, "t_grid entries must be positive");
  }
}

int ExperimentConfig::integer_p() const {
  if (p < 1.0 || p != std::floor(p)) {
    throw Error(ErrorKind::InvalidArgument, "Monte Carlo moments need a positive integer p");
  }
  return static_cast<int>(p);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"spec", c.spec},         {"p", c.p},
                     {"rho", c.rho},           {"t_grid", c.t_grid},
                     {"n_replicas", c.n_replicas}, {"n_steps", c.n_steps},
                     {"master_seed", c.master_seed}, {"rule", c.rule}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  c.spec = j.at("spec").get<NoiseSpec>();
  if (j.contains("p")) c.p = j.at("p").get<double>();
  if (j.contains("rho")) c.rho = j.at("rho").get<double>();
  if (j.contains("t_grid")) c.t_grid = j.at("t_grid").get<std::vector<double>>();
  if (j.contains("n_replicas")) c.n_replicas = j.at("n_replicas").get<int>();
  if (j.contains("n_steps")) c.n_steps = j.at("n_steps").get<int>();
  if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("rule")) c.rule = j.at("rule").get<QuadratureRule>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
}

void to_json(nlohmann::json& j, const EstimateRecord& r) {
  j = nlohmann::json{{"kind", r.kind},
                     {"config", r.config},
                     {"params", r.params},
                     {"point_estimate", r.point_estimate},
                     {"stderr", r.stderr_},
                     {"log_estimate", r.log_estimate},
                     {"log_stderr", r.log_stderr},
                     {"effective_sample_size", r.effective_sample_size},
                     {"n_replicas", r.n_replicas},
                     {"seeds", {{"master", r.config.master_seed}, {"scheme", "derive_seed(master, [replica, path])"}}}};
}

void from_json(const nlohmann::json& j, EstimateRecord& r) {
  r = EstimateRecord{};
  r.kind = j.at("kind").get<std::string>();
  r.config = j.at("config").get<ExperimentConfig>();
  r.params = j.at("params");
  r.point_estimate = j.at("point_estimate").get<double>();
  r.stderr_ = j.at("stderr").get<double>();
  r.log_estimate = j.at("log_estimate").get<double>();
  r.log_stderr = j.at("log_stderr").get<double>();
  r.effective_sample_size = j.at("effective_sample_size").get<double>();
  r.n_replicas = j.at("n_replicas").get<int>();
}

LogMeanSummary summarize_log_weights(std::span<const double> log_w) {
  const std::size_t n = log_w.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "empty sample");
  LogMeanSummary s;
  const double lse = stats::log_sum_exp(log_w);
  s.log_mean = lse - std::log(static_cast<double>(n));
  std::vector<double> dev(n);
  std::vector<double> twice(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::exp(log_w[i] - s.log_mean) - 1.0;
    dev[i] = r * r;
    twice[i] = 2.0 * log_w[i];
  }
  if (n > 1) {
    const double var = stats::pairwise_sum(dev) / static_cast<double>(n - 1);
    s.rel_stderr = std::sqrt(var / static_cast<double>(n));
  }
  s.ess = std::exp(2.0 * lse - stats::log_sum_exp(twice));
  s.ess = std::min(s.ess, static_cast<double>(n));
  return s;
}

std::uint64_t replica_seed(std::uint64_t master, int replica, int path) {
  return derive_seed(master, {static_cast<std::uint64_t>(replica), static_cast<std::uint64_t>(path)});
}

std::vector<double> sample_self_hamiltonians(const ExperimentConfig& config, double t) {
  config.validate();
  require_positive_t(t);
  if (dalang_check(config.spec) != Regime::Full) {
    throw Error(ErrorKind::RegimeMismatch, "self-Hamiltonians need the Full regime (alpha*beta0 + beta < alpha)");
  }
  const HamiltonianEvaluator eval(config.spec, config.rule);
  return parallel_map<double>(config.n_replicas, config.threads, [&](int r) {
    const Path path = sample_path(path_spec(config, t, config.n_steps, replica_seed(config.master_seed, r, 0)));
    return eval.evaluate(path, path).H;
  });
}

EstimateRecord exp_moment(const ExperimentConfig& config, double theta, double t) {
  const double thetas[1] = {theta};
  return exp_moment_sweep(config, thetas, t).front();
}

std::vector<EstimateRecord> exp_moment_sweep(const ExperimentConfig& config, std::span<const double> thetas,
                                             double t) {
  for (double th : thetas) {
    if (!(th > 0.0)) throw Error(ErrorKind::InvalidArgument, "theta must be positive");
  }
  const auto start = Clock::now();
  const auto H = sample_self_hamiltonians(config, t);
  std::vector<EstimateRecord> out;
  std::vector<double> log_w(H.size());
  for (double th : thetas) {
    for (std::size_t i = 0; i < H.size(); ++i) log_w[i] = th * H[i];
    out.push_back(make_record("exp_moment", config, {{"t", t}, {"theta", th}}, log_w));
  }
  const double wall = seconds_since(start);
  for (auto& r : out) r.wall_time = wall;
  return out;
}

EstimateRecord moment_u_rho(const ExperimentConfig& config, double t) {
  const auto start = Clock::now();
  config.validate();
  require_positive_t(t);
  const int n = config.integer_p();
  const Regime regime = dalang_check(config.spec);
  const bool needs_diagonal = config.rho < 1.0;
  if (regime == Regime::None || (needs_diagonal && regime != Regime::Full)) {
    throw Error(ErrorKind::RegimeMismatch, std::string("moment needs ") +
                                               (needs_diagonal ? "the Full regime for rho < 1" : "beta < alpha") +
                                               "; regime is " + std::string(to_string(regime)));
  }
  std::vector<double> log_w;
  if (n == 1 && !needs_diagonal) {
    log_w.assign(static_cast<std::size_t>(config.n_replicas), 0.0);
  } else {
    const HamiltonianEvaluator eval(config.spec, config.rule);
    log_w = parallel_map<double>(config.n_replicas, config.threads, [&](int r) {
      std::vector<Path> paths;
      paths.reserve(n);
      for (int j = 0; j < n; ++j) {
        paths.push_back(sample_path(path_spec(config, t, config.n_steps, replica_seed(config.master_seed, r, j))));
      }
      return n_moment_exponent(paths, eval, config.rho);
    });
  }
  auto rec = make_record("moment", config, {{"t", t}, {"n", n}}, log_w);
  rec.wall_time = seconds_since(start);
  return rec;
}

double lyapunov_chi(const NoiseSpec& spec) {
  const double a = spec.alpha;
  const double b = spec.beta();
  if (!(b < a)) throw Error(ErrorKind::InvalidArgument, "chi needs beta < alpha");
  return (2.0 * a - b - a * spec.beta0) / (a - b);
}

double t_p(const NoiseSpec& spec, double t, double p, double rho) {
  if (!(p > rho)) throw Error(ErrorKind::InvalidArgument, "t_p needs p > rho");
  const double a = spec.alpha;
  return std::pow(t, lyapunov_chi(spec)) * std::pow(p - rho, a / (a - spec.beta()));
}

LyapunovFit lyapunov_fit(std::span<const LyapunovPoint> records, const NoiseSpec& spec, double p, double rho) {
  (void)rho;
  LyapunovFit fit;
  fit.chi = lyapunov_chi(spec);
  std::vector<const LyapunovPoint*> used;
  for (const auto& r : records) {
    if (r.n_replicas > 0 && r.ess < 0.01 * r.n_replicas) {
      fit.warnings.push_back("t = " + std::to_string(r.t) + " dropped: effective sample size below 1% of replicas");
      continue;
    }
    used.push_back(&r);
  }
  if (used.size() < 3) throw Error(ErrorKind::IllConditioned, "lyapunov_fit needs at least 3 usable horizons");
  double tmin = used.front()->t;
  double tmax = tmin;
  for (const auto* r : used) {
    tmin = std::min(tmin, r->t);
    tmax = std::max(tmax, r->t);
  }
  if (!(tmin > 0.0) || tmax < 2.0 * tmin) {
    throw Error(ErrorKind::IllConditioned, "lyapunov_fit needs horizons spanning at least a factor 2");
  }
  const bool weighted = std::all_of(used.begin(), used.end(), [](const auto* r) { return r->stderr_ > 0.0; });
  std::vector<double> x, y, w;
  for (const auto* r : used) {
    x.push_back(std::pow(r->t, fit.chi));
    y.push_back(r->log_estimate);
    w.push_back(weighted ? 1.0 / (r->stderr_ * r->stderr_) : 1.0);
  }
  const auto lf = stats::weighted_linear_fit(x, y, w);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.r2 = lf.r2;
  fit.normalized_slope = lf.slope / p;
  fit.n_used = static_cast<int>(used.size());
  return fit;
}

void LatticeTestFunction::check_hermitian(double tol) const {
  for (const auto& m : modes) {
    if (static_cast<int>(m.xi.size()) != dim) throw Error(ErrorKind::InvalidArgument, "mode dimension mismatch");
    std::complex<double> partner(0.0, 0.0);
    for (const auto& q : modes) {
      if (q.tau != -m.tau) continue;
      bool match = true;
      for (int c = 0; c < dim; ++c) match = match && q.xi[c] == -m.xi[c];
      if (match) partner += q.value;
    }
    if (std::abs(partner - std::conj(m.value)) > tol) {
      throw Error(ErrorKind::AsymmetricInput, "test function violates h(-tau, -xi) = conj h(tau, xi)");
    }
  }
}

void to_json(nlohmann::json& j, const LatticeTestFunction& h) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : h.modes) {
    modes.push_back({{"tau", m.tau}, {"xi", m.xi}, {"re", m.value.real()}, {"im", m.value.imag()}});
  }
  j = nlohmann::json{{"tau_spacing", h.tau_spacing}, {"xi_spacing", h.xi_spacing}, {"dim", h.dim}, {"modes", modes}};
}

void from_json(const nlohmann::json& j, LatticeTestFunction& h) {
  h = LatticeTestFunction{};
  h.tau_spacing = j.at("tau_spacing").get<double>();
  h.xi_spacing = j.at("xi_spacing").get<double>();
  h.dim = j.at("dim").get<int>();
  for (const auto& m : j.at("modes")) {
    h.modes.push_back({m.at("tau").get<int>(), m.at("xi").get<std::vector<int>>(),
                       {m.at("re").get<double>(), m.value("im", 0.0)}});
  }
}

std::vector<double> lattice_weights(const LatticeTestFunction& h, const NoiseSpec& spec, double quad_tol) {
  if (h.dim != spec.dim) throw Error(ErrorKind::InvalidArgument, "test function and spec dimensions differ");
  if (!(h.tau_spacing > 0.0 && h.xi_spacing > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "lattice spacings must be positive");
  }
  const auto sc = spectral_constants(spec, quad_tol);
  std::vector<double> w;
  w.reserve(h.modes.size());
  for (const auto& m : h.modes) {
    w.push_back(mu0_cell_mass(spec, sc, m.tau, h.tau_spacing) * mu_cell_mass(spec, sc, m.xi, h.xi_spacing));
  }
  return w;
}

double lattice_norm2(const LatticeTestFunction& h, const NoiseSpec& spec) {
  const auto w = lattice_weights(h, spec);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += std::norm(h.modes[i].value) * w[i];
  return s;
}

double lattice_transform(const LatticeTestFunction& h, std::span<const double> weights, double s,
                         std::span<const double> x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double out = 0.0;
  for (std::size_t i = 0; i < h.modes.size(); ++i) {
    const auto& m = h.modes[i];
    if (weights[i] == 0.0) continue;
    double phase = m.tau * h.tau_spacing * s;
    for (int c = 0; c < h.dim; ++c) phase += m.xi[c] * h.xi_spacing * x[c];
    const std::complex<double> e(std::cos(two_pi * phase), -std::sin(two_pi * phase));
    out += weights[i] * (e * m.value).real();
  }
  return out;
}

EstimateRecord variational_lower_bound_mc(const LatticeTestFunction& h, const ExperimentConfig& config, double t) {
  const auto start = Clock::now();
  config.validate();
  require_positive_t(t);
  h.check_hermitian();
  const Regime regime = dalang_check(config.spec);
  if (!(regime == Regime::Full || (regime == Regime::SkorohodOnly && config.rho == 1.0))) {
    throw Error(ErrorKind::RegimeMismatch, "lower bound needs the Full regime, or beta < alpha with rho = 1; regime is " +
                                               std::string(to_string(regime)));
  }
  if (!(config.p > config.rho)) throw Error(ErrorKind::InvalidArgument, "lower bound needs p > rho");
  const auto weights = lattice_weights(h, config.spec);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) norm2 += std::norm(h.modes[i].value) * weights[i];
  const double penalty = norm2 / (2.0 * (config.p - config.rho));
  std::vector<double> log_w;
  if (h.modes.empty()) {
    log_w.assign(static_cast<std::size_t>(config.n_replicas), 0.0);
  } else {
    log_w = parallel_map<double>(config.n_replicas, config.threads, [&](int r) {
      const Path path =
          sample_path(path_spec(config, t, 2 * config.n_steps, replica_seed(config.master_seed, r, 0)));
      const double integral = midpoint_integral(
          path, t, [&](double s, std::span<const double> x) { return lattice_transform(h, weights, s, x); });
      return integral - penalty;
    });
  }
  auto rec = make_record("lower_bound", config, {{"t", t}, {"h", h}, {"norm2", norm2}}, log_w);
  rec.wall_time = seconds_since(start);
  return rec;
}

EstimateRecord fk_limit_mc(const SliceFamily& f, double t, const ExperimentConfig& config) {
  const auto start = Clock::now();
  config.validate();
  f.validate();
  require_positive_t(t);
  if (f.grid.dim != config.spec.dim) throw Error(ErrorKind::InvalidArgument, "field and spec dimensions differ");
  for (double v : f.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "f must be finite on its grid");
  }
  const auto log_w = parallel_map<double>(config.n_replicas, config.threads, [&](int r) {
    const Path path = sample_path(path_spec(config, t, 2 * config.n_steps, replica_seed(config.master_seed, r, 0)));
    return midpoint_integral(path, t, [&](double s, std::span<const double> x) { return f.interpolate(s / t, x); });
  });
  auto rec = make_record("fk_limit", config, {{"t", t}, {"M", f.grid.M}}, log_w);
  rec.point_estimate = rec.log_estimate / t;
  rec.stderr_ = rec.log_stderr / t;
  rec.wall_time = seconds_since(start);
  return rec;
}

}  // namespace fpam
