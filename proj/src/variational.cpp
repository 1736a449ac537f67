#include "fpam/variational.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>

#include "fpam/error.hpp"
#include "fpam/functionals.hpp"
#include "fpam/parallel.hpp"
#include "fpam/rng.hpp"

namespace fpam {

double SpaceTimeField::normalization_error() const {
  const double h = grid.cell_volume();
  double worst = 0.0;
  for (int i = 0; i < n_t; ++i) {
    double s = 0.0;
    for (double v : slice(i)) s += v * v;
    worst = std::max(worst, std::abs(h * s - 1.0));
  }
  return worst;
}

void SpaceTimeField::normalize() {
  const double h = grid.cell_volume();
  for (int i = 0; i < n_t; ++i) {
    auto s = slice(i);
    double n2 = 0.0;
    for (double v : s) n2 += v * v;
    const double scale = 1.0 / std::sqrt(h * n2);
    for (double& v : s) v *= scale;
  }
}

void to_json(nlohmann::json& j, const VariationalOptions& o) {
  j = nlohmann::json{{"grid", o.grid},         {"n_t", o.n_t},       {"theta", o.theta},
                     {"c_conv", o.c_conv},     {"step", o.step},     {"max_iter", o.max_iter},
                     {"tol", o.tol},           {"restarts", o.restarts}, {"seed", o.seed},
                     {"ceiling", o.ceiling}};
}

void from_json(const nlohmann::json& j, VariationalOptions& o) {
  o = VariationalOptions{};
  if (j.contains("grid")) o.grid = j.at("grid").get<TorusGrid>();
  if (j.contains("n_t")) o.n_t = j.at("n_t").get<int>();
  if (j.contains("theta")) o.theta = j.at("theta").get<double>();
  if (j.contains("c_conv")) o.c_conv = j.at("c_conv").get<double>();
  if (j.contains("step")) o.step = j.at("step").get<double>();
  if (j.contains("max_iter")) o.max_iter = j.at("max_iter").get<int>();
  if (j.contains("tol")) o.tol = j.at("tol").get<double>();
  if (j.contains("restarts")) o.restarts = j.at("restarts").get<int>();
  if (j.contains("seed")) o.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("ceiling")) o.ceiling = j.at("ceiling").get<double>();
  if (j.contains("threads")) o.threads = j.at("threads").get<int>();
}

void to_json(nlohmann::json& j, const VariationalResult& r) {
  j = nlohmann::json{{"M_estimate", r.M_estimate},
                     {"iterations", r.iterations},
                     {"final_gradient_norm", r.final_gradient_norm},
                     {"converged", r.converged},
                     {"best_restart", r.best_restart},
                     {"restart_values", r.restart_values},
                     {"grid", r.field.grid},
                     {"n_t", r.field.n_t}};
}

VariationalProblem::VariationalProblem(NoiseSpec spec, TorusGrid grid, int n_t, double theta, double c_conv)
    : spec_(std::move(spec)), grid_(grid), n_t_(n_t), ds_(1.0 / n_t), dft_(grid) {
  spec_.validate();
  grid_.validate();
  if (n_t < 1) throw Error(ErrorKind::InvalidArgument, "n_t must be positive");
  if (grid_.dim != spec_.dim) throw Error(ErrorKind::InvalidArgument, "grid and spec dimensions differ");
  if (!(theta > 0.0)) throw Error(ErrorKind::InvalidArgument, "theta must be positive");
  const double c = c_conv < 0.0 ? default_c_conv(spec_.alpha) : c_conv;

  T_.resize(static_cast<std::size_t>(n_t) * n_t);
  const double scale = std::pow(ds_, 2.0 - spec_.beta0);
  for (int i = 0; i < n_t; ++i) {
    for (int j = 0; j < n_t; ++j) T_[static_cast<std::size_t>(i) * n_t + j] = scale * cell_pair_weight(spec_.beta0, std::abs(i - j));
  }

  const std::size_t n = grid_.size();
  m_.resize(n);
  psi_.resize(n);
  const auto sc = spectral_constants(spec_, 1e-10);
  std::vector<int> k(grid_.dim);
  for (std::size_t idx = 0; idx < n; ++idx) {
    grid_.frequency(idx, k);
    m_[idx] = theta * mu_cell_mass(spec_, sc, k, 1.0 / grid_.M);
    double k2 = 0.0;
    for (int v : k) k2 += static_cast<double>(v) * v;
    psi_[idx] = c * std::pow(grid_.M, -spec_.alpha) * std::pow(k2, 0.5 * spec_.alpha);
  }
  g_hat_.resize(n * n_t);
  u_hat_.resize(n * n_t);
  w_hat_.resize(n * n_t);
  scratch_.resize(n);
}

void VariationalProblem::transform_all(std::span<const double> values) {
  const std::size_t n = grid_.size();
  if (values.size() != n * n_t_) throw Error(ErrorKind::InvalidArgument, "field size mismatch");
  for (int i = 0; i < n_t_; ++i) {
    auto g = values.subspan(i * n, n);
    dft_.forward(g, std::span<cplx>(g_hat_).subspan(i * n, n));
    for (std::size_t x = 0; x < n; ++x) scratch_[x] = g[x] * g[x];
    dft_.forward(scratch_, std::span<cplx>(u_hat_).subspan(i * n, n));
  }
  // w_i = sum_j T_ij u^_j
  std::fill(w_hat_.begin(), w_hat_.end(), cplx(0.0, 0.0));
  for (int i = 0; i < n_t_; ++i) {
    for (int j = 0; j < n_t_; ++j) {
      const double t = T_[static_cast<std::size_t>(i) * n_t_ + j];
      const cplx* u = u_hat_.data() + j * n;
      cplx* w = w_hat_.data() + i * n;
      for (std::size_t k = 0; k < n; ++k) w[k] += t * u[k];
    }
  }
}

VariationalProblem::Parts VariationalProblem::evaluate_parts(std::span<const double> values) {
  transform_all(values);
  const std::size_t n = grid_.size();
  const double inv_vol = std::pow(grid_.M, -grid_.dim);
  Parts p;
  for (int i = 0; i < n_t_; ++i) {
    const cplx* u = u_hat_.data() + i * n;
    const cplx* w = w_hat_.data() + i * n;
    const cplx* g = g_hat_.data() + i * n;
    double inter = 0.0;
    double energy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      inter += m_[k] * (u[k] * std::conj(w[k])).real();
      energy += psi_[k] * std::norm(g[k]);
    }
    p.interaction += 0.5 * inter;
    p.energy += ds_ * inv_vol * energy;
  }
  return p;
}

double VariationalProblem::evaluate(const SpaceTimeField& g) {
  if (!(g.grid == grid_) || g.n_t != n_t_) throw Error(ErrorKind::InvalidArgument, "field does not match the problem grid");
  if (g.normalization_error() > 1e-10) {
    throw Error(ErrorKind::NotNormalized, "every slice needs h^d sum g^2 = 1 within 1e-10");
  }
  return evaluate_raw(g.values);
}

void VariationalProblem::gradient(std::span<const double> values, std::span<double> grad) {
  transform_all(values);
  const std::size_t n = grid_.size();
  const double vol = std::pow(grid_.M, grid_.dim);
  std::vector<cplx> buf(n);
  std::vector<double> pot(n);
  potential_max_ = 0.0;
  for (int i = 0; i < n_t_; ++i) {
    const cplx* w = w_hat_.data() + i * n;
    const cplx* gh = g_hat_.data() + i * n;
    for (std::size_t k = 0; k < n; ++k) buf[k] = m_[k] * w[k];
    dft_.inverse(buf, pot);
    for (std::size_t k = 0; k < n; ++k) buf[k] = psi_[k] * gh[k];
    dft_.inverse(buf, scratch_);
    auto g = values.subspan(i * n, n);
    auto out = grad.subspan(i * n, n);
    for (std::size_t x = 0; x < n; ++x) {
      const double V = vol * pot[x];
      potential_max_ = std::max(potential_max_, std::abs(V) / ds_);
      out[x] = 2.0 * (g[x] * V - ds_ * scratch_[x]);
    }
  }
}

void VariationalProblem::precondition(std::span<const double> in, std::span<double> out, double c0) {
  const std::size_t n = grid_.size();
  std::vector<cplx> buf(n);
  for (int i = 0; i < n_t_; ++i) {
    dft_.forward(in.subspan(i * n, n), buf);
    for (std::size_t k = 0; k < n; ++k) buf[k] /= (c0 + psi_[k]);
    dft_.inverse(buf, out.subspan(i * n, n));
  }
}

double functional_eval(const SpaceTimeField& g, const NoiseSpec& spec, double theta, double c_conv) {
  VariationalProblem prob(spec, g.grid, g.n_t, theta, c_conv);
  return prob.evaluate(g);
}

namespace {

SpaceTimeField initial_field(const TorusGrid& grid, int n_t, Rng& rng) {
  SpaceTimeField f{grid, n_t, std::vector<double>(grid.size() * n_t)};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d = grid.dim;
  std::vector<double> centre(d);
  for (double& c : centre) c = grid.M * unif(rng);
  const double width = grid.M * (1.0 / 24.0 + unif(rng) / 8.0);
  // A few random low modes make the start a squared random field under a bump envelope.
  struct Mode {
    std::vector<int> k;
    double amp;
    double phase;
  };
  std::vector<Mode> modes;
  for (int m = 0; m < 6; ++m) {
    Mode md{std::vector<int>(d), 0.15 * normal(rng), 2.0 * std::numbers::pi * unif(rng)};
    for (int& k : md.k) k = static_cast<int>(unif(rng) * 5.0) - 2;
    modes.push_back(std::move(md));
  }
  std::vector<double> x(d);
  std::vector<double> base(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coords(i, x);
    double r2 = 0.0;
    double phase_arg = 0.0;
    for (int c = 0; c < d; ++c) {
      double dx = x[c] - centre[c];
      dx -= grid.M * std::round(dx / grid.M);
      r2 += dx * dx;
    }
    double noise = 1.0;
    for (const auto& md : modes) {
      phase_arg = 0.0;
      for (int c = 0; c < d; ++c) phase_arg += md.k[c] * x[c] / grid.M;
      noise += md.amp * std::cos(2.0 * std::numbers::pi * phase_arg + md.phase);
    }
    base[i] = std::exp(-0.5 * r2 / (width * width)) * noise * noise;
  }
  for (int s = 0; s < n_t; ++s) {
    const double wobble = 1.0 + 0.05 * normal(rng);
    auto sl = f.slice(s);
    for (std::size_t i = 0; i < grid.size(); ++i) sl[i] = std::pow(base[i], wobble) + 1e-12;
  }
  f.normalize();
  return f;
}

double inner(std::span<const double> a, std::span<const double> b, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return h * s;
}

struct AscentOutcome {
  SpaceTimeField field;
  double value = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

AscentOutcome ascend(const NoiseSpec& spec, const VariationalOptions& opts, int n_t, int restart) {
  VariationalProblem prob(spec, opts.grid, n_t, opts.theta, opts.c_conv);
  Rng rng = make_rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(restart)}));
  SpaceTimeField g = initial_field(opts.grid, n_t, rng);
  const std::size_t n = opts.grid.size();
  const double h = opts.grid.cell_volume();
  std::vector<double> grad(g.values.size());
  std::vector<double> pgrad(g.values.size());
  std::vector<double> pg(g.values.size());
  std::vector<double> dir(g.values.size());
  SpaceTimeField trial = g;

  double value = prob.evaluate_raw(g.values);
  double eta = opts.step;
  std::deque<double> history{value};
  AscentOutcome out;
  auto tangent_norm = [&] {
    double s = 0.0;
    for (int i = 0; i < n_t; ++i) {
      auto gi = g.slice(i);
      auto Gi = std::span<const double>(grad).subspan(i * n, n);
      const double c = inner(gi, Gi, h);
      double t = 0.0;
      for (std::size_t x = 0; x < n; ++x) t += (Gi[x] - c * gi[x]) * (Gi[x] - c * gi[x]);
      s += h * t;
    }
    return std::sqrt(s);
  };

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    prob.gradient(g.values, grad);
    const double c0 = std::max(1.0, prob.last_potential_max());
    prob.precondition(grad, pgrad, c0);
    prob.precondition(g.values, pg, c0);
    double slope = 0.0;
    for (int i = 0; i < n_t; ++i) {
      auto gi = g.slice(i);
      auto PG = std::span<const double>(pgrad).subspan(i * n, n);
      auto Pg = std::span<const double>(pg).subspan(i * n, n);
      const double coef = inner(gi, PG, h) / inner(gi, Pg, h);
      auto D = std::span<double>(dir).subspan(i * n, n);
      for (std::size_t x = 0; x < n; ++x) D[x] = PG[x] - coef * Pg[x];
      slope += inner(std::span<const double>(grad).subspan(i * n, n), D, h);
    }
    if (!(slope > 0.0)) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    while (eta > 1e-18) {
      for (std::size_t x = 0; x < g.values.size(); ++x) trial.values[x] = g.values[x] + eta * dir[x];
      trial.normalize();
      const double v = prob.evaluate_raw(trial.values);
      if (v >= value) {
        std::swap(g.values, trial.values);
        value = v;
        accepted = true;
        eta = std::min(eta * 2.0, 1e12);
        break;
      }
      eta *= 0.5;
    }
    if (value > opts.ceiling) {
      throw Error(ErrorKind::Diverged, "variational value exceeded the configured ceiling");
    }
    if (!accepted) {
      // No representable ascent step: stationary to working precision.
      out.converged = true;
      break;
    }
    history.push_back(value);
    if (history.size() > 11) history.pop_front();
    if (history.size() == 11 && std::abs(value - history.front()) <= opts.tol * std::max(1.0, std::abs(value))) {
      out.converged = true;
      ++it;
      break;
    }
  }
  prob.gradient(g.values, grad);
  out.gradient_norm = tangent_norm();
  out.iterations = it;
  out.value = value;
  out.field = std::move(g);
  return out;
}

VariationalResult run_ascent(const NoiseSpec& spec, const VariationalOptions& opts, int n_t) {
  spec.validate();
  opts.grid.validate();
  if (opts.restarts < 1) throw Error(ErrorKind::InvalidArgument, "restarts must be positive");
  if (opts.grid.dim != spec.dim) throw Error(ErrorKind::InvalidArgument, "grid and spec dimensions differ");
  const Regime regime = dalang_check(spec);
  if (regime != Regime::Full) {
    throw Error(ErrorKind::RegimeMismatch, "variational problem needs the Full regime; regime is " +
                                               std::string(to_string(regime)));
  }
  auto outcomes = parallel_map<AscentOutcome>(opts.restarts, opts.threads,
                                              [&](int r) { return ascend(spec, opts, n_t, r); });
  VariationalResult res;
  int best = 0;
  for (int r = 0; r < opts.restarts; ++r) {
    res.restart_values.push_back(outcomes[r].value);
    if (outcomes[r].value > outcomes[best].value) best = r;
  }
  auto& o = outcomes[best];
  res.best_restart = best;
  res.iterations = o.iterations;
  res.final_gradient_norm = o.gradient_norm;
  res.converged = o.converged;
  res.field = std::move(o.field);
  res.M_estimate = functional_eval(res.field, spec, opts.theta, opts.c_conv);
  return res;
}

}  // namespace

VariationalResult maximize_M(const NoiseSpec& spec, const VariationalOptions& opts) {
  return run_ascent(spec, opts, opts.n_t);
}

VariationalResult stationary_M(const NoiseSpec& spec, const VariationalOptions& opts) {
  return run_ascent(spec, opts, 1);
}

double critical_constant(const NoiseSpec& spec, double M_value) {
  const double a = spec.alpha;
  const double b = spec.beta();
  if (!(M_value > 0.0)) throw Error(ErrorKind::InvalidArgument, "M_value must be positive");
  if (!(b > 0.0 && b < a)) throw Error(ErrorKind::InvalidArgument, "critical constant needs 0 < beta < alpha");
  return (b / (a - b)) * std::pow((a - b) / (2.0 * a), a / b) * std::pow(M_value, (b - a) / b);
}

double lyapunov_prediction(const NoiseSpec& spec, double p, double rho, double M_value) {
  const double a = spec.alpha;
  const double b = spec.beta();
  if (!(p >= 1.0)) throw Error(ErrorKind::InvalidArgument, "p must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1]");
  if (p == 1.0 && rho == 1.0) throw Error(ErrorKind::InvalidArgument, "(p, rho) = (1, 1) has no prediction");
  if (!(b < a)) throw Error(ErrorKind::InvalidArgument, "prediction needs beta < alpha");
  return std::pow(p - rho, a / (a - b)) * M_value;
}

}  // namespace fpam
