#include "fpam/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "fpam/error.hpp"
#include "fpam/functionals.hpp"
#include "fpam/io.hpp"
#include "fpam/kernels.hpp"
#include "fpam/montecarlo.hpp"
#include "fpam/rng.hpp"
#include "fpam/stable_process.hpp"
#include "fpam/stats.hpp"
#include "fpam/variational.hpp"

namespace fpam {

using nlohmann::json;

namespace {

// ---- configuration access with field-level diagnostics ----

template <class T>
T get_field(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::ConfigInvalid, "missing field '" + ctx + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigInvalid, "field '" + ctx + key + "': " + e.detail());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, "field '" + ctx + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_field<T>(j, key, ctx);
}

template <class F>
void checked(const std::string& ctx, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) throw Error(ErrorKind::ConfigInvalid, ctx + ": " + e.detail());
    throw;
  }
}

std::string regime_flags(const NoiseSpec& spec) {
  std::ostringstream ss;
  ss << "regime " << to_string(dalang_check(spec)) << " (alpha = " << spec.alpha
     << ", beta = " << spec.beta() << ", alpha*beta0 + beta = " << spec.alpha * spec.beta0 + spec.beta() << ")";
  return ss.str();
}

void require_regime(const NoiseSpec& spec, bool ok, const std::string& need) {
  if (!ok) throw Error(ErrorKind::RegimeMismatch, need + "; " + regime_flags(spec));
}

NoiseSpec parse_spec(const json& cfg) {
  NoiseSpec spec = get_field<NoiseSpec>(cfg, "spec", "");
  checked("spec", [&] { spec.validate(); });
  return spec;
}

ExperimentConfig parse_experiment(const json& cfg, std::uint64_t seed, int threads) {
  json e = cfg.contains("experiment") ? cfg.at("experiment") : json::object();
  if (!e.is_object()) throw Error(ErrorKind::ConfigInvalid, "field 'experiment' must be an object");
  if (!e.contains("spec")) {
    if (!cfg.contains("spec")) throw Error(ErrorKind::ConfigInvalid, "missing field 'spec' (or 'experiment.spec')");
    e["spec"] = cfg.at("spec");
  }
  ExperimentConfig c;
  try {
    c = e.get<ExperimentConfig>();
  } catch (const Error& err) {
    throw Error(ErrorKind::ConfigInvalid, "field 'experiment': " + err.detail());
  } catch (const json::exception& err) {
    throw Error(ErrorKind::ConfigInvalid, std::string("field 'experiment': ") + err.what());
  }
  c.master_seed = seed;
  c.threads = threads;
  checked("experiment", [&] { c.validate(); });
  return c;
}

VariationalOptions parse_variational(const json& cfg, std::uint64_t seed, int threads) {
  VariationalOptions o = get_or<VariationalOptions>(cfg, "variational", VariationalOptions{}, "");
  o.seed = seed;
  o.threads = threads;
  checked("variational.grid", [&] { o.grid.validate(); });
  if (o.n_t < 1 || o.restarts < 1 || o.max_iter < 1 || !(o.tol > 0.0) || !(o.step > 0.0)) {
    throw Error(ErrorKind::ConfigInvalid, "variational: n_t, restarts, max_iter, tol and step must be positive");
  }
  return o;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- run context ----

struct RunContext {
  json records = json::array();
  std::vector<std::pair<std::string, std::string>> files;
  bool ok = true;
  std::vector<std::string> summary;

  void add_file(std::string rel, std::string content) { files.emplace_back(std::move(rel), std::move(content)); }
  void note(std::string line) { summary.push_back(std::move(line)); }
};

struct Plan {
  std::string pipeline;
  json config;
  std::uint64_t seed = 0;
  std::function<void(RunContext&)> run;
};

std::string estimates_csv(const json& records) {
  io::Table t;
  t.columns = {"t", "log_estimate", "stderr", "ess", "seed"};
  for (const auto& r : records) {
    if (!r.contains("log_estimate") || !r.contains("params")) continue;
    t.rows.push_back({io::format_double(r.at("params").at("t").get<double>()),
                      io::format_double(r.at("log_estimate").get<double>()),
                      io::format_double(r.at("log_stderr").get<double>()),
                      io::format_double(r.at("effective_sample_size").get<double>()),
                      std::to_string(r.at("seeds").at("master").get<std::uint64_t>())});
  }
  return io::to_csv(t);
}

// ---- pipelines ----

Plan plan_kernels_validate(const json& cfg, std::uint64_t seed) {
  const NoiseSpec spec = parse_spec(cfg);
  const double tol = get_or<double>(cfg, "quad_tol", 1e-8, "");
  const double threshold = get_or<double>(cfg, "rel_tol", 1e-4, "");
  Plan plan{"kernels-validate", {{"spec", spec}, {"quad_tol", tol}, {"rel_tol", threshold}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    ctx.records.push_back({{"kind", "regime"}, {"spec", spec}, {"regime", to_string(dalang_check(spec))}});
    auto check = [&](const std::string& name, const json& probe, double expected, double computed) {
      const double rel = std::abs(computed - expected) / std::abs(expected);
      const bool pass = rel <= threshold;
      ctx.ok = ctx.ok && pass;
      ctx.records.push_back({{"kind", "kernel_check"}, {"identity", name}, {"probe", probe}, {"expected", expected},
                             {"computed", computed}, {"rel_err", rel}, {"pass", pass}});
    };
    const auto kc = compute_constants(spec, tol);
    if (!kc.flat_time) {
      const double pairs[5][2] = {{0.0, 0.3}, {0.1, 0.9}, {0.5, 1.7}, {-0.4, 0.25}, {2.0, -1.0}};
      for (const auto& pr : pairs) {
        const double val = kc.C0 * temporal_decomposition_integral(spec.beta0, pr[0], pr[1], tol);
        check("temporal", {pr[0], pr[1]}, std::pow(std::abs(pr[0] - pr[1]), -spec.beta0), val);
      }
    }
    if (!kc.flat_space) {
      const double scales[5] = {0.3, 0.7, 1.1, 1.9, 3.2};
      for (double s : scales) {
        std::vector<double> x(spec.dim);
        for (int c = 0; c < spec.dim; ++c) x[c] = s * (c % 2 ? -1.0 : 1.0) * (1.0 + 0.37 * c);
        const double val = kc.C_gamma * spatial_decomposition_integral(spec, x, tol);
        check("spatial", x, gamma_eval(spec, x), val);
      }
    }
    ctx.note(std::string("kernel identities ") + (ctx.ok ? "pass" : "FAIL"));
  };
  return plan;
}

Plan plan_sample_paths(const json& cfg, std::uint64_t seed) {
  PathSpec base = get_field<PathSpec>(cfg, "path", "");
  const int n_paths = get_or<int>(cfg, "n_paths", 1, "");
  if (n_paths < 1) throw Error(ErrorKind::ConfigInvalid, "field 'n_paths' must be positive");
  base.seed = 0;
  checked("path", [&] { base.validate(); });
  Plan plan{"sample-paths", {{"path", base}, {"n_paths", n_paths}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    json names = json::array();
    for (int i = 0; i < n_paths; ++i) {
      PathSpec ps = base;
      ps.seed = replica_seed(seed, i, 0);
      char name[32];
      std::snprintf(name, sizeof name, "paths/path_%04d.csv", i);
      ctx.add_file(name, io::path_to_csv(ps, sample_path(ps)));
      names.push_back(name);
    }
    ctx.records.push_back({{"kind", "paths"}, {"path", base}, {"n_paths", n_paths}, {"master_seed", seed}, {"files", names}});
    ctx.note("wrote " + std::to_string(n_paths) + " paths");
  };
  return plan;
}

Plan plan_estimate_hamiltonian(const json& cfg, std::uint64_t seed) {
  const NoiseSpec spec = parse_spec(cfg);
  const double t = get_field<double>(cfg, "t", "");
  const int n_paths = get_or<int>(cfg, "n_paths", 100, "");
  const int n_steps = get_or<int>(cfg, "n_steps", 64, "");
  const auto rule = get_or<QuadratureRule>(cfg, "rule", QuadratureRule{}, "");
  const auto pairs = get_or<std::string>(cfg, "pairs", "self", "");
  const bool allow = get_or<bool>(cfg, "allow_divergence", false, "");
  if (!(t > 0.0) || n_paths < 1 || n_steps < 1) {
    throw Error(ErrorKind::ConfigInvalid, "t, n_paths and n_steps must be positive");
  }
  if (pairs != "self" && pairs != "cross" && pairs != "all") {
    throw Error(ErrorKind::ConfigInvalid, "field 'pairs' must be \"self\", \"cross\" or \"all\"");
  }
  checked("rule", [&] { rule.validate(); });
  const Regime regime = dalang_check(spec);
  require_regime(spec, regime != Regime::None, "Hamiltonians need beta < alpha");
  if (pairs != "cross") {
    require_regime(spec, regime == Regime::Full || allow,
                   "self-pairs need alpha*beta0 + beta < alpha (set allow_divergence to override)");
  }
  Plan plan{"estimate-hamiltonian",
            {{"spec", spec}, {"t", t}, {"n_paths", n_paths}, {"n_steps", n_steps}, {"rule", rule}, {"pairs", pairs},
             {"allow_divergence", allow}},
            seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    const HamiltonianEvaluator eval(spec, rule);
    std::vector<Path> paths;
    for (int i = 0; i < n_paths; ++i) {
      PathSpec ps{spec.dim, spec.alpha, t, n_steps, replica_seed(seed, i, 0)};
      paths.push_back(sample_path(ps));
    }
    io::Table table;
    table.columns = {"i", "j", "H", "Z", "diagonal_correction"};
    std::vector<double> self_H;
    for (int i = 0; i < n_paths; ++i) {
      for (int j = i; j < n_paths; ++j) {
        if ((i == j && pairs == "cross") || (i != j && pairs == "self")) continue;
        auto v = eval.evaluate(paths[i], paths[j], allow);
        if (i == j) self_H.push_back(v.H);
        table.add_row({double(i), double(j), v.H, v.Z, v.diagonal_correction});
      }
    }
    ctx.add_file("hamiltonian.csv", io::to_csv(table));
    json rec{{"kind", "hamiltonian_summary"}, {"spec", spec}, {"t", t}, {"n_paths", n_paths}, {"n_steps", n_steps},
             {"rule", rule}, {"master_seed", seed}};
    if (!self_H.empty()) {
      const auto ms = stats::mean_stderr(self_H);
      rec["mean_self_H"] = ms.mean;
      rec["stderr_self_H"] = ms.stderr_;
      if (regime == Regime::Full) rec["expected_H"] = expected_H(spec, t);
    }
    ctx.records.push_back(rec);
    ctx.note("evaluated " + std::to_string(table.rows.size()) + " Hamiltonians");
  };
  return plan;
}

Plan plan_exp_moment(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  const double t = get_field<double>(cfg, "t", "");
  const auto thetas = get_field<std::vector<double>>(cfg, "thetas", "");
  if (thetas.empty() || !(t > 0.0)) throw Error(ErrorKind::ConfigInvalid, "need t > 0 and at least one theta");
  for (double th : thetas) {
    if (!(th > 0.0)) throw Error(ErrorKind::ConfigInvalid, "field 'thetas' entries must be positive");
  }
  require_regime(exp.spec, dalang_check(exp.spec) == Regime::Full, "exp-moment needs alpha*beta0 + beta < alpha");
  Plan plan{"exp-moment", {{"experiment", exp}, {"t", t}, {"thetas", thetas}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    for (const auto& r : exp_moment_sweep(exp, thetas, t)) ctx.records.push_back(r);
    ctx.add_file("estimates.csv", estimates_csv(ctx.records));
    ctx.note("exp-moment: " + std::to_string(thetas.size()) + " estimates");
  };
  return plan;
}

void require_moment_regime(const ExperimentConfig& exp) {
  const Regime r = dalang_check(exp.spec);
  if (exp.rho < 1.0) {
    require_regime(exp.spec, r == Regime::Full, "moments with rho < 1 need alpha*beta0 + beta < alpha");
  } else {
    require_regime(exp.spec, r != Regime::None, "moments need beta < alpha");
  }
  checked("experiment.p", [&] { (void)exp.integer_p(); });
}

Plan plan_moment(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  if (exp.t_grid.empty()) throw Error(ErrorKind::ConfigInvalid, "field 'experiment.t_grid' must not be empty");
  require_moment_regime(exp);
  Plan plan{"moment", {{"experiment", exp}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    for (double t : exp.t_grid) ctx.records.push_back(moment_u_rho(exp, t));
    ctx.add_file("estimates.csv", estimates_csv(ctx.records));
    ctx.note("moment: " + std::to_string(exp.t_grid.size()) + " horizons");
  };
  return plan;
}

Plan plan_lyapunov(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  require_moment_regime(exp);
  if (exp.t_grid.size() < 3) throw Error(ErrorKind::ConfigInvalid, "field 'experiment.t_grid' needs at least 3 horizons");
  std::optional<double> M_value;
  if (cfg.contains("M_value")) M_value = get_field<double>(cfg, "M_value", "");
  std::optional<VariationalOptions> vopts;
  if (!M_value && cfg.contains("variational")) vopts = parse_variational(cfg, seed, threads);
  json echo{{"experiment", exp}};
  if (M_value) echo["M_value"] = *M_value;
  if (vopts) echo["variational"] = *vopts;
  Plan plan{"lyapunov", echo, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    std::vector<LyapunovPoint> pts;
    for (double t : exp.t_grid) {
      const auto r = moment_u_rho(exp, t);
      ctx.records.push_back(r);
      pts.push_back({t, r.log_estimate, r.log_stderr, r.effective_sample_size, r.n_replicas});
    }
    const auto fit = lyapunov_fit(pts, exp.spec, exp.p, exp.rho);
    json rec{{"kind", "lyapunov_fit"}, {"spec", exp.spec},         {"p", exp.p},
             {"rho", exp.rho},         {"slope", fit.slope},       {"intercept", fit.intercept},
             {"r2", fit.r2},           {"chi", fit.chi},           {"normalized_slope", fit.normalized_slope},
             {"n_used", fit.n_used},   {"warnings", fit.warnings}};
    std::optional<double> M = M_value;
    if (!M && vopts) M = maximize_M(exp.spec, *vopts).M_estimate;
    if (M) {
      rec["M_value"] = *M;
      rec["prediction"] = lyapunov_prediction(exp.spec, exp.p, exp.rho, *M);
    }
    ctx.records.push_back(rec);
    ctx.add_file("estimates.csv", estimates_csv(ctx.records));
    ctx.note("lyapunov slope/p = " + io::format_double(fit.normalized_slope));
  };
  return plan;
}

Plan plan_lower_bound(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  const double t = get_field<double>(cfg, "t", "");
  const auto hs = get_field<std::vector<LatticeTestFunction>>(cfg, "test_functions", "");
  if (!(t > 0.0)) throw Error(ErrorKind::ConfigInvalid, "field 't' must be positive");
  const Regime r = dalang_check(exp.spec);
  require_regime(exp.spec, r == Regime::Full || (r == Regime::SkorohodOnly && exp.rho == 1.0),
                 "the lower bound needs alpha*beta0 + beta < alpha, or beta < alpha with rho = 1");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (hs[i].dim != exp.spec.dim) {
      throw Error(ErrorKind::ConfigInvalid, "test_functions[" + std::to_string(i) + "]: dimension differs from spec");
    }
  }
  Plan plan{"lower-bound", {{"experiment", exp}, {"t", t}, {"test_functions", hs}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    std::optional<EstimateRecord> mom;
    if (exp.p == std::floor(exp.p) && !(exp.p == 1.0 && exp.rho == 1.0)) mom = moment_u_rho(exp, t);
    double norm_p = 0.0;
    double norm_se = 0.0;
    if (mom) {
      ctx.records.push_back(*mom);
      norm_p = std::exp(mom->log_estimate / exp.p);
      norm_se = norm_p * mom->log_stderr / exp.p;
    }
    for (const auto& h : hs) {
      const auto lb = variational_lower_bound_mc(h, exp, t);
      json rec = lb;
      if (mom) {
        const double slack = 3.0 * std::hypot(lb.stderr_, norm_se);
        const bool consistent = lb.point_estimate <= norm_p + slack;
        rec["moment_norm"] = norm_p;
        rec["consistent"] = consistent;
        ctx.ok = ctx.ok && consistent;
      }
      ctx.records.push_back(rec);
    }
    ctx.note(std::string("lower bounds ") + (ctx.ok ? "consistent" : "INCONSISTENT"));
  };
  return plan;
}

Plan plan_fk_check(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  const double t = get_field<double>(cfg, "t", "");
  SliceFamily fam;
  checked("field", [&] { fam = field_from_json(get_field<json>(cfg, "field", "")); });
  const int K = get_or<int>(cfg, "K_trunc", fam.grid.N / 4, "");
  const double c_conv = get_or<double>(cfg, "c_conv", -1.0, "");
  if (!(t > 0.0)) throw Error(ErrorKind::ConfigInvalid, "field 't' must be positive");
  if (fam.grid.dim != exp.spec.dim) throw Error(ErrorKind::ConfigInvalid, "field dimension differs from spec");
  if (K < 0 || K > fam.grid.N / 2) throw Error(ErrorKind::ConfigInvalid, "field 'K_trunc' must lie in [0, N/2]");
  Plan plan{"fk-check", {{"experiment", exp}, {"t", t}, {"field", cfg.at("field")}, {"K_trunc", K}, {"c_conv", c_conv}},
            seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    LambdaOptions lo;
    lo.c_conv = c_conv;
    const double lam = lambda_time_integral(fam, exp.spec.alpha, K, lo);
    const auto fk = fk_limit_mc(fam, t, exp);
    const double diff = fk.point_estimate - lam;
    const double budget = 3.0 * fk.stderr_ + 0.5 / t;
    const bool pass = std::abs(diff) <= budget;
    ctx.ok = pass;
    ctx.records.push_back(fk);
    ctx.records.push_back({{"kind", "lambda_integral"}, {"alpha", exp.spec.alpha}, {"K_trunc", K}, {"value", lam}});
    ctx.records.push_back({{"kind", "fk_comparison"}, {"difference", diff}, {"budget", budget}, {"pass", pass}});
    ctx.note("fk - lambda = " + io::format_double(diff) + " (budget " + io::format_double(budget) + ")");
  };
  return plan;
}

Plan plan_lambda(const json& cfg, std::uint64_t seed) {
  SliceFamily fam;
  checked("field", [&] { fam = field_from_json(get_field<json>(cfg, "field", "")); });
  const double alpha = get_field<double>(cfg, "alpha", "");
  if (!(alpha > 0.0 && alpha <= 2.0)) throw Error(ErrorKind::ConfigInvalid, "field 'alpha' must lie in (0, 2]");
  std::vector<int> Ks;
  if (cfg.contains("K_trunc") && cfg.at("K_trunc").is_array()) {
    Ks = get_field<std::vector<int>>(cfg, "K_trunc", "");
  } else {
    Ks = {get_or<int>(cfg, "K_trunc", fam.grid.N / 4, "")};
  }
  for (int K : Ks) {
    if (K < 0 || K > fam.grid.N / 2) throw Error(ErrorKind::ConfigInvalid, "field 'K_trunc' must lie in [0, N/2]");
  }
  const double c_conv = get_or<double>(cfg, "c_conv", -1.0, "");
  Plan plan{"lambda", {{"field", cfg.at("field")}, {"alpha", alpha}, {"K_trunc", Ks}, {"c_conv", c_conv}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    LambdaOptions lo;
    lo.c_conv = c_conv;
    io::Table table;
    table.columns = {"K_trunc", "lambda"};
    for (int K : Ks) {
      const double v = lambda_time_integral(fam, alpha, K, lo);
      table.add_row({double(K), v});
      ctx.records.push_back({{"kind", "lambda"}, {"alpha", alpha}, {"K_trunc", K}, {"c_conv", c_conv}, {"value", v}});
    }
    ctx.add_file("lambda.csv", io::to_csv(table));
    ctx.note("lambda sweep over " + std::to_string(Ks.size()) + " truncations");
  };
  return plan;
}

std::string field_csv(const SpaceTimeField& f) {
  io::Table t;
  t.columns = {"slice"};
  for (int c = 0; c < f.grid.dim; ++c) t.columns.push_back("x" + std::to_string(c + 1));
  t.columns.push_back("g");
  std::vector<double> x(f.grid.dim);
  for (int s = 0; s < f.n_t; ++s) {
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
      f.grid.coords(i, x);
      std::vector<double> row{double(s)};
      row.insert(row.end(), x.begin(), x.end());
      row.push_back(f.slice(s)[i]);
      t.add_row(row);
    }
  }
  return io::to_csv(t);
}

Plan plan_solve_variational(const json& cfg, std::uint64_t seed, int threads) {
  const NoiseSpec spec = parse_spec(cfg);
  const auto vopts = parse_variational(cfg, seed, threads);
  const auto thetas = get_or<std::vector<double>>(cfg, "thetas", {vopts.theta}, "");
  const bool stationary = get_or<bool>(cfg, "stationary", false, "");
  for (double th : thetas) {
    if (!(th > 0.0)) throw Error(ErrorKind::ConfigInvalid, "field 'thetas' entries must be positive");
  }
  require_regime(spec, dalang_check(spec) == Regime::Full, "the variational problem needs alpha*beta0 + beta < alpha");
  Plan plan{"solve-variational",
            {{"spec", spec}, {"variational", vopts}, {"thetas", thetas}, {"stationary", stationary}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    bool first = true;
    for (double th : thetas) {
      auto o = vopts;
      o.theta = th;
      const auto res = stationary ? stationary_M(spec, o) : maximize_M(spec, o);
      json rec = res;
      rec["kind"] = "variational";
      rec["spec"] = spec;
      rec["theta"] = th;
      rec["options"] = o;
      ctx.records.push_back(rec);
      if (first) ctx.add_file("maximizer.csv", field_csv(res.field));
      first = false;
      ctx.note("theta " + io::format_double(th) + ": M = " + io::format_double(res.M_estimate));
    }
  };
  return plan;
}

Plan plan_full_theorem_check(const json& cfg, std::uint64_t seed, int threads) {
  const auto exp = parse_experiment(cfg, seed, threads);
  const auto vopts = parse_variational(cfg, seed, threads);
  const auto ps = get_or<std::vector<double>>(cfg, "p_values", {1.0, 2.0, 3.0}, "");
  require_regime(exp.spec, dalang_check(exp.spec) == Regime::Full,
                 "full-theorem-check needs alpha*beta0 + beta < alpha");
  if (exp.t_grid.empty()) throw Error(ErrorKind::ConfigInvalid, "field 'experiment.t_grid' must not be empty");
  for (double p : ps) {
    if (!(p >= 1.0)) throw Error(ErrorKind::ConfigInvalid, "field 'p_values' entries must be >= 1");
  }
  Plan plan{"full-theorem-check", {{"experiment", exp}, {"variational", vopts}, {"p_values", ps}}, seed, nullptr};
  plan.run = [=](RunContext& ctx) {
    const auto var = maximize_M(exp.spec, vopts);
    json vrec = var;
    vrec["kind"] = "variational";
    vrec["spec"] = exp.spec;
    vrec["theta"] = vopts.theta;
    vrec["options"] = vopts;
    ctx.records.push_back(vrec);
    const double chi = lyapunov_chi(exp.spec);
    io::Table table;
    table.columns = {"p", "rho", "prediction", "t", "tchi", "log_estimate", "stderr", "normalized"};
    for (double p : ps) {
      const double rho = (p == 1.0 && exp.rho == 1.0) ? 0.0 : exp.rho;
      const double pred = lyapunov_prediction(exp.spec, p, rho, var.M_estimate);
      ctx.records.push_back({{"kind", "prediction"}, {"p", p}, {"rho", rho}, {"value", pred}, {"M_value", var.M_estimate}});
      if (p != std::floor(p)) continue;  // Monte Carlo needs an integer moment
      auto e = exp;
      e.p = p;
      e.rho = rho;
      for (double t : exp.t_grid) {
        const auto r = moment_u_rho(e, t);
        ctx.records.push_back(r);
        const double tchi = std::pow(t, chi);
        table.add_row({p, rho, pred, t, tchi, r.log_estimate, r.log_stderr, r.log_estimate / (p * tchi)});
      }
    }
    ctx.add_file("theorem_check.csv", io::to_csv(table));
    ctx.note("M = " + io::format_double(var.M_estimate));
  };
  return plan;
}

Plan make_plan(const std::string& name, const json& cfg, std::uint64_t seed, int threads) {
  if (name == "kernels-validate") return plan_kernels_validate(cfg, seed);
  if (name == "sample-paths") return plan_sample_paths(cfg, seed);
  if (name == "estimate-hamiltonian") return plan_estimate_hamiltonian(cfg, seed);
  if (name == "exp-moment") return plan_exp_moment(cfg, seed, threads);
  if (name == "moment") return plan_moment(cfg, seed, threads);
  if (name == "lyapunov") return plan_lyapunov(cfg, seed, threads);
  if (name == "lower-bound") return plan_lower_bound(cfg, seed, threads);
  if (name == "fk-check") return plan_fk_check(cfg, seed, threads);
  if (name == "lambda") return plan_lambda(cfg, seed);
  if (name == "solve-variational") return plan_solve_variational(cfg, seed, threads);
  if (name == "full-theorem-check") return plan_full_theorem_check(cfg, seed, threads);
  throw Error(ErrorKind::ConfigInvalid, "unknown pipeline '" + name + "'");
}

json load_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) return json{{"tool", "fpam"}, {"entries", json::array()}};
  return io::parse_json(io::read_text(p), p.string());
}

void append_manifest(const fs::path& dir, json entry) {
  json m = load_manifest(dir);
  m["entries"].push_back(std::move(entry));
  io::write_text(dir / "manifest.json", io::dump_json(m));
}

json file_entries(const fs::path& dir, const std::vector<std::string>& rel) {
  json files = json::array();
  for (const auto& r : rel) files.push_back({{"path", r}, {"sha256", io::sha256_file(dir / r)}});
  return files;
}

int env_int(const char* name) {
  if (const char* v = std::getenv(name)) {
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigInvalid, std::string("environment variable ") + name + " is not an integer");
    }
  }
  return 0;
}

}  // namespace

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"kernels-validate", "sample-paths", "estimate-hamiltonian", "exp-moment",
                                              "moment",           "lyapunov",     "lower-bound",          "fk-check",
                                              "lambda",           "solve-variational", "full-theorem-check"};
  return names;
}

SliceFamily field_from_json(const json& j) {
  const auto grid = get_field<TorusGrid>(j, "grid", "field.");
  const int n_slices = get_or<int>(j, "n_slices", 1, "field.");
  if (n_slices < 1) throw Error(ErrorKind::ConfigInvalid, "field 'field.n_slices' must be positive");
  const auto type = get_or<std::string>(j, "type", "bump", "field.");
  if (type == "values") {
    SliceFamily fam{grid, n_slices, get_field<std::vector<double>>(j, "values", "field.")};
    checked("field.values", [&] { fam.validate(); });
    return fam;
  }
  if (type != "bump") throw Error(ErrorKind::ConfigInvalid, "field 'field.type' must be \"bump\" or \"values\"");
  const double amp = get_or<double>(j, "amplitude", 1.0, "field.");
  const double width = get_or<double>(j, "width", 0.1 * grid.M, "field.");
  const double mod = get_or<double>(j, "time_modulation", 0.0, "field.");
  auto centre = get_or<std::vector<double>>(j, "center", std::vector<double>(grid.dim, 0.5 * grid.M), "field.");
  if (static_cast<int>(centre.size()) != grid.dim || !(width > 0.0)) {
    throw Error(ErrorKind::ConfigInvalid, "field: center must have grid.dim entries and width must be positive");
  }
  return make_family(grid, n_slices, [=](double s, std::span<const double> x) {
    double r2 = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      double d = x[c] - centre[c];
      d -= grid.M * std::round(d / grid.M);
      r2 += d * d;
    }
    return amp * std::exp(-0.5 * r2 / (width * width)) * (1.0 + mod * std::cos(2.0 * std::numbers::pi * s));
  });
}

RunOutcome run_pipeline(const json& config, const RunOptions& opts) {
  if (!config.is_object()) throw Error(ErrorKind::ConfigInvalid, "configuration must be a JSON object");
  std::string name = opts.pipeline;
  if (config.contains("pipeline")) {
    const auto named = get_field<std::string>(config, "pipeline", "");
    if (!name.empty() && named != name) {
      throw Error(ErrorKind::ConfigInvalid, "config names pipeline '" + named + "' but '" + name + "' was requested");
    }
    name = named;
  }
  if (name.empty()) throw Error(ErrorKind::ConfigInvalid, "no pipeline given");
  const std::uint64_t seed = opts.seed ? *opts.seed : get_or<std::uint64_t>(config, "seed", 0, "");
  int threads = opts.threads;
  if (threads <= 0) threads = env_int("FPAM_THREADS");
  if (threads <= 0) threads = get_or<int>(config, "threads", 0, "");

  Plan plan = make_plan(name, config, seed, threads);

  fs::path dir;
  if (opts.out_dir) {
    dir = *opts.out_dir;
  } else if (const char* env = std::getenv("FPAM_OUT")) {
    dir = env;
  } else {
    dir = fs::path("runs") / name;
  }

  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx;
  plan.run(ctx);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(dir);
  std::vector<std::string> written;
  io::write_text(dir / "records.json", io::dump_json(ctx.records));
  written.push_back("records.json");
  for (const auto& [rel, content] : ctx.files) {
    io::write_text(dir / rel, content);
    written.push_back(rel);
  }
  append_manifest(dir, {{"kind", "run"},
                        {"tool_version", kToolVersion},
                        {"pipeline", plan.pipeline},
                        {"config", plan.config},
                        {"master_seed", seed},
                        {"started", started},
                        {"finished", utc_now()},
                        {"wall_time", wall},
                        {"ok", ctx.ok},
                        {"files", file_entries(dir, written)}});
  return {dir, ctx.ok, ctx.summary};
}

RunOutcome run_experiment(const fs::path& config_path, const RunOptions& opts) {
  std::string text;
  try {
    text = io::read_text(config_path);
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigInvalid, e.detail());
  }
  return run_pipeline(io::parse_json(text, config_path.string()), opts);
}

json read_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / "manifest.json";
  if (!fs::exists(p)) throw Error(ErrorKind::MissingRecords, "no manifest in " + run_dir.string());
  json m = io::parse_json(io::read_text(p), p.string());
  std::map<std::string, std::string> latest;
  for (const auto& e : m.at("entries")) {
    for (const auto& f : e.at("files")) latest[f.at("path").get<std::string>()] = f.at("sha256").get<std::string>();
  }
  for (const auto& [rel, hash] : latest) {
    const fs::path fp = run_dir / rel;
    if (!fs::exists(fp)) throw Error(ErrorKind::Io, "manifest lists missing file " + rel);
    if (io::sha256_file(fp) != hash) throw Error(ErrorKind::Io, "hash mismatch for " + rel);
  }
  return m;
}

fs::path emit_plot_data(const fs::path& run_dir, const std::string& plot) {
  if (plot != "lyapunov" && plot != "scaling") {
    throw Error(ErrorKind::InvalidArgument, "unknown plot '" + plot + "' (expected lyapunov or scaling)");
  }
  const fs::path rp = run_dir / "records.json";
  if (!fs::exists(rp)) throw Error(ErrorKind::MissingRecords, "no records in " + run_dir.string());
  read_manifest(run_dir);
  const json records = io::parse_json(io::read_text(rp), rp.string());
  io::Table table;
  if (plot == "lyapunov") {
    const json* fit = nullptr;
    for (const auto& r : records) {
      if (r.value("kind", "") == "lyapunov_fit") fit = &r;
    }
    std::vector<const json*> moments;
    for (const auto& r : records) {
      if (r.value("kind", "") == "moment") moments.push_back(&r);
    }
    if (!fit || moments.empty()) throw Error(ErrorKind::MissingRecords, "run has no lyapunov records");
    const double chi = fit->at("chi").get<double>();
    const double p = fit->at("p").get<double>();
    const double pred = fit->contains("prediction") ? fit->at("prediction").get<double>() : std::nan("");
    table.columns = {"t", "tchi", "log_estimate", "stderr", "prediction"};
    for (const auto* m : moments) {
      const double t = m->at("params").at("t").get<double>();
      const double tchi = std::pow(t, chi);
      table.add_row({t, tchi, m->at("log_estimate").get<double>(), m->at("log_stderr").get<double>(), p * pred * tchi});
    }
  } else {
    std::vector<const json*> vars;
    for (const auto& r : records) {
      if (r.value("kind", "") == "variational") vars.push_back(&r);
    }
    if (vars.empty()) throw Error(ErrorKind::MissingRecords, "run has no variational records");
    const NoiseSpec spec = vars.front()->at("spec").get<NoiseSpec>();
    const double expo = spec.alpha / (spec.alpha - spec.beta());
    table.columns = {"theta", "M_estimate", "predicted_ratio"};
    for (const auto* v : vars) {
      const double th = v->at("theta").get<double>();
      table.add_row({th, v->at("M_estimate").get<double>(), std::pow(th, expo)});
    }
  }
  const std::string rel = "plot_" + plot + ".csv";
  io::write_text(run_dir / rel, io::to_csv(table));
  append_manifest(run_dir, {{"kind", "plot"}, {"plot", plot}, {"created", utc_now()}, {"files", file_entries(run_dir, {rel})}});
  return run_dir / rel;
}

}  // namespace fpam
