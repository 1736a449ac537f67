#include "fpam/stable_process.hpp"

#include <cmath>
#include <numbers>

#include "fpam/error.hpp"

namespace fpam {

namespace {

constexpr double kPi = std::numbers::pi;

double uniform_open(Rng& rng) {
  // (0, 1), never touching either end.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = 0.0;
  do {
    v = u(rng);
  } while (v <= 0.0);
  return v;
}

double exponential(Rng& rng) { return -std::log(uniform_open(rng)); }

// Chambers-Mallows-Stuck, symmetric case, characteristic function exp(-|lambda|^alpha).
double symmetric_stable_unit(double alpha, Rng& rng) {
  const double v = kPi * (uniform_open(rng) - 0.5);
  if (alpha == 1.0) return std::tan(v);
  const double w = exponential(rng);
  return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
}

// Kanter's representation of the positive a-stable law, E exp(-s S) = exp(-s^a), 0 < a < 1.
double positive_stable_unit(double a, Rng& rng) {
  const double u = kPi * uniform_open(rng);
  const double e = exponential(rng);
  return std::sin(a * u) / std::pow(std::sin(u), 1.0 / a) *
         std::pow(std::sin((1.0 - a) * u) / e, (1.0 - a) / a);
}

}  // namespace

void PathSpec::validate() const {
  if (dim < 1) throw Error(ErrorKind::InvalidArgument, "PathSpec.dim must be >= 1");
  if (!(alpha > 0.0 && alpha <= 2.0)) throw Error(ErrorKind::InvalidArgument, "PathSpec.alpha must lie in (0, 2]");
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "PathSpec.horizon must be positive");
  if (n_steps < 1) throw Error(ErrorKind::InvalidArgument, "PathSpec.n_steps must be >= 1");
}

void to_json(nlohmann::json& j, const PathSpec& spec) {
  j = nlohmann::json{{"dim", spec.dim},
                     {"alpha", spec.alpha},
                     {"horizon", spec.horizon},
                     {"n_steps", spec.n_steps},
                     {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, PathSpec& spec) {
  spec.dim = j.at("dim").get<int>();
  spec.alpha = j.at("alpha").get<double>();
  spec.horizon = j.at("horizon").get<double>();
  spec.n_steps = j.at("n_steps").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
}

void sample_increment(double alpha, double dt, Rng& rng, std::span<double> out) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "sample_increment needs dt > 0");
  const double scale = std::pow(dt, 1.0 / alpha);
  if (alpha == 2.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double s = std::sqrt(2.0) * scale;
    for (double& x : out) x = s * n(rng);
    return;
  }
  if (out.size() == 1) {
    out[0] = scale * symmetric_stable_unit(alpha, rng);
    return;
  }
  // Isotropic case: Brownian displacement at an independent (alpha/2)-stable time.
  const double s = positive_stable_unit(0.5 * alpha, rng);
  const double radius = scale * std::sqrt(2.0 * s);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : out) x = radius * n(rng);
}

Path sample_path(const PathSpec& spec, Rng& rng) {
  spec.validate();
  Path p;
  p.dim = spec.dim;
  const int n = spec.n_steps;
  const double dt = spec.horizon / n;
  p.times.resize(n + 1);
  p.positions.assign(static_cast<std::size_t>(n + 1) * spec.dim, 0.0);
  for (int k = 0; k <= n; ++k) p.times[k] = k == n ? spec.horizon : k * dt;
  std::vector<double> inc(spec.dim);
  for (int k = 1; k <= n; ++k) {
    sample_increment(spec.alpha, dt, rng, inc);
    for (int c = 0; c < spec.dim; ++c) {
      p.positions[static_cast<std::size_t>(k) * spec.dim + c] =
          p.positions[static_cast<std::size_t>(k - 1) * spec.dim + c] + inc[c];
    }
  }
  return p;
}

Path sample_path(const PathSpec& spec) {
  Rng rng = make_rng(spec.seed);
  return sample_path(spec, rng);
}

double mod_positive(double x, double M) {
  double r = std::fmod(x, M);
  if (r < 0.0) r += M;
  // fmod of a tiny negative number can round up to exactly M.
  if (r >= M) r = 0.0;
  return r;
}

TorusPath to_torus(const Path& path, double M) {
  if (!(M > 0.0)) throw Error(ErrorKind::InvalidArgument, "to_torus needs M > 0");
  TorusPath tp{M, path};
  for (double& x : tp.path.positions) x = mod_positive(x, M);
  return tp;
}

}  // namespace fpam
