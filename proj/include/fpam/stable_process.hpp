#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "fpam/rng.hpp"

namespace fpam {

struct PathSpec {
  int dim = 1;
  double alpha = 2.0;
  double horizon = 1.0;
  int n_steps = 1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PathSpec&) const = default;
};

void to_json(nlohmann::json& j, const PathSpec& spec);
void from_json(const nlohmann::json& j, PathSpec& spec);

// Trajectory sampled on the uniform grid t_k = k * horizon / n_steps,
// started at the origin. Positions are stored row-major, one row per time.
struct Path {
  int dim = 1;
  std::vector<double> times;
  std::vector<double> positions;

  [[nodiscard]] int n_points() const { return static_cast<int>(times.size()); }
  [[nodiscard]] int n_steps() const { return n_points() - 1; }
  [[nodiscard]] double horizon() const { return times.back(); }
  [[nodiscard]] std::span<const double> at(int k) const {
    return {positions.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
  bool operator==(const Path&) const = default;
};

// Image of a path under the quotient map R^d -> R^d / (M Z)^d.
struct TorusPath {
  double period = 1.0;
  Path path;
};

// X_dt with E exp(i lambda . X_dt) = exp(-dt |lambda|^alpha). Writes d coordinates.
void sample_increment(double alpha, double dt, Rng& rng, std::span<double> out);

Path sample_path(const PathSpec& spec, Rng& rng);

// Uses an Rng seeded from spec.seed.
Path sample_path(const PathSpec& spec);

// Mathematical modulo into [0, M).
double mod_positive(double x, double M);

TorusPath to_torus(const Path& path, double M);

}  // namespace fpam
