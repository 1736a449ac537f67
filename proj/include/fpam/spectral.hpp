#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fpam {

using cplx = std::complex<double>;

// Uniform grid on the torus [0, M)^d with N points per axis.
struct TorusGrid {
  double M = 1.0;
  int N = 16;
  int dim = 1;

  void validate() const;
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] double spacing() const { return M / N; }
  [[nodiscard]] double cell_volume() const;
  // Grid coordinates of flat index i (axis 0 varies slowest).
  void coords(std::size_t i, std::span<double> out) const;
  // Frequency vector of flat index i in DFT storage order, components in [-N/2, N/2).
  void frequency(std::size_t i, std::span<int> out) const;
  bool operator==(const TorusGrid&) const = default;
};

void to_json(nlohmann::json& j, const TorusGrid& g);
void from_json(const nlohmann::json& j, TorusGrid& g);

// Cached multi-dimensional DFT for one grid. Not thread-safe; use one per thread.
class Dft {
 public:
  explicit Dft(const TorusGrid& grid);
  ~Dft();
  Dft(const Dft&) = delete;
  Dft& operator=(const Dft&) = delete;

  // coeffs(k) = h^d sum_x f(x) e^{-2 pi i k.x / M}, i.e. the torus transform
  // int f e^{-2 pi i k.x/M} dx by the rectangle rule, in DFT storage order.
  void forward(std::span<const double> values, std::span<cplx> coeffs);
  // Real part of M^{-d} sum_k coeffs(k) e^{2 pi i k.x / M}; inverse of forward().
  void inverse(std::span<const cplx> coeffs, std::span<double> values);

  [[nodiscard]] const TorusGrid& grid() const { return grid_; }

 private:
  struct Impl;
  TorusGrid grid_;
  std::unique_ptr<Impl> impl_;
};

// Real field on the grid with its cached transform.
struct TorusField {
  TorusGrid grid;
  std::vector<double> values;
  std::vector<cplx> coeffs;

  // coeffs at integer frequency k; zero when a component lies outside [-N/2, N/2).
  [[nodiscard]] cplx coeff_at(std::span<const int> k) const;
};

TorusField make_field(const TorusGrid& grid, std::vector<double> values);
TorusField make_field(const TorusGrid& grid, const std::function<double(std::span<const double>)>& f);

// Fourier-multiplier factor between the lattice symbol |k|^alpha M^{-alpha} and
// the generator of the simulated process: (2 pi)^alpha by default; 1 reproduces
// the literal torus Dirichlet form without the 2 pi factor.
inline double default_c_conv(double alpha) { return std::pow(2.0 * std::numbers::pi, alpha); }

// c_conv M^{-(d+alpha)} sum_k |k|^alpha |f^(k)|^2 over the stored lattice.
double dirichlet_form_torus(const TorusField& f, double alpha, double c_conv);

struct LambdaOptions {
  double c_conv = -1.0;  // negative selects default_c_conv(alpha)
  double tolerance = 1e-8;
  int max_iterations = 2000;
  std::size_t dense_limit = 2000;
};

struct LambdaResult {
  double value = 0.0;
  std::size_t lattice_size = 0;
  int iterations = 0;
  bool dense = true;
};

// Top eigenvalue of f^(k-k')/M^d - delta_{kk'} c_conv M^{-alpha} |k|^alpha on
// |k|_inf <= K_trunc. Throws NotConverged if Lanczos exhausts max_iterations.
LambdaResult lambda_M(const TorusField& f, double alpha, int K_trunc, const LambdaOptions& opts = {});

// Time-indexed family of fields on uniformly spaced slices s_i = i/(n-1) of [0,1];
// a single slice means constant in time.
struct SliceFamily {
  TorusGrid grid;
  int n_slices = 1;
  std::vector<double> values;  // n_slices * grid.size(), slice-major

  void validate() const;
  [[nodiscard]] std::span<const double> slice(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * grid.size(), grid.size()};
  }
  // Multilinear interpolation in (s, x), periodic in x, clamped in s.
  [[nodiscard]] double interpolate(double s, std::span<const double> x) const;
};

SliceFamily make_family(const TorusGrid& grid, int n_slices,
                        const std::function<double(double, std::span<const double>)>& f);

// Trapezoid rule over the slices of lambda_M(f(s, .)).
double lambda_time_integral(const SliceFamily& f, double alpha, int K_trunc, const LambdaOptions& opts = {});

// Both sides of the shift identity
//   (2/M^d) sum_k (1 - cos(2 pi k.y)) |f^(k)|^2  =  int |f(x + M y) - f(x)|^2 dx,
// the right side by the grid rectangle rule (multilinear interpolation when
// M y is not a grid multiple).
std::pair<double, double> parseval_check(const TorusField& f, std::span<const double> y);

}  // namespace fpam
