#include "fpam/spectral.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <cstdint>
#include <limits>
#include <numeric>

#include "fpam/error.hpp"

namespace fpam {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

int wrap_frequency(int j, int N) { return j < N / 2 ? j : j - N; }

}  // namespace

void TorusGrid::validate() const {
  if (!(M > 0.0)) throw Error(ErrorKind::InvalidArgument, "TorusGrid.M must be positive");
  if (N < 2 || N % 2 != 0) throw Error(ErrorKind::InvalidArgument, "TorusGrid.N must be a positive even integer");
  if (dim < 1) throw Error(ErrorKind::InvalidArgument, "TorusGrid.dim must be >= 1");
}

std::size_t TorusGrid::size() const { return ipow(N, dim); }

double TorusGrid::cell_volume() const { return std::pow(spacing(), dim); }

void TorusGrid::coords(std::size_t i, std::span<double> out) const {
  for (int c = dim - 1; c >= 0; --c) {
    out[c] = static_cast<double>(i % N) * spacing();
    i /= N;
  }
}

void TorusGrid::frequency(std::size_t i, std::span<int> out) const {
  for (int c = dim - 1; c >= 0; --c) {
    out[c] = wrap_frequency(static_cast<int>(i % N), N);
    i /= N;
  }
}

void to_json(nlohmann::json& j, const TorusGrid& g) { j = {{"M", g.M}, {"N", g.N}, {"dim", g.dim}}; }

void from_json(const nlohmann::json& j, TorusGrid& g) {
  g.M = j.at("M").get<double>();
  g.N = j.at("N").get<int>();
  g.dim = j.at("dim").get<int>();
  g.validate();
}

struct Dft::Impl {
  std::size_t n = 0;
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

Dft::Dft(const TorusGrid& grid) : grid_(grid), impl_(std::make_unique<Impl>()) {
  grid_.validate();
  impl_->n = grid_.size();
  std::vector<int> dims(grid_.dim, grid_.N);
  std::lock_guard lock(planner_mutex());
  impl_->buf = fftw_alloc_complex(impl_->n);
  impl_->fwd = fftw_plan_dft(grid_.dim, dims.data(), impl_->buf, impl_->buf, FFTW_FORWARD, FFTW_ESTIMATE);
  impl_->bwd = fftw_plan_dft(grid_.dim, dims.data(), impl_->buf, impl_->buf, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Dft::~Dft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(impl_->fwd);
  fftw_destroy_plan(impl_->bwd);
  fftw_free(impl_->buf);
}

void Dft::forward(std::span<const double> values, std::span<cplx> coeffs) {
  const double h = grid_.cell_volume();
  for (std::size_t i = 0; i < impl_->n; ++i) {
    impl_->buf[i][0] = values[i];
    impl_->buf[i][1] = 0.0;
  }
  fftw_execute(impl_->fwd);
  for (std::size_t i = 0; i < impl_->n; ++i) coeffs[i] = h * cplx(impl_->buf[i][0], impl_->buf[i][1]);
}

void Dft::inverse(std::span<const cplx> coeffs, std::span<double> values) {
  const double scale = 1.0 / std::pow(grid_.M, grid_.dim);
  for (std::size_t i = 0; i < impl_->n; ++i) {
    impl_->buf[i][0] = coeffs[i].real();
    impl_->buf[i][1] = coeffs[i].imag();
  }
  fftw_execute(impl_->bwd);
  for (std::size_t i = 0; i < impl_->n; ++i) values[i] = scale * impl_->buf[i][0];
}

cplx TorusField::coeff_at(std::span<const int> k) const {
  const int N = grid.N;
  std::size_t idx = 0;
  for (int c = 0; c < grid.dim; ++c) {
    if (k[c] < -N / 2 || k[c] >= N / 2) return {0.0, 0.0};
    const int j = k[c] < 0 ? k[c] + N : k[c];
    idx = idx * N + static_cast<std::size_t>(j);
  }
  return coeffs[idx];
}

TorusField make_field(const TorusGrid& grid, std::vector<double> values) {
  grid.validate();
  if (values.size() != grid.size()) throw Error(ErrorKind::InvalidArgument, "field size does not match the grid");
  TorusField f{grid, std::move(values), std::vector<cplx>(grid.size())};
  Dft dft(grid);
  dft.forward(f.values, f.coeffs);
  return f;
}

TorusField make_field(const TorusGrid& grid, const std::function<double(std::span<const double>)>& fn) {
  grid.validate();
  std::vector<double> values(grid.size());
  std::vector<double> x(grid.dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    grid.coords(i, x);
    values[i] = fn(x);
  }
  return make_field(grid, std::move(values));
}

double dirichlet_form_torus(const TorusField& f, double alpha, double c_conv) {
  const auto& g = f.grid;
  std::vector<int> k(g.dim);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.frequency(i, k);
    double k2 = 0.0;
    for (int c : k) k2 += static_cast<double>(c) * c;
    if (k2 == 0.0) continue;
    sum += std::pow(k2, 0.5 * alpha) * std::norm(f.coeffs[i]);
  }
  return c_conv * std::pow(g.M, -(g.dim + alpha)) * sum;
}

namespace {

struct Lattice {
  int K = 0;
  int dim = 1;
  std::vector<std::vector<int>> points;
};

Lattice make_lattice(int K, int dim) {
  Lattice L{K, dim, {}};
  const int side = 2 * K + 1;
  const std::size_t n = ipow(side, dim);
  L.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> p(dim);
    std::size_t r = i;
    for (int c = dim - 1; c >= 0; --c) {
      p[c] = static_cast<int>(r % side) - K;
      r /= side;
    }
    L.points.push_back(std::move(p));
  }
  return L;
}

// Top eigenvalue by Lanczos with full reorthogonalization.
LambdaResult lanczos_top(const std::function<void(const Eigen::VectorXcd&, Eigen::VectorXcd&)>& apply,
                         std::size_t n, const LambdaOptions& opts) {
  const int max_k = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(opts.max_iterations)));
  std::vector<Eigen::VectorXcd> Q;
  Q.reserve(max_k + 1);
  Eigen::VectorXcd q = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  // Start from the constant mode plus a deterministic spread over the lattice.
  for (std::size_t i = 0; i < n; ++i) q[static_cast<Eigen::Index>(i)] = 1.0 / (1.0 + static_cast<double>(i % 7));
  q.normalize();
  Q.push_back(q);
  std::vector<double> a;
  std::vector<double> b;
  Eigen::VectorXcd w(static_cast<Eigen::Index>(n));
  double last = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < max_k; ++k) {
    apply(Q[k], w);
    const double ak = Q[k].dot(w).real();
    a.push_back(ak);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& qi : Q) w -= qi * qi.dot(w);
    }
    const double bk = w.norm();
    const int m = k + 1;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      T(i, i) = a[i];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = b[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const double theta = es.eigenvalues()(m - 1);
    const double resid = bk * std::abs(es.eigenvectors()(m - 1, m - 1));
    const double scale = std::max(1.0, std::abs(theta));
    if (resid <= opts.tolerance * scale * 1e-2 || bk < 1e-14 * scale || m == static_cast<int>(n)) {
      return {theta, n, m, false};
    }
    if (std::isfinite(last) && std::abs(theta - last) <= 1e-15 * scale && resid <= opts.tolerance * scale) {
      return {theta, n, m, false};
    }
    last = theta;
    b.push_back(bk);
    Q.push_back(w / bk);
  }
  throw Error(ErrorKind::NotConverged, "Lanczos did not reach the requested tolerance");
}

}  // namespace

LambdaResult lambda_M(const TorusField& f, double alpha, int K_trunc, const LambdaOptions& opts) {
  const auto& g = f.grid;
  if (K_trunc < 0 || K_trunc > g.N / 2) throw Error(ErrorKind::InvalidArgument, "K_trunc must lie in [0, N/2]");
  const double c_conv = opts.c_conv < 0.0 ? default_c_conv(alpha) : opts.c_conv;
  const Lattice L = make_lattice(K_trunc, g.dim);
  const std::size_t n = L.points.size();
  const double inv_vol = std::pow(g.M, -g.dim);
  std::vector<double> psi(n);
  for (std::size_t i = 0; i < n; ++i) {
    double k2 = 0.0;
    for (int c : L.points[i]) k2 += static_cast<double>(c) * c;
    psi[i] = c_conv * std::pow(g.M, -alpha) * std::pow(k2, 0.5 * alpha);
  }
  // Potential entries f^(k - k') / M^d tabulated by difference; differences
  // outside the stored band are dropped.
  const int side = 4 * K_trunc + 1;
  const std::size_t n_diff = ipow(side, g.dim);
  std::vector<cplx> table(n_diff);
  {
    std::vector<int> diff(g.dim);
    for (std::size_t i = 0; i < n_diff; ++i) {
      std::size_t r = i;
      bool inside = true;
      for (int ax = g.dim - 1; ax >= 0; --ax) {
        diff[ax] = static_cast<int>(r % side) - 2 * K_trunc;
        r /= side;
        if (std::abs(diff[ax]) >= g.N / 2) inside = false;
      }
      table[i] = inside ? f.coeff_at(diff) * inv_vol : cplx(0.0, 0.0);
    }
  }
  auto diff_index = [&](std::size_t r, std::size_t c) {
    std::size_t idx = 0;
    for (int ax = 0; ax < g.dim; ++ax) {
      idx = idx * side + static_cast<std::size_t>(L.points[r][ax] - L.points[c][ax] + 2 * K_trunc);
    }
    return idx;
  };
  if (n <= opts.dense_limit) {
    Eigen::MatrixXcd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) A(r, c) = table[diff_index(r, c)];
      A(r, r) -= psi[r];
    }
    // Symmetrize against roundoff in the transform.
    Eigen::MatrixXcd H = 0.5 * (A + A.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
    return {es.eigenvalues()(static_cast<Eigen::Index>(n) - 1), n, 1, true};
  }
  // Matrix-free product; the index table is shared across iterations.
  std::vector<std::uint32_t> idx(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) idx[r * n + c] = static_cast<std::uint32_t>(diff_index(r, c));
  }
  auto apply = [&](const Eigen::VectorXcd& x, Eigen::VectorXcd& y) {
    for (std::size_t r = 0; r < n; ++r) {
      cplx acc(0.0, 0.0);
      const std::uint32_t* row = idx.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) {
        acc += table[row[c]] * x[static_cast<Eigen::Index>(c)];
      }
      y[static_cast<Eigen::Index>(r)] = acc - psi[r] * x[static_cast<Eigen::Index>(r)];
    }
  };
  return lanczos_top(apply, n, opts);
}

void SliceFamily::validate() const {
  grid.validate();
  if (n_slices < 1) throw Error(ErrorKind::InvalidArgument, "SliceFamily needs at least one slice");
  if (values.size() != grid.size() * static_cast<std::size_t>(n_slices)) {
    throw Error(ErrorKind::InvalidArgument, "SliceFamily values do not match n_slices * grid size");
  }
}

double SliceFamily::interpolate(double s, std::span<const double> x) const {
  const int d = grid.dim;
  const int N = grid.N;
  const double h = grid.spacing();
  // Time bracket.
  int s0 = 0;
  double ts = 0.0;
  if (n_slices > 1) {
    const double u = std::clamp(s, 0.0, 1.0) * (n_slices - 1);
    s0 = std::min(static_cast<int>(std::floor(u)), n_slices - 2);
    ts = u - s0;
  }
  std::vector<int> base(d);
  std::vector<double> frac(d);
  for (int c = 0; c < d; ++c) {
    double u = x[c] / h;
    u -= N * std::floor(u / N);
    int i0 = static_cast<int>(std::floor(u));
    frac[c] = u - i0;
    base[c] = i0 % N;
  }
  auto sample = [&](int slice, std::size_t corner) {
    std::size_t idx = 0;
    for (int c = 0; c < d; ++c) {
      const int bit = static_cast<int>((corner >> c) & 1U);
      idx = idx * N + static_cast<std::size_t>((base[c] + bit) % N);
    }
    return values[static_cast<std::size_t>(slice) * grid.size() + idx];
  };
  double out = 0.0;
  const std::size_t corners = std::size_t{1} << d;
  for (int ds = 0; ds < (n_slices > 1 ? 2 : 1); ++ds) {
    const double wt = n_slices > 1 ? (ds == 0 ? 1.0 - ts : ts) : 1.0;
    if (wt == 0.0) continue;
    for (std::size_t corner = 0; corner < corners; ++corner) {
      double w = wt;
      for (int c = 0; c < d; ++c) w *= ((corner >> c) & 1U) ? frac[c] : 1.0 - frac[c];
      if (w != 0.0) out += w * sample(s0 + ds, corner);
    }
  }
  return out;
}

SliceFamily make_family(const TorusGrid& grid, int n_slices,
                        const std::function<double(double, std::span<const double>)>& f) {
  grid.validate();
  SliceFamily fam{grid, n_slices, std::vector<double>(grid.size() * static_cast<std::size_t>(n_slices))};
  fam.validate();
  std::vector<double> x(grid.dim);
  for (int s = 0; s < n_slices; ++s) {
    const double time = n_slices == 1 ? 0.0 : static_cast<double>(s) / (n_slices - 1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.coords(i, x);
      fam.values[static_cast<std::size_t>(s) * grid.size() + i] = f(time, x);
    }
  }
  return fam;
}

double lambda_time_integral(const SliceFamily& f, double alpha, int K_trunc, const LambdaOptions& opts) {
  f.validate();
  auto slice_lambda = [&](int s) {
    std::vector<double> v(f.slice(s).begin(), f.slice(s).end());
    return lambda_M(make_field(f.grid, std::move(v)), alpha, K_trunc, opts).value;
  };
  if (f.n_slices == 1) return slice_lambda(0);
  const int n = f.n_slices - 1;
  double sum = 0.0;
  for (int s = 0; s <= n; ++s) sum += (s == 0 || s == n ? 0.5 : 1.0) * slice_lambda(s);
  return sum / n;
}

std::pair<double, double> parseval_check(const TorusField& f, std::span<const double> y) {
  const auto& g = f.grid;
  if (static_cast<int>(y.size()) != g.dim) throw Error(ErrorKind::InvalidArgument, "shift dimension mismatch");
  std::vector<int> k(g.dim);
  double left = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.frequency(i, k);
    double phase = 0.0;
    for (int c = 0; c < g.dim; ++c) phase += k[c] * y[c];
    left += (1.0 - std::cos(2.0 * std::numbers::pi * phase)) * std::norm(f.coeffs[i]);
  }
  left *= 2.0 / std::pow(g.M, g.dim);

  SliceFamily single{g, 1, f.values};
  std::vector<double> x(g.dim);
  std::vector<double> shifted(g.dim);
  double right = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.coords(i, x);
    for (int c = 0; c < g.dim; ++c) shifted[c] = x[c] + g.M * y[c];
    const double diff = single.interpolate(0.0, shifted) - f.values[i];
    right += diff * diff;
  }
  right *= g.cell_volume();
  return {left, right};
}

}  // namespace fpam
