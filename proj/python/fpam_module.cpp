#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fpam/error.hpp"
#include "fpam/functionals.hpp"
#include "fpam/kernels.hpp"
#include "fpam/montecarlo.hpp"
#include "fpam/pipeline.hpp"
#include "fpam/spectral.hpp"
#include "fpam/stable_process.hpp"
#include "fpam/variational.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Dict-shaped arguments cross the boundary as JSON text.
json parse(const std::string& s) { return json::parse(s); }

fpam::NoiseSpec spec_of(const std::string& s) { return parse(s).get<fpam::NoiseSpec>(); }

fpam::TorusField field_of(py::array_t<double, py::array::c_style | py::array::forcecast> values, double M) {
  const auto info = values.request();
  const int dim = static_cast<int>(info.ndim);
  const int N = static_cast<int>(info.shape[0]);
  for (int c = 1; c < dim; ++c) {
    if (info.shape[c] != N) throw std::invalid_argument("field must have the same size on every axis");
  }
  std::vector<double> v(values.data(), values.data() + values.size());
  return fpam::make_field(fpam::TorusGrid{M, N, dim}, std::move(v));
}

}  // namespace

PYBIND11_MODULE(_fpam, m) {
  m.doc() = "Stable-process Hamiltonians, torus spectra and the variational constant.";

  static py::exception<fpam::Error> exc(m, "FpamError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const fpam::Error& e) {
      py::object err = exc;
      err.attr("kind") = std::string(fpam::to_string(e.kind()));
      PyErr_SetString(exc.ptr(), e.what());
    }
  });

  m.def("dalang_check", [](const std::string& spec) { return std::string(fpam::to_string(fpam::dalang_check(spec_of(spec)))); });

  m.def("gamma_eval", [](const std::string& spec, std::vector<double> x) { return fpam::gamma_eval(spec_of(spec), x); });

  m.def("expected_H", [](const std::string& spec, double t) { return fpam::expected_H(spec_of(spec), t); });

  m.def("mean_gamma_unit", [](const std::string& spec) { return fpam::mean_gamma_unit(spec_of(spec)); });

  m.def("sample_path", [](int dim, double alpha, double horizon, int n_steps, std::uint64_t seed) {
    const fpam::Path p = fpam::sample_path(fpam::PathSpec{dim, alpha, horizon, n_steps, seed});
    py::array_t<double> times(p.times.size(), p.times.data());
    py::array_t<double> pos({static_cast<py::ssize_t>(p.n_points()), static_cast<py::ssize_t>(dim)});
    std::copy(p.positions.begin(), p.positions.end(), pos.mutable_data());
    return py::make_tuple(times, pos);
  }, py::arg("dim"), py::arg("alpha"), py::arg("horizon"), py::arg("n_steps"), py::arg("seed"));

  m.def("self_hamiltonian", [](const std::string& spec, double horizon, int n_steps, std::uint64_t seed) {
    const auto s = spec_of(spec);
    const fpam::Path p = fpam::sample_path(fpam::PathSpec{s.dim, s.alpha, horizon, n_steps, seed});
    return fpam::hamiltonian(p, p, s, fpam::QuadratureRule{}).H;
  });

  m.def("exp_moment", [](const std::string& config, double theta, double t) {
    return json(fpam::exp_moment(parse(config).get<fpam::ExperimentConfig>(), theta, t)).dump();
  });

  m.def("moment_u_rho", [](const std::string& config, double t) {
    return json(fpam::moment_u_rho(parse(config).get<fpam::ExperimentConfig>(), t)).dump();
  });

  m.def("dirichlet_form_torus", [](py::array_t<double, py::array::c_style | py::array::forcecast> values, double M,
                                   double alpha, double c_conv) {
    return fpam::dirichlet_form_torus(field_of(values, M), alpha, c_conv < 0.0 ? fpam::default_c_conv(alpha) : c_conv);
  }, py::arg("values"), py::arg("M"), py::arg("alpha"), py::arg("c_conv") = -1.0);

  m.def("lambda_M", [](py::array_t<double, py::array::c_style | py::array::forcecast> values, double M, double alpha,
                       int K_trunc, double c_conv) {
    fpam::LambdaOptions o;
    o.c_conv = c_conv;
    return fpam::lambda_M(field_of(values, M), alpha, K_trunc, o).value;
  }, py::arg("values"), py::arg("M"), py::arg("alpha"), py::arg("K_trunc"), py::arg("c_conv") = -1.0);

  m.def("parseval_check", [](py::array_t<double, py::array::c_style | py::array::forcecast> values, double M,
                             std::vector<double> y) { return fpam::parseval_check(field_of(values, M), y); });

  m.def("maximize_M", [](const std::string& spec, const std::string& opts) {
    return json(fpam::maximize_M(spec_of(spec), parse(opts).get<fpam::VariationalOptions>())).dump();
  });

  m.def("stationary_M", [](const std::string& spec, const std::string& opts) {
    return json(fpam::stationary_M(spec_of(spec), parse(opts).get<fpam::VariationalOptions>())).dump();
  });

  m.def("critical_constant", [](const std::string& spec, double M) { return fpam::critical_constant(spec_of(spec), M); });

  m.def("lyapunov_prediction", [](const std::string& spec, double p, double rho, double M) {
    return fpam::lyapunov_prediction(spec_of(spec), p, rho, M);
  });

  m.def("run_pipeline", [](const std::string& config, const std::string& pipeline, const std::string& out_dir) {
    fpam::RunOptions o;
    o.pipeline = pipeline;
    o.out_dir = out_dir;
    const auto r = fpam::run_pipeline(parse(config), o);
    return py::make_tuple(r.run_dir.string(), r.ok);
  });
}
