#pragma once

#include <functional>

namespace fpam::quad {

// Integrand receiving the abscissa x and its distance to the nearest interval
// endpoint, so integrable endpoint singularities can be evaluated without
// cancellation.
using EndpointAwareFn = std::function<double(double x, double dist_to_endpoint)>;

// Double-exponential quadrature on [a, b]; integrable singularities at the
// endpoints are allowed. Throws Error(NonConvergent) if the error estimate
// exceeds both rel_tol * |result| and abs_tol.
double finite(const EndpointAwareFn& f, double a, double b, double rel_tol, double abs_tol = 0.0);

// Integral over [a, inf) of an integrand decaying at infinity.
double half_line(const std::function<double(double)>& f, double a, double rel_tol, double abs_tol = 0.0);

// Fixed-order tensor Gauss-Legendre over an axis-aligned box in `dim` dimensions.
double gauss_box(const std::function<double(const double*)>& f, int dim,
                 const double* lower, const double* upper);

}  // namespace fpam::quad
