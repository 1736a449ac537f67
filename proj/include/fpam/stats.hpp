#pragma once

#include <functional>
#include <span>
#include <vector>

namespace fpam::stats {

// log(sum exp(x_i)) by pairwise reduction; deterministic for a given input order.
double log_sum_exp(std::span<const double> x);

struct MeanStd {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error of the mean
  double sd = 0.0;
};

MeanStd mean_stderr(std::span<const double> x);

// Pairwise (tree) sum.
double pairwise_sum(std::span<const double> x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test, asymptotic p-value with the
// Stephens small-sample correction.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// One-sample test against a continuous CDF.
KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf);

// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Weighted least squares y ~ intercept + slope * x.
LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w);

}  // namespace fpam::stats
