#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sirld/error.hpp"

/**
 * \file
 * \brief Small statistics toolbox: log-domain reductions, binomial intervals,
 * Kolmogorov-Smirnov tests and least squares.
 */

namespace sirld::stats {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// log(sum_i exp(x_i)); -inf for an empty range or when every term is -inf.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) {
    return neg_inf;
  }
  const double top = *std::max_element(xs.begin(), xs.end());
  if (top == neg_inf) {
    return neg_inf;
  }
  if (std::isinf(top)) {
    return top;
  }
  double sum = 0.0;
  for (double x : xs) {
    sum += std::exp(x - top);
  }
  return top + std::log(sum);
}

/// Mean of exp(x_i) over `count` samples where only the listed terms are nonzero.
/// Carries everything through a max shift so that weights beyond the double range
/// still produce a finite log mean.
struct LogMean {
  double log_mean = neg_inf;  ///< log of the sample mean
  double std_error = 0.0;     ///< standard error of the sample mean (linear scale)
  double log_std_error = neg_inf;
  double ess = 0.0;           ///< (sum w)^2 / sum w^2 over the nonzero terms
};

inline LogMean log_mean_exp(std::span<const double> log_terms, std::size_t count) {
  require(count >= 1, "log_mean_exp: count must be positive");
  LogMean out;
  if (log_terms.empty()) {
    return out;
  }
  const double top = *std::max_element(log_terms.begin(), log_terms.end());
  if (top == neg_inf) {
    return out;
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : log_terms) {
    const double w = std::exp(x - top);
    sum += w;
    sum_sq += w * w;
  }
  const auto m = static_cast<double>(count);
  const double mean_shifted = sum / m;
  out.log_mean = top + std::log(mean_shifted);
  out.ess = sum * sum / sum_sq;
  if (count > 1) {
    // zero terms contribute (0 - mean)^2 each
    const double var_shifted = std::max(0.0, (sum_sq - m * mean_shifted * mean_shifted) / (m - 1.0));
    const double se_shifted = std::sqrt(var_shifted / m);
    out.log_std_error = se_shifted > 0.0 ? top + std::log(se_shifted) : neg_inf;
    out.std_error = std::exp(out.log_std_error);
  }
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  require(n > 0, "wilson_interval: n must be positive");
  require(k <= n, "wilson_interval: k exceeds n");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // the endpoints are exact at k = 0 and k = n; rounding would otherwise leave them off by an ulp
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

struct MeanError {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanError mean_and_error(std::span<const double> xs) {
  require(!xs.empty(), "mean_and_error: empty sample");
  const auto m = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  if (xs.size() == 1) {
    return {mean, 0.0};
  }
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - mean) * (x - mean);
  }
  return {mean, std::sqrt(ss / (m - 1.0) / m)};
}

/// Effective sample size (sum w)^2 / sum w^2 of linear-scale weights.
inline double effective_sample_size(std::span<const double> weights) {
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double w : weights) {
    sum += w;
    sum_sq += w * w;
  }
  return sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
}

/// Kolmogorov distribution tail Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_tail(double x) {
  if (x < 0.18) {
    return 1.0;
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * x * x);
    sum += term;
    if (std::abs(term) < 1e-16) {
      break;
    }
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample KS test against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  require(!sample.empty(), "ks_one_sample: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto m = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double f = cdf(sample[k]);
    d = std::max({d, static_cast<double>(k + 1) / m - f, f - static_cast<double>(k) / m});
  }
  const double root = std::sqrt(m);
  return {d, kolmogorov_tail((root + 0.12 + 0.11 / root) * d)};
}

/// Two-sample KS test. Conservative for discrete data.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) {
      ++i;
    }
    while (j < b.size() && b[j] == x) {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "least_squares: size mismatch");
  require(x.size() >= 2, "least_squares: need at least two points");
  const auto m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  require(sxx > 0.0, "least_squares: abscissae are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace sirld::stats
