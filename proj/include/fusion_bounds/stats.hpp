#pragma once

#include <cmath>
#include <span>

namespace fusion_bounds {

inline double expit(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal CDF. Acklam's rational approximation refined by
/// one Halley step; accurate to a few ulps on (0, 1). Returns +/-inf at the
/// endpoints.
double normal_quantile(double p) noexcept;

/// Two-sided critical value for a confidence level c, i.e. z at 1 - (1-c)/2.
inline double two_sided_z(double confidence) noexcept {
    return normal_quantile(1.0 - (1.0 - confidence) / 2.0);
}

double mean(std::span<const double> values) noexcept;

/// Population (1/n) variance about the sample mean.
double variance_mle(std::span<const double> values) noexcept;

/// Unbiased (1/(n-1)) sample variance.
double variance_unbiased(std::span<const double> values) noexcept;

}  // namespace fusion_bounds
