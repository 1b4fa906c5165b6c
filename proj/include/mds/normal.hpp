#pragma once

// Standard normal helpers with stable tails.
//
// log_phi(x) = log Phi(x) and inverse_mills(x) = phi(x) / Phi(x) stay finite
// and accurate for very negative x, where Phi(x) itself underflows.

#include <cmath>
#include <numbers>

namespace mds {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kSqrtTwoOverPi = 0.79788456080286535587989211986876;
inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

namespace detail {

// Below this argument erfcx switches from exp(t^2) * erfc(t) to the continued
// fraction. 40 terms reach double precision for t >= 3.
inline constexpr double kErfcxSwitch = 3.0;
inline constexpr int kErfcxTerms = 40;

// Scaled complementary error function exp(t^2) erfc(t), t >= 0.
inline double erfcx_nonneg(double t) {
  if (t < kErfcxSwitch) {
    return std::exp(t * t) * std::erfc(t);
  }
  double tail = 0.0;
  for (int k = kErfcxTerms; k > 0; --k) {
    tail = (0.5 * k) / (t + tail);
  }
  return 1.0 / (std::sqrt(std::numbers::pi) * (t + tail));
}

}  // namespace detail

/// log of the standard normal CDF.
inline double log_phi(double x) {
  if (x >= 0.0) {
    return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  }
  if (x >= -1.0) {
    return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  }
  // Phi(x) = exp(-x^2/2) erfcx(-x/sqrt2) / 2
  return -0.5 * x * x + std::log(0.5 * detail::erfcx_nonneg(-x * kInvSqrt2));
}

/// phi(x) / Phi(x), the inverse Mills ratio of the lower tail.
inline double inverse_mills(double x) {
  if (x >= -1.0) {
    const double pdf = std::exp(-0.5 * x * x - 0.5 * kLogTwoPi);
    return pdf / (0.5 * std::erfc(-x * kInvSqrt2));
  }
  return kSqrtTwoOverPi / detail::erfcx_nonneg(-x * kInvSqrt2);
}

inline double log_normal_pdf(double x) { return -0.5 * (kLogTwoPi + x * x); }

}  // namespace mds
