#pragma once

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <span>

#include "texsynth/error.hpp"

namespace texsynth::eval {

/// Zero-mean generalized Gaussian with density
/// beta / (2 alpha Gamma(1/beta)) * exp(-(|x| / alpha)^beta).
struct GgdParams {
  double alpha = 1.0;  // scale
  double beta = 2.0;   // shape
  bool clamped = false;  // moment ratio fell outside the shape bracket

  void validate() const {
    if (!(alpha > 0.0 && std::isfinite(alpha) && beta > 0.0 && std::isfinite(beta)))
      fail(ErrorCode::InvalidArgument, "generalized Gaussian parameters must be finite and positive");
  }
};

inline constexpr double kShapeMin = 0.05;
inline constexpr double kShapeMax = 20.0;
inline constexpr std::size_t kMinGgdSamples = 32;

/// (E|x|)^2 / E[x^2] as a function of the shape; increasing in beta.
inline double ggd_moment_ratio(double beta) {
  return std::exp(2.0 * std::lgamma(2.0 / beta) - std::lgamma(1.0 / beta) - std::lgamma(3.0 / beta));
}

/// Moment-matching fit: the shape solves the ratio equation by bracketed
/// root finding on [kShapeMin, kShapeMax], the scale then follows from E[x^2].
inline GgdParams fit_ggd(std::span<const double> samples) {
  if (samples.size() < kMinGgdSamples) fail(ErrorCode::InvalidArgument, "need at least 32 samples for a GGD fit");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= double(samples.size());
  double m1 = 0.0, m2 = 0.0, var = 0.0;
  for (double v : samples) {
    m1 += std::abs(v);
    m2 += v * v;
    var += (v - mean) * (v - mean);
  }
  m1 /= double(samples.size());
  m2 /= double(samples.size());
  if (!(var > 0.0) || !(m1 > 0.0)) fail(ErrorCode::DegenerateSample, "sample has zero variance");

  const double rho = m1 * m1 / m2;
  GgdParams p;
  if (rho <= ggd_moment_ratio(kShapeMin)) {
    p.beta = kShapeMin;
    p.clamped = true;
  } else if (rho >= ggd_moment_ratio(kShapeMax)) {
    p.beta = kShapeMax;
    p.clamped = true;
  } else {
    std::uintmax_t max_iter = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(
        [rho](double b) { return ggd_moment_ratio(b) - rho; }, kShapeMin, kShapeMax,
        boost::math::tools::eps_tolerance<double>(52), max_iter);
    p.beta = 0.5 * (lo + hi);
  }
  p.alpha = std::sqrt(m2 * std::exp(std::lgamma(1.0 / p.beta) - std::lgamma(3.0 / p.beta)));
  return p;
}

/// Closed-form KL(p || q) between zero-mean generalized Gaussians.
inline double kl_ggd(const GgdParams& p, const GgdParams& q) {
  p.validate();
  q.validate();
  if (p.alpha == q.alpha && p.beta == q.beta) return 0.0;
  const double log_ratio = std::log(p.beta * q.alpha / (q.beta * p.alpha)) + std::lgamma(1.0 / q.beta) -
                           std::lgamma(1.0 / p.beta);
  const double cross = std::pow(p.alpha / q.alpha, q.beta) *
                       std::exp(std::lgamma((q.beta + 1.0) / p.beta) - std::lgamma(1.0 / p.beta));
  return std::max(0.0, log_ratio + cross - 1.0 / p.beta);
}

}  // namespace texsynth::eval
