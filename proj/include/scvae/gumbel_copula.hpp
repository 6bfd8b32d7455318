#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "scvae/errors.hpp"
#include "scvae/random.hpp"

namespace scvae {

/// Marginal probabilities are clamped into [kProbFloor, 1 - kProbFloor]
/// before entering the copula.
inline constexpr double kProbFloor = 1e-6;
/// Floor applied to each joint cell before renormalization.
inline constexpr double kCellFloor = 1e-12;
inline constexpr double kAlphaMin = 1.0 + 1e-6;
inline constexpr double kAlphaMax = 50.0;

inline double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

inline double softplus(double a) {
  return a > 30.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

inline double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

/// Unconstrained storage of the dependence parameter: alpha = 1 + softplus(raw),
/// clipped to [kAlphaMin, kAlphaMax].
struct CopulaParam {
  double raw = 0.0;

  double alpha() const { return std::clamp(1.0 + softplus(raw), kAlphaMin, kAlphaMax); }

  /// d alpha / d raw; zero where the clip is active.
  double dalpha_draw() const {
    double a = 1.0 + softplus(raw);
    if (a <= kAlphaMin || a >= kAlphaMax) return 0.0;
    return sigmoid(raw);
  }

  /// Inverse map, valid for alpha in (1, kAlphaMax].
  static CopulaParam from_alpha(double alpha) {
    require(alpha > 1.0, ErrorCode::InvalidArgument, "alpha must exceed 1 to invert");
    double s = std::min(alpha, kAlphaMax) - 1.0;
    // softplus^{-1}(s) = log(expm1(s))
    double raw = s > 30.0 ? s + std::log1p(-std::exp(-s)) : std::log(std::expm1(s));
    return {raw};
  }
};

struct CellProbs {
  double p11 = 0.25;
  double p10 = 0.25;
  double p01 = 0.25;
  double p00 = 0.25;

  double p1() const { return p11 + p10; }
  double p2() const { return p11 + p01; }
  double sum() const { return p11 + p10 + p01 + p00; }

  double select(int y1, int y2) const {
    if (y1) return y2 ? p11 : p10;
    return y2 ? p01 : p00;
  }
};

namespace detail {

inline double log_add_exp(double a, double b) {
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

/// Gumbel copula C_alpha(p1, p2) = exp(-[(-log p1)^a + (-log p2)^a]^{1/a}).
inline double gumbel_cdf(double p1, double p2, double alpha) {
  require(!std::isnan(p1) && !std::isnan(p2) && !std::isnan(alpha), ErrorCode::InvalidArgument,
          "NaN input to gumbel_cdf");
  require(alpha >= 1.0, ErrorCode::InvalidArgument, "alpha must be >= 1");
  p1 = std::clamp(p1, 0.0, 1.0);
  p2 = std::clamp(p2, 0.0, 1.0);
  if (p1 == 0.0 || p2 == 0.0) return 0.0;
  if (p1 == 1.0) return p2;
  if (p2 == 1.0) return p1;
  const double t1 = -std::log(p1);
  const double t2 = -std::log(p2);
  if (alpha == 1.0) return std::exp(-(t1 + t2));
  // log A = log(t1^a + t2^a), evaluated without overflow.
  const double log_a = detail::log_add_exp(alpha * std::log(t1), alpha * std::log(t2));
  return std::exp(-std::exp(log_a / alpha));
}

/// Four joint Bernoulli cells built from the copula, floored and renormalized.
inline CellProbs cell_probs(double p1, double p2, double alpha) {
  const double p11 = gumbel_cdf(p1, p2, alpha);
  CellProbs c{p11, p1 - p11, p2 - p11, 1.0 - p1 - p2 + p11};
  c.p11 = std::clamp(c.p11, kCellFloor, 1.0);
  c.p10 = std::clamp(c.p10, kCellFloor, 1.0);
  c.p01 = std::clamp(c.p01, kCellFloor, 1.0);
  c.p00 = std::clamp(c.p00, kCellFloor, 1.0);
  const double s = c.sum();
  c.p11 /= s;
  c.p10 /= s;
  c.p01 /= s;
  c.p00 /= s;
  return c;
}

inline double log_joint_bernoulli(int y1, int y2, const CellProbs& cells) {
  // Exponent-selector form; exactly one exponent is 1.
  const double a = y1 * y2, b = y1 * (1 - y2), c = (1 - y1) * y2, d = (1 - y1) * (1 - y2);
  return a * std::log(cells.p11) + b * std::log(cells.p10) + c * std::log(cells.p01) +
         d * std::log(cells.p00);
}

inline double upper_tail_dependence(double alpha) {
  require(alpha >= 1.0, ErrorCode::InvalidArgument, "alpha must be >= 1");
  return 2.0 - std::pow(2.0, 1.0 / alpha);
}

inline double kendall_tau(double alpha) {
  require(alpha >= 1.0, ErrorCode::InvalidArgument, "alpha must be >= 1");
  return 1.0 - 1.0 / alpha;
}

/// Positive-stable variate with Laplace transform exp(-s^index), index in (0, 1]
/// (Kanter / Chambers-Mallows-Stuck with skewness 1).
inline double positive_stable(double index, RandomStream& rng) {
  if (index >= 1.0) return 1.0;
  const double theta = std::numbers::pi * open_uniform(rng);
  const double w = standard_exponential(rng);
  const double a = index;
  return std::sin(a * theta) / std::pow(std::sin(theta), 1.0 / a) *
         std::pow(std::sin((1.0 - a) * theta) / w, (1.0 - a) / a);
}

/// One draw (U1, U2) ~ C_alpha by the Marshall-Olkin frailty construction.
inline std::pair<double, double> sample_pair(double alpha, RandomStream& rng) {
  require(alpha >= 1.0, ErrorCode::InvalidArgument, "alpha must be >= 1");
  const double v = positive_stable(1.0 / alpha, rng);
  const double e1 = standard_exponential(rng);
  const double e2 = standard_exponential(rng);
  const double u1 = std::exp(-std::pow(e1 / v, 1.0 / alpha));
  const double u2 = std::exp(-std::pow(e2 / v, 1.0 / alpha));
  return {u1, u2};
}

struct CdfPartials {
  double dp1 = 0.0;
  double dp2 = 0.0;
  double dalpha = 0.0;
};

/// Closed-form partial derivatives of gumbel_cdf for p1, p2 strictly inside (0, 1).
inline CdfPartials cdf_partials(double p1, double p2, double alpha) {
  const double t1 = -std::log(p1);
  const double t2 = -std::log(p2);
  if (alpha == 1.0) {
    const double c = p1 * p2;
    const double s = t1 + t2;
    const double dlog_s = -std::log(s) + (t1 * std::log(t1) + t2 * std::log(t2)) / s;
    return {p2, p1, -c * s * dlog_s};
  }
  const double la1 = alpha * std::log(t1);
  const double la2 = alpha * std::log(t2);
  const double log_a = detail::log_add_exp(la1, la2);
  const double s = std::exp(log_a / alpha);  // A^{1/alpha}
  const double c = std::exp(-s);
  // A^{1/alpha - 1} t_i^{alpha - 1} = s * t_i^alpha / (A t_i)
  const double w1 = std::exp(la1 - log_a);  // t1^a / A
  const double w2 = std::exp(la2 - log_a);
  CdfPartials out;
  out.dp1 = c * s * w1 / (t1 * p1);
  out.dp2 = c * s * w2 / (t2 * p2);
  const double dlog_s = -log_a / (alpha * alpha) + (w1 * std::log(t1) + w2 * std::log(t2)) / alpha;
  out.dalpha = -c * s * dlog_s;
  return out;
}

/// Gradient of log P(Y1 = y1, Y2 = y2) with respect to (p1, p2, alpha), along
/// with the log-probability itself. Cells hit by the floor contribute no gradient.
struct CellLogGrad {
  double log_prob = 0.0;
  double dp1 = 0.0;
  double dp2 = 0.0;
  double dalpha = 0.0;
};

inline CellLogGrad cell_log_grad(int y1, int y2, double p1, double p2, double alpha) {
  const CellProbs cells = cell_probs(p1, p2, alpha);
  CellLogGrad g;
  g.log_prob = log_joint_bernoulli(y1, y2, cells);
  const double cell = cells.select(y1, y2);
  if (cell <= kCellFloor * 1.0000001) return g;
  const CdfPartials d = cdf_partials(p1, p2, alpha);
  double a = 0.0, b = 0.0, c = 0.0;
  if (y1 && y2) {
    a = d.dp1, b = d.dp2, c = d.dalpha;
  } else if (y1) {
    a = 1.0 - d.dp1, b = -d.dp2, c = -d.dalpha;
  } else if (y2) {
    a = -d.dp1, b = 1.0 - d.dp2, c = -d.dalpha;
  } else {
    a = d.dp1 - 1.0, b = d.dp2 - 1.0, c = d.dalpha;
  }
  g.dp1 = a / cell;
  g.dp2 = b / cell;
  g.dalpha = c / cell;
  return g;
}

}  // namespace scvae
