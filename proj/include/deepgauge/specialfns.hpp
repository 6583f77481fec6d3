#pragma once

// Special functions for the truncated-gamma likelihood, return-level
// quantiles and the copula samplers. Everything here works in log space
// where the quantities of interest underflow (tail probabilities far beyond
// 1e-300 occur when evaluating copula densities at radius 200).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include "deepgauge/errors.hpp"

namespace deepgauge::specialfns {

inline constexpr double kLog2 = std::numbers::ln2;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// ln Γ(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

inline double log_sum_exp(std::span<const double> values) {
  double top = kNegInf;
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

/// log(1 - exp(x)) for x <= 0, accurate near both ends.
inline double log1m_exp(double x) {
  if (x > -kLog2) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

namespace detail {

inline void check_gamma_args(double alpha, double z, const char* fn) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw DomainError(std::string(fn) + ": shape must be positive, got " +
                      std::to_string(alpha));
  }
  if (!(z >= 0.0)) {
    throw DomainError(std::string(fn) + ": argument must be non-negative, got " +
                      std::to_string(z));
  }
}

// log of z^a e^{-z} / Γ(a)
inline double log_gamma_prefix(double alpha, double z) {
  return alpha * std::log(z) - z - log_gamma(alpha);
}

// Series for the lower regularized incomplete gamma; returns log P(a, z).
inline double log_lower_series(double alpha, double z) {
  double ap = alpha;
  double term = 1.0 / alpha;
  double sum = term;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    term *= z / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return log_gamma_prefix(alpha, z) + std::log(sum);
}

// Modified Lentz continued fraction for the upper regularized incomplete
// gamma; returns log Q(a, z). Valid for z >= a + 1.
inline double log_upper_fraction(double alpha, double z) {
  constexpr double tiny = 1e-300;
  double b = z + 1.0 - alpha;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - alpha);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return log_gamma_prefix(alpha, z) + std::log(h);
}

}  // namespace detail

/// log Q(α, z) where Q(α, z) = Γ(α, z) / Γ(α).
inline double log_reg_gamma_upper(double alpha, double z) {
  detail::check_gamma_args(alpha, z, "reg_gamma_upper");
  if (z == 0.0) return 0.0;
  if (std::isinf(z)) return kNegInf;
  if (z < alpha + 1.0) return log1m_exp(detail::log_lower_series(alpha, z));
  return detail::log_upper_fraction(alpha, z);
}

/// log P(α, z) = log(1 - Q(α, z)).
inline double log_reg_gamma_lower(double alpha, double z) {
  detail::check_gamma_args(alpha, z, "reg_gamma_lower");
  if (z == 0.0) return kNegInf;
  if (std::isinf(z)) return 0.0;
  if (z < alpha + 1.0) return detail::log_lower_series(alpha, z);
  return log1m_exp(detail::log_upper_fraction(alpha, z));
}

inline double reg_gamma_upper(double alpha, double z) {
  detail::check_gamma_args(alpha, z, "reg_gamma_upper");
  if (z == 0.0) return 1.0;
  if (z < alpha + 1.0) return -std::expm1(detail::log_lower_series(alpha, z));
  return std::exp(detail::log_upper_fraction(alpha, z));
}

inline double reg_gamma_lower(double alpha, double z) {
  detail::check_gamma_args(alpha, z, "reg_gamma_lower");
  if (z == 0.0) return 0.0;
  if (z < alpha + 1.0) return std::exp(detail::log_lower_series(alpha, z));
  return -std::expm1(detail::log_upper_fraction(alpha, z));
}

/// Log density of Gamma(shape α, rate 1) at z > 0.
inline double log_gamma_density(double alpha, double z) {
  if (z <= 0.0) return kNegInf;
  return (alpha - 1.0) * std::log(z) - z - log_gamma(alpha);
}

/// d/dz log Q(α, z) = -z^{α-1} e^{-z} / (Γ(α) Q(α, z)).
inline double dlog_reg_gamma_upper_dz(double alpha, double z) {
  if (z <= 0.0) return alpha < 1.0 ? kNegInf : (alpha == 1.0 ? -1.0 : 0.0);
  return -std::exp(log_gamma_density(alpha, z) - log_reg_gamma_upper(alpha, z));
}

namespace detail {

// Solves f(z) = 0 for a decreasing f on (0, ∞) with f(0+) > 0, by bracketing
// and bisection, followed by one Newton step kept inside the bracket.
template <class F, class DF>
double solve_decreasing(F f, DF df, double start) {
  double lo = 0.0;
  double hi = std::max(start, 1.0);
  int guard = 0;
  while (f(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 2000) throw DomainError("gamma quantile: bracket search failed");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double z = 0.5 * (lo + hi);
  const double slope = df(z);
  if (std::isfinite(slope) && slope < 0.0) {
    const double step = z - f(z) / slope;
    if (step >= lo && step <= hi) z = step;
  }
  return z;
}

}  // namespace detail

/// z with log Q(α, z) = log_q; log_q <= 0.
inline double inv_log_reg_gamma_upper(double alpha, double log_q) {
  detail::check_gamma_args(alpha, 0.0, "inv_reg_gamma_upper");
  if (!(log_q <= 0.0)) throw DomainError("inv_reg_gamma_upper: log probability must be <= 0");
  if (log_q == 0.0) return 0.0;
  if (std::isinf(log_q)) throw DomainError("inv_reg_gamma_upper: zero upper mass has infinite quantile");
  auto f = [&](double z) { return log_reg_gamma_upper(alpha, z) - log_q; };
  auto df = [&](double z) { return dlog_reg_gamma_upper_dz(alpha, z); };
  return detail::solve_decreasing(f, df, alpha);
}

/// z with P(α, z) = p, p in [0, 1).
inline double inv_reg_gamma_lower(double alpha, double p) {
  detail::check_gamma_args(alpha, 0.0, "inv_reg_gamma_lower");
  if (!(p >= 0.0 && p < 1.0)) {
    throw DomainError("inv_reg_gamma_lower: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (p == 0.0) return 0.0;
  if (p > 0.5) return inv_log_reg_gamma_upper(alpha, std::log1p(-p));
  const double log_p = std::log(p);
  auto f = [&](double z) { return log_p - log_reg_gamma_lower(alpha, z); };
  auto df = [&](double z) {
    return -std::exp(log_gamma_density(alpha, z) - log_reg_gamma_lower(alpha, z));
  };
  return detail::solve_decreasing(f, df, alpha);
}

// ---------------------------------------------------------------------------
// Normal distribution

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double log_normal_density(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

/// log Φ(x), finite for every finite x.
inline double log_normal_cdf(double x) {
  if (x < -35.0) {
    const double inv2 = 1.0 / (x * x);
    const double series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
    return log_normal_density(x) - std::log(-x) + std::log(series);
  }
  if (x <= 0.0) return std::log(0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0));
  return std::log1p(-0.5 * std::erfc(x * std::numbers::sqrt2 / 2.0));
}

namespace detail {

// Wichura's AS241 (PPND16) initial approximation, given p and log p of the
// lower tail (p <= 0.5).
inline double as241_lower(double p, double log_p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = std::sqrt(-log_p);
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r + .24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + .0151986665636164571966) * r +
               .14810397642748007459) * r + .68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + .0012426609473880784386) * r +
               .026532189526576123093) * r + .29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + .0148753612908506148525) * r + .13692988092273580531) * r +
            .59983220655588793769) * r + 1.0);
  }
  return -val;
}

}  // namespace detail

/// x with log Φ(x) = log_p, for log_p <= log(1/2). Handles log_p far below
/// the double range of p itself.
inline double normal_quantile_log(double log_p) {
  if (!(log_p <= 0.0)) throw DomainError("normal_quantile_log: log probability must be <= 0");
  if (log_p > -kLog2) return -normal_quantile_log(log1m_exp(log_p));
  const double p = std::exp(log_p);
  double x = detail::as241_lower(p, log_p);
  for (int i = 0; i < 3; ++i) {
    const double f = log_normal_cdf(x) - log_p;
    const double slope = std::exp(log_normal_density(x) - log_normal_cdf(x));
    x -= f / slope;
  }
  return x;
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  if (p <= 0.5) return normal_quantile_log(std::log(p));
  return -normal_quantile_log(std::log1p(-p));
}

// ---------------------------------------------------------------------------
// Incomplete beta and Student-t

namespace detail {

inline double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < 100000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h;
}

inline double log_beta(double a, double b) { return log_gamma(a) + log_gamma(b) - log_gamma(a + b); }

}  // namespace detail

/// log I_x(a, b), the regularized incomplete beta. `log_x` and `log_1mx`
/// carry log x and log(1 - x) so that callers can avoid cancellation.
inline double log_reg_beta(double a, double b, double x, double log_x, double log_1mx) {
  if (x <= 0.0) return kNegInf;
  if (x >= 1.0) return 0.0;
  const double front = a * log_x + b * log_1mx - detail::log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front + std::log(detail::beta_fraction(a, b, x)) - std::log(a);
  }
  const double complement = front + std::log(detail::beta_fraction(b, a, 1.0 - x)) - std::log(b);
  return log1m_exp(complement);
}

inline double log_reg_beta(double a, double b, double x) {
  return log_reg_beta(a, b, x, std::log(x), std::log1p(-x));
}

/// log Pr(T > y) for T ~ Student-t with nu degrees of freedom.
inline double log_student_t_sf(double y, double nu) {
  if (!(nu > 0.0)) throw DomainError("student_t: degrees of freedom must be positive");
  if (std::isinf(y)) return y > 0 ? kNegInf : 0.0;
  const double ay = std::abs(y);
  double log_den;  // log(nu + y^2)
  if (ay > 1e100) {
    log_den = 2.0 * std::log(ay);
  } else {
    log_den = std::log(nu + ay * ay);
  }
  const double log_x = std::log(nu) - log_den;
  const double log_1mx = 2.0 * std::log(ay) - log_den;
  const double x = std::exp(log_x);
  const double tail = -kLog2 + log_reg_beta(0.5 * nu, 0.5, x, log_x, log_1mx);
  if (y >= 0.0) return tail;
  return log1m_exp(tail);
}

inline double student_t_cdf(double y, double nu) {
  if (y < 0.0) return std::exp(log_student_t_sf(-y, nu));
  return -std::expm1(log_student_t_sf(y, nu));
}

inline double log_student_t_density(double y, double nu) {
  const double ay = std::abs(y);
  const double log_kernel =
      ay > 1e100 ? 2.0 * std::log(ay) - std::log(nu) : std::log1p(ay * ay / nu);
  return log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         0.5 * (nu + 1.0) * log_kernel;
}

/// y with log Pr(T > y) = log_q.
inline double student_t_quantile_log_sf(double log_q, double nu) {
  if (!(log_q <= 0.0)) throw DomainError("student_t_quantile: log probability must be <= 0");
  if (log_q > -kLog2) return -student_t_quantile_log_sf(log1m_exp(log_q), nu);
  if (log_q == -kLog2) return 0.0;
  // Bisection in log y; the survival function is monotone in y.
  double lo = -40.0;
  double hi = 700.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (log_student_t_sf(std::exp(mid), nu) > log_q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace deepgauge::specialfns
