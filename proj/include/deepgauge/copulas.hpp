#pragma once

// Gaussian, Student-t and logistic (Gumbel) copulas on standard Laplace
// margins: samplers, theoretical gauges, joint log-densities, a numerical
// gauge from the log-density limit and orthant-probability oracles.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "deepgauge/errors.hpp"
#include "deepgauge/margins.hpp"
#include "deepgauge/specialfns.hpp"

namespace deepgauge {

enum class CopulaKind { gaussian, student_t, logistic };

inline std::string_view to_string(CopulaKind kind) {
  switch (kind) {
    case CopulaKind::gaussian: return "gaussian";
    case CopulaKind::student_t: return "student_t";
    case CopulaKind::logistic: return "logistic";
  }
  return "gaussian";
}

inline CopulaKind copula_from_string(std::string_view name) {
  if (name == "gaussian") return CopulaKind::gaussian;
  if (name == "student_t" || name == "t") return CopulaKind::student_t;
  if (name == "logistic" || name == "gumbel") return CopulaKind::logistic;
  throw ConfigError("unknown copula '" + std::string(name) + "'");
}

struct CopulaSpec {
  CopulaKind kind = CopulaKind::gaussian;
  Eigen::MatrixXd corr;  ///< gaussian and student_t
  double nu = 1.0;       ///< student_t degrees of freedom
  double theta = 1.0;    ///< logistic dependence, Gumbel parameter 1/θ
  Eigen::Index d = 2;

  static CopulaSpec gaussian(Eigen::MatrixXd corr) {
    CopulaSpec s;
    s.kind = CopulaKind::gaussian;
    s.d = corr.rows();
    s.corr = std::move(corr);
    return s;
  }

  static CopulaSpec student_t(Eigen::MatrixXd corr, double nu) {
    CopulaSpec s;
    s.kind = CopulaKind::student_t;
    s.d = corr.rows();
    s.corr = std::move(corr);
    s.nu = nu;
    return s;
  }

  static CopulaSpec logistic(Eigen::Index d, double theta) {
    CopulaSpec s;
    s.kind = CopulaKind::logistic;
    s.d = d;
    s.theta = theta;
    return s;
  }

  [[nodiscard]] bool elliptical() const { return kind != CopulaKind::logistic; }

  void validate() const {
    if (d < 1) throw ConfigError("copula: dimension must be positive");
    if (elliptical()) {
      if (corr.rows() != d || corr.cols() != d) throw ConfigError("copula: correlation matrix must be d×d");
      if (!corr.allFinite()) throw ConfigError("copula: correlation matrix has non-finite entries");
      if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ConfigError("copula: correlation matrix must be symmetric");
      }
      if ((corr.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
        throw ConfigError("copula: correlation matrix must have unit diagonal");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(corr);
      if (llt.info() != Eigen::Success) throw ConfigError("copula: correlation matrix is not positive definite");
    }
    if (kind == CopulaKind::student_t && !(nu > 0.0 && std::isfinite(nu))) {
      throw ConfigError("copula: degrees of freedom must be positive");
    }
    if (kind == CopulaKind::logistic && !(theta > 0.0 && theta <= 1.0)) {
      throw ConfigError("copula: logistic theta must lie in (0, 1]");
    }
  }

  [[nodiscard]] Eigen::MatrixXd precision() const { return corr.inverse(); }
};

namespace copulas {

// ---------------------------------------------------------------------------
// Correlation structures

/// A random correlation matrix of size d_max from the normalised Gram matrix
/// of a d_max × (d_max + 2) standard normal matrix. Lower dimensions use
/// its leading block.
inline Eigen::MatrixXd nested_correlation(Eigen::Index d_max, std::uint64_t seed) {
  if (d_max < 2) throw ConfigError("nested_correlation: d_max must be at least 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(d_max, d_max + 2);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = std::abs(normal(rng));
  }
  const Eigen::MatrixXd gram = a * a.transpose();
  const Eigen::VectorXd inv_sd = gram.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * gram * inv_sd.asDiagonal();
  corr.diagonal().setOnes();
  return 0.5 * (corr + corr.transpose());
}

inline Eigen::MatrixXd leading_block(const Eigen::MatrixXd& corr, Eigen::Index d) {
  if (d < 1 || d > corr.rows()) throw ConfigError("leading_block: requested size out of range");
  return corr.topLeftCorner(d, d);
}

inline Eigen::MatrixXd exchangeable_correlation(Eigen::Index d, double rho) {
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(d, d, rho);
  corr.diagonal().setOnes();
  return corr;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline double laplace_from_normal(double y) {
  using namespace specialfns;
  return y > 0.0 ? margins::laplace_from_log_sf(log_normal_cdf(-y)) : margins::laplace_from_log_cdf(log_normal_cdf(y));
}

inline double laplace_from_student(double y, double nu) {
  using namespace specialfns;
  return y > 0.0 ? margins::laplace_from_log_sf(log_student_t_sf(y, nu))
                 : margins::laplace_from_log_cdf(log_student_t_sf(-y, nu));
}

/// Positive stable variate with Laplace transform exp(-t^θ) (Kanter).
template <class Rng>
double positive_stable(double theta, Rng& rng) {
  if (theta == 1.0) return 1.0;
  std::uniform_real_distribution<double> unif(0.0, std::numbers::pi);
  std::exponential_distribution<double> expo(1.0);
  double angle = unif(rng);
  while (angle == 0.0) angle = unif(rng);
  const double w = expo(rng);
  return std::sin(theta * angle) / std::pow(std::sin(angle), 1.0 / theta) *
         std::pow(std::sin((1.0 - theta) * angle) / w, (1.0 - theta) / theta);
}

}  // namespace detail

/// n i.i.d. rows on standard Laplace margins, deterministic per seed.
inline DataMatrix sample(const CopulaSpec& spec, Eigen::Index n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample: n must be positive");
  const Eigen::Index d = spec.d;
  std::mt19937_64 rng(seed);
  DataMatrix out;
  out.margin = MarginTag::laplace;
  out.values.resize(n, d);
  if (spec.kind == CopulaKind::logistic) {
    std::exponential_distribution<double> expo(1.0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double v = detail::positive_stable(spec.theta, rng);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double log_u = -std::pow(expo(rng) / v, spec.theta);
        out.values(r, i) = margins::laplace_from_log_cdf(log_u);
      }
    }
    return out;
  }
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(spec.corr).matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chisq(spec.nu);
  Eigen::VectorXd z(d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
    Eigen::VectorXd y = chol * z;
    if (spec.kind == CopulaKind::gaussian) {
      for (Eigen::Index i = 0; i < d; ++i) out.values(r, i) = detail::laplace_from_normal(y(i));
    } else {
      y /= std::sqrt(chisq(rng) / spec.nu);
      for (Eigen::Index i = 0; i < d; ++i) out.values(r, i) = detail::laplace_from_student(y(i), spec.nu);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Theoretical gauges

namespace detail {

inline void require_nonzero(const Eigen::Ref<const Eigen::VectorXd>& x, const char* fn) {
  if (x.cwiseAbs().maxCoeff() == 0.0) throw DomainError(std::string(fn) + ": gauge undefined at the origin");
}

}  // namespace detail

/// Σ_ij s_i Q_ij s_j with s_i = sgn(x_i)|x_i|^{1/2}.
inline double gauge_gaussian(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& q) {
  detail::require_nonzero(x, "gauge_gaussian");
  if (q.rows() != x.size() || q.cols() != x.size()) throw ConfigError("gauge_gaussian: precision matrix size mismatch");
  Eigen::VectorXd s(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s(i) = std::copysign(std::sqrt(std::abs(x(i))), x(i));
  return s.dot(q * s);
}

/// −ν⁻¹ Σ|x_i| + (1 + dν⁻¹) max|x_i|.
inline double gauge_student_t(const Eigen::Ref<const Eigen::VectorXd>& x, double nu) {
  detail::require_nonzero(x, "gauge_student_t");
  if (!(nu > 0.0)) throw DomainError("gauge_student_t: degrees of freedom must be positive");
  const auto d = static_cast<double>(x.size());
  return -x.cwiseAbs().sum() / nu + (1.0 + d / nu) * x.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Joint log-densities

/// Per-coordinate marginal log-cdf, log-survival and log-density.
struct MarginLogs {
  Eigen::VectorXd log_cdf;
  Eigen::VectorXd log_sf;
  Eigen::VectorXd log_density;
};

inline MarginLogs margin_logs(const Eigen::Ref<const Eigen::VectorXd>& x, MarginTag margin) {
  const Eigen::Index d = x.size();
  MarginLogs m{Eigen::VectorXd(d), Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    if (margin == MarginTag::laplace) {
      m.log_cdf(i) = margins::laplace_log_cdf(x(i));
      m.log_sf(i) = margins::laplace_log_sf(x(i));
      m.log_density(i) = margins::laplace_log_density(x(i));
    } else if (margin == MarginTag::exponential) {
      if (!(x(i) > 0.0)) throw DomainError("copula density: exponential margins need positive coordinates");
      m.log_sf(i) = -x(i);
      m.log_cdf(i) = specialfns::log1m_exp(-x(i));
      m.log_density(i) = -x(i);
    } else {
      throw ConfigError("copula density: margins must be laplace or exponential");
    }
  }
  return m;
}

namespace detail {

inline double log_det_spd(const Eigen::MatrixXd& corr) {
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(corr).matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

// Coefficients a_{d,j} with (−1)^d ψ^{(d)}(s) = e^{−s^θ} Σ_j a_{d,j} s^{jθ−d}
// for ψ(s) = exp(−s^θ).
inline std::vector<double> logistic_derivative_coefficients(Eigen::Index d, double theta) {
  std::vector<double> a{0.0, theta};
  for (Eigen::Index k = 1; k < d; ++k) {
    std::vector<double> next(static_cast<std::size_t>(k) + 2, 0.0);
    for (Eigen::Index j = 1; j <= k; ++j) {
      const double c = a[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(j) + 1] += theta * c;
      next[static_cast<std::size_t>(j)] += (static_cast<double>(k) - theta * static_cast<double>(j)) * c;
    }
    a = std::move(next);
  }
  return a;
}

}  // namespace detail

/// Log copula density at the uniforms implied by `m`.
inline double log_copula_density(const CopulaSpec& spec, const MarginLogs& m) {
  const Eigen::Index d = spec.d;
  if (m.log_cdf.size() != d) throw ConfigError("copula density: dimension mismatch");
  switch (spec.kind) {
    case CopulaKind::gaussian: {
      Eigen::VectorXd y(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        y(i) = m.log_cdf(i) < m.log_sf(i) ? specialfns::normal_quantile_log(m.log_cdf(i))
                                          : -specialfns::normal_quantile_log(m.log_sf(i));
      }
      const Eigen::MatrixXd q = spec.precision();
      return -0.5 * (y.dot(q * y) - y.squaredNorm()) - 0.5 * detail::log_det_spd(spec.corr);
    }
    case CopulaKind::student_t: {
      Eigen::VectorXd y(d);
      double marginal = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        y(i) = m.log_cdf(i) < m.log_sf(i) ? -specialfns::student_t_quantile_log_sf(m.log_cdf(i), spec.nu)
                                          : specialfns::student_t_quantile_log_sf(m.log_sf(i), spec.nu);
        marginal += specialfns::log_student_t_density(y(i), spec.nu);
      }
      const double nu = spec.nu;
      const auto dd = static_cast<double>(d);
      const double quad = y.dot(spec.precision() * y);
      const double joint = specialfns::log_gamma(0.5 * (nu + dd)) - specialfns::log_gamma(0.5 * nu) -
                           0.5 * dd * std::log(nu * std::numbers::pi) - 0.5 * detail::log_det_spd(spec.corr) -
                           0.5 * (nu + dd) * std::log1p(quad / nu);
      return joint - marginal;
    }
    case CopulaKind::logistic: {
      const double theta = spec.theta;
      double s = 0.0;
      double log_phi_prime = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double t = -m.log_cdf(i);
        if (!(t > 0.0)) return specialfns::kNegInf;
        s += std::pow(t, 1.0 / theta);
        log_phi_prime += -std::log(theta) + (1.0 / theta - 1.0) * std::log(t) + t;
      }
      const auto a = detail::logistic_derivative_coefficients(d, theta);
      std::vector<double> terms;
      const double log_s = std::log(s);
      for (Eigen::Index j = 1; j <= d; ++j) {
        const double c = a[static_cast<std::size_t>(j)];
        if (c > 0.0) terms.push_back(std::log(c) + (static_cast<double>(j) * theta - static_cast<double>(d)) * log_s);
      }
      return -std::pow(s, theta) + specialfns::log_sum_exp(terms) + log_phi_prime;
    }
  }
  return specialfns::kNegInf;
}

/// Joint log-density of the copula on the given margins.
inline double log_density(const CopulaSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                          MarginTag margin = MarginTag::laplace) {
  const MarginLogs m = margin_logs(x, margin);
  return log_copula_density(spec, m) + m.log_density.sum();
}

/// Gauge from the log-density limit. With v(t) = −log f(t w)/t evaluated at
/// t ∈ {t_max/8, t_max/4, t_max/2, t_max}, fits v(t) ≈ g + b/t + c·log(t)/t
/// by least squares and returns the intercept g. The largest t is raised
/// towards 25/min|w_i| over the nonzero components, up to 1e5, and
/// halved while any log-density is non-finite.
inline double gauge_numerical_oracle(const CopulaSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w,
                                     double t_max = 200.0, MarginTag margin = MarginTag::laplace) {
  spec.validate();
  if (w.size() != spec.d) throw ConfigError("gauge_numerical_oracle: dimension mismatch");
  if (!(t_max > 0.0)) throw ConfigError("gauge_numerical_oracle: t_max must be positive");
  double smallest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) != 0.0) smallest = std::min(smallest, std::abs(w(i)));
  }
  double t_top = std::max(t_max, std::min(25.0 / smallest, 1e5));
  constexpr int k = 4;
  Eigen::Matrix<double, k, 3> design;
  Eigen::Matrix<double, k, 1> v;
  for (;;) {
    bool finite = true;
    for (int j = 0; j < k; ++j) {
      const double t = t_top / std::pow(2.0, 3 - j);
      v(j) = -log_density(spec, t * w, margin) / t;
      finite = finite && std::isfinite(v(j));
      design(j, 0) = 1.0;
      design(j, 1) = 1.0 / t;
      design(j, 2) = std::log(t) / t;
    }
    if (finite || t_top <= t_max) break;
    t_top = std::max(t_max, 0.5 * t_top);
  }
  const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(v);
  return coef(0);
}

/// Theoretical gauge: closed form for the elliptical copulas, numerical
/// oracle for the logistic copula.
inline double gauge_theoretical(const CopulaSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (spec.kind) {
    case CopulaKind::gaussian: return gauge_gaussian(x, spec.precision());
    case CopulaKind::student_t: return gauge_student_t(x, spec.nu);
    case CopulaKind::logistic: {
      detail::require_nonzero(x, "gauge_theoretical");
      const double scale = x.norm();
      return scale * gauge_numerical_oracle(spec, x / scale);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Orthant probabilities

namespace detail {

// Pr(Z > a) for Z ~ N(0, corr), by nested adaptive quadrature over the
// leading coordinate for d <= 3.
inline double gaussian_upper_orthant_quadrature(const Eigen::MatrixXd& corr, const Eigen::VectorXd& a) {
  using boost::math::quadrature::gauss_kronrod;
  const Eigen::Index d = a.size();
  if (d == 1) return specialfns::normal_cdf(-a(0));
  const Eigen::VectorXd r = corr.col(0).tail(d - 1);
  Eigen::MatrixXd cond = corr.bottomRightCorner(d - 1, d - 1) - r * r.transpose();
  const Eigen::VectorXd sd = cond.diagonal().cwiseSqrt();
  const Eigen::MatrixXd cond_corr = sd.cwiseInverse().asDiagonal() * cond * sd.cwiseInverse().asDiagonal();
  auto integrand = [&](double y) {
    const Eigen::VectorXd b = (a.tail(d - 1) - r * y).cwiseQuotient(sd);
    return std::exp(specialfns::log_normal_density(y)) * gaussian_upper_orthant_quadrature(cond_corr, b);
  };
  return gauss_kronrod<double, 31>::integrate(integrand, a(0), std::numeric_limits<double>::infinity(), 12, 1e-11);
}

// Genz's separation-of-variables estimate with randomly shifted Richtmyer
// lattices.
inline double gaussian_upper_orthant_qmc(const Eigen::MatrixXd& corr, const Eigen::VectorXd& a, int points,
                                         int shifts, std::uint64_t seed) {
  const Eigen::Index d = a.size();
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(corr).matrixL();
  const Eigen::VectorXd b = -a;
  static constexpr double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  if (d - 1 > static_cast<Eigen::Index>(std::size(primes))) throw ConfigError("orthant oracle: dimension too large");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double total = 0.0;
  Eigen::VectorXd y(d);
  Eigen::VectorXd shift(d);
  for (int s = 0; s < shifts; ++s) {
    for (Eigen::Index i = 0; i < d; ++i) shift(i) = unif(rng);
    double acc = 0.0;
    for (int k = 1; k <= points; ++k) {
      double f = 1.0;
      double e = specialfns::normal_cdf(b(0) / l(0, 0));
      f *= e;
      for (Eigen::Index i = 1; i < d; ++i) {
        double u = std::fmod(static_cast<double>(k) * std::sqrt(primes[i - 1]) + shift(i - 1), 1.0);
        u = std::abs(2.0 * u - 1.0);  // baker's transform
        const double p = std::clamp(u * e, 1e-300, 1.0 - 1e-16);
        y(i - 1) = specialfns::normal_quantile(p);
        const double mean = l.row(i).head(i).dot(y.head(i));
        e = specialfns::normal_cdf((b(i) - mean) / l(i, i));
        f *= e;
      }
      acc += f;
    }
    total += acc / points;
  }
  return total / shifts;
}

inline double gaussian_upper_orthant(const Eigen::MatrixXd& corr, const Eigen::VectorXd& a) {
  if (a.size() <= 3) return gaussian_upper_orthant_quadrature(corr, a);
  return gaussian_upper_orthant_qmc(corr, a, 200000, 10, 7);
}

inline Eigen::VectorXd normal_threshold(const Eigen::VectorXd& x) {
  Eigen::VectorXd c(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    c(i) = x(i) > 0.0 ? -specialfns::normal_quantile_log(margins::laplace_log_sf(x(i)))
                      : specialfns::normal_quantile_log(margins::laplace_log_cdf(x(i)));
  }
  return c;
}

inline Eigen::VectorXd student_threshold(const Eigen::VectorXd& x, double nu) {
  Eigen::VectorXd c(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    c(i) = x(i) > 0.0 ? specialfns::student_t_quantile_log_sf(margins::laplace_log_sf(x(i)), nu)
                      : -specialfns::student_t_quantile_log_sf(margins::laplace_log_cdf(x(i)), nu);
  }
  return c;
}

}  // namespace detail

/// Pr(sgn(x_i) X_i > sgn(x_i) x_i for all i) on Laplace margins; zero
/// components of `sign_of` are treated as positive.
inline double orthant_probability(const CopulaSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& sign_of) {
  spec.validate();
  const Eigen::Index d = spec.d;
  if (x.size() != d || sign_of.size() != d) throw ConfigError("orthant_probability: dimension mismatch");
  Eigen::VectorXd s(d);
  for (Eigen::Index i = 0; i < d; ++i) s(i) = sign_of(i) < 0.0 ? -1.0 : 1.0;

  if (spec.kind == CopulaKind::logistic) {
    // Inclusion–exclusion over the upper coordinates of the Gumbel copula.
    std::vector<Eigen::Index> upper;
    double lower_sum = 0.0;
    std::vector<double> t(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
      t[static_cast<std::size_t>(i)] = std::pow(-margins::laplace_log_cdf(x(i)), 1.0 / spec.theta);
      if (s(i) > 0.0) {
        upper.push_back(i);
      } else {
        lower_sum += t[static_cast<std::size_t>(i)];
      }
    }
    const std::size_t k = upper.size();
    double total = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
      double sum = lower_sum;
      int bits = 0;
      for (std::size_t b = 0; b < k; ++b) {
        if ((mask >> b) & 1U) {
          sum += t[static_cast<std::size_t>(upper[b])];
          ++bits;
        }
      }
      const double c = sum > 0.0 ? std::exp(-std::pow(sum, spec.theta)) : 1.0;
      total += (bits % 2 == 0 ? 1.0 : -1.0) * c;
    }
    return std::max(total, 0.0);
  }

  const Eigen::MatrixXd corr = s.asDiagonal() * spec.corr * s.asDiagonal();
  if (spec.kind == CopulaKind::gaussian) {
    return detail::gaussian_upper_orthant(corr, s.cwiseProduct(detail::normal_threshold(x)));
  }
  // Student-t: mix the Gaussian orthant over the chi-square scale, s = V/ν,
  // integrating in log s.
  const Eigen::VectorXd a = s.cwiseProduct(detail::student_threshold(x, spec.nu));
  const double nu = spec.nu;
  const double log_norm = 0.5 * nu * std::log(0.5 * nu) - specialfns::log_gamma(0.5 * nu);
  auto integrand = [&](double log_s) {
    // density of log s where s ~ Gamma(ν/2, rate ν/2)
    const double sv = std::exp(log_s);
    const double log_pdf = log_norm + 0.5 * nu * log_s - 0.5 * nu * sv;
    if (log_pdf < -700.0) return 0.0;
    return std::exp(log_pdf) * detail::gaussian_upper_orthant(corr, a * std::sqrt(sv));
  };
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 31>::integrate(integrand, -std::numeric_limits<double>::infinity(),
                                              std::numeric_limits<double>::infinity(), 10, 1e-9);
}

}  // namespace copulas
}  // namespace deepgauge
