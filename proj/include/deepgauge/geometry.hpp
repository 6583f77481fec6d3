#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepgauge/errors.hpp"
#include "deepgauge/margins.hpp"

namespace deepgauge {

/// Radii and unit angles of a sample; row j of `angles` pairs with radii(j).
struct PolarSample {
  Eigen::VectorXd radii;
  Eigen::MatrixXd angles;
  std::vector<Eigen::Index> source_rows;  ///< row of the originating DataMatrix
  std::size_t dropped = 0;                ///< exactly-zero rows excluded

  [[nodiscard]] Eigen::Index size() const { return radii.size(); }
  [[nodiscard]] Eigen::Index dim() const { return angles.cols(); }
};

/// A reference set of unit vectors covering the sphere, reproducible from
/// its seed and size.
struct AngleSet {
  Eigen::MatrixXd angles;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index size() const { return angles.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return angles.cols(); }
};

/// Per-coordinate extremes of w_i h(w) over a reference set.
struct ScalingFactors {
  Eigen::VectorXd upper;  ///< b^U, strictly positive
  Eigen::VectorXd lower;  ///< b^L, strictly negative
  std::vector<Eigen::VectorXd> argmax_angles;
  std::vector<Eigen::VectorXd> argmin_angles;

  [[nodiscard]] Eigen::Index dim() const { return upper.size(); }

  /// b_i(w_i); the zero component takes the upper branch.
  [[nodiscard]] double divisor(Eigen::Index i, double wi) const { return wi >= 0.0 ? upper(i) : -lower(i); }

  static ScalingFactors unit(Eigen::Index d) {
    ScalingFactors b;
    b.upper = Eigen::VectorXd::Ones(d);
    b.lower = -Eigen::VectorXd::Ones(d);
    return b;
  }
};

namespace geometry {

inline double sup_norm(const Eigen::Ref<const Eigen::VectorXd>& w) { return w.cwiseAbs().maxCoeff(); }

inline PolarSample decompose(const DataMatrix& data) {
  PolarSample polar;
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.dim();
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    if (data.values.row(j).squaredNorm() > 0.0) {
      keep.push_back(j);
    } else {
      ++polar.dropped;
    }
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  polar.radii.resize(m);
  polar.angles.resize(m, d);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto row = data.values.row(keep[static_cast<std::size_t>(k)]);
    const double r = row.norm();
    polar.radii(k) = r;
    polar.angles.row(k) = row / r;
  }
  polar.source_rows = std::move(keep);
  return polar;
}

/// Uniform points on S^{d-1} by rejection from the cube [-1,1]^d: draws
/// outside the unit ball or inside radius 0.05 are rejected, the rest are
/// normalised.
inline AngleSet sample_sphere(Eigen::Index m, Eigen::Index d, std::uint64_t seed) {
  if (m < 1) throw ConfigError("sample_sphere: need at least one angle");
  if (d < 1) throw ConfigError("sample_sphere: dimension must be positive");
  constexpr double inner = 0.05;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  AngleSet set;
  set.seed = seed;
  set.angles.resize(m, d);
  Eigen::VectorXd x(d);
  for (Eigen::Index k = 0; k < m;) {
    for (Eigen::Index i = 0; i < d; ++i) x(i) = unif(rng);
    const double r2 = x.squaredNorm();
    if (r2 > 1.0 || r2 < inner * inner) continue;
    set.angles.row(k) = x / std::sqrt(r2);
    ++k;
  }
  return set;
}

/// Scaling factors from precomputed radial values h(w) at each reference angle.
inline ScalingFactors scaling_factors(const Eigen::Ref<const Eigen::MatrixXd>& angles,
                                      std::span<const double> h_values) {
  const Eigen::Index m = angles.rows();
  const Eigen::Index d = angles.cols();
  if (static_cast<Eigen::Index>(h_values.size()) != m) {
    throw ConfigError("scaling_factors: one radial value per angle required");
  }
  ScalingFactors b;
  b.upper = Eigen::VectorXd::Constant(d, -std::numeric_limits<double>::infinity());
  b.lower = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> arg_up(static_cast<std::size_t>(d), 0);
  std::vector<Eigen::Index> arg_lo(static_cast<std::size_t>(d), 0);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double h = h_values[static_cast<std::size_t>(k)];
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw DomainError("scaling_factors: radial function must be positive and finite, got " +
                        std::to_string(h) + " at angle " + std::to_string(k));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      const double v = angles(k, i) * h;
      if (v > b.upper(i)) {
        b.upper(i) = v;
        arg_up[static_cast<std::size_t>(i)] = k;
      }
      if (v < b.lower(i)) {
        b.lower(i) = v;
        arg_lo[static_cast<std::size_t>(i)] = k;
      }
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(b.upper(i) > 0.0) || !(b.lower(i) < 0.0)) {
      throw DomainError("scaling_factors: reference set does not cover both signs of coordinate " +
                        std::to_string(i));
    }
    b.argmax_angles.emplace_back(angles.row(arg_up[static_cast<std::size_t>(i)]).transpose());
    b.argmin_angles.emplace_back(angles.row(arg_lo[static_cast<std::size_t>(i)]).transpose());
  }
  return b;
}

template <class Radial>
ScalingFactors scaling_factors(Radial&& h, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  std::vector<double> values(static_cast<std::size_t>(angles.rows()));
  Eigen::VectorXd w;
  for (Eigen::Index k = 0; k < angles.rows(); ++k) {
    w = angles.row(k).transpose();
    values[static_cast<std::size_t>(k)] = h(w);
  }
  return scaling_factors(angles, values);
}

/// Coordinate-wise application of the divisors b_i(w_i).
inline Eigen::VectorXd divide_by_factors(const Eigen::Ref<const Eigen::VectorXd>& w, const ScalingFactors& b) {
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out(i) = w(i) / b.divisor(i, w(i));
  return out;
}

inline Eigen::VectorXd multiply_by_factors(const Eigen::Ref<const Eigen::VectorXd>& w, const ScalingFactors& b) {
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out(i) = w(i) * b.divisor(i, w(i));
  return out;
}

/// κ(w) = (w_i / b_i(w_i))_i, normalised.
inline Eigen::VectorXd kappa(const Eigen::Ref<const Eigen::VectorXd>& w, const ScalingFactors& b) {
  Eigen::VectorXd v = divide_by_factors(w, b);
  return v / v.norm();
}

/// κ^{-1}(w) = (b_i(w_i) w_i)_i, normalised. Since the divisors are positive
/// the orthant is preserved, so dividing the image by b recovers w's direction.
inline Eigen::VectorXd kappa_inverse(const Eigen::Ref<const Eigen::VectorXd>& w, const ScalingFactors& b) {
  Eigen::VectorXd v = multiply_by_factors(w, b);
  return v / v.norm();
}

/// Rescaled gauge from the value of the radial function at κ^{-1}(w):
/// g̃(w) = ‖b(w)∘w‖ / h(κ^{-1}(w)), floored at ‖w‖∞.
///
/// The floor matters only off the reference set: b is a maximum over finitely
/// many angles, so an unseen angle can exceed it by the set's resolution.
inline double rescaled_gauge_from_radial(double h_at_preimage, const Eigen::Ref<const Eigen::VectorXd>& w,
                                         const ScalingFactors& b) {
  const double stretch = multiply_by_factors(w, b).norm();
  return std::max(stretch / h_at_preimage, sup_norm(w));
}

template <class Radial>
double rescaled_gauge(Radial&& h, const ScalingFactors& b, const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::VectorXd pre = kappa_inverse(w, b);
  return rescaled_gauge_from_radial(h(pre), w, b);
}

/// Points (w_i, w_j)/g(w) along the great circle spanned by axes i and j.
template <class Gauge>
Eigen::MatrixXd bivariate_slice(Gauge&& gauge, Eigen::Index d, Eigen::Index i, Eigen::Index j, Eigen::Index grid) {
  if (i == j) throw ConfigError("bivariate_slice: indices must differ");
  if (i < 0 || j < 0 || i >= d || j >= d) throw ConfigError("bivariate_slice: index out of range");
  if (grid < 1) throw ConfigError("bivariate_slice: grid must be positive");
  Eigen::MatrixXd pts(grid, 2);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < grid; ++k) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid);
    w.setZero();
    w(i) = std::cos(phi);
    w(j) = std::sin(phi);
    const double g = gauge(w);
    pts(k, 0) = w(i) / g;
    pts(k, 1) = w(j) / g;
  }
  return pts;
}

/// Surface area of S^{d-1}.
inline double sphere_area(Eigen::Index d) {
  const double half = 0.5 * static_cast<double>(d);
  return 2.0 * std::pow(std::numbers::pi, half) / std::exp(specialfns::log_gamma(half));
}

}  // namespace geometry
}  // namespace deepgauge
