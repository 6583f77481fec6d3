#pragma once

// Goodness-of-fit diagnostics and performance metrics.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deepgauge/deepgauge.hpp"
#include "deepgauge/errors.hpp"
#include "deepgauge/geometry.hpp"
#include "deepgauge/inference.hpp"
#include "deepgauge/margins.hpp"
#include "deepgauge/specialfns.hpp"

namespace deepgauge::diagnostics {

/// Paired quantiles on the unit-exponential scale, both ascending. `lower`
/// and `upper` are pointwise tolerance bounds when present.
struct QqSeries {
  std::vector<double> theoretical;
  std::vector<double> observed;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> warnings;
};

/// Exp(1) quantiles at plotting positions k/(m+1).
inline std::vector<double> exponential_plotting_positions(std::size_t m) {
  std::vector<double> q(m);
  for (std::size_t k = 1; k <= m; ++k) q[k - 1] = -std::log1p(-static_cast<double>(k) / static_cast<double>(m + 1));
  return q;
}

/// Kolmogorov–Smirnov distance between the sample and Exp(1).
inline double ks_statistic_exponential(std::vector<double> e) {
  if (e.empty()) throw ConfigError("ks_statistic: empty sample");
  std::sort(e.begin(), e.end());
  const double m = static_cast<double>(e.size());
  double d = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double f = e[k] > 0.0 ? -std::expm1(-e[k]) : 0.0;
    d = std::max({d, static_cast<double>(k + 1) / m - f, f - static_cast<double>(k) / m});
  }
  return d;
}

/// Asymptotic KS critical values.
inline double ks_critical_5(std::size_t m) { return 1.358 / std::sqrt(static_cast<double>(m)); }
inline double ks_critical_1(std::size_t m) { return 1.628 / std::sqrt(static_cast<double>(m)); }

/// Pointwise [lo, hi] quantiles of sorted Exp(1) samples of size m.
inline void exponential_envelope(std::size_t m, int simulations, std::uint64_t seed, double lo, double hi,
                                 std::vector<double>& lower, std::vector<double>& upper) {
  if (simulations < 2) throw ConfigError("envelope: need at least two simulations");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<std::vector<double>> sims(static_cast<std::size_t>(simulations), std::vector<double>(m));
  for (auto& s : sims) {
    for (auto& v : s) v = expo(rng);
    std::sort(s.begin(), s.end());
  }
  lower.resize(m);
  upper.resize(m);
  std::vector<double> col(sims.size());
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t s = 0; s < sims.size(); ++s) col[s] = sims[s][k];
    lower[k] = quantile_type7(col, lo);
    upper[k] = quantile_type7(col, hi);
  }
}

// ---------------------------------------------------------------------------
// Truncated-gamma QQ

/// e_j = −log[Q(α, g̃ r_j)/Q(α, g̃ r̂_τ)] for every exceedance r_j > r̂_τ(w_j).
inline std::vector<double> truncgamma_scores(const PolarSample& polar, const GaugeModel& model) {
  const Eigen::VectorXd g = model.gauge_batch(polar.angles);
  const Eigen::VectorXd thr = model.threshold_batch(polar.angles);
  std::vector<double> e;
  for (Eigen::Index j = 0; j < polar.size(); ++j) {
    if (!(polar.radii(j) > thr(j))) continue;
    e.push_back(specialfns::log_reg_gamma_upper(model.alpha, g(j) * thr(j)) -
                specialfns::log_reg_gamma_upper(model.alpha, g(j) * polar.radii(j)));
  }
  return e;
}

/// QQ series of the truncated-gamma scores with envelopes from parametric
/// simulations of the fitted model (0 disables them).
inline QqSeries truncgamma_qq(const PolarSample& polar, const GaugeModel& model, int envelope_simulations = 200,
                              std::uint64_t seed = 0) {
  QqSeries out;
  out.observed = truncgamma_scores(polar, model);
  if (out.observed.size() < 20) throw ConfigError("truncgamma_qq: fewer than 20 exceedances");
  std::sort(out.observed.begin(), out.observed.end());
  out.theoretical = exponential_plotting_positions(out.observed.size());
  // Scores of data simulated from the model are exactly Exp(1) draws.
  if (envelope_simulations > 0) {
    exponential_envelope(out.observed.size(), envelope_simulations, seed, 0.025, 0.975, out.lower, out.upper);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ADF diagnostic

/// e = Λ̂(w)(t_w − û) for min-projections t_w above their empirical q-quantile û.
inline QqSeries adf_diagnostic(const Eigen::Ref<const Eigen::MatrixXd>& data, const Eigen::Ref<const Eigen::VectorXd>& w,
                               double lambda_hat, double q, int envelope_simulations = 0, std::uint64_t seed = 0) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("adf_diagnostic: q must lie in (0, 1)");
  if (!(lambda_hat > 0.0)) throw ConfigError("adf_diagnostic: lambda_hat must be positive");
  const std::vector<double> t = inference::min_projection(data, w);
  const double u = quantile_type7(t, q);
  QqSeries out;
  for (double tk : t) {
    if (tk > u) out.observed.push_back(lambda_hat * (tk - u));
  }
  if (out.observed.size() < 10) {
    out.warnings.push_back("adf_diagnostic: only " + std::to_string(out.observed.size()) + " exceedances");
  }
  std::sort(out.observed.begin(), out.observed.end());
  out.theoretical = exponential_plotting_positions(out.observed.size());
  if (envelope_simulations > 0 && !out.observed.empty()) {
    exponential_envelope(out.observed.size(), envelope_simulations, seed, 0.025, 0.975, out.lower, out.upper);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Return-level coverage

struct CoveragePoint {
  double p = 0.0;
  double p_hat = 0.0;
  double x = 0.0;  ///< −log(1−p)
  double y = 0.0;  ///< −log(1−p̂)
};

inline std::vector<CoveragePoint> return_level_coverage(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                        const GaugeModel& model, const std::vector<double>& p_grid) {
  const Eigen::Index n = data.rows();
  if (n == 0) throw ConfigError("return_level_coverage: empty data");
  Eigen::VectorXd r = data.rowwise().norm();
  Eigen::MatrixXd angles(n, data.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(r(k) > 0.0)) throw DomainError("return_level_coverage: observation at the origin");
    angles.row(k) = data.row(k) / r(k);
  }
  const Eigen::VectorXd g = model.gauge_batch(angles);
  const Eigen::VectorXd thr = model.threshold_batch(angles);
  std::vector<CoveragePoint> out;
  for (double p : p_grid) {
    if (!(p > model.tau && p < 1.0)) throw ConfigError("return_level_coverage: p must lie in (tau, 1)");
    Eigen::Index inside = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (inference::within_return_level(r(k), inference::return_level_radius(model.alpha, model.tau, g(k), thr(k), p))) {
        ++inside;
      }
    }
    CoveragePoint c;
    c.p = p;
    c.p_hat = static_cast<double>(inside) / static_cast<double>(n);
    c.x = -std::log1p(-p);
    c.y = -std::log1p(-c.p_hat);
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// (A_d/|𝒲|) Σ (1/g₀ − 1/g̃)² from gauge values on a uniform angle set.
inline double ise(const Eigen::Ref<const Eigen::VectorXd>& g_true, const Eigen::Ref<const Eigen::VectorXd>& g_est,
                  Eigen::Index d) {
  if (g_true.size() != g_est.size() || g_true.size() == 0) throw ConfigError("ise: mismatched or empty inputs");
  const double s = (g_true.cwiseInverse() - g_est.cwiseInverse()).squaredNorm();
  return geometry::sphere_area(d) * s / static_cast<double>(g_true.size());
}

template <class Oracle>
double ise(Oracle&& g_true, const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  Eigen::VectorXd g0(angles.rows());
  Eigen::VectorXd w;
  for (Eigen::Index k = 0; k < angles.rows(); ++k) {
    w = angles.row(k).transpose();
    g0(k) = g_true(w);
  }
  return ise(g0, model.gauge_batch(angles), angles.cols());
}

/// Mean absolute log error.
inline double male(const std::vector<double>& truth, const std::vector<double>& estimate) {
  if (truth.size() != estimate.size() || truth.empty()) throw ConfigError("male: mismatched or empty inputs");
  double s = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!(truth[k] > 0.0) || !(estimate[k] > 0.0)) throw DomainError("male: probabilities must be positive");
    s += std::abs(std::log(estimate[k]) - std::log(truth[k]));
  }
  return s / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Bivariate slices of the sample cloud

struct SlicePoints {
  Eigen::MatrixXd points;  ///< (x_i, x_j)/log(n/2)
  std::vector<Eigen::Index> rows;
  std::vector<std::string> warnings;
};

inline SlicePoints slice_validation_points(const Eigen::Ref<const Eigen::MatrixXd>& data, Eigen::Index i, Eigen::Index j,
                                           double epsilon) {
  const Eigen::Index d = data.cols();
  const Eigen::Index n = data.rows();
  if (i == j || i < 0 || j < 0 || i >= d || j >= d) throw ConfigError("slice_validation_points: invalid index pair");
  if (!(epsilon > 0.0)) throw ConfigError("slice_validation_points: epsilon must be positive");
  if (n < 3) throw ConfigError("slice_validation_points: need at least three rows");
  const double scale = std::log(static_cast<double>(n) / 2.0);
  SlicePoints out;
  for (Eigen::Index k = 0; k < n; ++k) {
    double rest = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      if (c != i && c != j) rest += data(k, c) * data(k, c);
    }
    if (std::sqrt(rest) / scale <= epsilon) out.rows.push_back(k);
  }
  out.points.resize(static_cast<Eigen::Index>(out.rows.size()), 2);
  for (std::size_t k = 0; k < out.rows.size(); ++k) {
    out.points(static_cast<Eigen::Index>(k), 0) = data(out.rows[k], i) / scale;
    out.points(static_cast<Eigen::Index>(k), 1) = data(out.rows[k], j) / scale;
  }
  if (out.rows.empty()) out.warnings.push_back("slice_validation_points: no rows passed; try a larger epsilon (0.01-0.015)");
  return out;
}

// ---------------------------------------------------------------------------
// Limit-set validity

struct ValidityReport {
  double min_margin = 0.0;   ///< min over angles of g̃(w) − ‖w‖∞
  double touch_error = 0.0;  ///< max_i |max_k x_{k,i} − 1| and |min_k x_{k,i} + 1| over κ(𝒲)
};

/// Domination on the given angles and componentwise cube touch of the
/// boundary points w/g̃(w) for w in the κ-image of the reference set.
inline ValidityReport validity_report(const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  ValidityReport rep;
  const Eigen::VectorXd g = model.gauge_batch(angles);
  rep.min_margin = (g - angles.cwiseAbs().rowwise().maxCoeff()).minCoeff();
  const Eigen::MatrixXd ref = model.reference_angles().angles;
  Eigen::MatrixXd img(ref.rows(), ref.cols());
  for (Eigen::Index k = 0; k < ref.rows(); ++k) img.row(k) = geometry::kappa(ref.row(k).transpose(), model.scaling).transpose();
  const Eigen::VectorXd gi = model.gauge_batch(img);
  const Eigen::MatrixXd x = img.array().colwise() / gi.array();
  const Eigen::ArrayXd hi = x.colwise().maxCoeff().transpose().array();
  const Eigen::ArrayXd lo = x.colwise().minCoeff().transpose().array();
  rep.touch_error = std::max((hi - 1.0).abs().maxCoeff(), (lo + 1.0).abs().maxCoeff());
  return rep;
}

// ---------------------------------------------------------------------------
// Simulation from a fitted model

/// Radii for the given angles: with probability 1−τ a truncated-gamma draw
/// above r̂_τ(w) by inversion, otherwise r̂_τ(w)·U. Only the exceedance part
/// is modelled; the bulk draw merely keeps r below the threshold.
inline DataMatrix simulate_from_model(const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& angles,
                                      std::uint64_t seed) {
  const Eigen::VectorXd g = model.gauge_batch(angles);
  const Eigen::VectorXd thr = model.threshold_batch(angles);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  DataMatrix out;
  out.margin = MarginTag::laplace;
  out.values.resize(angles.rows(), angles.cols());
  for (Eigen::Index k = 0; k < angles.rows(); ++k) {
    const double a = unif(rng);
    double u = unif(rng);
    while (u == 0.0) u = unif(rng);
    double r = 0.0;
    if (a < 1.0 - model.tau) {
      const double log_q = specialfns::log_reg_gamma_upper(model.alpha, g(k) * thr(k)) + std::log(u);
      r = specialfns::inv_log_reg_gamma_upper(model.alpha, log_q) / g(k);
    } else {
      r = thr(k) * u;
    }
    out.values.row(k) = r * angles.row(k);
  }
  return out;
}

}  // namespace deepgauge::diagnostics
