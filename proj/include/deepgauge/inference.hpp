#pragma once

// Extended angular dependence function, joint tail probabilities and
// return-level sets from a fitted gauge model.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "deepgauge/deepgauge.hpp"
#include "deepgauge/errors.hpp"
#include "deepgauge/margins.hpp"
#include "deepgauge/specialfns.hpp"

namespace deepgauge {

struct AdfEstimate {
  Eigen::VectorXd w;
  double lambda_hat = 0.0;
  double r_tilde = 0.0;
};

namespace inference {

namespace detail {

inline unsigned orthant_code(const Eigen::Ref<const Eigen::VectorXd>& w) {
  unsigned code = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < 0.0) code |= 1u << i;
  }
  return code;
}

inline void require_zero_free(const Eigen::Ref<const Eigen::VectorXd>& w) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) == 0.0) throw DomainError("ADF: not well defined for angles with a zero component");
  }
}

}  // namespace detail

/// Unit-level boundary points x̃_j = w_j / g̃(w_j), grouped by orthant.
class BoundarySet {
 public:
  BoundarySet() = default;

  /// From explicit boundary points (one per row).
  explicit BoundarySet(const Eigen::Ref<const Eigen::MatrixXd>& points) : dim_(points.cols()) {
    if (dim_ < 1 || dim_ > 30) throw ConfigError("BoundarySet: unsupported dimension");
    groups_.assign(std::size_t{1} << dim_, {});
    std::vector<std::vector<Eigen::Index>> rows(groups_.size());
    for (Eigen::Index k = 0; k < points.rows(); ++k) rows[detail::orthant_code(points.row(k).transpose())].push_back(k);
    for (std::size_t o = 0; o < groups_.size(); ++o) {
      groups_[o].resize(static_cast<Eigen::Index>(rows[o].size()), dim_);
      for (std::size_t k = 0; k < rows[o].size(); ++k) groups_[o].row(static_cast<Eigen::Index>(k)) = points.row(rows[o][k]);
    }
  }

  /// Boundary points of `model` at the given candidate angles.
  static BoundarySet from_model(const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
    const Eigen::VectorXd g = model.gauge_batch(angles);
    Eigen::MatrixXd pts = angles;
    pts.array().colwise() /= g.array();
    return BoundarySet(pts);
  }

  /// Boundary points over the model's reference set 𝒲.
  static BoundarySet from_model(const GaugeModel& model) { return from_model(model, model.reference_angles().angles); }

  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] const Eigen::MatrixXd& orthant(const Eigen::Ref<const Eigen::VectorXd>& w) const {
    return groups_[detail::orthant_code(w)];
  }

 private:
  Eigen::Index dim_ = 0;
  std::vector<Eigen::MatrixXd> groups_;
};

/// max_j min_i x̃_{j,i}/w_i over the rows of `pts`.
inline double max_min_ratio(const Eigen::MatrixXd& pts, const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::RowVectorXd inv = w.cwiseInverse().transpose();
  double best = 0.0;
  for (Eigen::Index j = 0; j < pts.rows(); ++j) {
    best = std::max(best, (pts.row(j).array() * inv.array()).minCoeff());
  }
  return best;
}

/// Λ̂(w) from boundary points; `own_point` is u/g̃(u) for u = w/‖w‖ and is
/// always a candidate.
inline AdfEstimate estimate_adf(const BoundarySet& boundary, const Eigen::Ref<const Eigen::VectorXd>& w,
                                const Eigen::Ref<const Eigen::VectorXd>& own_point) {
  if (w.size() != boundary.dim() || own_point.size() != w.size()) throw ConfigError("estimate_adf: dimension mismatch");
  detail::require_zero_free(w);
  const Eigen::VectorXd u = w / w.norm();
  const double sup = geometry::sup_norm(u);
  double best = max_min_ratio(boundary.orthant(u), u);
  best = std::max(best, (own_point.array() / u.array()).minCoeff());
  AdfEstimate e;
  e.w = u;
  e.r_tilde = sup * best;
  if (!(e.r_tilde > 0.0)) throw NumericError("estimate_adf: no candidate boundary point in the query orthant");
  e.lambda_hat = sup / e.r_tilde;
  return e;
}

inline AdfEstimate estimate_adf(const GaugeModel& model, const BoundarySet& boundary,
                                const Eigen::Ref<const Eigen::VectorXd>& w) {
  detail::require_zero_free(w);
  const Eigen::VectorXd u = w / w.norm();
  return estimate_adf(boundary, u, u / model.gauge(u));
}

/// Λ̂(w) with 𝒲-filtered candidates built on the fly.
inline AdfEstimate estimate_adf(const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& candidates,
                                const Eigen::Ref<const Eigen::VectorXd>& w) {
  return estimate_adf(model, BoundarySet::from_model(model, candidates), w);
}

/// t_w = min_i x_i/w_i for each row.
inline std::vector<double> min_projection(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                          const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (data.cols() != w.size()) throw ConfigError("min_projection: dimension mismatch");
  detail::require_zero_free(w);
  const Eigen::RowVectorXd inv = w.cwiseInverse().transpose();
  std::vector<double> t(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index k = 0; k < data.rows(); ++k) t[static_cast<std::size_t>(k)] = (data.row(k).array() * inv.array()).minCoeff();
  return t;
}

struct TailProbability {
  Eigen::VectorXd w;
  double r = 0.0;
  double u = 0.0;
  double lambda_hat = 0.0;
  double probability = 0.0;
};

/// exp{−Λ̂(r−u)}(1−q).
inline double tail_probability_formula(double lambda_hat, double r, double u, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("tail_probability: q must lie in (0, 1)");
  if (r < u) {
    throw DomainError("tail_probability: r lies below the empirical q-quantile of T_w; use the empirical estimate");
  }
  return std::exp(-lambda_hat * (r - u)) * (1.0 - q);
}

/// Pr(sgn(x_i) X_i > sgn(x_i) x_i for all i) from the ADF tail approximation.
inline TailProbability tail_probability(const Eigen::Ref<const Eigen::VectorXd>& x, const DataMatrix& data,
                                        const GaugeModel& model, const BoundarySet& boundary, double q = 0.9995) {
  if (data.margin != MarginTag::laplace) throw ConfigError("tail_probability: data must be on Laplace margins");
  TailProbability t;
  t.r = x.norm();
  if (!(t.r > 0.0)) throw DomainError("tail_probability: undefined at the origin");
  t.w = x / t.r;
  t.u = deepgauge::quantile_type7(min_projection(data.values, t.w), q);
  t.lambda_hat = estimate_adf(model, boundary, t.w).lambda_hat;
  t.probability = tail_probability_formula(t.lambda_hat, t.r, t.u, q);
  return t;
}

// ---------------------------------------------------------------------------
// Return levels

/// r_p from the truncated-gamma conditional above r̂_τ, given g̃(w) and r̂_τ(w).
inline double return_level_radius(double alpha, double tau, double gauge, double threshold, double p) {
  if (!(p > tau && p < 1.0)) throw DomainError("return_level_radius: p must lie in (tau, 1)");
  const double s = (p - tau) / (1.0 - tau);
  const double log_q = std::log1p(-s) + specialfns::log_reg_gamma_upper(alpha, gauge * threshold);
  return specialfns::inv_log_reg_gamma_upper(alpha, log_q) / gauge;
}

inline double return_level_radius(const GaugeModel& model, const Eigen::Ref<const Eigen::VectorXd>& w, double p) {
  const auto e = model.evaluate(w);
  return return_level_radius(model.alpha, model.tau, e.gauge, e.threshold, p);
}

/// r_p at each row of `angles`.
inline Eigen::VectorXd return_level_radius_batch(const GaugeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& angles,
                                                 double p) {
  if (!(p > model.tau && p < 1.0)) throw DomainError("return_level_radius: p must lie in (tau, 1)");
  const Eigen::VectorXd g = model.gauge_batch(angles);
  const Eigen::VectorXd r = model.threshold_batch(angles);
  Eigen::VectorXd out(angles.rows());
  for (Eigen::Index k = 0; k < angles.rows(); ++k) out(k) = return_level_radius(model.alpha, model.tau, g(k), r(k), p);
  return out;
}

/// ‖x‖ ≤ r_p with a few ulps of slack for rounding in ‖x‖ and r_p.
inline bool within_return_level(double norm, double r_p) {
  return norm <= r_p * (1.0 + 8.0 * std::numeric_limits<double>::epsilon());
}

/// x ∈ B_p ⇔ ‖x‖ ≤ r_p(x/‖x‖); the origin is a member.
inline bool return_level_membership(const GaugeModel& model, double p, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double r = x.norm();
  if (r == 0.0) return true;
  return within_return_level(r, return_level_radius(model, x / r, p));
}

}  // namespace inference
}  // namespace deepgauge
