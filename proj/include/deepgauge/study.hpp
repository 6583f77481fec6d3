#pragma once

// Simulation study: fit replicates of a copula design and score them
// against the copula's known gauge and joint tail probabilities.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <string>
#include <vector>

#include "deepgauge/copulas.hpp"
#include "deepgauge/deepgauge.hpp"
#include "deepgauge/diagnostics.hpp"
#include "deepgauge/inference.hpp"
#include "deepgauge/margins.hpp"

namespace deepgauge::study {

/// Joint exceedance region {sgn(x_i) X_i > sgn(x_i) x_i ∀i}.
struct TailTarget {
  std::string label;
  Eigen::VectorXd x;
};

/// Joint upper tail at the 0.99 and 0.999 Laplace quantiles and joint lower
/// tail at the 0.01 and 0.001 quantiles, equal in every coordinate.
inline std::vector<TailTarget> standard_targets(Eigen::Index d) {
  std::vector<TailTarget> t;
  for (auto [label, p] : {std::pair{"upper_0.99", 0.99}, {"upper_0.999", 0.999}, {"lower_0.01", 0.01}, {"lower_0.001", 0.001}}) {
    t.push_back({label, Eigen::VectorXd::Constant(d, margins::laplace_quantile(p))});
  }
  return t;
}

struct TargetEstimate {
  double truth = 0.0;
  double estimate = 0.0;
  bool empirical = false;  ///< r below the q-quantile of T_w: empirical frequency used
};

/// ADF-based estimate of a joint tail probability. Where r lies below the
/// empirical q-quantile of T_w the empirical frequency is returned instead.
inline TargetEstimate estimate_target(const CopulaSpec& spec, const DataMatrix& data, const GaugeModel& model,
                                      const inference::BoundarySet& boundary, const TailTarget& target, double q) {
  TargetEstimate e;
  e.truth = copulas::orthant_probability(spec, target.x, target.x);
  const double r = target.x.norm();
  const Eigen::VectorXd w = target.x / r;
  const auto t = inference::min_projection(data.values, w);
  const double u = quantile_type7(t, q);
  if (r < u) {
    e.empirical = true;
    const auto hits = std::count_if(t.begin(), t.end(), [&](double v) { return v > r; });
    e.estimate = static_cast<double>(hits) / static_cast<double>(t.size());
  } else {
    const double lambda = inference::estimate_adf(model, boundary, w).lambda_hat;
    e.estimate = inference::tail_probability_formula(lambda, r, u, q);
  }
  return e;
}

struct ReplicateResult {
  double ise = 0.0;
  double male = 0.0;
  std::vector<TargetEstimate> targets;
  FitResult fit;
};

/// Simulate, fit and score one replicate; ISE is taken over the model's
/// reference set.
inline ReplicateResult run_replicate(const CopulaSpec& spec, Eigen::Index n, const FitConfig& cfg,
                                     std::uint64_t data_seed, double q = 0.9995) {
  const DataMatrix data = copulas::sample(spec, n, data_seed);
  ReplicateResult res;
  res.fit = fit(geometry::decompose(data), cfg);
  const GaugeModel& m = res.fit.model;
  const Eigen::MatrixXd ref = m.reference_angles().angles;
  res.ise = diagnostics::ise([&](const Eigen::VectorXd& w) { return copulas::gauge_theoretical(spec, w); }, m, ref);
  const auto boundary = inference::BoundarySet::from_model(m, ref);
  std::vector<double> truth;
  std::vector<double> est;
  for (const auto& t : standard_targets(spec.d)) {
    res.targets.push_back(estimate_target(spec, data, m, boundary, t, q));
    truth.push_back(res.targets.back().truth);
    est.push_back(res.targets.back().estimate);
  }
  res.male = diagnostics::male(truth, est);
  return res;
}

struct Summary {
  double median = 0.0;
  double lo = 0.0;  ///< 2.5% percentile
  double hi = 0.0;  ///< 97.5% percentile
};

inline Summary summarize(const std::vector<double>& v) {
  if (v.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  return {quantile_type7(v, 0.5), quantile_type7(v, 0.025), quantile_type7(v, 0.975)};
}

}  // namespace deepgauge::study
