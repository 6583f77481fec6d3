#pragma once

// Two-stage fit of a gauge function: a quantile network for the radial
// threshold, then a gauge network trained on threshold exceedances under a
// truncated-gamma likelihood whose rate is the rescaled gauge.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deepgauge/errors.hpp"
#include "deepgauge/geometry.hpp"
#include "deepgauge/neuralnet.hpp"

namespace deepgauge {

/// Distinct, reproducible seeds from one base seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Type-7 empirical quantile.
inline double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

namespace detail {

inline Eigen::VectorXd row_sup_norms(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  return a.cwiseAbs().rowwise().maxCoeff();
}

/// κ^{-1} of each row and the stretch ‖b∘w‖.
inline void preimages(const ScalingFactors& b, const Eigen::Ref<const Eigen::MatrixXd>& angles, Eigen::MatrixXd& v,
                      Eigen::VectorXd& stretch) {
  v.resize(angles.rows(), angles.cols());
  stretch.resize(angles.rows());
  for (Eigen::Index k = 0; k < angles.rows(); ++k) {
    for (Eigen::Index i = 0; i < angles.cols(); ++i) v(k, i) = angles(k, i) * b.divisor(i, angles(k, i));
    stretch(k) = v.row(k).norm();
    v.row(k) /= stretch(k);
  }
}

/// ReLU(m(w)) + ‖w‖∞ for each row.
inline Eigen::VectorXd raw_gauge_batch(const nn::MlpParams& net, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  Eigen::VectorXd out = nn::forward_chunked(net, angles).cwiseMax(0.0);
  out += row_sup_norms(angles);
  return out;
}

}  // namespace detail

/// Scaling factors of the radial function 1/g for the raw gauge network.
inline ScalingFactors gauge_scaling_factors(const nn::MlpParams& net, const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  const Eigen::VectorXd g = detail::raw_gauge_batch(net, angles);
  std::vector<double> h(static_cast<std::size_t>(g.size()));
  for (Eigen::Index k = 0; k < g.size(); ++k) h[static_cast<std::size_t>(k)] = 1.0 / g(k);
  return geometry::scaling_factors(angles, std::span<const double>(h));
}

/// Fitted model: g̃, r̂_τ and α, with the reference-set metadata needed to
/// regenerate 𝒲.
struct GaugeModel {
  nn::MlpParams quantile_net;
  nn::MlpParams gauge_net;
  double alpha = 1.0;
  double tau = 0.5;
  ScalingFactors scaling;
  Eigen::Index reference_size = 0;
  std::uint64_t reference_seed = 0;

  struct Evaluation {
    double gauge = 0.0;
    double threshold = 0.0;
    Eigen::VectorXd point;  ///< w / g̃(w)
  };

  [[nodiscard]] Eigen::Index dim() const { return gauge_net.input_dim; }

  [[nodiscard]] AngleSet reference_angles() const { return geometry::sample_sphere(reference_size, dim(), reference_seed); }

  /// r̂_τ(w) for unit w.
  [[nodiscard]] double threshold(const Eigen::Ref<const Eigen::VectorXd>& w) const {
    return std::exp(nn::forward(quantile_net, w));
  }

  /// Unscaled g(w) = ReLU(m(w)) + ‖w‖∞.
  [[nodiscard]] double raw_gauge(const Eigen::Ref<const Eigen::VectorXd>& w) const {
    return std::max(nn::forward(gauge_net, w), 0.0) + geometry::sup_norm(w);
  }

  /// Rescaled gauge g̃(x); 1-homogeneous, so any x ≠ 0 is accepted.
  [[nodiscard]] double gauge(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != dim()) throw ConfigError("gauge: dimension mismatch");
    const double scale = x.norm();
    if (!(scale > 0.0)) throw DomainError("gauge: undefined at the origin");
    const Eigen::VectorXd w = x / scale;
    const Eigen::VectorXd v = geometry::kappa_inverse(w, scaling);
    return scale * geometry::rescaled_gauge_from_radial(1.0 / raw_gauge(v), w, scaling);
  }

  [[nodiscard]] Evaluation evaluate(const Eigen::Ref<const Eigen::VectorXd>& w) const {
    Evaluation e;
    e.gauge = gauge(w);
    e.threshold = threshold(w);
    e.point = w / e.gauge;
    return e;
  }

  [[nodiscard]] Eigen::VectorXd threshold_batch(const Eigen::Ref<const Eigen::MatrixXd>& angles) const {
    return nn::forward_chunked(quantile_net, angles).array().exp();
  }

  /// g̃ on each row of `angles` (rows assumed unit).
  [[nodiscard]] Eigen::VectorXd gauge_batch(const Eigen::Ref<const Eigen::MatrixXd>& angles) const {
    Eigen::MatrixXd v;
    Eigen::VectorXd stretch;
    detail::preimages(scaling, angles, v, stretch);
    const Eigen::VectorXd g = detail::raw_gauge_batch(gauge_net, v);
    const Eigen::VectorXd floor = detail::row_sup_norms(angles);
    return stretch.cwiseProduct(g).cwiseMax(floor);
  }
};

// ---------------------------------------------------------------------------
// Configuration

struct FitConfig {
  double tau = 0.75;
  std::vector<Eigen::Index> threshold_arch{32, 32, 32};
  std::vector<Eigen::Index> gauge_arch{64, 64, 64};
  nn::TrainConfig threshold_train;
  nn::TrainConfig pretrain;
  nn::TrainConfig gauge_train;
  Eigen::Index reference_size = 1000000;
  std::uint64_t reference_seed = 1;
  Eigen::Index refresh_subsample = 10000;  ///< 𝒲 points used for the per-epoch b refresh
  double alpha_min = 0.1;
  double alpha_max_per_dim = 10.0;  ///< upper bound on α is this times d
  std::uint64_t seed = 0;

  FitConfig() { pretrain.epochs = 100; }

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("fit: tau must lie in (0, 1)");
    if (reference_size < 1) throw ConfigError("fit: reference set size must be positive");
    if (refresh_subsample < 1) throw ConfigError("fit: refresh subsample must be positive");
    if (!(alpha_min > 0.0) || !(alpha_max_per_dim > 0.0)) throw ConfigError("fit: alpha bounds must be positive");
    for (const auto* arch : {&threshold_arch, &gauge_arch}) {
      for (auto w : *arch) {
        if (w < 1) throw ConfigError("fit: hidden widths must be positive");
      }
    }
    threshold_train.validate();
    pretrain.validate();
    gauge_train.validate();
    if (threshold_train.validation_fraction != gauge_train.validation_fraction) {
      throw ConfigError("fit: both stages share one train/validation split");
    }
  }
};

// ---------------------------------------------------------------------------
// Objectives

namespace detail {

class PolarObjective : public nn::Objective {
 public:
  explicit PolarObjective(const PolarSample& polar) : polar_(polar) {}
  Eigen::MatrixXd inputs(std::span<const Eigen::Index> rows) const override {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), polar_.dim());
    for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = polar_.angles.row(rows[k]);
    return x;
  }

 protected:
  const PolarSample& polar_;
};

/// Tilted loss with r̂_τ(w) = exp(m(w)).
class ThresholdObjective : public PolarObjective {
 public:
  ThresholdObjective(const PolarSample& polar, double tau) : PolarObjective(polar), tau_(tau) {}
  double loss(std::span<const Eigen::Index> rows, const Eigen::VectorXd& out, Eigen::VectorXd* d_out,
              std::span<double>) const override {
    double total = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double pred = std::exp(out(kk));
      const double r = polar_.radii(rows[k]);
      total += nn::tilted_loss(r, pred, tau_);
      if (d_out != nullptr) (*d_out)(kk) = -nn::tilted_slope(r - pred, tau_) * pred;
    }
    return total;
  }

 private:
  double tau_;
};

/// Squared error between the raw network output and target(w) − ‖w‖∞.
class PretrainObjective : public PolarObjective {
 public:
  PretrainObjective(const PolarSample& polar, Eigen::VectorXd offsets)
      : PolarObjective(polar), offsets_(std::move(offsets)) {}
  double loss(std::span<const Eigen::Index> rows, const Eigen::VectorXd& out, Eigen::VectorXd* d_out,
              std::span<double>) const override {
    double total = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double e = out(kk) - offsets_(rows[k]);
      total += e * e;
      if (d_out != nullptr) (*d_out)(kk) = 2.0 * e;
    }
    return total;
  }

 private:
  Eigen::VectorXd offsets_;
};

/// Truncated-gamma NLL of exceedances with rate g̃(w_j) = ‖b∘w_j‖·g(κ^{-1}(w_j))
/// and shape α = exp(extras[0]); b is held fixed within an epoch.
class GaugeObjective : public nn::Objective {
 public:
  GaugeObjective(const PolarSample& polar, const Eigen::VectorXd& thresholds, Eigen::MatrixXd refresh_angles,
                 double alpha0, double alpha_lo, double alpha_hi)
      : polar_(polar),
        thresholds_(thresholds),
        refresh_angles_(std::move(refresh_angles)),
        log_lo_(std::log(alpha_lo)),
        log_hi_(std::log(alpha_hi)) {
    extras = {std::log(alpha0)};
  }

  void refresh(const nn::MlpParams& params) override { scaling = gauge_scaling_factors(params, refresh_angles_); }

  Eigen::MatrixXd inputs(std::span<const Eigen::Index> rows) const override {
    Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), polar_.dim());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      v.row(static_cast<Eigen::Index>(k)) = geometry::kappa_inverse(polar_.angles.row(rows[k]).transpose(), scaling);
    }
    return v;
  }

  double loss(std::span<const Eigen::Index> rows, const Eigen::VectorXd& out, Eigen::VectorXd* d_out,
              std::span<double> d_extras) const override {
    const double shape = std::exp(extras[0]);
    double total = 0.0;
    Eigen::VectorXd w;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Eigen::Index j = rows[k];
      w = polar_.angles.row(j).transpose();
      const Eigen::VectorXd stretched = geometry::multiply_by_factors(w, scaling);
      const double c = stretched.norm();
      const double m = out(kk);
      const double rate = c * (std::max(m, 0.0) + stretched.cwiseAbs().maxCoeff() / c);
      const auto t = nn::truncgamma_nll_terms(polar_.radii(j), rate, shape, thresholds_(j));
      total += t.value;
      if (d_out != nullptr) {
        (*d_out)(kk) = m > 0.0 ? t.d_rate * c : 0.0;
        d_extras[0] += t.d_shape * shape;
      }
    }
    return total;
  }

  void constrain_extras() override {
    if (extras[0] < log_lo_) {
      extras[0] = log_lo_;
      hit_bound = true;
    } else if (extras[0] > log_hi_) {
      extras[0] = log_hi_;
      hit_bound = true;
    }
  }

  ScalingFactors scaling;
  bool hit_bound = false;

 private:
  const PolarSample& polar_;
  const Eigen::VectorXd& thresholds_;
  Eigen::MatrixXd refresh_angles_;
  double log_lo_;
  double log_hi_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

struct ThresholdFit {
  nn::MlpParams net;
  double tau = 0.5;
  double exceedance_fraction = 0.0;
  nn::TrainResult training;
};

/// Quantile network for r_τ(w) = exp(m(w)) trained with the tilted loss.
/// The output bias starts at the log of the empirical τ-quantile of the
/// training radii.
inline ThresholdFit fit_threshold(const PolarSample& polar, double tau, const std::vector<Eigen::Index>& arch,
                                  const nn::TrainConfig& cfg, const nn::Split& split, std::uint64_t init_seed,
                                  std::vector<std::string>* warnings = nullptr) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("fit_threshold: tau must lie in (0, 1)");
  if (polar.size() < 2 || polar.radii.maxCoeff() == polar.radii.minCoeff()) {
    throw ConfigError("fit_threshold: radii are degenerate (all equal)");
  }
  if (polar.size() < 100 && warnings != nullptr) {
    warnings->push_back("fit_threshold: only " + std::to_string(polar.size()) + " observations (fewer than 100)");
  }
  nn::MlpParams init = nn::make_mlp(polar.dim(), arch, init_seed);
  std::vector<double> train_radii;
  train_radii.reserve(split.train.size());
  for (auto j : split.train) train_radii.push_back(polar.radii(j));
  init.layers.back().bias(0) = std::log(quantile_type7(train_radii, tau));

  detail::ThresholdObjective obj(polar, tau);
  ThresholdFit fit;
  fit.tau = tau;
  fit.training = nn::train(std::move(init), obj, cfg, split.train, split.validation);
  fit.net = fit.training.params;
  const Eigen::VectorXd r_hat = nn::forward_chunked(fit.net, polar.angles).array().exp();
  fit.exceedance_fraction = static_cast<double>((polar.radii.array() > r_hat.array()).count()) /
                            static_cast<double>(polar.size());
  return fit;
}

/// Scaling factors of h = r̂_τ over the reference angles; with them
/// w ↦ g̃(w) is the initial gauge estimate ĝ_τ.
inline ScalingFactors initial_gauge_scaling(const nn::MlpParams& quantile_net,
                                            const Eigen::Ref<const Eigen::MatrixXd>& reference) {
  const Eigen::VectorXd h = nn::forward_chunked(quantile_net, reference).array().exp();
  return geometry::scaling_factors(reference, std::span<const double>(h.data(), static_cast<std::size_t>(h.size())));
}

/// ĝ_τ(w) for each row of `angles`.
inline Eigen::VectorXd initial_gauge_target(const nn::MlpParams& quantile_net, const ScalingFactors& b,
                                            const Eigen::Ref<const Eigen::MatrixXd>& angles) {
  Eigen::MatrixXd v;
  Eigen::VectorXd stretch;
  detail::preimages(b, angles, v, stretch);
  const Eigen::VectorXd h = nn::forward_chunked(quantile_net, v).array().exp();
  return stretch.cwiseQuotient(h).cwiseMax(detail::row_sup_norms(angles));
}

/// Fits the raw output m(w) to target(w) − ‖w‖∞ by least squares, so that
/// ReLU(m) + ‖w‖∞ tracks the target.
inline nn::TrainResult pretrain_gauge(const PolarSample& polar, const Eigen::VectorXd& target, nn::MlpParams init,
                                      const nn::TrainConfig& cfg, const nn::Split& split) {
  if (target.size() != polar.size()) throw ConfigError("pretrain_gauge: one target per observation required");
  Eigen::VectorXd offsets = target - detail::row_sup_norms(polar.angles);
  detail::PretrainObjective obj(polar, std::move(offsets));
  return nn::train(std::move(init), obj, cfg, split.train, split.validation);
}

struct FitResult {
  GaugeModel model;
  ThresholdFit threshold;
  nn::TrainResult pretraining;
  nn::TrainResult gauge_training;
  Eigen::Index exceedances_train = 0;
  Eigen::Index exceedances_validation = 0;
  std::vector<std::string> warnings;
};

/// Gauge stage given a fitted threshold network.
inline FitResult fit_gauge(const PolarSample& polar, const ThresholdFit& threshold, const FitConfig& cfg,
                           const nn::Split& split) {
  cfg.validate();
  FitResult result;
  result.threshold = threshold;
  const Eigen::Index d = polar.dim();
  if (threshold.net.input_dim != d) throw ConfigError("fit_gauge: threshold model dimension mismatch");

  const AngleSet reference = geometry::sample_sphere(cfg.reference_size, d, cfg.reference_seed);
  const Eigen::Index sub = std::min(cfg.refresh_subsample, reference.size());
  const Eigen::MatrixXd refresh_angles = reference.angles.topRows(sub);

  const Eigen::VectorXd thresholds = nn::forward_chunked(threshold.net, polar.angles).array().exp();
  std::vector<Eigen::Index> train_exc;
  std::vector<Eigen::Index> valid_exc;
  for (auto j : split.train) {
    if (polar.radii(j) > thresholds(j)) train_exc.push_back(j);
  }
  for (auto j : split.validation) {
    if (polar.radii(j) > thresholds(j)) valid_exc.push_back(j);
  }
  result.exceedances_train = static_cast<Eigen::Index>(train_exc.size());
  result.exceedances_validation = static_cast<Eigen::Index>(valid_exc.size());
  if (train_exc.empty() || valid_exc.empty()) throw ConfigError("fit_gauge: no threshold exceedances");

  // Pre-training towards the rescaled quantile set.
  const ScalingFactors b_tau = initial_gauge_scaling(threshold.net, refresh_angles);
  const Eigen::VectorXd target = initial_gauge_target(threshold.net, b_tau, polar.angles);
  nn::MlpParams init = nn::make_mlp(d, cfg.gauge_arch, derive_seed(cfg.seed, 2));
  nn::TrainConfig pre_cfg = cfg.pretrain;
  pre_cfg.seed = derive_seed(cfg.seed, 3);
  result.pretraining = pretrain_gauge(polar, target, std::move(init), pre_cfg, split);

  const double alpha0 = static_cast<double>(d);
  const double alpha_hi = cfg.alpha_max_per_dim * static_cast<double>(d);
  detail::GaugeObjective obj(polar, thresholds, refresh_angles, alpha0, cfg.alpha_min, alpha_hi);
  nn::TrainConfig gauge_cfg = cfg.gauge_train;
  gauge_cfg.seed = derive_seed(cfg.seed, 4);
  result.gauge_training = nn::train(result.pretraining.params, obj, gauge_cfg, train_exc, valid_exc);
  if (obj.hit_bound) {
    result.warnings.push_back("fit_gauge: alpha reached its bound [" + std::to_string(cfg.alpha_min) + ", " +
                              std::to_string(alpha_hi) + "]");
  }

  GaugeModel& m = result.model;
  m.quantile_net = threshold.net;
  m.gauge_net = result.gauge_training.params;
  m.alpha = std::exp(result.gauge_training.extras[0]);
  m.tau = threshold.tau;
  m.reference_size = cfg.reference_size;
  m.reference_seed = cfg.reference_seed;
  m.scaling = gauge_scaling_factors(m.gauge_net, reference.angles);
  return result;
}

/// The split used by both stages for a given sample size and configuration.
inline nn::Split fit_split(Eigen::Index n, const FitConfig& cfg) {
  return nn::make_split(n, cfg.threshold_train.validation_fraction, derive_seed(cfg.seed, 0));
}

/// Threshold stage with the seeds used by fit().
inline ThresholdFit fit_threshold_stage(const PolarSample& polar, const FitConfig& cfg,
                                        std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  nn::TrainConfig thr_cfg = cfg.threshold_train;
  thr_cfg.seed = derive_seed(cfg.seed, 5);
  return fit_threshold(polar, cfg.tau, cfg.threshold_arch, thr_cfg, fit_split(polar.size(), cfg),
                       derive_seed(cfg.seed, 1), warnings);
}

/// Both stages on one shared train/validation split.
inline FitResult fit(const PolarSample& polar, const FitConfig& cfg) {
  std::vector<std::string> warnings;
  const ThresholdFit thr = fit_threshold_stage(polar, cfg, &warnings);
  FitResult res = fit_gauge(polar, thr, cfg, fit_split(polar.size(), cfg));
  res.warnings.insert(res.warnings.begin(), warnings.begin(), warnings.end());
  return res;
}

}  // namespace deepgauge
