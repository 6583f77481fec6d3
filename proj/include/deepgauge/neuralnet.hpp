#pragma once

// A small multilayer-perceptron engine: ReLU hidden layers with a scalar
// linear output, exact reverse-mode gradients, Adam, L1/L2 penalties,
// checkpointing and early stopping.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepgauge/errors.hpp"
#include "deepgauge/specialfns.hpp"

namespace deepgauge::nn {

struct Layer {
  Eigen::MatrixXd weights;  ///< out × in
  Eigen::VectorXd bias;     ///< out
};

/// Parameters of an MLP. The last layer has a single output unit.
struct MlpParams {
  Eigen::Index input_dim = 0;
  std::vector<Layer> layers;

  [[nodiscard]] std::vector<Eigen::Index> widths() const {
    std::vector<Eigen::Index> w;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) w.push_back(layers[l].weights.rows());
    return w;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t count = 0;
    for (const auto& layer : layers) count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    return count;
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const Layer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
  }

  [[nodiscard]] MlpParams zeros_like() const {
    MlpParams z = *this;
    for (auto& layer : z.layers) {
      layer.weights.setZero();
      layer.bias.setZero();
    }
    return z;
  }

  /// Applies f to every (parameter, other-parameter) pair, weights first then
  /// bias within each layer.
  template <class F>
  void zip(const MlpParams& other, F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f(layers[l].weights.array(), other.layers[l].weights.array(), false);
      f(layers[l].bias.array(), other.layers[l].bias.array(), true);
    }
  }
};

inline void validate_architecture(Eigen::Index input_dim, std::span<const Eigen::Index> widths) {
  if (input_dim < 1) throw ConfigError("mlp: input dimension must be positive");
  for (auto w : widths) {
    if (w < 1) throw ConfigError("mlp: hidden widths must be positive");
  }
}

/// He-scaled normal weights, zero biases.
inline MlpParams make_mlp(Eigen::Index input_dim, std::span<const Eigen::Index> widths, std::uint64_t seed) {
  validate_architecture(input_dim, widths);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams p;
  p.input_dim = input_dim;
  Eigen::Index fan_in = input_dim;
  auto add_layer = [&](Eigen::Index out) {
    Layer layer;
    layer.weights.resize(out, fan_in);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index c = 0; c < fan_in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = scale * normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    p.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (auto w : widths) add_layer(w);
  add_layer(1);
  return p;
}

inline MlpParams make_mlp(Eigen::Index input_dim, const std::vector<Eigen::Index>& widths, std::uint64_t seed) {
  return make_mlp(input_dim, std::span<const Eigen::Index>(widths), seed);
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  ///< input, then each hidden layer's output
};

/// Network outputs for each row of `inputs`.
inline Eigen::VectorXd forward_batch(const MlpParams& p, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                     ForwardCache* cache = nullptr) {
  if (inputs.cols() != p.input_dim) {
    throw ConfigError("mlp: input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                      std::to_string(p.input_dim));
  }
  if (cache != nullptr) {
    cache->activations.clear();
    cache->activations.emplace_back(inputs);
  }
  Eigen::MatrixXd h = inputs;
  const std::size_t hidden = p.layers.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    Eigen::MatrixXd z = h * p.layers[l].weights.transpose();
    z.rowwise() += p.layers[l].bias.transpose();
    h = z.cwiseMax(0.0);
    if (cache != nullptr) cache->activations.push_back(h);
  }
  const Layer& last = p.layers.back();
  Eigen::VectorXd out = h * last.weights.row(0).transpose();
  out.array() += last.bias(0);
  return out;
}

inline double forward(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() != p.input_dim) {
    throw ConfigError("mlp: input has length " + std::to_string(w.size()) + ", network expects " +
                      std::to_string(p.input_dim));
  }
  Eigen::VectorXd h = w;
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    h = (p.layers[l].weights * h + p.layers[l].bias).cwiseMax(0.0);
  }
  return p.layers.back().weights.row(0).dot(h) + p.layers.back().bias(0);
}

/// Forward pass in fixed-size chunks to bound memory on large angle sets.
inline Eigen::VectorXd forward_chunked(const MlpParams& p, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                       Eigen::Index chunk = 8192) {
  Eigen::VectorXd out(inputs.rows());
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, inputs.rows() - start);
    out.segment(start, len) = forward_batch(p, inputs.middleRows(start, len));
  }
  return out;
}

/// Gradient of sum_k d_out(k) * output_k with respect to every parameter.
/// ReLU kinks take the zero subgradient.
inline void backward(const MlpParams& p, const ForwardCache& cache, const Eigen::Ref<const Eigen::VectorXd>& d_out,
                     MlpParams& grad) {
  Eigen::MatrixXd g = d_out;  // B × 1
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& a = cache.activations[l];
    grad.layers[l].weights.noalias() = g.transpose() * a;
    grad.layers[l].bias = g.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = g * p.layers[l].weights;
      g = (a.array() > 0.0).select(back, 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Losses

/// ρ_τ(r - r_hat) with ρ_τ(z) = z(τ - 1{z < 0}).
inline double tilted_loss(double r, double r_hat, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tilted_loss: tau must lie in (0, 1)");
  const double z = r - r_hat;
  return z * (tau - (z < 0.0 ? 1.0 : 0.0));
}

/// Subgradient of ρ_τ at z; τ - 1 is taken at z = 0.
inline double tilted_slope(double z, double tau) { return z > 0.0 ? tau : tau - 1.0; }

struct NllTerms {
  double value = 0.0;
  double d_rate = 0.0;
  double d_shape = 0.0;
};

namespace detail {

inline void check_nll_args(double rate, double shape) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw DomainError("truncgamma_nll: rate must be positive");
  if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("truncgamma_nll: shape must be positive");
}

// log Γ(α, z) = log Γ(α) + log Q(α, z)
inline double log_upper_gamma(double shape, double z) {
  return specialfns::log_gamma(shape) + specialfns::log_reg_gamma_upper(shape, z);
}

}  // namespace detail

/// Negative log-likelihood of r under a Gamma(shape, rate) truncated below at
/// r_thresh; zero when r does not exceed the threshold.
inline double truncgamma_nll(double r, double rate, double shape, double r_thresh) {
  detail::check_nll_args(rate, shape);
  if (!(r > r_thresh)) return 0.0;
  return -(shape * std::log(rate) + (shape - 1.0) * std::log(r) - r * rate - specialfns::log_gamma(shape) -
           specialfns::log_reg_gamma_upper(shape, rate * r_thresh));
}

/// Value and partial derivatives of truncgamma_nll in rate and shape. The
/// shape derivative of log Γ(α, z) is taken by a central difference.
inline NllTerms truncgamma_nll_terms(double r, double rate, double shape, double r_thresh) {
  detail::check_nll_args(rate, shape);
  NllTerms t;
  if (!(r > r_thresh)) return t;
  const double z = rate * r_thresh;
  t.value = truncgamma_nll(r, rate, shape, r_thresh);
  t.d_rate = -shape / rate + r + r_thresh * specialfns::dlog_reg_gamma_upper_dz(shape, z);
  const double h = 1e-5 * std::max(1.0, shape);
  const double dlog_upper = (detail::log_upper_gamma(shape + h, z) - detail::log_upper_gamma(shape - h, z)) / (2.0 * h);
  t.d_shape = -(std::log(rate) + std::log(r)) + dlog_upper;
  return t;
}

// ---------------------------------------------------------------------------
// Objectives and training

/// A differentiable training objective over indexed rows of some dataset.
/// Besides the network the objective may own extra scalar parameters (held
/// in `extras`); they are trained by the same optimiser but not penalised.
class Objective {
 public:
  virtual ~Objective() = default;

  /// Called at the start of every epoch with the current network.
  virtual void refresh(const MlpParams& /*params*/) {}

  /// Network inputs for the given rows.
  [[nodiscard]] virtual Eigen::MatrixXd inputs(std::span<const Eigen::Index> rows) const = 0;

  /// Sum of per-row losses given network outputs for `rows`. When `d_out` is
  /// non-null it receives d(loss)/d(output) per row and `d_extras` is
  /// incremented by d(loss)/d(extras).
  virtual double loss(std::span<const Eigen::Index> rows, const Eigen::VectorXd& outputs, Eigen::VectorXd* d_out,
                      std::span<double> d_extras) const = 0;

  /// Projects extras back into their admissible range after an update.
  virtual void constrain_extras() {}

  std::vector<double> extras;
};

struct TrainConfig {
  int epochs = 500;
  Eigen::Index batch_size = 1024;
  int patience = 5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l1 = 1e-4;
  double l2 = 1e-4;
  bool penalize_biases = true;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || patience < 1) throw ConfigError("train: epochs, batch size and patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("train: validation fraction must lie in (0, 1)");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (l1 < 0.0 || l2 < 0.0) throw ConfigError("train: penalty weights must be non-negative");
  }
};

inline double penalty_value(const MlpParams& p, const TrainConfig& cfg) {
  double total = 0.0;
  for (const auto& layer : p.layers) {
    total += cfg.l1 * layer.weights.cwiseAbs().sum() + cfg.l2 * layer.weights.squaredNorm();
    if (cfg.penalize_biases) total += cfg.l1 * layer.bias.cwiseAbs().sum() + cfg.l2 * layer.bias.squaredNorm();
  }
  return total;
}

inline void add_penalty_gradient(const MlpParams& p, const TrainConfig& cfg, MlpParams& grad) {
  auto add = [&](const auto& value, auto& g) {
    g.array() += cfg.l1 * value.array().sign() + 2.0 * cfg.l2 * value.array();
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    add(p.layers[l].weights, grad.layers[l].weights);
    if (cfg.penalize_biases) add(p.layers[l].bias, grad.layers[l].bias);
  }
}

struct Gradient {
  double value = 0.0;  ///< mean data loss plus penalty
  double data_loss = 0.0;
  MlpParams params;
  std::vector<double> extras;
};

/// Mean loss over `rows` plus the parameter penalty, with its exact gradient.
inline Gradient objective_gradient(const MlpParams& p, const Objective& obj, std::span<const Eigen::Index> rows,
                                   const TrainConfig& cfg) {
  Gradient g;
  g.params = p.zeros_like();
  g.extras.assign(obj.extras.size(), 0.0);
  ForwardCache cache;
  const Eigen::MatrixXd x = obj.inputs(rows);
  const Eigen::VectorXd out = forward_batch(p, x, &cache);
  Eigen::VectorXd d_out(out.size());
  const double total = obj.loss(rows, out, &d_out, g.extras);
  const double inv = 1.0 / static_cast<double>(rows.size());
  d_out *= inv;
  for (double& e : g.extras) e *= inv;
  backward(p, cache, d_out, g.params);
  add_penalty_gradient(p, cfg, g.params);
  g.data_loss = total * inv;
  g.value = g.data_loss + penalty_value(p, cfg);
  return g;
}

/// Mean data loss over `rows`, evaluated in chunks.
inline double mean_loss(const MlpParams& p, const Objective& obj, std::span<const Eigen::Index> rows,
                        Eigen::Index chunk = 8192) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t len = std::min(static_cast<std::size_t>(chunk), rows.size() - start);
    const auto part = rows.subspan(start, len);
    const Eigen::VectorXd out = forward_batch(p, obj.inputs(part));
    total += obj.loss(part, out, nullptr, {});
  }
  return total / static_cast<double>(rows.size());
}

class Adam {
 public:
  Adam(const MlpParams& shape, std::size_t extras, const TrainConfig& cfg)
      : cfg_(cfg), m_(shape.zeros_like()), v_(shape.zeros_like()), me_(extras, 0.0), ve_(extras, 0.0) {}

  void step(MlpParams& p, const Gradient& g, std::vector<double>& extras) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    const double lr = cfg_.learning_rate;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double eps = cfg_.epsilon;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      update(p.layers[l].weights.array(), g.params.layers[l].weights.array(), m_.layers[l].weights.array(),
             v_.layers[l].weights.array(), c1, c2);
      update(p.layers[l].bias.array(), g.params.layers[l].bias.array(), m_.layers[l].bias.array(),
             v_.layers[l].bias.array(), c1, c2);
    }
    for (std::size_t k = 0; k < extras.size(); ++k) {
      me_[k] = b1 * me_[k] + (1.0 - b1) * g.extras[k];
      ve_[k] = b2 * ve_[k] + (1.0 - b2) * g.extras[k] * g.extras[k];
      extras[k] -= lr * (me_[k] / c1) / (std::sqrt(ve_[k] / c2) + eps);
    }
  }

 private:
  template <class P, class G, class M, class V>
  void update(P&& p, const G& g, M&& m, V&& v, double c1, double c2) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
    p -= cfg_.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg_.epsilon);
  }

  TrainConfig cfg_;
  MlpParams m_;
  MlpParams v_;
  std::vector<double> me_;
  std::vector<double> ve_;
  int t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  MlpParams params;            ///< checkpoint with minimum validation loss
  std::vector<double> extras;  ///< extras at that checkpoint
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

namespace detail {

inline std::string state_dump(const MlpParams& p, const std::vector<double>& extras, int epoch, std::size_t batch,
                              double loss) {
  std::ostringstream os;
  os.precision(17);
  os << "non-finite loss at epoch " << epoch << ", batch " << batch << " (loss = " << loss << "); parameter norms:";
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    os << " L" << l << "[W=" << p.layers[l].weights.norm() << ", b=" << p.layers[l].bias.norm() << "]";
  }
  os << "; extras:";
  for (double e : extras) os << ' ' << e;
  return os.str();
}

}  // namespace detail

/// Mini-batch Adam on `train_rows` with the validation loss on `valid_rows`
/// recorded after every epoch. Returns the parameters of the epoch with the
/// smallest validation loss; stops once `patience` consecutive epochs fail to
/// improve on it.
inline TrainResult train(MlpParams params, Objective& obj, const TrainConfig& cfg,
                         std::span<const Eigen::Index> train_rows, std::span<const Eigen::Index> valid_rows) {
  cfg.validate();
  if (train_rows.empty()) throw ConfigError("train: no training rows");
  if (valid_rows.empty()) throw ConfigError("train: no validation rows");
  std::mt19937_64 rng(cfg.seed);
  Adam adam(params, obj.extras.size(), cfg);
  std::vector<Eigen::Index> order(train_rows.begin(), train_rows.end());

  TrainResult result;
  result.params = params;
  result.extras = obj.extras;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    obj.refresh(params);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const std::span<const Eigen::Index> batch(order.data() + start, len);
      const Gradient g = objective_gradient(params, obj, batch, cfg);
      bool finite = std::isfinite(g.value) && g.params.all_finite();
      for (double e : g.extras) finite = finite && std::isfinite(e);
      if (!finite) throw NumericError(detail::state_dump(params, obj.extras, epoch, batch_index, g.value));
      adam.step(params, g, obj.extras);
      obj.constrain_extras();
      epoch_loss += g.data_loss * static_cast<double>(len);
      ++batch_index;
    }
    const double valid = mean_loss(params, obj, valid_rows);
    if (!std::isfinite(valid)) throw NumericError(detail::state_dump(params, obj.extras, epoch, batch_index, valid));
    result.log.push_back({epoch, epoch_loss / static_cast<double>(order.size()), valid});
    if (valid < result.best_validation_loss) {
      result.best_validation_loss = valid;
      result.best_epoch = epoch;
      result.params = params;
      result.extras = obj.extras;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

/// Random partition of 0..n-1 into training and validation rows.
struct Split {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};

inline Split make_split(Eigen::Index n, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("split: validation fraction must lie in (0, 1)");
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_valid = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  Split s;
  s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_valid));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_valid), idx.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace deepgauge::nn
