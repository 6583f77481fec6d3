#pragma once

// Central finite-difference check of nn::objective_gradient.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>

#include "deepgauge/neuralnet.hpp"

namespace testing_support {

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_gradient = 0.0;
  std::size_t checked = 0;
};

inline double relative(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

inline GradCheck check_gradient(deepgauge::nn::MlpParams params, deepgauge::nn::Objective& obj,
                                std::span<const Eigen::Index> rows, const deepgauge::nn::TrainConfig& cfg,
                                double step = 1e-5) {
  using namespace deepgauge::nn;
  obj.refresh(params);
  const Gradient g = objective_gradient(params, obj, rows, cfg);
  GradCheck out;
  auto value = [&]() { return objective_gradient(params, obj, rows, cfg).value; };
  auto central = [&](double& slot, double h) {
    const double saved = slot;
    slot = saved + h;
    const double up = value();
    slot = saved - h;
    const double down = value();
    slot = saved;
    return (up - down) / (2.0 * h);
  };
  // Smaller error over steps h and h/10.
  auto probe = [&](double& slot, double analytic) {
    const double err = std::min(relative(analytic, central(slot, step)), relative(analytic, central(slot, 0.1 * step)));
    out.max_rel_error = std::max(out.max_rel_error, err);
    out.max_abs_gradient = std::max(out.max_abs_gradient, std::abs(analytic));
    ++out.checked;
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    for (Eigen::Index k = 0; k < layer.weights.size(); ++k) {
      probe(layer.weights.data()[k], g.params.layers[l].weights.data()[k]);
    }
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k) probe(layer.bias.data()[k], g.params.layers[l].bias.data()[k]);
  }
  for (std::size_t k = 0; k < obj.extras.size(); ++k) probe(obj.extras[k], g.extras[k]);
  return out;
}

/// Random network with non-zero biases so no penalty term sits on a kink.
inline deepgauge::nn::MlpParams random_network(Eigen::Index d, std::vector<Eigen::Index> widths, std::uint64_t seed) {
  auto p = deepgauge::nn::make_mlp(d, widths, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& layer : p.layers) {
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k) {
      double v = u(rng);
      if (std::abs(v) < 0.01) v = 0.05;
      layer.bias(k) = v;
    }
  }
  return p;
}

}  // namespace testing_support
