#pragma once

// Circular moving-block bootstrap.

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "deepgauge/errors.hpp"
#include "deepgauge/margins.hpp"

namespace deepgauge::bootstrap {

struct BlockPlan {
  Eigen::Index block_length = 1;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index blocks(Eigen::Index n) const { return (n + block_length - 1) / block_length; }
};

/// ⌈n/L⌉ uniform start indices, contiguous wrapped blocks, truncated to n rows.
inline DataMatrix block_resample(const DataMatrix& data, const BlockPlan& plan) {
  const Eigen::Index n = data.rows();
  const Eigen::Index L = plan.block_length;
  if (n < 1) throw ConfigError("block_resample: empty data");
  if (L < 1) throw ConfigError("block_resample: block length must be positive");
  if (L > n) throw ConfigError("block_resample: block length exceeds the number of rows");
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<Eigen::Index> start(0, n - 1);
  DataMatrix out;
  out.margin = data.margin;
  out.values.resize(n, data.dim());
  Eigen::Index row = 0;
  for (Eigen::Index b = 0; b < plan.blocks(n) && row < n; ++b) {
    const Eigen::Index s = start(rng);
    for (Eigen::Index k = 0; k < L && row < n; ++k, ++row) out.values.row(row) = data.values.row((s + k) % n);
  }
  return out;
}

}  // namespace deepgauge::bootstrap
