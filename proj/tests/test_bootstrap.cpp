#include <gtest/gtest.h>

#include <map>
#include <set>

#include "deepgauge/bootstrap.hpp"

using namespace deepgauge;
using namespace deepgauge::bootstrap;

namespace {

/// Row k holds (k, -k) so each output row identifies its source.
DataMatrix indexed(Eigen::Index n) {
  DataMatrix d;
  d.margin = MarginTag::laplace;
  d.values.resize(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) {
    d.values(k, 0) = static_cast<double>(k);
    d.values(k, 1) = -static_cast<double>(k);
  }
  return d;
}

}  // namespace

TEST(BlockResample, SingleBlockIsRotation) {
  const auto data = indexed(37);
  const auto out = block_resample(data, {37, 4});
  ASSERT_EQ(out.rows(), 37);
  const auto s = static_cast<Eigen::Index>(out.values(0, 0));
  for (Eigen::Index k = 0; k < 37; ++k) EXPECT_EQ(out.values(k, 0), static_cast<double>((s + k) % 37));
}

TEST(BlockResample, UnitBlocksResampleRowsWithReplacement) {
  const auto data = indexed(500);
  const auto out = block_resample(data, {1, 9});
  std::set<double> distinct;
  for (Eigen::Index k = 0; k < out.rows(); ++k) distinct.insert(out.values(k, 0));
  // With replacement: expected distinct fraction 1 − e^{-1} ≈ 0.632.
  EXPECT_NEAR(static_cast<double>(distinct.size()) / 500.0, 0.632, 0.06);
}

TEST(BlockResample, RowCountRowsAndBlockOrder) {
  const auto data = indexed(103);
  for (Eigen::Index L : {1, 2, 7, 10, 50, 103}) {
    const auto out = block_resample(data, {L, static_cast<std::uint64_t>(L)});
    ASSERT_EQ(out.rows(), 103);
    EXPECT_EQ(out.margin, MarginTag::laplace);
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
      EXPECT_EQ(out.values(k, 1), -out.values(k, 0));
      const double v = out.values(k, 0);
      EXPECT_TRUE(v >= 0 && v < 103 && v == std::floor(v));
      if (k % L != 0) EXPECT_EQ(out.values(k, 0), std::fmod(out.values(k - 1, 0) + 1.0, 103.0));
    }
  }
}

TEST(BlockResample, DeterministicPerSeed) {
  const auto data = indexed(200);
  EXPECT_EQ(block_resample(data, {8, 3}).values, block_resample(data, {8, 3}).values);
  EXPECT_NE(block_resample(data, {8, 3}).values, block_resample(data, {8, 4}).values);
}

TEST(BlockResample, InvalidPlansRejected) {
  const auto data = indexed(10);
  EXPECT_THROW(block_resample(data, {11, 0}), ConfigError);
  EXPECT_THROW(block_resample(data, {0, 0}), ConfigError);
  EXPECT_EQ((BlockPlan{3, 0}).blocks(10), 4);
}
