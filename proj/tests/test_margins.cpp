#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "deepgauge/margins.hpp"

using namespace deepgauge;
namespace mg = deepgauge::margins;

TEST(Laplace, QuantileKnownValues) {
  EXPECT_DOUBLE_EQ(mg::laplace_quantile(0.5), 0.0);
  EXPECT_NEAR(mg::laplace_quantile(0.99), std::log(50.0), 1e-13);
  EXPECT_DOUBLE_EQ(mg::laplace_cdf(0.0), 0.5);
}

TEST(Laplace, QuantileRejectsEndpoints) {
  EXPECT_THROW(mg::laplace_quantile(0.0), DomainError);
  EXPECT_THROW(mg::laplace_quantile(1.0), DomainError);
  EXPECT_THROW(mg::laplace_quantile(-0.2), DomainError);
}

TEST(Laplace, CdfInvertsQuantile) {
  for (double q = 1e-6; q < 1.0; q += 0.0137) {
    EXPECT_NEAR(mg::laplace_cdf(mg::laplace_quantile(q)), q, 1e-14);
  }
}

TEST(Laplace, LogTailTransformsRoundTrip) {
  for (double x = -700.0; x <= 700.0; x += 13.7) {
    EXPECT_NEAR(mg::laplace_from_log_cdf(mg::laplace_log_cdf(x)), x, 1e-9 * std::max(1.0, std::abs(x)));
    EXPECT_NEAR(mg::laplace_from_log_sf(mg::laplace_log_sf(x)), x, 1e-9 * std::max(1.0, std::abs(x)));
  }
}

TEST(ExpToLaplace, KnownValues) {
  EXPECT_NEAR(mg::exp_to_laplace(std::log(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(mg::exp_to_laplace(std::log(2.0) + 3.0), 3.0, 1e-14);
  EXPECT_NEAR(mg::exp_to_laplace(0.1), std::log(1.0 - std::exp(-0.1)) + std::log(2.0), 1e-14);
  EXPECT_NEAR(mg::exp_to_laplace(0.1), -1.6590213, 1e-7);
  EXPECT_EQ(mg::exp_to_laplace(0.0), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(mg::exp_to_laplace(-1.0), DomainError);
}

TEST(ExpToLaplace, MatchesCdfComposition) {
  // F_L^{-1}(F_E(x)) computed directly.
  for (double x = 0.05; x < 12.0; x += 0.15) {
    const double u = 1.0 - std::exp(-x);
    EXPECT_NEAR(mg::exp_to_laplace(x), mg::laplace_quantile(u), 1e-8 * std::max(1.0, x));
  }
}

TEST(ExpToLaplace, ContinuousAndIncreasing) {
  const double l2 = std::log(2.0);
  EXPECT_NEAR(mg::exp_to_laplace(l2 - 1e-13), mg::exp_to_laplace(l2 + 1e-13), 1e-12);
  double prev = -std::numeric_limits<double>::infinity();
  for (double x = 1e-4; x < 20.0; x += 1e-3) {
    const double y = mg::exp_to_laplace(x);
    EXPECT_GT(y, prev);
    prev = y;
  }
  for (double x = 0.01; x < 10.0; x += 0.3) EXPECT_NEAR(mg::laplace_to_exp(mg::exp_to_laplace(x)), x, 1e-12);
}

TEST(RankTransform, ThreeValues) {
  DataMatrix d{Eigen::MatrixXd(3, 1), MarginTag::raw};
  d.values << 10, 20, 30;
  const auto out = mg::rank_transform_to_laplace(d);
  EXPECT_EQ(out.margin, MarginTag::laplace);
  EXPECT_NEAR(out.values(0, 0), -std::log(2.0), 1e-14);
  EXPECT_NEAR(out.values(1, 0), 0.0, 1e-14);
  EXPECT_NEAR(out.values(2, 0), std::log(2.0), 1e-14);
}

TEST(RankTransform, TwoValuesSymmetric) {
  DataMatrix d{Eigen::MatrixXd(2, 1), MarginTag::raw};
  d.values << -3.0, 8.0;
  const auto out = mg::rank_transform_to_laplace(d);
  EXPECT_NEAR(out.values(0, 0), -std::log(1.5), 1e-14);
  EXPECT_NEAR(out.values(1, 0), std::log(1.5), 1e-14);
}

TEST(RankTransform, TiesShareAverageRank) {
  DataMatrix d{Eigen::MatrixXd(4, 1), MarginTag::raw};
  d.values << 1, 2, 2, 3;
  const auto out = mg::rank_transform_to_laplace(d);
  EXPECT_DOUBLE_EQ(out.values(1, 0), out.values(2, 0));
  EXPECT_NEAR(out.values(1, 0), mg::laplace_quantile(2.5 / 5.0), 1e-15);
}

TEST(RankTransform, ErrorsOnDegenerateColumns) {
  DataMatrix c{Eigen::MatrixXd::Constant(5, 2, 1.0), MarginTag::raw};
  c.values(0, 0) = 2.0;
  EXPECT_THROW(mg::rank_transform_to_laplace(c), ConfigError);
  DataMatrix one{Eigen::MatrixXd::Ones(1, 1), MarginTag::raw};
  EXPECT_THROW(mg::rank_transform_to_laplace(one), ConfigError);
}

TEST(RankTransform, OrderAndMonotoneDistortionInvariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const int n = 501;
  DataMatrix d{Eigen::MatrixXd(n, 1), MarginTag::raw};
  for (int i = 0; i < n; ++i) d.values(i, 0) = n01(rng);
  DataMatrix distorted = d;
  distorted.values = d.values.array().exp() * 3.0 + 1.0;
  const auto a = mg::rank_transform_to_laplace(d);
  const auto b = mg::rank_transform_to_laplace(distorted);
  EXPECT_EQ(a.values, b.values);

  std::vector<double> sorted(a.values.data(), a.values.data() + n);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NEAR(sorted[n / 2], 0.0, 1e-14);

  DataMatrix shuffled = d;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < n; ++i) shuffled.values(i, 0) = d.values(perm[i], 0);
  const auto c = mg::rank_transform_to_laplace(shuffled);
  std::vector<double> s2(c.values.data(), c.values.data() + n);
  std::sort(s2.begin(), s2.end());
  EXPECT_EQ(sorted, s2);
}

TEST(MarginTag, StringRoundTrip) {
  for (auto t : {MarginTag::raw, MarginTag::uniform, MarginTag::exponential, MarginTag::laplace}) {
    EXPECT_EQ(margin_from_string(to_string(t)), t);
  }
  EXPECT_THROW(margin_from_string("gumbel"), ConfigError);
}
