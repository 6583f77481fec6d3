#include <gtest/gtest.h>

#include <boost/math/distributions/laplace.hpp>
#include <boost/math/special_functions/owens_t.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "deepgauge/copulas.hpp"
#include "deepgauge/geometry.hpp"

using namespace deepgauge;
namespace cp = deepgauge::copulas;

namespace {

Eigen::MatrixXd corr2(double rho) { return cp::exchangeable_correlation(2, rho); }

double ks_laplace(const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  boost::math::laplace_distribution<double> lap;
  double worst = 0.0;
  const auto n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = boost::math::cdf(lap, v[i]);
    worst = std::max({worst, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  return worst;
}

double kendall_tau(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double p = (a(i) - a(j)) * (b(i) - b(j));
      s += p > 0 ? 1.0 : (p < 0 ? -1.0 : 0.0);
    }
  }
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// Bivariate Gumbel copula density with parameter β = 1/θ.
double gumbel_density(double u, double v, double theta) {
  const double beta = 1.0 / theta;
  const double x = -std::log(u);
  const double y = -std::log(v);
  const double s = std::pow(x, beta) + std::pow(y, beta);
  const double c = std::exp(-std::pow(s, theta));
  return c / (u * v) * std::pow(x * y, beta - 1.0) / std::pow(s, 2.0 - theta) * (std::pow(s, theta) + beta - 1.0);
}

double gumbel_cdf(const Eigen::VectorXd& u, double theta) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += std::pow(-std::log(u(i)), 1.0 / theta);
  return std::exp(-std::pow(s, theta));
}

Eigen::VectorXd random_unit(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd w(d);
  for (Eigen::Index i = 0; i < d; ++i) w(i) = n01(rng);
  return w / w.norm();
}

}  // namespace

TEST(CopulaSpec, Validation) {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 1.2, 1.2, 1;
  EXPECT_THROW(CopulaSpec::gaussian(bad).validate(), ConfigError);
  EXPECT_THROW(cp::sample(CopulaSpec::gaussian(bad), 10, 1), ConfigError);
  EXPECT_THROW(CopulaSpec::logistic(3, 1.5).validate(), ConfigError);
  EXPECT_THROW(CopulaSpec::student_t(corr2(0.3), -1.0).validate(), ConfigError);
  EXPECT_NO_THROW(CopulaSpec::logistic(3, 0.4).validate());
  EXPECT_EQ(copula_from_string(to_string(CopulaKind::student_t)), CopulaKind::student_t);
}

TEST(Sample, LaplaceMarginsAndDeterminism) {
  const auto r = cp::nested_correlation(3, 4);
  for (const auto& spec : {CopulaSpec::gaussian(r), CopulaSpec::student_t(r, 2.0), CopulaSpec::logistic(3, 0.4)}) {
    const Eigen::Index n = 20000;
    const auto x = cp::sample(spec, n, 12);
    EXPECT_EQ(x.margin, MarginTag::laplace);
    EXPECT_EQ(x.values, cp::sample(spec, n, 12).values);
    // 1% critical value of the Kolmogorov statistic.
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_LT(ks_laplace(x.values.col(c)), 1.63 / std::sqrt(double(n)));
  }
}

TEST(Sample, GaussianIdentityIsUncorrelated) {
  const Eigen::Index n = 20000;
  const auto x = cp::sample(CopulaSpec::gaussian(Eigen::MatrixXd::Identity(3, 3)), n, 2);
  const Eigen::MatrixXd c = x.values.rowwise() - x.values.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / double(n - 1);
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      EXPECT_LT(std::abs(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j))), 3.0 / std::sqrt(double(n)));
    }
  }
}

TEST(Sample, StudentKendallTauMatchesArcsine) {
  const double rho = 0.6;
  const Eigen::Index n = 3000;
  const auto x = cp::sample(CopulaSpec::student_t(corr2(rho), 1.0), n, 8);
  const double tau = kendall_tau(x.values.col(0), x.values.col(1));
  const double se = std::sqrt(2.0 * (2.0 * n + 5.0) / (9.0 * n * (n - 1.0)));
  EXPECT_NEAR(tau, 2.0 / std::numbers::pi * std::asin(rho), 3.0 * se);
}

TEST(Sample, LogisticThetaOneIsIndependent) {
  const Eigen::Index n = 20000;
  const auto x = cp::sample(CopulaSpec::logistic(2, 1.0), n, 3);
  double worst = 0.0;
  for (double a = 0.1; a < 1.0; a += 0.1) {
    for (double b = 0.1; b < 1.0; b += 0.1) {
      const double qa = margins::laplace_quantile(a);
      const double qb = margins::laplace_quantile(b);
      const double emp = ((x.values.col(0).array() <= qa) && (x.values.col(1).array() <= qb)).count() / double(n);
      worst = std::max(worst, std::abs(emp - a * b));
    }
  }
  EXPECT_LT(worst, 3.0 / std::sqrt(double(n)));
}

TEST(Sample, LogisticKendallTau) {
  // Gumbel copula with parameter 1/θ has Kendall's τ = 1 − θ.
  const Eigen::Index n = 3000;
  const auto x = cp::sample(CopulaSpec::logistic(2, 0.5), n, 31);
  const double se = std::sqrt(2.0 * (2.0 * n + 5.0) / (9.0 * n * (n - 1.0)));
  EXPECT_NEAR(kendall_tau(x.values.col(0), x.values.col(1)), 0.5, 3.0 * se);
}

TEST(Gauges, GaussianExamples) {
  const Eigen::MatrixXd q = corr2(0.5).inverse();
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(cp::gauge_gaussian(Eigen::Vector2d(s, s), q), (2 * s - 2 * 0.5 * s) / 0.75, 1e-14);
  EXPECT_NEAR(cp::gauge_gaussian(Eigen::Vector2d(s, -s), q), 2.1213203435596424 / 0.75, 1e-12);
  EXPECT_NEAR(cp::gauge_gaussian(Eigen::Vector2d(s, s), Eigen::Matrix2d::Identity()), std::sqrt(2.0), 1e-14);
  EXPECT_THROW(cp::gauge_gaussian(Eigen::Vector2d(0, 0), q), DomainError);
}

TEST(Gauges, GaussianMatchesBivariateClosedForm) {
  std::mt19937_64 rng(1);
  for (double rho : {-0.6, 0.2, 0.8}) {
    const Eigen::MatrixXd q = corr2(rho).inverse();
    for (int k = 0; k < 50; ++k) {
      const Eigen::VectorXd w = random_unit(2, rng);
      const double x = std::abs(w(0));
      const double y = std::abs(w(1));
      const double sgn = (w(0) * w(1) >= 0) ? 1.0 : -1.0;
      EXPECT_NEAR(cp::gauge_gaussian(w, q), (x + y - 2 * sgn * rho * std::sqrt(x * y)) / (1 - rho * rho), 1e-13);
    }
  }
}

TEST(Gauges, StudentExamples) {
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(cp::gauge_student_t(Eigen::Vector2d(s, s), 1.0), s, 1e-15);
  EXPECT_NEAR(cp::gauge_student_t(Eigen::Vector2d(1, 0), 1.0), 2.0, 1e-15);
  const Eigen::Vector3d x(0.3, -0.2, 0.7);
  EXPECT_NEAR(cp::gauge_student_t(2.0 * x, 3.0), 2.0 * cp::gauge_student_t(x, 3.0), 1e-14);
  EXPECT_THROW(cp::gauge_student_t(Eigen::Vector2d(0, 0), 1.0), DomainError);
}

TEST(Gauges, LowerBoundAndHomogeneity) {
  const auto ref = geometry::sample_sphere(10000, 3, 3);
  const auto r = cp::nested_correlation(3, 2);
  const Eigen::MatrixXd q = r.inverse();
  for (Eigen::Index k = 0; k < ref.size(); ++k) {
    const Eigen::VectorXd w = ref.angles.row(k).transpose();
    const double gg = cp::gauge_gaussian(w, q);
    const double gt = cp::gauge_student_t(w, 2.5);
    ASSERT_GE(gg, geometry::sup_norm(w) - 1e-12);
    ASSERT_GE(gt, geometry::sup_norm(w) - 1e-12);
    ASSERT_LT(std::abs(cp::gauge_gaussian(2.0 * w, q) - 2.0 * gg), 1e-10);
    ASSERT_LT(std::abs(cp::gauge_student_t(2.0 * w, 2.5) - 2.0 * gt), 1e-10);
  }
}

TEST(LogDensity, GaussianBivariateClosedForm) {
  const double rho = 0.4;
  const auto spec = CopulaSpec::gaussian(corr2(rho));
  for (double a : {-3.0, -0.5, 0.2, 4.0}) {
    for (double b : {-2.0, 0.0, 1.5, 6.0}) {
      // Direct: bivariate normal density at (Φ⁻¹(F(a)), Φ⁻¹(F(b))) over the normal marginals.
      const double y1 = specialfns::normal_quantile(margins::laplace_cdf(a));
      const double y2 = specialfns::normal_quantile(margins::laplace_cdf(b));
      const double lc = -0.5 * std::log(1 - rho * rho) -
                        (rho * rho * (y1 * y1 + y2 * y2) - 2 * rho * y1 * y2) / (2 * (1 - rho * rho));
      const double expected = lc + margins::laplace_log_density(a) + margins::laplace_log_density(b);
      EXPECT_NEAR(cp::log_density(spec, Eigen::Vector2d(a, b)), expected, 1e-8);
    }
  }
}

TEST(LogDensity, LogisticBivariateClosedForm) {
  for (double theta : {0.3, 0.7, 1.0}) {
    const auto spec = CopulaSpec::logistic(2, theta);
    for (double a : {-2.0, 0.3, 3.0}) {
      for (double b : {-1.0, 0.5, 2.5}) {
        const double u = margins::laplace_cdf(a);
        const double v = margins::laplace_cdf(b);
        const double expected =
            std::log(gumbel_density(u, v, theta)) + margins::laplace_log_density(a) + margins::laplace_log_density(b);
        EXPECT_NEAR(cp::log_density(spec, Eigen::Vector2d(a, b)), expected, 1e-10);
      }
    }
  }
}

TEST(LogDensity, LogisticTrivariateMatchesMixedDifference) {
  const double theta = 0.5;
  const auto spec = CopulaSpec::logistic(3, theta);
  const Eigen::Vector3d u(0.3, 0.6, 0.8);
  const double h = 1e-3;
  double mixed = 0.0;
  for (int s = 0; s < 8; ++s) {
    Eigen::Vector3d p = u;
    int sign = 1;
    for (int i = 0; i < 3; ++i) {
      if ((s >> i) & 1) {
        p(i) += h;
      } else {
        p(i) -= h;
        sign = -sign;
      }
    }
    mixed += sign * gumbel_cdf(p, theta);
  }
  mixed /= 8 * h * h * h;
  Eigen::Vector3d x;
  for (int i = 0; i < 3; ++i) x(i) = margins::laplace_quantile(u(i));
  const auto m = cp::margin_logs(x, MarginTag::laplace);
  EXPECT_NEAR(std::exp(cp::log_copula_density(spec, m)), mixed, 1e-4 * mixed);
}

TEST(Oracle, GaussianAndStudentExamples) {
  const double s = 1.0 / std::sqrt(2.0);
  const Eigen::Vector2d diag(s, s);
  EXPECT_NEAR(cp::gauge_numerical_oracle(CopulaSpec::gaussian(corr2(0.5)), diag, 200.0), 0.9428090, 0.02);
  EXPECT_NEAR(cp::gauge_numerical_oracle(CopulaSpec::student_t(corr2(0.5), 1.0), diag, 200.0), s, 0.02);
  const double gl = cp::gauge_numerical_oracle(CopulaSpec::logistic(2, 0.3), diag, 200.0);
  EXPECT_GE(gl, s - 1e-3);
  EXPECT_LE(gl, 2 * s);
}

TEST(Oracle, AgreesWithClosedFormsAtRandomAngles) {
  std::mt19937_64 rng(5);
  for (Eigen::Index d : {2, 3}) {
    const auto r = cp::nested_correlation(3, 11).topLeftCorner(d, d);
    const auto gs = CopulaSpec::gaussian(r);
    const auto ts = CopulaSpec::student_t(r, 2.0);
    const Eigen::MatrixXd q = r.inverse();
    for (int k = 0; k < 50; ++k) {
      const Eigen::VectorXd w = random_unit(d, rng);
      EXPECT_NEAR(cp::gauge_numerical_oracle(gs, w), cp::gauge_gaussian(w, q), 0.05);
      EXPECT_NEAR(cp::gauge_numerical_oracle(ts, w), cp::gauge_student_t(w, 2.0), 0.05);
    }
  }
}

TEST(Oracle, ExponentialMarginsAgreeOnPositiveOrthant) {
  std::mt19937_64 rng(9);
  const auto spec = CopulaSpec::gaussian(cp::nested_correlation(3, 1));
  for (int k = 0; k < 30; ++k) {
    const Eigen::VectorXd w = random_unit(3, rng).cwiseAbs();
    EXPECT_NEAR(cp::gauge_numerical_oracle(spec, w, 200.0, MarginTag::exponential),
                cp::gauge_numerical_oracle(spec, w, 200.0, MarginTag::laplace), 0.05);
  }
}

TEST(Oracle, LogisticLowerBoundAndHomogeneity) {
  const auto spec = CopulaSpec::logistic(3, 0.4);
  const auto ref = geometry::sample_sphere(300, 3, 4);
  for (Eigen::Index k = 0; k < ref.size(); ++k) {
    const Eigen::VectorXd w = ref.angles.row(k).transpose();
    const double g = cp::gauge_theoretical(spec, w);
    EXPECT_GE(g, geometry::sup_norm(w) - 0.02);
    EXPECT_NEAR(cp::gauge_theoretical(spec, 2.0 * w), 2.0 * g, 1e-10);
  }
}

TEST(Sample, ScaledCloudInsideUnitLevelSet) {
  const Eigen::Index n = 100000;
  const auto r = cp::nested_correlation(3, 6);
  const auto spec = CopulaSpec::gaussian(r);
  const Eigen::MatrixXd q = r.inverse();
  const auto x = cp::sample(spec, n, 1);
  const double scale = std::log(n / 2.0);
  Eigen::Index inside = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd v = x.values.row(j).transpose() / scale;
    if (v.squaredNorm() == 0.0 || cp::gauge_gaussian(v, q) <= 1.1) ++inside;
  }
  EXPECT_GE(inside, static_cast<Eigen::Index>(0.99 * n));
}

TEST(NestedCorrelation, Properties) {
  const auto r5 = cp::nested_correlation(5, 42);
  EXPECT_EQ(r5, cp::nested_correlation(5, 42));
  EXPECT_EQ(cp::leading_block(r5, 2), r5.topLeftCorner(2, 2));
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(r5(i, i), 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r5);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_THROW(cp::nested_correlation(1, 1), ConfigError);
}

TEST(Orthant, GaussianBivariateMatchesOwensT) {
  for (double rho : {-0.3, 0.5, 0.9}) {
    const auto spec = CopulaSpec::gaussian(corr2(rho));
    for (double q : {0.9, 0.99, 0.999}) {
      const double x = margins::laplace_quantile(q);
      const double h = specialfns::normal_quantile(q);
      const double a = std::sqrt((1 - rho) / (1 + rho));
      const double expected = (1 - q) - 2.0 * boost::math::owens_t(h, a);
      const double got = cp::orthant_probability(spec, Eigen::Vector2d(x, x), Eigen::Vector2d(1, 1));
      EXPECT_NEAR(got, expected, 1e-8 * expected) << rho << ' ' << q;
      // Lower tail by symmetry of the Gaussian copula.
      const double lower = cp::orthant_probability(spec, Eigen::Vector2d(-x, -x), Eigen::Vector2d(-1, -1));
      EXPECT_NEAR(lower, got, 1e-9 * got);
    }
  }
}

TEST(Orthant, GaussianTrivariateQuadratureMatchesQmc) {
  const auto r = cp::nested_correlation(3, 5);
  const Eigen::Vector3d a(1.0, 2.0, 1.5);
  const double quad = cp::detail::gaussian_upper_orthant_quadrature(r, a);
  const double qmc = cp::detail::gaussian_upper_orthant_qmc(r, a, 100000, 10, 3);
  EXPECT_NEAR(quad, qmc, 2e-3 * quad);
  const double indep = cp::detail::gaussian_upper_orthant_quadrature(Eigen::Matrix3d::Identity(), a);
  EXPECT_NEAR(indep, specialfns::normal_cdf(-1.0) * specialfns::normal_cdf(-2.0) * specialfns::normal_cdf(-1.5), 1e-12);
}

TEST(Orthant, MixedSignsAgainstMonteCarlo) {
  const Eigen::Index n = 400000;
  const auto r = cp::nested_correlation(3, 8);
  const Eigen::Vector3d x(1.0, -0.5, 1.5);
  const Eigen::Vector3d s(1.0, -1.0, 1.0);
  for (const auto& spec : {CopulaSpec::gaussian(r), CopulaSpec::student_t(r, 3.0), CopulaSpec::logistic(3, 0.5)}) {
    const auto data = cp::sample(spec, n, 99);
    Eigen::Index hits = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      bool ok = true;
      for (int i = 0; i < 3; ++i) ok = ok && s(i) * data.values(j, i) > s(i) * x(i);
      hits += ok;
    }
    const double p = static_cast<double>(hits) / n;
    const double oracle = cp::orthant_probability(spec, x, s);
    EXPECT_NEAR(oracle, p, 4.0 * std::sqrt(p * (1 - p) / n)) << to_string(spec.kind);
  }
}

TEST(Orthant, LogisticClosedForms) {
  const double theta = 0.4;
  const auto spec = CopulaSpec::logistic(3, theta);
  const double q = 0.99;
  const double x = margins::laplace_quantile(q);
  const double t = -std::log(q);
  double upper = 0.0;
  for (int k = 0; k <= 3; ++k) {
    const double binom = k == 0 || k == 3 ? 1.0 : 3.0;
    upper += (k % 2 ? -1.0 : 1.0) * binom * std::exp(-std::pow(k, theta) * t);
  }
  EXPECT_NEAR(cp::orthant_probability(spec, Eigen::Vector3d::Constant(x), Eigen::Vector3d::Ones()), upper, 1e-12);
  const double xl = margins::laplace_quantile(1 - q);
  const double tl = -std::log(1 - q);
  EXPECT_NEAR(cp::orthant_probability(spec, Eigen::Vector3d::Constant(xl), -Eigen::Vector3d::Ones()),
              std::exp(-std::pow(3.0, theta) * tl), 1e-14);
}
