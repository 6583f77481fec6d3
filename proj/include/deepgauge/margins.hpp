#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "deepgauge/errors.hpp"
#include "deepgauge/specialfns.hpp"

namespace deepgauge {

enum class MarginTag { raw, uniform, exponential, laplace };

inline std::string_view to_string(MarginTag tag) {
  switch (tag) {
    case MarginTag::raw: return "raw";
    case MarginTag::uniform: return "uniform";
    case MarginTag::exponential: return "exponential";
    case MarginTag::laplace: return "laplace";
  }
  return "raw";
}

inline MarginTag margin_from_string(std::string_view name) {
  if (name == "raw") return MarginTag::raw;
  if (name == "uniform") return MarginTag::uniform;
  if (name == "exponential") return MarginTag::exponential;
  if (name == "laplace") return MarginTag::laplace;
  throw ConfigError("unknown margin tag '" + std::string(name) + "'");
}

/// n×d observations, one row per observation, tagged with their margins.
struct DataMatrix {
  Eigen::MatrixXd values;
  MarginTag margin = MarginTag::raw;

  [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return values.cols(); }
};

namespace margins {

inline double laplace_cdf(double x) {
  return x < 0.0 ? 0.5 * std::exp(x) : 1.0 - 0.5 * std::exp(-x);
}

inline double laplace_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw DomainError("laplace_quantile: level must lie in (0, 1), got " + std::to_string(q));
  }
  return q < 0.5 ? std::log(2.0 * q) : -std::log(2.0 * (1.0 - q));
}

/// Standard Laplace value with lower-tail log probability `log_p`.
inline double laplace_from_log_cdf(double log_p) {
  if (log_p <= -specialfns::kLog2) return log_p + specialfns::kLog2;
  return -specialfns::kLog2 - specialfns::log1m_exp(log_p);
}

/// Standard Laplace value with upper-tail log probability `log_q`.
inline double laplace_from_log_sf(double log_q) {
  if (log_q <= -specialfns::kLog2) return -log_q - specialfns::kLog2;
  return specialfns::kLog2 + specialfns::log1m_exp(log_q);
}

inline double laplace_log_density(double x) { return -specialfns::kLog2 - std::abs(x); }

inline double laplace_log_cdf(double x) {
  return x < 0.0 ? x - specialfns::kLog2 : std::log1p(-0.5 * std::exp(-x));
}

inline double laplace_log_sf(double x) {
  return x >= 0.0 ? -x - specialfns::kLog2 : std::log1p(-0.5 * std::exp(x));
}

/// Maps a unit-exponential variate onto the standard Laplace scale by
/// matching distribution functions. Zero maps to -inf.
inline double exp_to_laplace(double x_e) {
  if (!(x_e >= 0.0)) throw DomainError("exp_to_laplace: argument must be non-negative");
  if (x_e == 0.0) return specialfns::kNegInf;
  if (x_e <= specialfns::kLog2) return std::log(-std::expm1(-x_e)) + specialfns::kLog2;
  return x_e - specialfns::kLog2;
}

/// Inverse of exp_to_laplace.
inline double laplace_to_exp(double x) {
  if (x <= 0.0) return -std::log1p(-0.5 * std::exp(x));
  return x + specialfns::kLog2;
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const Eigen::Ref<const Eigen::VectorXd>& column) {
  const auto n = static_cast<std::size_t>(column.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return column(a) < column(b); });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && column(order[j + 1]) == column(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Column-wise empirical transform to standard Laplace margins using the
/// plotting position k/(n+1).
inline DataMatrix rank_transform_to_laplace(const DataMatrix& data) {
  const Eigen::Index n = data.rows();
  if (n < 2) throw ConfigError("rank_transform: need at least two observations per column");
  DataMatrix out;
  out.values.resize(n, data.dim());
  out.margin = MarginTag::laplace;
  for (Eigen::Index c = 0; c < data.dim(); ++c) {
    const auto column = data.values.col(c);
    if (!column.allFinite()) throw ConfigError("rank_transform: non-finite value in column " + std::to_string(c));
    if (column.maxCoeff() == column.minCoeff()) {
      throw ConfigError("rank_transform: column " + std::to_string(c) + " is constant");
    }
    const auto ranks = average_ranks(column);
    for (Eigen::Index r = 0; r < n; ++r) {
      out.values(r, c) = laplace_quantile(ranks[static_cast<std::size_t>(r)] / static_cast<double>(n + 1));
    }
  }
  return out;
}

}  // namespace margins
}  // namespace deepgauge
