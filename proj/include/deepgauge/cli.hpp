#pragma once

// Subcommand drivers. Each takes a schema-checked JSON configuration and
// writes CSV tables with JSON sidecars.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "deepgauge/bootstrap.hpp"
#include "deepgauge/copulas.hpp"
#include "deepgauge/deepgauge.hpp"
#include "deepgauge/diagnostics.hpp"
#include "deepgauge/inference.hpp"
#include "deepgauge/io.hpp"
#include "deepgauge/margins.hpp"
#include "deepgauge/study.hpp"

namespace deepgauge::cli {

using json = io::json;

/// Per-row status codes of cmd_infer.
enum class RowStatus : int { ok = 0, domain = 1, below_quantile = 2, numeric = 3 };

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + std::string(key) + "'");
  return j.at(key);
}

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline std::string prefixed(const std::string& prefix, const std::string& name) { return prefix + name; }

inline std::vector<std::string> numbered(const std::string& stem, Eigen::Index d) {
  std::vector<std::string> v;
  for (Eigen::Index i = 1; i <= d; ++i) v.push_back(stem + std::to_string(i));
  return v;
}

inline std::string join_arch(const std::vector<Eigen::Index>& arch) {
  std::string s;
  for (std::size_t k = 0; k < arch.size(); ++k) s += (k ? "x" : "") + std::to_string(arch[k]);
  return s;
}

inline void emit_warnings(std::ostream& log, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) log << "warning: " << w << '\n';
}

/// Runs fn(0..count-1) on up to `threads` workers; the first exception is rethrown.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Failures that a replicate may hit without invalidating the run.
template <class Fn>
bool run_guarded(Fn&& fn, std::string& message) {
  try {
    fn();
    return true;
  } catch (const ConfigError& e) {
    message = e.what();
  } catch (const DomainError& e) {
    message = e.what();
  } catch (const NumericError& e) {
    message = e.what();
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Data loading

struct LoadedData {
  DataMatrix data;
  std::vector<std::string> columns;
  json sidecar;  ///< null when the CSV has no sidecar
};

/// Reads a CSV and its sidecar. The margin comes from `margin` when set,
/// else from the sidecar, else "raw". Non-Laplace data is rejected unless
/// `rank_transform` is set.
inline LoadedData load_data(const std::string& path, bool rank_transform, const std::string& margin = "") {
  LoadedData out;
  auto table = io::read_csv(path);
  out.columns = std::move(table.columns);
  out.data.values = std::move(table.values);
  if (std::filesystem::exists(detail::sidecar_path(path))) out.sidecar = io::read_json(detail::sidecar_path(path));
  std::string tag = "raw";
  if (!margin.empty()) {
    tag = margin;
  } else if (out.sidecar.is_object() && out.sidecar.contains("margin")) {
    tag = io::get_as<std::string>(out.sidecar, "margin", detail::sidecar_path(path));
  }
  out.data.margin = margin_from_string(tag);
  if (!out.data.values.allFinite()) throw ConfigError(path + ": non-finite value");
  if (rank_transform) {
    out.data = margins::rank_transform_to_laplace(out.data);
  } else if (out.data.margin != MarginTag::laplace) {
    throw ConfigError(path + ": data margins are '" + tag + "'; transform to Laplace margins or set rank_transform");
  }
  return out;
}

inline json data_sidecar(const std::string& command, const std::vector<std::string>& columns, Eigen::Index rows) {
  return {{"format", "deepgauge-data"}, {"command", command}, {"margin", "laplace"}, {"rows", rows}, {"columns", columns}};
}

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const json& cfg, std::ostream& log) {
  const std::string ctx = "simulate";
  io::check_keys(cfg, {"copula", "n", "seed", "out"}, ctx);
  const CopulaSpec spec = io::copula_from_json(detail::require(cfg, "copula", ctx));
  const auto n = io::get_as<Eigen::Index>(cfg, "n", ctx);
  if (n < 1) throw ConfigError(ctx + ": n must be positive");
  std::uint64_t seed = 0;
  io::read_opt(cfg, "seed", seed, ctx);
  const auto out = io::get_as<std::string>(cfg, "out", ctx);

  const DataMatrix data = copulas::sample(spec, n, seed);
  const auto columns = io::default_column_names(spec.d);
  io::write_csv(out, columns, data.values);
  json side = data_sidecar("simulate", columns, n);
  side["copula"] = io::copula_to_json(spec);
  side["seed"] = seed;
  io::write_json(detail::sidecar_path(out), side);
  log << "simulate: wrote " << n << " rows to " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// transform

inline int cmd_transform(const json& cfg, std::ostream& log) {
  const std::string ctx = "transform";
  io::check_keys(cfg, {"data", "out"}, ctx);
  const auto in = io::get_as<std::string>(cfg, "data", ctx);
  const auto out = io::get_as<std::string>(cfg, "out", ctx);
  const LoadedData loaded = load_data(in, true, "raw");
  io::write_csv(out, loaded.columns, loaded.data.values);
  json side = data_sidecar("transform", loaded.columns, loaded.data.rows());
  side["source"] = in;
  side["source_sidecar"] = loaded.sidecar;
  io::write_json(detail::sidecar_path(out), side);
  log << "transform: wrote " << loaded.data.rows() << " rows to " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// fit

namespace detail {

inline void append_log(std::vector<std::vector<std::string>>& rows, const std::string& stage, const nn::TrainResult& r) {
  for (const auto& e : r.log) {
    rows.push_back({stage, std::to_string(e.epoch), io::format_double(e.train_loss), io::format_double(e.validation_loss)});
  }
}

inline Eigen::Index count_exceedances(const PolarSample& polar, const nn::MlpParams& qnet) {
  const Eigen::VectorXd thr = nn::forward_chunked(qnet, polar.angles).array().exp();
  return (polar.radii.array() > thr.array()).count();
}

inline FitConfig fit_config(const json& cfg, const std::string& ctx) {
  FitConfig fc;
  if (cfg.contains("fit")) io::fit_config_from_json(cfg.at("fit"), fc, ctx + ".fit");
  fc.validate();
  return fc;
}

}  // namespace detail

inline int cmd_fit(const json& cfg, std::ostream& log) {
  const std::string ctx = "fit";
  io::check_keys(cfg, {"data", "out", "stage", "threshold_model", "rank_transform", "margin", "fit"}, ctx);
  const auto in = io::get_as<std::string>(cfg, "data", ctx);
  const auto out = io::get_as<std::string>(cfg, "out", ctx);
  std::string stage = "all";
  io::read_opt(cfg, "stage", stage, ctx);
  if (stage != "all" && stage != "threshold" && stage != "gauge") {
    throw ConfigError(ctx + ": stage must be one of all, threshold, gauge");
  }
  std::string threshold_path;
  io::read_opt(cfg, "threshold_model", threshold_path, ctx);
  if (stage == "gauge" && threshold_path.empty()) {
    throw ConfigError(ctx + ": the gauge stage needs a fitted threshold model (threshold_model)");
  }
  bool rank = false;
  io::read_opt(cfg, "rank_transform", rank, ctx);
  std::string margin;
  io::read_opt(cfg, "margin", margin, ctx);
  FitConfig fc = detail::fit_config(cfg, ctx);

  const LoadedData loaded = load_data(in, rank, margin);
  const PolarSample polar = geometry::decompose(loaded.data);
  std::vector<std::vector<std::string>> log_rows;
  json side{{"format", "deepgauge-fit"},
            {"stage", stage},
            {"data", in},
            {"data_sidecar", loaded.sidecar},
            {"rank_transform", rank},
            {"rows", loaded.data.rows()}};
  std::vector<std::string> warnings;

  if (stage == "threshold") {
    const ThresholdFit thr = fit_threshold_stage(polar, fc, &warnings);
    io::write_json(out, io::threshold_to_json(thr));
    detail::append_log(log_rows, "threshold", thr.training);
    side["exceedances"] = detail::count_exceedances(polar, thr.net);
    side["exceedance_fraction"] = thr.exceedance_fraction;
    side["training"] = {{"threshold", io::training_log_to_json(thr.training)}};
  } else {
    FitResult res;
    json training;
    if (stage == "gauge") {
      const ThresholdFit thr = io::threshold_from_json(io::read_json(threshold_path));
      if (thr.net.input_dim != loaded.data.dim()) throw ConfigError(ctx + ": threshold model dimension mismatch");
      if (thr.tau != fc.tau) warnings.push_back("fit: tau taken from the threshold model");
      fc.tau = thr.tau;
      res = fit_gauge(polar, thr, fc, fit_split(polar.size(), fc));
      side["threshold_model"] = threshold_path;
    } else {
      res = fit(polar, fc);
      detail::append_log(log_rows, "threshold", res.threshold.training);
      training["threshold"] = io::training_log_to_json(res.threshold.training);
    }
    detail::append_log(log_rows, "pretrain", res.pretraining);
    detail::append_log(log_rows, "gauge", res.gauge_training);
    training["pretrain"] = io::training_log_to_json(res.pretraining);
    training["gauge"] = io::training_log_to_json(res.gauge_training);
    if (!std::isfinite(res.model.alpha)) throw NumericError(ctx + ": non-finite shape estimate");
    io::write_json(out, io::model_to_json(res.model));
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    side["exceedances"] = res.exceedances_train + res.exceedances_validation;
    side["exceedances_train"] = res.exceedances_train;
    side["exceedances_validation"] = res.exceedances_validation;
    side["exceedance_fraction"] = res.threshold.exceedance_fraction;
    side["alpha"] = res.model.alpha;
    side["training"] = training;
  }
  side["config"] = io::fit_config_to_json(fc);
  side["warnings"] = warnings;
  io::write_text(out + ".log.csv", io::to_csv_rows({"stage", "epoch", "train_loss", "validation_loss"}, log_rows));
  io::write_json(detail::sidecar_path(out), side);
  detail::emit_warnings(log, warnings);
  log << "fit: " << side["exceedances"].get<Eigen::Index>() << " exceedances of " << loaded.data.rows()
      << " rows; wrote " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// infer

inline int cmd_infer(const json& cfg, std::ostream& log) {
  const std::string ctx = "infer";
  io::check_keys(cfg, {"model", "queries", "data", "mode", "q", "p", "out", "rank_transform", "margin"}, ctx);
  const auto model_path = io::get_as<std::string>(cfg, "model", ctx);
  const auto query_path = io::get_as<std::string>(cfg, "queries", ctx);
  const auto out = io::get_as<std::string>(cfg, "out", ctx);
  const auto mode = io::get_as<std::string>(cfg, "mode", ctx);
  if (mode != "adf" && mode != "probability" && mode != "return_level") {
    throw ConfigError(ctx + ": mode must be one of adf, probability, return_level");
  }
  double q = 0.9995;
  io::read_opt(cfg, "q", q, ctx);
  if (!(q > 0.0 && q < 1.0)) throw ConfigError(ctx + ": q must lie in (0, 1)");
  const GaugeModel model = io::model_from_json(io::read_json(model_path));
  const Eigen::Index d = model.dim();
  double p = std::numeric_limits<double>::quiet_NaN();
  if (mode == "return_level") {
    p = io::get_as<double>(cfg, "p", ctx);
    if (!(p > model.tau && p < 1.0)) throw ConfigError(ctx + ": p must lie in (tau, 1)");
  }
  std::string data_path;
  io::read_opt(cfg, "data", data_path, ctx);
  if (mode == "probability" && data_path.empty()) throw ConfigError(ctx + ": probability mode needs data");
  bool rank = false;
  io::read_opt(cfg, "rank_transform", rank, ctx);
  std::string margin;
  io::read_opt(cfg, "margin", margin, ctx);

  const io::Table queries = io::read_csv(query_path);
  if (queries.values.cols() != d) throw ConfigError(ctx + ": query dimension does not match the model");
  LoadedData data;
  if (mode == "probability") {
    data = load_data(data_path, rank, margin);
    if (data.data.dim() != d) throw ConfigError(ctx + ": data dimension does not match the model");
  }
  inference::BoundarySet boundary;
  if (mode != "return_level") boundary = inference::BoundarySet::from_model(model);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> columns{"query"};
  for (const auto& c : detail::numbered("x", d)) columns.push_back(c);
  for (const auto& c : detail::numbered("w", d)) columns.push_back(c);
  if (mode == "adf") {
    columns.insert(columns.end(), {"lambda_hat", "r_tilde", "status"});
  } else if (mode == "probability") {
    columns.insert(columns.end(), {"r", "u", "lambda_hat", "probability", "status"});
  } else {
    columns.insert(columns.end(), {"p", "threshold", "gauge", "radius", "status"});
  }
  const Eigen::Index extra = static_cast<Eigen::Index>(columns.size()) - 1 - 2 * d;
  Eigen::MatrixXd table = Eigen::MatrixXd::Constant(queries.values.rows(), static_cast<Eigen::Index>(columns.size()), nan);
  Eigen::Index failures = 0;

  for (Eigen::Index k = 0; k < queries.values.rows(); ++k) {
    const Eigen::VectorXd x = queries.values.row(k).transpose();
    table(k, 0) = static_cast<double>(k);
    table.row(k).segment(1, d) = x.transpose();
    const double r = x.norm();
    Eigen::VectorXd vals = Eigen::VectorXd::Constant(extra, nan);
    RowStatus status = RowStatus::ok;
    try {
      if (!(r > 0.0)) throw DomainError("query at the origin");
      const Eigen::VectorXd w = x / r;
      table.row(k).segment(1 + d, d) = w.transpose();
      if (mode == "adf") {
        const auto e = inference::estimate_adf(model, boundary, w);
        vals(0) = e.lambda_hat;
        vals(1) = e.r_tilde;
      } else if (mode == "probability") {
        vals(0) = r;
        vals(1) = quantile_type7(inference::min_projection(data.data.values, w), q);
        vals(2) = inference::estimate_adf(model, boundary, w).lambda_hat;
        if (r < vals(1)) {
          status = RowStatus::below_quantile;
        } else {
          vals(3) = inference::tail_probability_formula(vals(2), r, vals(1), q);
        }
      } else {
        const auto e = model.evaluate(w);
        vals(0) = p;
        vals(1) = e.threshold;
        vals(2) = e.gauge;
        vals(3) = inference::return_level_radius(model.alpha, model.tau, e.gauge, e.threshold, p);
      }
    } catch (const DomainError&) {
      status = RowStatus::domain;
    } catch (const NumericError&) {
      status = RowStatus::numeric;
    }
    if (status != RowStatus::ok) ++failures;
    vals(extra - 1) = static_cast<double>(static_cast<int>(status));
    table.row(k).tail(extra) = vals.transpose();
  }
  io::write_csv(out, columns, table);
  json side{{"format", "deepgauge-infer"},
            {"mode", mode},
            {"model", model_path},
            {"queries", query_path},
            {"rows", queries.values.rows()},
            {"row_errors", failures},
            {"status_codes", {{"0", "ok"}, {"1", "zero component or origin"}, {"2", "r below the empirical q-quantile"}, {"3", "numeric failure"}}}};
  if (mode == "probability") {
    side["q"] = q;
    side["data"] = data_path;
  }
  if (mode == "adf") side["reference"] = {{"size", model.reference_size}, {"seed", model.reference_seed}};
  if (mode == "return_level") side["p"] = p;
  io::write_json(detail::sidecar_path(out), side);
  log << "infer: " << queries.values.rows() << " rows (" << failures << " with errors) to " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose

namespace detail {

inline void append_qq(Eigen::MatrixXd& m, const diagnostics::QqSeries& s, double tag) {
  const auto n = static_cast<Eigen::Index>(s.observed.size());
  const Eigen::Index off = m.rows();
  m.conservativeResize(off + n, 5);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    m.row(off + k) << tag, s.theoretical[kk], s.observed[kk], s.lower.empty() ? nan : s.lower[kk],
        s.upper.empty() ? nan : s.upper[kk];
  }
}

/// Boundary of the fitted unit-level set on the (i, j) coordinate plane.
inline Eigen::MatrixXd boundary_slice(const GaugeModel& model, Eigen::Index i, Eigen::Index j, Eigen::Index points) {
  Eigen::MatrixXd angles = Eigen::MatrixXd::Zero(points, model.dim());
  for (Eigen::Index k = 0; k < points; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points);
    angles(k, i) = std::cos(t);
    angles(k, j) = std::sin(t);
  }
  const Eigen::VectorXd g = model.gauge_batch(angles);
  Eigen::MatrixXd out(points, 2);
  out.col(0) = angles.col(i).cwiseQuotient(g);
  out.col(1) = angles.col(j).cwiseQuotient(g);
  return out;
}

}  // namespace detail

inline int cmd_diagnose(const json& cfg, std::ostream& log) {
  const std::string ctx = "diagnose";
  io::check_keys(cfg, {"model", "data", "out_prefix", "p_grid", "envelope_simulations", "seed", "adf_angles", "q",
                       "slice_epsilon", "validity_angles", "rank_transform", "margin"},
                 ctx);
  const auto model_path = io::get_as<std::string>(cfg, "model", ctx);
  const auto data_path = io::get_as<std::string>(cfg, "data", ctx);
  const auto prefix = io::get_as<std::string>(cfg, "out_prefix", ctx);
  const GaugeModel model = io::model_from_json(io::read_json(model_path));
  std::vector<double> p_grid;
  for (double p : {0.9, 0.95, 0.99, 0.999}) {
    if (p > model.tau) p_grid.push_back(p);
  }
  io::read_opt(cfg, "p_grid", p_grid, ctx);
  int sims = 200;
  io::read_opt(cfg, "envelope_simulations", sims, ctx);
  if (sims < 0) throw ConfigError(ctx + ": envelope_simulations must be non-negative");
  std::uint64_t seed = 0;
  io::read_opt(cfg, "seed", seed, ctx);
  double q = 0.95;
  io::read_opt(cfg, "q", q, ctx);
  if (!(q > 0.0 && q < 1.0)) throw ConfigError(ctx + ": q must lie in (0, 1)");
  Eigen::MatrixXd adf_angles(0, model.dim());
  if (cfg.contains("adf_angles")) adf_angles = io::matrix_from_json(cfg.at("adf_angles"), ctx + ".adf_angles");
  if (adf_angles.rows() > 0 && adf_angles.cols() != model.dim()) throw ConfigError(ctx + ": adf_angles dimension mismatch");
  double eps = 0.0;
  io::read_opt(cfg, "slice_epsilon", eps, ctx);
  Eigen::Index validity_angles = 100000;
  io::read_opt(cfg, "validity_angles", validity_angles, ctx);
  if (validity_angles < 1) throw ConfigError(ctx + ": validity_angles must be positive");
  bool rank = false;
  io::read_opt(cfg, "rank_transform", rank, ctx);
  std::string margin;
  io::read_opt(cfg, "margin", margin, ctx);

  const LoadedData loaded = load_data(data_path, rank, margin);
  if (loaded.data.dim() != model.dim()) throw ConfigError(ctx + ": data dimension does not match the model");
  const PolarSample polar = geometry::decompose(loaded.data);
  std::vector<std::string> warnings;
  json summary{{"format", "deepgauge-diagnostics"}, {"model", model_path}, {"data", data_path}, {"seed", seed}};

  // Truncated-gamma QQ.
  const auto qq = diagnostics::truncgamma_qq(polar, model, sims, derive_seed(seed, 0));
  Eigen::MatrixXd qq_table(0, 5);
  detail::append_qq(qq_table, qq, 0.0);
  io::write_csv(detail::prefixed(prefix, "qq.csv"), {"series", "theoretical", "observed", "lower", "upper"}, qq_table);
  const double ks = diagnostics::ks_statistic_exponential(qq.observed);
  summary["truncgamma"] = {{"exceedances", qq.observed.size()},
                           {"ks_statistic", ks},
                           {"ks_critical_5", diagnostics::ks_critical_5(qq.observed.size())},
                           {"ks_critical_1", diagnostics::ks_critical_1(qq.observed.size())},
                           {"ks_pass_5", ks < diagnostics::ks_critical_5(qq.observed.size())}};

  // Return-level coverage with 95% binomial bands.
  const auto cov = diagnostics::return_level_coverage(loaded.data.values, model, p_grid);
  const auto n = static_cast<double>(loaded.data.rows());
  Eigen::MatrixXd cov_table(static_cast<Eigen::Index>(cov.size()), 6);
  json cov_json = json::array();
  for (std::size_t k = 0; k < cov.size(); ++k) {
    const auto& c = cov[k];
    const double half = 1.96 * std::sqrt(c.p * (1.0 - c.p) / n);
    cov_table.row(static_cast<Eigen::Index>(k)) << c.p, c.p_hat, c.x, c.y, c.p - half, c.p + half;
    cov_json.push_back({{"p", c.p}, {"p_hat", c.p_hat}, {"inside_band", std::abs(c.p_hat - c.p) <= half}});
  }
  io::write_csv(detail::prefixed(prefix, "coverage.csv"), {"p", "p_hat", "x", "y", "band_lower", "band_upper"}, cov_table);
  summary["coverage"] = cov_json;

  // ADF diagnostics.
  if (adf_angles.rows() > 0) {
    const auto boundary = inference::BoundarySet::from_model(model);
    Eigen::MatrixXd adf_table(0, 5);
    json adf_json = json::array();
    for (Eigen::Index k = 0; k < adf_angles.rows(); ++k) {
      const Eigen::VectorXd w = adf_angles.row(k).transpose();
      const auto est = inference::estimate_adf(model, boundary, w);
      const auto s = diagnostics::adf_diagnostic(loaded.data.values, est.w, est.lambda_hat, q, sims,
                                                 derive_seed(seed, static_cast<std::uint64_t>(k) + 1));
      warnings.insert(warnings.end(), s.warnings.begin(), s.warnings.end());
      detail::append_qq(adf_table, s, static_cast<double>(k));
      adf_json.push_back({{"angle", io::vector_to_json(est.w)}, {"lambda_hat", est.lambda_hat}, {"exceedances", s.observed.size()}});
    }
    io::write_csv(detail::prefixed(prefix, "adf.csv"), {"angle", "theoretical", "observed", "lower", "upper"}, adf_table);
    summary["adf"] = adf_json;
  }

  // Bivariate slices: fitted boundary and the nearby sample points.
  if (eps > 0.0) {
    for (Eigen::Index i = 0; i < model.dim(); ++i) {
      for (Eigen::Index j = i + 1; j < model.dim(); ++j) {
        const std::string tag = std::to_string(i + 1) + "_" + std::to_string(j + 1);
        const auto pts = diagnostics::slice_validation_points(loaded.data.values, i, j, eps);
        warnings.insert(warnings.end(), pts.warnings.begin(), pts.warnings.end());
        const std::vector<std::string> cols{"x" + std::to_string(i + 1), "x" + std::to_string(j + 1)};
        io::write_csv(detail::prefixed(prefix, "slice_points_" + tag + ".csv"), cols, pts.points);
        io::write_csv(detail::prefixed(prefix, "slice_boundary_" + tag + ".csv"), cols, detail::boundary_slice(model, i, j, 720));
      }
    }
  }

  const auto vr = diagnostics::validity_report(
      model, geometry::sample_sphere(validity_angles, model.dim(), derive_seed(seed, 1u << 20)).angles);
  summary["validity"] = {{"angles", validity_angles}, {"min_margin", vr.min_margin}, {"touch_error", vr.touch_error}};
  summary["warnings"] = warnings;
  io::write_json(detail::prefixed(prefix, "summary.json"), summary);
  detail::emit_warnings(log, warnings);
  log << "diagnose: KS " << ks << " on " << qq.observed.size() << " exceedances; wrote " << prefix << "*\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bootstrap

inline int cmd_bootstrap(const json& cfg, std::ostream& log) {
  const std::string ctx = "bootstrap";
  io::check_keys(cfg, {"data", "block_length", "replicates", "seed", "out_prefix", "fit", "rank_transform", "margin", "threads"},
                 ctx);
  const auto data_path = io::get_as<std::string>(cfg, "data", ctx);
  const auto prefix = io::get_as<std::string>(cfg, "out_prefix", ctx);
  const auto block = io::get_as<Eigen::Index>(cfg, "block_length", ctx);
  const auto reps = io::get_as<int>(cfg, "replicates", ctx);
  if (reps < 1) throw ConfigError(ctx + ": replicates must be positive");
  std::uint64_t seed = 0;
  io::read_opt(cfg, "seed", seed, ctx);
  int threads = 1;
  io::read_opt(cfg, "threads", threads, ctx);
  bool rank = false;
  io::read_opt(cfg, "rank_transform", rank, ctx);
  std::string margin;
  io::read_opt(cfg, "margin", margin, ctx);
  const FitConfig base = detail::fit_config(cfg, ctx);

  const LoadedData loaded = load_data(data_path, rank, margin);
  if (block < 1 || block > loaded.data.rows()) throw ConfigError(ctx + ": block_length must lie in [1, n]");

  std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(reps));
  json failures = json::array();
  std::mutex mu;
  detail::parallel_for(rows.size(), threads, [&](std::size_t b) {
    const auto bb = static_cast<std::uint64_t>(b);
    const std::string model_path = detail::prefixed(prefix, "model_" + std::to_string(b) + ".json");
    FitConfig fc = base;
    fc.seed = derive_seed(base.seed, 1000 + bb);
    FitResult res;
    std::string message;
    const bool ok = detail::run_guarded(
        [&] {
          const DataMatrix resampled = bootstrap::block_resample(loaded.data, {block, derive_seed(seed, bb)});
          res = fit(geometry::decompose(resampled), fc);
          io::write_json(model_path, io::model_to_json(res.model));
        },
        message);
    std::lock_guard lock(mu);
    if (ok) {
      rows[b] = {std::to_string(b), "ok", model_path, io::format_double(res.model.alpha),
                 std::to_string(res.exceedances_train + res.exceedances_validation)};
    } else {
      rows[b] = {std::to_string(b), "failed", "", "nan", "0"};
      failures.push_back({{"replicate", b}, {"message", message}});
    }
    log << "bootstrap: replicate " << b << (ok ? " done" : " failed") << '\n';
  });
  std::sort(failures.begin(), failures.end(),
            [](const json& a, const json& b) { return a["replicate"].get<int>() < b["replicate"].get<int>(); });
  io::write_text(detail::prefixed(prefix, "replicates.csv"),
                 io::to_csv_rows({"replicate", "status", "model", "alpha", "exceedances"}, rows));
  io::write_json(detail::prefixed(prefix, "summary.json"),
                 {{"format", "deepgauge-bootstrap"},
                  {"data", data_path},
                  {"block_length", block},
                  {"replicates", reps},
                  {"seed", seed},
                  {"fit", io::fit_config_to_json(base)},
                  {"failures", failures}});
  return 0;
}

// ---------------------------------------------------------------------------
// study

struct StudyCell {
  std::string label;
  CopulaSpec spec;
  Eigen::Index n = 0;
  FitConfig fit;
  int replicates = 1;
};

inline StudyCell study_cell_from_json(const json& j, const FitConfig& base, std::size_t index) {
  const std::string ctx = "study.cells[" + std::to_string(index) + "]";
  io::check_keys(j, {"label", "copula", "n", "tau", "threshold_arch", "gauge_arch", "replicates"}, ctx);
  StudyCell c;
  c.spec = io::copula_from_json(detail::require(j, "copula", ctx));
  c.n = io::get_as<Eigen::Index>(j, "n", ctx);
  if (c.n < 1) throw ConfigError(ctx + ": n must be positive");
  c.fit = base;
  io::read_opt(j, "tau", c.fit.tau, ctx);
  io::read_opt(j, "threshold_arch", c.fit.threshold_arch, ctx);
  io::read_opt(j, "gauge_arch", c.fit.gauge_arch, ctx);
  io::read_opt(j, "replicates", c.replicates, ctx);
  if (c.replicates < 1) throw ConfigError(ctx + ": replicates must be positive");
  c.label = std::string(to_string(c.spec.kind)) + "_d" + std::to_string(c.spec.d) + "_n" + std::to_string(c.n);
  io::read_opt(j, "label", c.label, ctx);
  if (c.label.find_first_of(",\n") != std::string::npos) throw ConfigError(ctx + ": label must not contain commas");
  c.fit.validate();
  return c;
}

inline int cmd_study(const json& cfg, std::ostream& log) {
  const std::string ctx = "study";
  io::check_keys(cfg, {"cells", "fit", "seed", "q", "out", "replicate_out", "threads"}, ctx);
  const FitConfig base = detail::fit_config(cfg, ctx);
  const json& cells_json = detail::require(cfg, "cells", ctx);
  if (!cells_json.is_array() || cells_json.empty()) throw ConfigError(ctx + ": cells must be a non-empty array");
  std::vector<StudyCell> cells;
  for (std::size_t k = 0; k < cells_json.size(); ++k) cells.push_back(study_cell_from_json(cells_json[k], base, k));
  std::uint64_t seed = 0;
  io::read_opt(cfg, "seed", seed, ctx);
  double q = 0.9995;
  io::read_opt(cfg, "q", q, ctx);
  if (!(q > 0.0 && q < 1.0)) throw ConfigError(ctx + ": q must lie in (0, 1)");
  const auto out = io::get_as<std::string>(cfg, "out", ctx);
  std::string rep_out = out + ".replicates.csv";
  io::read_opt(cfg, "replicate_out", rep_out, ctx);
  int threads = 1;
  io::read_opt(cfg, "threads", threads, ctx);

  struct Task {
    std::size_t cell;
    int replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int r = 0; r < cells[c].replicates; ++r) tasks.push_back({c, r});
  }
  struct Outcome {
    bool ok = false;
    std::string message;
    study::ReplicateResult result;
  };
  std::vector<Outcome> outcomes(tasks.size());
  std::mutex mu;
  detail::parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& cell = cells[tasks[t].cell];
    const std::uint64_t key = (static_cast<std::uint64_t>(tasks[t].cell) << 32) | static_cast<std::uint64_t>(tasks[t].replicate);
    FitConfig fc = cell.fit;
    fc.seed = derive_seed(seed, 2 * key + 1);
    Outcome& o = outcomes[t];
    o.ok = detail::run_guarded([&] { o.result = study::run_replicate(cell.spec, cell.n, fc, derive_seed(seed, 2 * key), q); },
                               o.message);
    std::lock_guard lock(mu);
    log << "study: " << cell.label << " replicate " << tasks[t].replicate;
    if (o.ok) {
      log << " ISE " << o.result.ise << " MALE " << o.result.male << '\n';
    } else {
      log << " failed: " << o.message << '\n';
    }
  });

  const auto targets = study::standard_targets(1);
  std::vector<std::string> rep_cols{"cell", "replicate", "status", "ise", "male", "alpha"};
  for (const auto& t : targets) {
    rep_cols.push_back(t.label + "_truth");
    rep_cols.push_back(t.label + "_estimate");
  }
  std::vector<std::vector<std::string>> rep_rows;
  std::vector<std::vector<std::string>> cell_rows;
  json failures = json::array();
  std::size_t t = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> ise;
    std::vector<double> male;
    int failed = 0;
    for (int r = 0; r < cells[c].replicates; ++r, ++t) {
      const Outcome& o = outcomes[t];
      std::vector<std::string> row{cells[c].label, std::to_string(r), o.ok ? "ok" : "failed"};
      if (o.ok) {
        ise.push_back(o.result.ise);
        male.push_back(o.result.male);
        row.insert(row.end(), {io::format_double(o.result.ise), io::format_double(o.result.male),
                               io::format_double(o.result.fit.model.alpha)});
        for (const auto& e : o.result.targets) {
          row.push_back(io::format_double(e.truth));
          row.push_back(io::format_double(e.estimate));
        }
      } else {
        ++failed;
        failures.push_back({{"cell", cells[c].label}, {"replicate", r}, {"message", o.message}});
        row.resize(rep_cols.size(), "nan");
      }
      rep_rows.push_back(row);
    }
    const auto si = study::summarize(ise);
    const auto sm = study::summarize(male);
    cell_rows.push_back({cells[c].label, std::string(to_string(cells[c].spec.kind)), std::to_string(cells[c].spec.d),
                         std::to_string(cells[c].n), io::format_double(cells[c].fit.tau), detail::join_arch(cells[c].fit.gauge_arch),
                         std::to_string(cells[c].replicates), std::to_string(failed), io::format_double(si.median),
                         io::format_double(si.lo), io::format_double(si.hi), io::format_double(sm.median),
                         io::format_double(sm.lo), io::format_double(sm.hi)});
  }
  io::write_text(out, io::to_csv_rows({"cell", "copula", "d", "n", "tau", "gauge_arch", "replicates", "failures", "ise_median",
                                       "ise_q025", "ise_q975", "male_median", "male_q025", "male_q975"},
                                      cell_rows));
  io::write_text(rep_out, io::to_csv_rows(rep_cols, rep_rows));
  json cells_echo = json::array();
  for (const auto& c : cells) {
    cells_echo.push_back({{"label", c.label}, {"copula", io::copula_to_json(c.spec)}, {"n", c.n}, {"replicates", c.replicates},
                          {"fit", io::fit_config_to_json(c.fit)}});
  }
  io::write_json(detail::sidecar_path(out),
                 {{"format", "deepgauge-study"}, {"seed", seed}, {"q", q}, {"cells", cells_echo}, {"failures", failures},
                  {"replicate_table", rep_out}});
  log << "study: " << cells.size() << " cells, " << failures.size() << " failed replicates; wrote " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Dispatch

inline int run(const std::string& command, const json& cfg, std::ostream& log) {
  if (command == "simulate") return cmd_simulate(cfg, log);
  if (command == "transform") return cmd_transform(cfg, log);
  if (command == "fit") return cmd_fit(cfg, log);
  if (command == "infer") return cmd_infer(cfg, log);
  if (command == "diagnose") return cmd_diagnose(cfg, log);
  if (command == "bootstrap") return cmd_bootstrap(cfg, log);
  if (command == "study") return cmd_study(cfg, log);
  throw ConfigError("unknown subcommand '" + command + "'");
}

/// Exit code for an exception escaping a subcommand.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const json::exception*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace deepgauge::cli
