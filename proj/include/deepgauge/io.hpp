#pragma once

// CSV and JSON serialisation of data, configurations and fitted models.

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deepgauge/copulas.hpp"
#include "deepgauge/deepgauge.hpp"
#include "deepgauge/errors.hpp"
#include "deepgauge/neuralnet.hpp"

namespace deepgauge::io {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& ctx) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(ctx + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

inline std::string to_csv(const std::vector<std::string>& columns, const Eigen::Ref<const Eigen::MatrixXd>& values) {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols()) throw ConfigError("csv: header/column mismatch");
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const Eigen::Ref<const Eigen::MatrixXd>& values) {
  write_text(path, to_csv(columns, values));
}

/// CSV from preformatted cells; fields must not contain commas or newlines.
inline std::string to_csv_rows(const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw ConfigError("csv: header/column mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].find_first_of(",\n") != std::string::npos) throw ConfigError("csv: field contains a separator");
      out += (c ? "," : "") + row[c];
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    f.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return f;
}

inline Table parse_csv(const std::string& text, const std::string& ctx) {
  Table t;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (t.columns.empty()) {
      for (auto f : fields) t.columns.emplace_back(f);
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw ConfigError(ctx + ": line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(t.columns.size()));
    }
    std::vector<double> v;
    v.reserve(fields.size());
    for (auto f : fields) v.push_back(parse_double(f, ctx + ":" + std::to_string(lineno)));
    rows.push_back(std::move(v));
  }
  if (t.columns.empty()) throw ConfigError(ctx + ": missing header row");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return t;
}

inline Table read_csv(const std::string& path) { return parse_csv(read_text(path), path); }

/// CSV kept as text cells.
struct TextTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline TextTable parse_csv_rows(const std::string& text, const std::string& ctx) {
  TextTable t;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    for (auto f : split_fields(line)) cells.emplace_back(f);
    if (header) {
      t.columns = std::move(cells);
      header = false;
    } else {
      if (cells.size() != t.columns.size()) throw ConfigError(ctx + ": ragged row");
      t.rows.push_back(std::move(cells));
    }
  }
  if (header) throw ConfigError(ctx + ": empty CSV");
  return t;
}

inline TextTable read_csv_rows(const std::string& path) { return parse_csv_rows(read_text(path), path); }

inline std::vector<std::string> default_column_names(Eigen::Index d) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

// ---------------------------------------------------------------------------
// JSON helpers

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError(ctx + ": unknown key '" + k + "'");
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + std::string(key) + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + ": key '" + std::string(key) + "' has the wrong type");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& ctx) {
  if (j.contains(key)) out = get_as<T>(j, key, ctx);
}

inline json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError(ctx + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(ctx + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_to_json(m.row(r).transpose()));
  return a;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a non-empty array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j[r], ctx);
    if (row.size() != cols) throw ConfigError(ctx + ": ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Networks and models

inline json mlp_to_json(const nn::MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"out", l.weights.rows()}, {"in", l.weights.cols()}, {"weights", w}, {"bias", vector_to_json(l.bias)}});
  }
  return {{"input_dim", p.input_dim}, {"layers", layers}};
}

inline nn::MlpParams mlp_from_json(const json& j, const std::string& ctx) {
  check_keys(j, {"input_dim", "layers"}, ctx);
  nn::MlpParams p;
  p.input_dim = get_as<Eigen::Index>(j, "input_dim", ctx);
  const json& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) throw ConfigError(ctx + ": layers must be a non-empty array");
  Eigen::Index prev = p.input_dim;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string lctx = ctx + ".layers[" + std::to_string(k) + "]";
    const json& l = layers[k];
    check_keys(l, {"out", "in", "weights", "bias"}, lctx);
    const auto out = get_as<Eigen::Index>(l, "out", lctx);
    const auto in = get_as<Eigen::Index>(l, "in", lctx);
    if (in != prev || out < 1) throw ConfigError(lctx + ": inconsistent layer shape");
    const Eigen::VectorXd w = vector_from_json(l.at("weights"), lctx + ".weights");
    if (w.size() != out * in) throw ConfigError(lctx + ": weight count does not match shape");
    nn::Layer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w(r * in + c);
    }
    layer.bias = vector_from_json(l.at("bias"), lctx + ".bias");
    if (layer.bias.size() != out) throw ConfigError(lctx + ": bias length does not match shape");
    p.layers.push_back(std::move(layer));
    prev = out;
  }
  if (prev != 1) throw ConfigError(ctx + ": output layer must have one unit");
  if (!p.all_finite()) throw ConfigError(ctx + ": non-finite parameters");
  return p;
}

inline json model_to_json(const GaugeModel& m) {
  return {{"format", "deepgauge-model"},
          {"version", kModelFormatVersion},
          {"dim", m.dim()},
          {"tau", m.tau},
          {"alpha", m.alpha},
          {"reference", {{"size", m.reference_size}, {"seed", m.reference_seed}}},
          {"scaling", {{"upper", vector_to_json(m.scaling.upper)}, {"lower", vector_to_json(m.scaling.lower)}}},
          {"quantile_net", mlp_to_json(m.quantile_net)},
          {"gauge_net", mlp_to_json(m.gauge_net)}};
}

inline GaugeModel model_from_json(const json& j) {
  const std::string ctx = "model";
  check_keys(j, {"format", "version", "dim", "tau", "alpha", "reference", "scaling", "quantile_net", "gauge_net"}, ctx);
  if (get_as<std::string>(j, "format", ctx) != "deepgauge-model") throw ConfigError("model: unrecognised format");
  if (get_as<int>(j, "version", ctx) != kModelFormatVersion) throw ConfigError("model: unsupported version");
  GaugeModel m;
  const auto d = get_as<Eigen::Index>(j, "dim", ctx);
  m.tau = get_as<double>(j, "tau", ctx);
  m.alpha = get_as<double>(j, "alpha", ctx);
  const json& ref = j.at("reference");
  check_keys(ref, {"size", "seed"}, ctx + ".reference");
  m.reference_size = get_as<Eigen::Index>(ref, "size", ctx + ".reference");
  m.reference_seed = get_as<std::uint64_t>(ref, "seed", ctx + ".reference");
  const json& sc = j.at("scaling");
  check_keys(sc, {"upper", "lower"}, ctx + ".scaling");
  m.scaling.upper = vector_from_json(sc.at("upper"), ctx + ".scaling.upper");
  m.scaling.lower = vector_from_json(sc.at("lower"), ctx + ".scaling.lower");
  m.quantile_net = mlp_from_json(j.at("quantile_net"), ctx + ".quantile_net");
  m.gauge_net = mlp_from_json(j.at("gauge_net"), ctx + ".gauge_net");
  if (!(m.tau > 0.0 && m.tau < 1.0)) throw ConfigError("model: tau must lie in (0, 1)");
  if (!(m.alpha > 0.0)) throw ConfigError("model: alpha must be positive");
  if (m.scaling.upper.size() != d || m.scaling.lower.size() != d || m.quantile_net.input_dim != d ||
      m.gauge_net.input_dim != d) {
    throw ConfigError("model: dimension mismatch between components");
  }
  if ((m.scaling.upper.array() <= 0.0).any() || (m.scaling.lower.array() >= 0.0).any()) {
    throw ConfigError("model: scaling factors must be b^U > 0 and b^L < 0");
  }
  return m;
}

/// Threshold-stage bundle: the quantile net with its τ and exceedance fraction.
inline json threshold_to_json(const ThresholdFit& t) {
  return {{"format", "deepgauge-threshold"},
          {"version", kModelFormatVersion},
          {"tau", t.tau},
          {"exceedance_fraction", t.exceedance_fraction},
          {"quantile_net", mlp_to_json(t.net)}};
}

inline ThresholdFit threshold_from_json(const json& j) {
  const std::string ctx = "threshold model";
  check_keys(j, {"format", "version", "tau", "exceedance_fraction", "quantile_net"}, ctx);
  if (get_as<std::string>(j, "format", ctx) != "deepgauge-threshold") throw ConfigError(ctx + ": unrecognised format");
  if (get_as<int>(j, "version", ctx) != kModelFormatVersion) throw ConfigError(ctx + ": unsupported version");
  ThresholdFit t;
  t.tau = get_as<double>(j, "tau", ctx);
  t.exceedance_fraction = get_as<double>(j, "exceedance_fraction", ctx);
  t.net = mlp_from_json(j.at("quantile_net"), ctx + ".quantile_net");
  return t;
}

// ---------------------------------------------------------------------------
// Configurations

inline json copula_to_json(const CopulaSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))}, {"d", s.d}};
  if (s.elliptical()) j["corr"] = matrix_to_json(s.corr);
  if (s.kind == CopulaKind::student_t) j["nu"] = s.nu;
  if (s.kind == CopulaKind::logistic) j["theta"] = s.theta;
  return j;
}

/// Accepts an explicit "corr" matrix, an exchangeable "rho", or
/// "nested_seed" (leading block of a seeded random correlation matrix).
inline CopulaSpec copula_from_json(const json& j) {
  const std::string ctx = "copula";
  check_keys(j, {"kind", "d", "corr", "rho", "nested_seed", "nested_dim", "nu", "theta"}, ctx);
  CopulaSpec s;
  s.kind = copula_from_string(get_as<std::string>(j, "kind", ctx));
  s.d = get_as<Eigen::Index>(j, "d", ctx);
  if (s.d < 1) throw ConfigError("copula: d must be positive");
  if (s.elliptical()) {
    const int sources = int(j.contains("corr")) + int(j.contains("rho")) + int(j.contains("nested_seed"));
    if (sources != 1) throw ConfigError("copula: give exactly one of corr, rho, nested_seed");
    if (j.contains("corr")) {
      s.corr = matrix_from_json(j.at("corr"), ctx + ".corr");
    } else if (j.contains("rho")) {
      s.corr = copulas::exchangeable_correlation(s.d, get_as<double>(j, "rho", ctx));
    } else {
      Eigen::Index dmax = s.d;
      read_opt(j, "nested_dim", dmax, ctx);
      if (dmax < s.d) throw ConfigError("copula: nested_dim must be at least d");
      s.corr = copulas::leading_block(copulas::nested_correlation(dmax, get_as<std::uint64_t>(j, "nested_seed", ctx)), s.d);
    }
  }
  read_opt(j, "nu", s.nu, ctx);
  read_opt(j, "theta", s.theta, ctx);
  s.validate();
  return s;
}

inline json train_to_json(const nn::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"l1", c.l1},
          {"l2", c.l2},
          {"penalize_biases", c.penalize_biases},
          {"validation_fraction", c.validation_fraction}};
}

inline void train_from_json(const json& j, nn::TrainConfig& c, const std::string& ctx) {
  check_keys(j, {"epochs", "batch_size", "patience", "learning_rate", "beta1", "beta2", "epsilon", "l1", "l2",
                 "penalize_biases", "validation_fraction"},
             ctx);
  read_opt(j, "epochs", c.epochs, ctx);
  read_opt(j, "batch_size", c.batch_size, ctx);
  read_opt(j, "patience", c.patience, ctx);
  read_opt(j, "learning_rate", c.learning_rate, ctx);
  read_opt(j, "beta1", c.beta1, ctx);
  read_opt(j, "beta2", c.beta2, ctx);
  read_opt(j, "epsilon", c.epsilon, ctx);
  read_opt(j, "l1", c.l1, ctx);
  read_opt(j, "l2", c.l2, ctx);
  read_opt(j, "penalize_biases", c.penalize_biases, ctx);
  read_opt(j, "validation_fraction", c.validation_fraction, ctx);
  c.validate();
}

inline json fit_config_to_json(const FitConfig& c) {
  return {{"tau", c.tau},
          {"threshold_arch", c.threshold_arch},
          {"gauge_arch", c.gauge_arch},
          {"threshold_train", train_to_json(c.threshold_train)},
          {"pretrain", train_to_json(c.pretrain)},
          {"gauge_train", train_to_json(c.gauge_train)},
          {"reference_size", c.reference_size},
          {"reference_seed", c.reference_seed},
          {"refresh_subsample", c.refresh_subsample},
          {"alpha_min", c.alpha_min},
          {"alpha_max_per_dim", c.alpha_max_per_dim},
          {"seed", c.seed}};
}

inline void fit_config_from_json(const json& j, FitConfig& c, const std::string& ctx = "fit") {
  check_keys(j, {"tau", "threshold_arch", "gauge_arch", "threshold_train", "pretrain", "gauge_train", "reference_size",
                 "reference_seed", "refresh_subsample", "alpha_min", "alpha_max_per_dim", "seed"},
             ctx);
  read_opt(j, "tau", c.tau, ctx);
  read_opt(j, "threshold_arch", c.threshold_arch, ctx);
  read_opt(j, "gauge_arch", c.gauge_arch, ctx);
  if (j.contains("threshold_train")) train_from_json(j.at("threshold_train"), c.threshold_train, ctx + ".threshold_train");
  if (j.contains("pretrain")) train_from_json(j.at("pretrain"), c.pretrain, ctx + ".pretrain");
  if (j.contains("gauge_train")) train_from_json(j.at("gauge_train"), c.gauge_train, ctx + ".gauge_train");
  read_opt(j, "reference_size", c.reference_size, ctx);
  read_opt(j, "reference_seed", c.reference_seed, ctx);
  read_opt(j, "refresh_subsample", c.refresh_subsample, ctx);
  read_opt(j, "alpha_min", c.alpha_min, ctx);
  read_opt(j, "alpha_max_per_dim", c.alpha_max_per_dim, ctx);
  read_opt(j, "seed", c.seed, ctx);
  c.validate();
}

inline json training_log_to_json(const nn::TrainResult& r) {
  return {{"best_epoch", r.best_epoch},
          {"best_validation_loss", r.best_validation_loss},
          {"stopped_early", r.stopped_early},
          {"epochs_run", r.log.size()}};
}

inline Eigen::MatrixXd training_log_matrix(const nn::TrainResult& r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.log.size()), 3);
  for (std::size_t k = 0; k < r.log.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    m(kk, 0) = r.log[k].epoch;
    m(kk, 1) = r.log[k].train_loss;
    m(kk, 2) = r.log[k].validation_loss;
  }
  return m;
}

}  // namespace deepgauge::io
