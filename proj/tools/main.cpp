// deepgauge command-line interface.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "deepgauge/cli.hpp"

namespace {

using deepgauge::cli::json;

enum class Kind { text, value, list };

struct Flag {
  std::string name;
  std::vector<std::string> path;
  Kind kind;
  std::string help;
};

json parse_value(const std::string& flag, const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw deepgauge::ConfigError("--" + flag + ": cannot parse '" + text + "'");
  }
}

void assign(json& cfg, const std::vector<std::string>& path, json value) {
  json* node = &cfg;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    if (!node->contains(path[k])) (*node)[path[k]] = json::object();
    node = &(*node)[path[k]];
    if (!node->is_object()) throw deepgauge::ConfigError("override: '" + path[k] + "' is not an object");
  }
  (*node)[path.back()] = std::move(value);
}

std::vector<std::string> split_path(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t dot = s.find('.'); dot != std::string::npos; dot = s.find('.', start)) {
    out.push_back(s.substr(start, dot - start));
    start = dot + 1;
  }
  out.push_back(s.substr(start));
  return out;
}

const std::vector<Flag> kFitFlags{
    {"tau", {"fit", "tau"}, Kind::value, "threshold quantile level"},
    {"threshold-arch", {"fit", "threshold_arch"}, Kind::list, "threshold network widths"},
    {"gauge-arch", {"fit", "gauge_arch"}, Kind::list, "gauge network widths"},
    {"reference-size", {"fit", "reference_size"}, Kind::value, "size of the reference angle set"},
    {"reference-seed", {"fit", "reference_seed"}, Kind::value, "seed of the reference angle set"},
    {"fit-seed", {"fit", "seed"}, Kind::value, "seed of the fitting pipeline"},
    {"epochs", {"fit", "gauge_train", "epochs"}, Kind::value, "gauge-stage epochs"},
};

std::vector<Flag> flags_for(const std::string& cmd) {
  std::vector<Flag> f;
  const auto add = [&](std::string name, std::string key, Kind kind, std::string help) {
    f.push_back({std::move(name), {std::move(key)}, kind, std::move(help)});
  };
  const auto add_fit = [&] { f.insert(f.end(), kFitFlags.begin(), kFitFlags.end()); };
  const auto add_data = [&] {
    add("data", "data", Kind::text, "input CSV");
    add("rank-transform", "rank_transform", Kind::value, "rank-transform margins to Laplace (true/false)");
    add("margin", "margin", Kind::text, "margin tag of the input (overrides the sidecar)");
  };
  if (cmd == "simulate") {
    add("copula", "copula", Kind::value, "copula spec as JSON");
    add("n", "n", Kind::value, "sample size");
    add("seed", "seed", Kind::value, "random seed");
    add("out", "out", Kind::text, "output CSV");
  } else if (cmd == "transform") {
    add("data", "data", Kind::text, "input CSV");
    add("out", "out", Kind::text, "output CSV");
  } else if (cmd == "fit") {
    add_data();
    add("out", "out", Kind::text, "output model JSON");
    add("stage", "stage", Kind::text, "all, threshold or gauge");
    add("threshold-model", "threshold_model", Kind::text, "threshold model JSON for the gauge stage");
    add_fit();
  } else if (cmd == "infer") {
    add("model", "model", Kind::text, "model JSON");
    add("queries", "queries", Kind::text, "query CSV");
    add("mode", "mode", Kind::text, "adf, probability or return_level");
    add("q", "q", Kind::value, "quantile level of the min-projection threshold");
    add("p", "p", Kind::value, "return-level probability");
    add("out", "out", Kind::text, "output CSV");
    add_data();
  } else if (cmd == "diagnose") {
    add("model", "model", Kind::text, "model JSON");
    add_data();
    add("out-prefix", "out_prefix", Kind::text, "prefix of output files");
    add("p-grid", "p_grid", Kind::list, "return-level probabilities");
    add("envelope-simulations", "envelope_simulations", Kind::value, "simulations per QQ envelope");
    add("seed", "seed", Kind::value, "random seed");
    add("adf-angles", "adf_angles", Kind::value, "ADF diagnostic angles as a JSON matrix");
    add("q", "q", Kind::value, "quantile level of the min-projection threshold");
    add("slice-epsilon", "slice_epsilon", Kind::value, "slice filter width");
    add("validity-angles", "validity_angles", Kind::value, "angles for the domination check");
  } else if (cmd == "bootstrap") {
    add_data();
    add("block-length", "block_length", Kind::value, "block length in rows");
    add("replicates", "replicates", Kind::value, "number of replicates");
    add("seed", "seed", Kind::value, "resampling seed");
    add("out-prefix", "out_prefix", Kind::text, "prefix of output files");
    add("threads", "threads", Kind::value, "worker threads");
    add_fit();
  } else if (cmd == "study") {
    add("cells", "cells", Kind::value, "grid cells as a JSON array");
    add("seed", "seed", Kind::value, "study seed");
    add("q", "q", Kind::value, "quantile level of the min-projection threshold");
    add("out", "out", Kind::text, "per-cell summary CSV");
    add("replicate-out", "replicate_out", Kind::text, "per-replicate CSV");
    add("threads", "threads", Kind::value, "worker threads");
    add_fit();
  }
  return f;
}

struct Sub {
  CLI::App* app = nullptr;
  std::string config;
  std::vector<Flag> flags;
  std::vector<std::string> values;
  std::vector<std::string> sets;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural gauge functions for geometric multivariate extremes"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "sample a copula on Laplace margins"},
      {"transform", "rank-transform data to Laplace margins"},
      {"fit", "fit the threshold and gauge networks"},
      {"infer", "ADF values, joint tail probabilities or return-level radii"},
      {"diagnose", "QQ, coverage, slice and validity diagnostics"},
      {"bootstrap", "block-bootstrap refits"},
      {"study", "simulation study grid"},
  };
  std::vector<Sub> subs(commands.size());
  for (std::size_t s = 0; s < commands.size(); ++s) {
    Sub& sub = subs[s];
    sub.app = app.add_subcommand(commands[s].first, commands[s].second);
    sub.app->add_option("--config", sub.config, "JSON configuration file");
    sub.flags = flags_for(commands[s].first);
    sub.values.resize(sub.flags.size());
    for (std::size_t k = 0; k < sub.flags.size(); ++k) {
      sub.app->add_option("--" + sub.flags[k].name, sub.values[k], sub.flags[k].help);
    }
    sub.app->add_option("--set", sub.sets, "override any key: dotted.path=JSON value")->take_all();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto& sub : subs) {
    if (!sub.app->parsed()) continue;
    try {
      json cfg = sub.config.empty() ? json::object() : deepgauge::io::read_json(sub.config);
      if (!cfg.is_object()) throw deepgauge::ConfigError(sub.config + ": expected a JSON object");
      for (std::size_t k = 0; k < sub.flags.size(); ++k) {
        const Flag& f = sub.flags[k];
        if (sub.app->count("--" + f.name) == 0) continue;
        const std::string& v = sub.values[k];
        switch (f.kind) {
          case Kind::text: assign(cfg, f.path, v); break;
          case Kind::value: assign(cfg, f.path, parse_value(f.name, v)); break;
          case Kind::list: assign(cfg, f.path, parse_value(f.name, v.starts_with('[') ? v : "[" + v + "]")); break;
        }
      }
      for (const auto& s : sub.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw deepgauge::ConfigError("--set expects path=value, got '" + s + "'");
        const std::string v = s.substr(eq + 1);
        const json parsed = json::parse(v, nullptr, false);
        assign(cfg, split_path(s.substr(0, eq)), parsed.is_discarded() ? json(v) : parsed);
      }
      return deepgauge::cli::run(sub.app->get_name(), cfg, std::cout);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return deepgauge::cli::exit_code(e);
    }
  }
  return 2;
}
