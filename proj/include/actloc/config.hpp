#pragma once

// Flat key=value configuration with `include` support, plus builders that
// turn a config into the typed parameter structs. Unknown keys are kept (a
// run manifest doubles as a config), `#` starts a comment, later assignments
// win, and includes resolve relative to the including file.

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "actloc/common.hpp"
#include "actloc/features.hpp"
#include "actloc/flow.hpp"
#include "actloc/pipeline.hpp"
#include "actloc/proposals.hpp"
#include "actloc/stmh.hpp"
#include "actloc/svm.hpp"
#include "actloc/tracker.hpp"

namespace actloc {

struct Config {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) {
    values[key] = value;
  }

  std::string get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end())
      throw DataError("config is missing required key '" + key + "'");
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& def) const {
    auto it = values.find(key);
    return it == values.end() ? def : it->second;
  }
  long get_int(const std::string& key, long def) const {
    auto it = values.find(key);
    return it == values.end() ? def
                              : parse_int(it->second, "config key " + key);
  }
  double get_double(const std::string& key, double def) const {
    auto it = values.find(key);
    return it == values.end() ? def
                              : parse_double(it->second, "config key " + key);
  }
  bool get_bool(const std::string& key, bool def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw DataError("config key " + key + ": expected true/false, got '" +
                    it->second + "'");
  }
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    std::vector<double> out;
    for (const std::string& tok : split_ws(comma_to_space(it->second)))
      out.push_back(parse_double(tok, "config key " + key));
    if (out.empty())
      throw DataError("config key " + key + ": empty list");
    return out;
  }
  std::vector<int> get_ints(const std::string& key,
                            const std::vector<int>& def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    std::vector<int> out;
    for (const std::string& tok : split_ws(comma_to_space(it->second)))
      out.push_back(int(parse_int(tok, "config key " + key)));
    if (out.empty())
      throw DataError("config key " + key + ": empty list");
    return out;
  }

  static std::string comma_to_space(std::string s) {
    for (char& c : s)
      if (c == ',') c = ' ';
    return s;
  }
};

namespace detail {

inline void parse_config_into(Config& cfg, const std::string& text,
                              const std::filesystem::path& origin,
                              std::set<std::string>* visited) {
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin.string() + ":" + std::to_string(lineno) +
                      ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      std::size_t x = s.find_first_not_of(" \t");
      if (x == std::string::npos) return std::string();
      std::size_t y = s.find_last_not_of(" \t");
      return s.substr(x, y - x + 1);
    };
    key = strip(key);
    val = strip(val);
    if (key.empty())
      throw DataError(origin.string() + ":" + std::to_string(lineno) +
                      ": empty config key");
    if (key == "include") {
      std::filesystem::path inc = origin.parent_path() / val;
      std::string canon = std::filesystem::weakly_canonical(inc).string();
      if (!visited->insert(canon).second)
        throw DataError(origin.string() + ":" + std::to_string(lineno) +
                        ": circular include of " + inc.string());
      parse_config_into(cfg, read_file(inc), inc, visited);
      continue;
    }
    cfg.values[key] = val;
  }
}

}  // namespace detail

inline Config parse_config_text(const std::string& text,
                                const std::filesystem::path& origin) {
  Config cfg;
  std::set<std::string> visited{
      std::filesystem::weakly_canonical(origin).string()};
  detail::parse_config_into(cfg, text, origin, &visited);
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path);
}

// Sorted key=value dump; the run-manifest format, itself a loadable config.
inline std::string encode_config(const Config& c) {
  std::string out;
  for (const auto& [k, v] : c.values) out += k + "=" + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Typed parameter builders. Every key has the module default.

inline FlowParams flow_from_config(const Config& c) {
  FlowParams p;
  p.alpha = c.get_double("flow.alpha", p.alpha);
  p.iterations = int(c.get_int("flow.iterations", p.iterations));
  p.levels = int(c.get_int("flow.levels", p.levels));
  p.scale = c.get_double("flow.scale", p.scale);
  p.validate();
  return p;
}

inline ScorerConfig scorer_from_config(const Config& c) {
  ScorerConfig p;
  std::string kind = c.get_or("scorer.kind", "builtin");
  if (kind == "builtin") p.kind = ScorerKind::BuiltinHistogram;
  else if (kind == "precomputed") p.kind = ScorerKind::Precomputed;
  else throw DataError("config key scorer.kind: unknown scorer '" + kind + "'");
  p.grid = int(c.get_int("scorer.grid", p.grid));
  p.bins = int(c.get_int("scorer.bins", p.bins));
  p.use_motion = c.get_bool("scorer.use_motion", p.use_motion);
  p.patch = int(c.get_int("scorer.patch", p.patch));
  p.validate();
  return p;
}

inline GridParams grid_from_config(const Config& c) {
  GridParams p;
  p.scales = c.get_doubles("grid.scales", p.scales);
  p.ratios = c.get_doubles("grid.ratios", p.ratios);
  p.stride_fraction = c.get_double("grid.stride_fraction", p.stride_fraction);
  p.cap = int(c.get_int("grid.cap", p.cap));
  p.validate();
  return p;
}

inline SvmParams svm_from_config(const Config& c, const std::string& prefix) {
  SvmParams p;
  p.C = c.get_double(prefix + ".C", p.C);
  p.epochs = int(c.get_int(prefix + ".epochs", p.epochs));
  p.lr_constant = c.get_double(prefix + ".lr_constant", p.lr_constant);
  p.seed = std::uint64_t(c.get_int(prefix + ".seed", long(p.seed)));
  p.h = c.get_double(prefix + ".h", p.h);
  p.mining_rounds = int(c.get_int(prefix + ".mining_rounds", p.mining_rounds));
  p.validate();
  return p;
}

inline StmhParams stmh_from_config(const Config& c) {
  StmhParams p;
  p.L = int(c.get_int("stmh.L", p.L));
  p.stride = int(c.get_int("stmh.stride", p.stride));
  p.nt = int(c.get_int("stmh.nt", p.nt));
  p.ns = int(c.get_int("stmh.ns", p.ns));
  p.hof_zero_threshold =
      c.get_double("stmh.hof_zero_threshold", p.hof_zero_threshold);
  p.validate();
  return p;
}

inline TrackerParams tracker_from_config(const Config& c) {
  TrackerParams p;
  p.nb.rho = c.get_double("tracker.rho", p.nb.rho);
  p.nb.steps = int(c.get_int("tracker.steps", p.nb.steps));
  p.nb.scales = c.get_doubles("tracker.scales", p.nb.scales);
  p.svm = svm_from_config(c, "tracker.svm");
  p.update_epochs = int(c.get_int("tracker.update_epochs", p.update_epochs));
  p.neg_iou = c.get_double("tracker.neg_iou", p.neg_iou);
  std::string mode = c.get_or("tracker.mode", "combined");
  if (mode == "combined") p.mode = TrackMode::Combined;
  else if (mode == "instance") p.mode = TrackMode::InstanceOnly;
  else if (mode == "class") p.mode = TrackMode::ClassOnly;
  else throw DataError("config key tracker.mode: unknown mode '" + mode + "'");
  p.backward_restart = c.get_bool("tracker.backward_restart", p.backward_restart);
  p.nb.validate();
  return p;
}

inline PipelineParams pipeline_from_config(const Config& c) {
  PipelineParams p;
  p.topk = int(c.get_int("pipeline.topk", p.topk));
  p.ntracks = int(c.get_int("pipeline.ntracks", p.ntracks));
  p.theta = c.get_double("pipeline.theta", p.theta);
  p.window_lengths = c.get_ints("pipeline.window_lengths", p.window_lengths);
  p.window_stride = int(c.get_int("pipeline.window_stride", p.window_stride));
  p.prior_epsilon = c.get_double("pipeline.prior_epsilon", p.prior_epsilon);
  p.cnn_average = c.get_bool("pipeline.cnn_average", p.cnn_average);
  p.link_lambda = c.get_double("pipeline.link_lambda", p.link_lambda);
  p.tracker = tracker_from_config(c);
  p.stmh = stmh_from_config(c);
  p.validate();
  return p;
}

}  // namespace actloc
