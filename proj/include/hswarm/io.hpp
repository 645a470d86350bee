#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hswarm/engine.hpp"
#include "hswarm/metrics.hpp"
#include "hswarm/scenario.hpp"

namespace hswarm {

// Scenario files ----------------------------------------------------------

namespace detail {

inline std::string where(const YAML::Node &node) {
  const YAML::Mark m = node.Mark();
  if (m.line < 0) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

inline void expect_map(const YAML::Node &node, const std::string &path) {
  if (!node.IsMap()) throw ConfigError("'" + path + "' must be a mapping" + where(node));
}

inline void check_keys(const YAML::Node &node, const std::string &path,
                       std::initializer_list<const char *> allowed) {
  expect_map(node, path);
  for (const auto &kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; }))
      throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'" +
                        where(kv.first));
  }
}

template <class T>
void read(const YAML::Node &parent, const char *key, T &out, const std::string &path) {
  const YAML::Node n = parent[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError("bad value for '" + (path.empty() ? std::string(key) : path + "." + key) +
                      "'" + where(n));
  }
}

inline Vec2 read_vec(const YAML::Node &n, const std::string &path) {
  if (!n.IsSequence() || n.size() != 2)
    throw ConfigError("'" + path + "' must be a pair [x, y]" + where(n));
  try {
    return {n[0].as<double>(), n[1].as<double>()};
  } catch (const YAML::Exception &) {
    throw ConfigError("bad value for '" + path + "'" + where(n));
  }
}

}  // namespace detail

/// Sets a dotted path ("movement.cruise_speed") to a YAML-parsed value,
/// creating intermediate mappings.
inline void apply_override(YAML::Node &root, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception &e) {
    throw ConfigError("override '" + assignment + "': " + e.msg);
  }
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) {
    if (p.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    parts.push_back(p);
  }
  // yaml-cpp nodes are handles, so walking with copies edits the tree.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = chain.back()[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      chain.back()[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError("override '" + assignment + "': '" + parts[i] + "' is not a mapping");
    chain.push_back(next);
  }
  chain.back()[parts.back()] = value;
}

inline ScenarioConfig parse_scenario(const YAML::Node &root) {
  using detail::read;
  ScenarioConfig c;
  detail::check_keys(root, "",
                     {"name", "n_workers", "n_guides", "shape", "shape_radius", "seed",
                      "max_ticks", "d_com", "guide_range", "v_max", "tick_seconds", "robot_radius",
                      "init_region", "guide_band", "loss_rate", "sensing_noise", "log_every",
                      "log_messages", "energy_trace", "potential", "worker", "worker_gains",
                      "worker_options", "shaping", "movement", "guide"});
  read(root, "name", c.name, "");
  read(root, "n_workers", c.n_workers, "");
  read(root, "n_guides", c.n_guides, "");
  read(root, "shape", c.shape, "");
  read(root, "shape_radius", c.shape_radius, "");
  read(root, "seed", c.seed, "");
  read(root, "max_ticks", c.max_ticks, "");
  read(root, "d_com", c.d_com, "");
  read(root, "guide_range", c.guide_range, "");
  read(root, "v_max", c.v_max, "");
  read(root, "tick_seconds", c.tick_seconds, "");
  read(root, "robot_radius", c.robot_radius, "");
  read(root, "loss_rate", c.loss_rate, "");
  read(root, "sensing_noise", c.sensing_noise, "");
  read(root, "log_every", c.log_every, "");
  read(root, "log_messages", c.log_messages, "");
  read(root, "energy_trace", c.energy_trace, "");

  if (const auto n = root["init_region"]) {
    detail::check_keys(n, "init_region", {"a", "b"});
    InitRegion r = c.resolved_init_region();
    read(n, "a", r.a, "init_region");
    read(n, "b", r.b, "init_region");
    c.init_region = r;
  }
  if (const auto n = root["guide_band"]) {
    detail::check_keys(n, "guide_band", {"inner", "outer"});
    GuideBand g;
    read(n, "inner", g.inner, "guide_band");
    read(n, "outer", g.outer, "guide_band");
    c.guide_band = g;
  }
  if (const auto n = root["potential"]) {
    detail::check_keys(n, "potential", {"k", "a0", "printed_sign"});
    read(n, "k", c.potential.k, "potential");
    read(n, "a0", c.potential.a0, "potential");
    read(n, "printed_sign", c.potential.printed_sign, "potential");
  }
  if (const auto n = root["worker"]) {
    detail::check_keys(n, "worker", {"rho", "fov", "rfov"});
    read(n, "rho", c.shaping.worker.rho, "worker");
    read(n, "fov", c.shaping.worker.fov, "worker");
    read(n, "rfov", c.shaping.worker.rfov, "worker");
  }
  if (const auto n = root["worker_gains"]) {
    detail::check_keys(n, "worker_gains", {"alpha", "beta"});
    read(n, "alpha", c.gains.alpha, "worker_gains");
    read(n, "beta", c.gains.beta, "worker_gains");
  }
  if (const auto n = root["worker_options"]) {
    detail::check_keys(n, "worker_options", {"shape_uses_lock", "repel_unlocked"});
    read(n, "shape_uses_lock", c.worker_options.shape_uses_lock, "worker_options");
    read(n, "repel_unlocked", c.worker_options.repel_unlocked, "worker_options");
  }
  if (const auto n = root["shaping"]) {
    detail::check_keys(n, "shaping",
                       {"d_sp", "d_ss", "v_s", "theta_tol", "dist_tol", "targets"});
    read(n, "d_sp", c.shaping.d_sp, "shaping");
    read(n, "d_ss", c.shaping.d_ss, "shaping");
    read(n, "v_s", c.shaping.v_s, "shaping");
    read(n, "theta_tol", c.shaping.theta_tol, "shaping");
    read(n, "dist_tol", c.shaping.dist_tol, "shaping");
    if (const auto t = n["targets"]) {
      if (!t.IsSequence()) throw ConfigError("'shaping.targets' must be a list" + detail::where(t));
      c.shaping.targets.clear();
      for (const auto &e : t) {
        detail::check_keys(e, "shaping.targets[]", {"bearing", "radius"});
        ShapingTarget st;
        read(e, "bearing", st.bearing, "shaping.targets[]");
        read(e, "radius", st.radius, "shaping.targets[]");
        c.shaping.targets.push_back(st);
      }
    }
  }
  // com_standoff follows d_sp unless set explicitly.
  c.movement.com_standoff = c.shaping.d_sp;
  if (const auto n = root["movement"]) {
    detail::check_keys(n, "movement",
                       {"waypoints", "waypoints_relative", "arrival_tol", "alpha_g", "beta_g",
                        "gamma_g", "com_standoff", "cruise_speed"});
    if (const auto wp = n["waypoints"]) {
      if (!wp.IsSequence())
        throw ConfigError("'movement.waypoints' must be a list" + detail::where(wp));
      c.movement.waypoints.clear();
      for (const auto &p : wp) c.movement.waypoints.push_back(detail::read_vec(p, "movement.waypoints[]"));
    }
    read(n, "waypoints_relative", c.waypoints_relative, "movement");
    read(n, "arrival_tol", c.movement.arrival_tol, "movement");
    read(n, "alpha_g", c.movement.alpha_g, "movement");
    read(n, "beta_g", c.movement.beta_g, "movement");
    read(n, "gamma_g", c.movement.gamma_g, "movement");
    read(n, "com_standoff", c.movement.com_standoff, "movement");
    read(n, "cruise_speed", c.movement.cruise_speed, "movement");
  }
  if (const auto n = root["guide"]) {
    detail::check_keys(n, "guide",
                       {"follow_distance", "edge_speed", "edge_min_speed", "edge_slow_zone",
                        "approach_speed", "separation_gain", "separation_min_speed", "clearance",
                        "yield_radius", "yield_patience", "pass_ticks", "quorum_rounds", "barrier_settle",
                        "barrier_timeout"});
    GuideParams &g = c.guide;
    read(n, "follow_distance", g.follow_distance, "guide");
    read(n, "edge_speed", g.edge_speed, "guide");
    read(n, "edge_min_speed", g.edge_min_speed, "guide");
    read(n, "edge_slow_zone", g.edge_slow_zone, "guide");
    read(n, "approach_speed", g.approach_speed, "guide");
    read(n, "separation_gain", g.separation_gain, "guide");
    read(n, "separation_min_speed", g.separation_min_speed, "guide");
    read(n, "clearance", g.clearance, "guide");
    read(n, "yield_radius", g.yield_radius, "guide");
    read(n, "yield_patience", g.yield_patience, "guide");
    read(n, "pass_ticks", g.pass_ticks, "guide");
    read(n, "quorum_rounds", g.quorum_rounds, "guide");
    read(n, "barrier_settle", g.barrier_settle, "guide");
    read(n, "barrier_timeout", g.barrier_timeout, "guide");
  }
  c.validate();
  return c;
}

inline YAML::Node load_scenario_node(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  try {
    return YAML::Load(in);
  } catch (const YAML::ParserException &e) {
    throw ConfigError(path + ": parse error at line " + std::to_string(e.mark.line + 1) +
                      ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

struct LoadedScenario {
  ScenarioConfig config;
  YAML::Node document;  // the file with overrides applied
};

inline LoadedScenario load_scenario_document(const std::string &path,
                                             const std::vector<std::string> &overrides = {}) {
  YAML::Node root = load_scenario_node(path);
  if (!root.IsMap()) throw ConfigError(path + ": top level must be a mapping");
  for (const auto &o : overrides) apply_override(root, o);
  try {
    return {parse_scenario(root), root};
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::string &path,
                                    const std::vector<std::string> &overrides = {}) {
  return load_scenario_document(path, overrides).config;
}

// Run outputs -------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream &out, const World &w) {
  out << "tick,robot_id,role,x,y,state\n";
  for (const auto &f : w.log.frames)
    for (std::size_t i = 0; i < f.positions.size(); ++i)
      out << f.tick << ',' << i << ',' << to_string(w.robots[i].id.role) << ','
          << fmt_double(f.positions[i].x) << ',' << fmt_double(f.positions[i].y) << ','
          << state_name(f.states[i]) << '\n';
}

/// One JSON object per line: a header record, then guide events, then (when
/// enabled) per-message records.
inline void write_event_log(std::ostream &out, const World &w, const std::string &invocation) {
  nlohmann::json head{{"kind", "run"},
                      {"scenario", w.config.name},
                      {"seed", w.config.seed},
                      {"invocation", invocation}};
  out << head.dump() << '\n';
  for (const auto &e : w.log.events) {
    nlohmann::json j{{"tick", e.tick}, {"guide", e.guide}, {"kind", e.kind}, {"detail", e.detail}};
    out << j.dump() << '\n';
  }
  for (const auto &m : w.log.messages) {
    nlohmann::json j{{"tick", m.tick}, {"kind", "message"}, {"from", m.from}, {"to", m.to},
                     {"dropped", m.dropped}};
    out << j.dump() << '\n';
  }
}

inline void write_report(std::ostream &out, const MetricsReport &m, const ScenarioConfig &cfg,
                         const std::string &invocation) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "scenario" << YAML::Value << cfg.name;
  e << YAML::Key << "seed" << YAML::Value << cfg.seed;
  e << YAML::Key << "invocation" << YAML::Value << invocation;
  e << YAML::Key << "completed" << YAML::Value << m.completed;
  e << YAML::Key << "aborted" << YAML::Value << m.aborted;
  if (!m.diagnostic.empty()) e << YAML::Key << "diagnostic" << YAML::Value << m.diagnostic;
  e << YAML::Key << "ticks" << YAML::Value << m.ticks;
  auto opt = [&](const char *key, const std::optional<double> &v) {
    e << YAML::Key << key << YAML::Value;
    if (v) e << fmt_double(*v); else e << YAML::Null;
  };
  opt("distortion_raw", m.distortion_raw);
  opt("distortion_normalized", m.distortion_normalized);
  e << YAML::Key << "state_durations" << YAML::Value << YAML::BeginMap;
  for (const auto &[k, v] : m.state_durations) e << YAML::Key << k << YAML::Value << v;
  e << YAML::EndMap;
  e << YAML::Key << "min_pairwise_distance" << YAML::Value
    << (std::isfinite(m.min_pairwise_distance) ? fmt_double(m.min_pairwise_distance) : ".inf");
  opt("max_rigid_edge_error", m.max_rigid_edge_error);
  e << YAML::Key << "collision_events" << YAML::Value << m.collision_events;
  e << YAML::Key << "shaping_tick" << YAML::Value;
  if (m.shaping_tick) e << *m.shaping_tick; else e << YAML::Null;
  e << YAML::Key << "final_tick" << YAML::Value;
  if (m.final_tick) e << *m.final_tick; else e << YAML::Null;
  if (m.final_com_error)
    e << YAML::Key << "final_com_error" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << fmt_double(m.final_com_error->x) << fmt_double(m.final_com_error->y) << YAML::EndSeq;
  e << YAML::Key << "messages_delivered" << YAML::Value << m.messages_delivered;
  e << YAML::Key << "messages_dropped" << YAML::Value << m.messages_dropped;
  if (!m.energy_trace.empty()) {
    e << YAML::Key << "energy_trace" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : m.energy_trace) e << fmt_double(v);
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;
  out << e.c_str() << '\n';
}

// Batch summaries ---------------------------------------------------------

inline const std::vector<std::string> &summary_phases() {
  static const std::vector<std::string> p{"task_allocation", "shaping_setup", "shaping",
                                          "movement"};
  return p;
}

struct SummaryRow {
  std::string scenario;
  std::string shape;
  int n_workers = 0;
  int n_guides = 0;
  std::uint64_t seed = 0;
  std::string status;  // completed / aborted / incomplete
  std::int64_t ticks = 0;
  std::map<std::string, std::optional<double>> durations;
  std::optional<double> distortion_raw;
  std::optional<double> distortion_normalized;
  double norm_divisor = 0.0;
  double min_pairwise_distance = 0.0;
  std::int64_t collision_events = 0;
  std::optional<double> max_rigid_edge_error;
};

inline SummaryRow summary_row(const ScenarioConfig &cfg, const MetricsReport &m) {
  SummaryRow r;
  r.scenario = cfg.name;
  r.shape = cfg.shape;
  r.n_workers = cfg.n_workers;
  r.n_guides = cfg.n_guides;
  r.seed = cfg.seed;
  r.status = m.aborted ? "aborted" : (m.completed ? "completed" : "incomplete");
  r.ticks = m.ticks;
  for (const auto &p : summary_phases()) {
    auto it = m.state_durations.find(p);
    r.durations[p] = it == m.state_durations.end() ? std::nullopt
                                                   : std::optional<double>(static_cast<double>(it->second));
  }
  r.distortion_raw = m.distortion_raw;
  r.min_pairwise_distance = m.min_pairwise_distance;
  r.collision_events = m.collision_events;
  r.max_rigid_edge_error = m.max_rigid_edge_error;
  return r;
}

/// Normalizes raw distortions across the whole batch; rows without a value
/// are skipped. Returns the divisor.
inline double normalize_batch(std::vector<SummaryRow> &rows) {
  std::vector<double> raw;
  for (const auto &r : rows)
    if (r.distortion_raw) raw.push_back(*r.distortion_raw);
  if (raw.empty()) return 0.0;
  const double divisor = *std::max_element(raw.begin(), raw.end());
  const std::vector<double> norm = normalize_distortions(raw);
  std::size_t k = 0;
  for (auto &r : rows) {
    r.norm_divisor = divisor;
    if (r.distortion_raw) r.distortion_normalized = norm[k++];
  }
  return divisor;
}

inline std::vector<std::string> summary_header() {
  std::vector<std::string> h{"scenario", "shape", "n_workers", "n_guides", "seed", "status",
                             "ticks"};
  for (const auto &p : summary_phases()) h.push_back(p);
  for (const char *c : {"distortion_raw", "distortion_normalized", "norm_divisor",
                        "min_pairwise_distance", "collision_events", "max_rigid_edge_error"})
    h.push_back(c);
  return h;
}

inline void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows) {
  const auto h = summary_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
  auto opt = [](const std::optional<double> &v) { return v ? fmt_double(*v) : std::string(); };
  for (const auto &r : rows) {
    out << r.scenario << ',' << r.shape << ',' << r.n_workers << ',' << r.n_guides << ','
        << r.seed << ',' << r.status << ',' << r.ticks;
    for (const auto &p : summary_phases()) out << ',' << opt(r.durations.at(p));
    out << ',' << opt(r.distortion_raw) << ',' << opt(r.distortion_normalized) << ','
        << fmt_double(r.norm_divisor) << ','
        << (std::isfinite(r.min_pairwise_distance) ? fmt_double(r.min_pairwise_distance) : "inf")
        << ',' << r.collision_events << ',' << opt(r.max_rigid_edge_error) << '\n';
  }
}

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parsed summary: one map of column -> cell per row, plus typed accessors.
struct SummaryTable {
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
};

inline SummaryTable read_summary_csv(std::istream &in) {
  SummaryTable t;
  std::string line;
  auto split = [](const std::string &s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  for (const char *required : {"shape", "n_workers"})
    if (std::find(t.header.begin(), t.header.end(), required) == t.header.end())
      throw ReportError(std::string("summary header lacks column '") + required + "'");
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ReportError("row " + std::to_string(row_no) + ": expected " +
                        std::to_string(t.header.size()) + " cells, found " +
                        std::to_string(cells.size()));
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) row[t.header[i]] = cells[i];
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ReportCell {
  double median = 0.0;
  double iqr = 0.0;
  std::size_t count = 0;
};

struct ReportRow {
  std::string shape;
  int n_workers = 0;
  std::map<std::string, ReportCell> metrics;
};

inline const std::vector<std::string> &report_metrics() {
  static const std::vector<std::string> m{"task_allocation", "shaping_setup", "shaping",
                                          "movement", "distortion_normalized"};
  return m;
}

/// Groups rows by (shape, n_workers) and summarises each metric. Also returns
/// the long-format records (shape, n_workers, seed, metric, value).
inline std::vector<ReportRow> build_report(const SummaryTable &t, std::ostream *long_csv = nullptr) {
  std::map<std::pair<std::string, int>, std::map<std::string, std::vector<double>>> groups;
  if (long_csv) *long_csv << "shape,n_workers,seed,metric,value\n";
  int row_no = 1;
  for (const auto &row : t.rows) {
    ++row_no;
    auto number = [&](const std::string &col) -> std::optional<double> {
      auto it = row.find(col);
      if (it == row.end() || it->second.empty()) return std::nullopt;
      try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception &) {
        throw ReportError("row " + std::to_string(row_no) + ": non-numeric value '" +
                          it->second + "' in column '" + col + "'");
      }
    };
    const auto n = number("n_workers");
    if (!n) throw ReportError("row " + std::to_string(row_no) + ": missing n_workers");
    const std::string shape = row.at("shape");
    auto &g = groups[{shape, static_cast<int>(*n)}];
    const std::string seed = row.count("seed") ? row.at("seed") : "";
    for (const auto &m : report_metrics()) {
      if (!row.count(m)) continue;
      if (auto v = number(m)) {
        g[m].push_back(*v);
        if (long_csv)
          *long_csv << shape << ',' << static_cast<int>(*n) << ',' << seed << ',' << m << ','
                    << fmt_double(*v) << '\n';
      }
    }
  }
  std::vector<ReportRow> out;
  for (const auto &[key, metrics] : groups) {
    ReportRow r{key.first, key.second, {}};
    for (const auto &[m, values] : metrics)
      r.metrics[m] = {quantile(values, 0.5), quantile(values, 0.75) - quantile(values, 0.25),
                      values.size()};
    out.push_back(std::move(r));
  }
  return out;
}

inline void print_report(std::ostream &out, const std::vector<ReportRow> &rows) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s %6s", "shape", "N");
  out << buf;
  for (const auto &m : report_metrics()) {
    std::snprintf(buf, sizeof buf, " %22s", (m + " med/iqr").c_str());
    out << buf;
  }
  out << '\n';
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %6d", r.shape.c_str(), r.n_workers);
    out << buf;
    for (const auto &m : report_metrics()) {
      auto it = r.metrics.find(m);
      if (it == r.metrics.end()) {
        std::snprintf(buf, sizeof buf, " %22s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " %11.4g/%-10.4g", it->second.median, it->second.iqr);
      }
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace hswarm
