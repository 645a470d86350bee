// Acceptance checks: one PASS/FAIL line per criterion. Exits 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hswarm/allocation.hpp"
#include "hswarm/comms.hpp"
#include "hswarm/engine.hpp"
#include "hswarm/io.hpp"
#include "hswarm/metrics.hpp"
#include "hswarm/potential.hpp"

using namespace hswarm;

namespace {

const std::string kScenarios = HSWARM_SCENARIO_DIR;
constexpr int kSeeds = 10;

std::map<int, std::pair<bool, std::string>> verdicts;

void verdict(int id, bool ok, const std::string &detail) {
  verdicts[id] = {ok, detail};
  std::printf("    criterion %d done\n", id);
  std::fflush(stdout);
}

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

ScenarioConfig scenario(const std::string &name, std::uint64_t seed,
                        std::vector<std::string> overrides = {}) {
  overrides.push_back("seed=" + std::to_string(seed));
  return load_scenario(kScenarios + "/" + name + ".yaml", overrides);
}

struct MissionRun {
  MetricsReport report;
  double start_to_waypoint = 0.0;  // |waypoint - start COM|
  double arrival_tol = 0.0;
  std::string trajectory;  // only when asked for
};

MissionRun mission(const std::string &name, std::uint64_t seed, bool keep_csv = false) {
  const auto cfg = scenario(name, seed);
  World w = init_world(cfg);
  run_world(w);
  MissionRun r;
  r.report = make_report(w);
  r.start_to_waypoint = norm(w.movement.waypoints.back() - w.start_com);
  r.arrival_tol = cfg.movement.arrival_tol;
  if (keep_csv) {
    std::ostringstream out;
    write_trajectory_csv(out, w);
    r.trajectory = out.str();
  }
  return r;
}

// 1 ---------------------------------------------------------------------
void potential_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const PotentialParams p{0.02, 0.0, false};
  double worst = 0.0;
  bool signs = true;
  for (int i = 0; i <= 10000; ++i) {
    const double d = -5.0 + 10.0 * i / 10000.0;
    const double closed = -0.02 * d * std::fabs(d) / 2.0;
    const double closed_plus = d < 0.0 ? closed : 0.0;
    worst = std::max({worst, std::fabs(phi(d, p) - closed), std::fabs(phi_plus(d, p) - closed_plus)});
    // class S: attracting beyond equilibrium, repelling inside it
    if (d > 0.0) signs &= phi(d, p) < 0.0 && phi_plus(d, p) == 0.0;
    if (d < 0.0) signs &= phi(d, p) > 0.0 && phi_plus(d, p) > 0.0;
    if (d == 0.0) signs &= phi(d, p) == 0.0 && phi_plus(d, p) == 0.0;
  }
  const double secs = seconds_since(t0);
  verdict(1, worst <= 1e-12 && signs && secs < 1.0,
          fmt("max |err| %.3g (tol 1e-12), sign pattern %s, %.3f s (limit 1 s)", worst,
              signs ? "ok" : "violated", secs));
}

// 2 ---------------------------------------------------------------------
void pair_equilibrium() {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig c;
  c.n_workers = 2;
  c.n_guides = 0;
  c.shape = "circle";
  bool ok = true;
  std::string detail;
  for (double d0 : {0.2, 0.5, 1.0}) {
    World w = init_world(c);
    w.robots[0].position = {0, 0};
    w.robots[1].position = {d0, 0};
    double min_sep = d0;
    for (int t = 0; t < 2000; ++t) {
      step(w);
      min_sep = std::min(min_sep, norm(w.robots[1].position - w.robots[0].position));
    }
    const double final = norm(w.robots[1].position - w.robots[0].position);
    // a pair starting inside d_rho never closes in; one starting outside never
    // undershoots the equilibrium band
    const bool good = std::fabs(final - 0.8) <= 1e-3 && min_sep >= std::min(d0, 0.8 - 1e-3);
    ok &= good;
    detail += fmt("%.1f->%.6f (min %.4f) ", d0, final, min_sep);
  }
  const double secs = seconds_since(t0);
  ok &= secs < 5.0;
  verdict(2, ok, detail + fmt("tol 1e-3, %.2f s (limit 5 s)", secs));
}

// 3, 4, 6, 10, 12 -----------------------------------------------------------
void missions() {
  std::vector<MissionRun> clover, dumbbell;
  std::string csv7_first;
  std::printf("    running clover-50 and dumbbell-50, seeds 0..%d\n", kSeeds - 1);
  std::fflush(stdout);
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < kSeeds; ++s) {
    clover.push_back(mission("clover-50", static_cast<std::uint64_t>(s), s == 7));
    if (s == 7) {
      csv7_first = std::move(clover.back().trajectory);
      clover.back().trajectory.clear();
    }
    const auto &r = clover.back().report;
    std::printf("    clover-50 seed %d: %s ticks %lld coll %lld rigid %.4f dist %.4f\n", s,
                r.completed ? "completed" : "incomplete", static_cast<long long>(r.ticks),
                static_cast<long long>(r.collision_events), r.max_rigid_edge_error.value_or(-1),
                r.distortion_raw.value_or(-1));
    std::fflush(stdout);
  }
  for (int s = 0; s < kSeeds; ++s) {
    dumbbell.push_back(mission("dumbbell-50", static_cast<std::uint64_t>(s)));
    const auto &r = dumbbell.back().report;
    std::printf("    dumbbell-50 seed %d: %s ticks %lld coll %lld rigid %.4f dist %.4f\n", s,
                r.completed ? "completed" : "incomplete", static_cast<long long>(r.ticks),
                static_cast<long long>(r.collision_events), r.max_rigid_edge_error.value_or(-1),
                r.distortion_raw.value_or(-1));
    std::fflush(stdout);
  }
  std::printf("    missions took %.0f s\n", seconds_since(t0));

  // 3: collision-freedom over every tick of every clover run
  std::int64_t events = 0;
  double min_d = std::numeric_limits<double>::infinity();
  for (const auto &r : clover) {
    events += r.report.collision_events;
    min_d = std::min(min_d, r.report.min_pairwise_distance);
  }
  verdict(3, events == 0,
          fmt("%d seeds, %lld collision ticks, min pairwise distance %.4f m (threshold 0.14 m)",
              kSeeds, static_cast<long long>(events), min_d));

  // 4: rigid edge error during Movement, plus the pure-translation fixture
  double worst_edge = 0.0;
  int with_movement = 0;
  for (const auto &r : clover)
    if (r.report.max_rigid_edge_error) {
      ++with_movement;
      worst_edge = std::max(worst_edge, *r.report.max_rigid_edge_error);
    }
  Snapshot s, f;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (std::uint32_t i = 0; i < 50; ++i) {
    s[i] = {u(gen), u(gen)};
    f[i] = s[i] + Vec2{10.0, -3.5};
  }
  const double fixture = distortion(s, f);
  verdict(4, with_movement == kSeeds && worst_edge <= 0.2 && std::fabs(fixture) <= 1e-9,
          fmt("max rigid edge error %.4f m over %d/%d runs reaching Movement (limit 0.2 m); "
              "translation fixture %.3g (tol 1e-9)",
              worst_edge, with_movement, kSeeds, fixture));

  // 6: ordering of median normalized distortion, one normalization for the batch
  std::vector<double> raw_c, raw_d;
  for (const auto &r : clover)
    if (r.report.distortion_raw) raw_c.push_back(*r.report.distortion_raw);
  for (const auto &r : dumbbell)
    if (r.report.distortion_raw) raw_d.push_back(*r.report.distortion_raw);
  std::vector<double> all = raw_c;
  all.insert(all.end(), raw_d.begin(), raw_d.end());
  if (raw_c.size() < kSeeds || raw_d.size() < kSeeds || all.empty()) {
    verdict(6, false, fmt("only %zu clover and %zu dumbbell runs finished (need %d each)",
                          raw_c.size(), raw_d.size(), kSeeds));
  } else {
    const auto norm_all = normalize_distortions(all);
    const std::vector<double> nc(norm_all.begin(), norm_all.begin() + static_cast<long>(raw_c.size()));
    const std::vector<double> nd(norm_all.begin() + static_cast<long>(raw_c.size()), norm_all.end());
    const double mc = median(nc), md = median(nd);
    verdict(6, mc < md,
            fmt("median normalized distortion clover %.3f vs dumbbell %.3f (divisor %.3f m)", mc,
                md, *std::max_element(all.begin(), all.end())));
  }

  // 10: second run of seed 7
  const std::string csv7_second = mission("clover-50", 7, true).trajectory;
  verdict(10, !csv7_first.empty() && csv7_first == csv7_second,
          fmt("seed 7 trajectory CSV %zu bytes, runs %s", csv7_first.size(),
              csv7_first == csv7_second ? "byte-identical" : "differ"));

  // 12: end-to-end mission on the scenario's own seed
  const auto &m = clover.front();
  bool all_states = true;
  for (const char *phase : {"task_allocation", "shaping_setup", "shaping", "movement"})
    all_states &= m.report.state_durations.count(phase) > 0;
  const double err = m.report.final_com_error ? norm(*m.report.final_com_error) : -1.0;
  verdict(12,
          m.report.completed && all_states && err >= 0.0 && err < m.arrival_tol &&
              std::fabs(m.start_to_waypoint - 10.0) < 1e-9,
          fmt("completed %s, all four states %s, COM %.3f m from waypoint (tol %.2f), waypoint "
              "%.3f m from start COM",
              m.report.completed ? "yes" : "no", all_states ? "yes" : "no", err, m.arrival_tol,
              m.start_to_waypoint));
}

// 5 ---------------------------------------------------------------------
void distortion_formula() {
  const auto t0 = std::chrono::steady_clock::now();
  const double two = distortion({{0, {0, 0}}, {1, {1, 0}}}, {{0, {0, 0}}, {1, {1.5, 0}}});
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-10, 10), ang(-std::numbers::pi, std::numbers::pi);
  Snapshot s, f;
  for (std::uint32_t i = 0; i < 30; ++i) {
    s[i] = {u(gen), u(gen)};
    f[i] = {u(gen), u(gen)};
  }
  const double base = distortion(s, f);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    auto move = [&](const Snapshot &in) {
      const double th = ang(gen);
      const Vec2 shift{u(gen), u(gen)};
      Snapshot out;
      for (const auto &[id, p] : in)
        out[id] = Vec2{std::cos(th) * p.x - std::sin(th) * p.y, std::sin(th) * p.x + std::cos(th) * p.y} + shift;
      return out;
    };
    worst = std::max(worst, std::fabs(distortion(move(s), move(f)) - base));
  }
  const double secs = seconds_since(t0);
  verdict(5, std::fabs(two - 0.5) < 1e-12 && worst <= 1e-9 && secs < 1.0,
          fmt("N=2 case %.12f (expect 0.5); max deviation over 100 rigid transforms %.3g (tol "
              "1e-9); %.3f s",
              two, worst, secs));
}

// 7 ---------------------------------------------------------------------
void allocation_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> cost(0.0, 10.0);
  int optimal = 0, valid = 0, within2 = 0, order_stable = 0;
  double worst_ratio = 1.0;
  constexpr int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + t % 7;
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    for (auto &row : m)
      for (auto &c : row) c = cost(gen);
    // each guide's row arrives as its own message
    std::vector<BidTable> inbox;
    for (int g = 0; g < n; ++g) inbox.push_back(BidTable{{static_cast<std::uint32_t>(g), m[g]}});
    const RoundResult ref = consensus_round({}, inbox, n);
    const Assignment &a = ref.state.assignment;
    valid += static_cast<int>(a.size()) == n && is_injective(a);
    const double got = assignment_cost(ref.state.bids, a);
    const double best = oracle_optimal_assignment(m).total;
    within2 += got <= 2.0 * best + 1e-9;
    optimal += got <= best + 1e-9;
    if (best > 0) worst_ratio = std::max(worst_ratio, got / best);
    // shuffled delivery orders give byte-identical digests and matchings
    bool same = true;
    const auto ref_bytes = serialize_digest(ref.digest);
    for (int k = 0; k < 5; ++k) {
      std::shuffle(inbox.begin(), inbox.end(), gen);
      const RoundResult r = consensus_round({}, inbox, n);
      same &= r.state.assignment == a && serialize_digest(r.digest) == ref_bytes;
    }
    order_stable += same;
  }
  const double secs = seconds_since(t0);
  verdict(7,
          valid == trials && within2 == trials && 2 * optimal > trials && order_stable == trials &&
              secs < 30.0,
          fmt("valid %d/%d, within 2x oracle %d/%d (worst ratio %.4f), optimal %d/%d (%.1f%%), "
              "order-independent %d/%d, %.1f s",
              valid, trials, within2, trials, worst_ratio, optimal, trials,
              100.0 * optimal / trials, order_stable, trials, secs));
}

// 8 ---------------------------------------------------------------------
void allocation_timing() {
  std::vector<std::pair<int, double>> medians;
  for (const char *name : {"clover-50", "clover-100", "clover-300"}) {
    std::vector<double> durations;
    int guides = 0;
    for (int s = 0; s < kSeeds; ++s) {
      const auto cfg = scenario(name, static_cast<std::uint64_t>(s), {"max_ticks=5000"});
      guides = cfg.n_guides;
      World w = init_world(cfg);
      auto allocating = [&] {
        return std::any_of(w.roster.begin(), w.roster.end(), [&](std::uint32_t g) {
          return w.robots[g].guide->fsm.phase == GuidePhase::TaskAllocation;
        });
      };
      while (w.tick < cfg.max_ticks && !w.aborted && allocating()) step(w);
      const auto d = state_durations(w.log.events);
      if (auto it = d.find("task_allocation"); it != d.end())
        durations.push_back(static_cast<double>(it->second));
    }
    medians.emplace_back(guides, durations.size() == kSeeds ? median(durations) : NAN);
  }
  bool ok = true;
  for (std::size_t i = 0; i < medians.size(); ++i) {
    ok &= std::isfinite(medians[i].second);
    if (i > 0) ok &= medians[i].second >= medians[i - 1].second;
  }
  std::string detail = "median task_allocation ticks:";
  for (const auto &[g, m] : medians) detail += fmt(" %d guides %.1f;", g, m);
  verdict(8, ok, detail + " non-decreasing required");
}

// 9 ---------------------------------------------------------------------
void stigmergy() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<int> nkeys(0, 5), key(0, 7), ver(1, 3), writer(0, 4);
  auto random_store = [&] {
    StigmergyStore s;
    const int n = nkeys(gen);
    for (int i = 0; i < n; ++i) {
      // a writer never reuses a version, so (key, version, writer) fixes the value
      const int k = key(gen), v = ver(gen), w = writer(gen);
      s.merge_entry("k" + std::to_string(k),
                    {k * 100.0 + v * 10.0 + w, v, static_cast<std::uint32_t>(w), v});
    }
    return s;
  };
  auto merged = [](StigmergyStore a, const StigmergyStore &b) {
    a.merge(b);
    return a;
  };
  int laws = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_store(), b = random_store(), c = random_store();
    laws += merged(a, merged(b, c)) == merged(merged(a, b), c) && merged(a, b) == merged(b, a) &&
            merged(a, a) == a;
  }

  // line of 20 robots, one put at an end, neighbours exchange once per round
  std::vector<StigmergyStore> line(20);
  line[0].put("w.rho", 0.8, 0);
  int rounds = 0;
  auto everyone = [&] {
    return std::all_of(line.begin(), line.end(), [](const auto &s) { return s.get("w.rho").has_value(); });
  };
  while (!everyone() && rounds < 100) {
    const auto before = line;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i > 0) line[i].merge(before[i - 1]);
      if (i + 1 < line.size()) line[i].merge(before[i + 1]);
    }
    ++rounds;
  }

  // barrier with one roster member that never posts, random gossip orders
  int premature = 0, released_full = 0;
  std::uniform_int_distribution<int> pick(0, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<std::uint32_t> roster{10, 11, 12, 13, 14, 15};
    const std::uint32_t missing = roster[static_cast<std::size_t>(pick(gen))];
    std::vector<StigmergyStore> stores(roster.size());
    for (std::size_t i = 0; i < roster.size(); ++i)
      if (roster[i] != missing) barrier_post(stores[i], "shaping", roster[i], trial);
    for (int k = 0; k < 60; ++k) {
      const auto a = static_cast<std::size_t>(pick(gen)), b = static_cast<std::size_t>(pick(gen));
      stores[a].merge(stores[b]);
      premature += barrier_check(stores[a], "shaping", roster);
    }
    // the late guide finally posts; gossip then releases everyone
    const auto mi = static_cast<std::size_t>(std::find(roster.begin(), roster.end(), missing) - roster.begin());
    barrier_post(stores[mi], "shaping", missing, trial);
    for (int sweep = 0; sweep < 3; ++sweep)
      for (std::size_t i = 0; i < stores.size(); ++i)
        for (std::size_t j = 0; j < stores.size(); ++j) stores[i].merge(stores[j]);
    released_full += std::all_of(stores.begin(), stores.end(),
                                 [&](const auto &s) { return barrier_check(s, "shaping", roster); });
  }
  const double secs = seconds_since(t0);
  verdict(9,
          laws == 10000 && everyone() && rounds <= 19 && premature == 0 && released_full == 1000 &&
              secs < 30.0,
          fmt("merge laws %d/10000; line of 20 converged in %d rounds (limit 19); premature "
              "releases %d/1000 orders; full roster released %d/1000; %.1f s",
              laws, rounds, premature, released_full, secs));
}

// 11 --------------------------------------------------------------------
void scale_smoke() {
  const auto cfg = scenario("clover-1000", 0, {"max_ticks=20000"});
  const auto t0 = std::chrono::steady_clock::now();
  World w = init_world(cfg);
  run_world(w);
  const double secs = seconds_since(t0);
  verdict(11, w.tick == 20000 && !w.aborted && w.log.collision_events == 0 && secs < 600.0,
          fmt("%zu robots, %lld ticks in %.0f s (limit 600 s), %lld collision ticks, min "
              "pairwise %.4f m",
              w.robots.size(), static_cast<long long>(w.tick), secs,
              static_cast<long long>(w.log.collision_events), w.log.min_pairwise_distance));
}

}  // namespace

int main() {
  potential_correctness();
  pair_equilibrium();
  distortion_formula();
  allocation_quality();
  stigmergy();
  allocation_timing();
  missions();
  scale_smoke();
  int failures = 0;
  for (const auto &[id, v] : verdicts) {
    std::printf("C%-2d %s  %s\n", id, v.first ? "PASS" : "FAIL", v.second.c_str());
    failures += !v.first;
  }
  std::printf("%s: %d of %zu criteria failed\n", failures ? "FAIL" : "PASS", failures, verdicts.size());
  return failures ? 1 : 0;
}
