// hswarm: run heterogeneous swarm scenarios, seeded batches and summaries.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hswarm/engine.hpp"
#include "hswarm/io.hpp"

namespace fs = std::filesystem;
using namespace hswarm;

namespace {

constexpr int kOk = 0;
constexpr int kAborted = 1;
constexpr int kUsage = 2;

std::string invocation_line(int argc, char **argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string &text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoull(text);
      return {v, v};
    }
    const auto a = std::stoull(text.substr(0, dots));
    const auto b = std::stoull(text.substr(dots + 2));
    if (b < a) throw std::invalid_argument("empty range");
    return {a, b};
  } catch (const std::exception &) {
    throw ConfigError("--seeds expects a..b, got '" + text + "'");
  }
}

void write_file(const fs::path &path, const std::function<void(std::ostream &)> &body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(out);
}

/// Runs one cell and writes its four output files into `dir`.
MetricsReport run_cell(const LoadedScenario &scenario, const fs::path &dir,
                       const std::string &invocation) {
  fs::create_directories(dir);
  World world = init_world(scenario.config);
  run_world(world, [](const World &w) {
    std::cout << w.config.name << " seed " << w.config.seed << " tick " << w.tick << std::endl;
  });
  const MetricsReport report = make_report(world);
  write_file(dir / "trajectory.csv", [&](std::ostream &o) { write_trajectory_csv(o, world); });
  write_file(dir / "events.jsonl", [&](std::ostream &o) { write_event_log(o, world, invocation); });
  write_file(dir / "report.yaml",
             [&](std::ostream &o) { write_report(o, report, scenario.config, invocation); });
  write_file(dir / "scenario.yaml", [&](std::ostream &o) { o << scenario.document << '\n'; });
  if (report.aborted) std::cerr << "run aborted: " << report.diagnostic << std::endl;
  return report;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Heterogeneous swarm shaping and transport simulator"};
  app.require_subcommand(1);
  const std::string invocation = invocation_line(argc, argv);

  auto *run = app.add_subcommand("run", "run one scenario");
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_ticks;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--seed", seed, "random seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--max-ticks", max_ticks, "tick limit");
  run->add_option("--set", overrides, "dotted-path override key=value (repeatable)");

  auto *batch = app.add_subcommand("batch", "run seeded batches and write a summary");
  std::vector<std::string> batch_scenarios;
  std::string seeds = "0..29";
  std::string batch_out = "batch";
  std::vector<std::string> batch_overrides;
  std::optional<std::int64_t> batch_max_ticks;
  batch->add_option("--scenario", batch_scenarios, "scenario file (repeatable)")->required();
  batch->add_option("--seeds", seeds, "inclusive seed range a..b");
  batch->add_option("--out", batch_out, "output directory");
  batch->add_option("--max-ticks", batch_max_ticks, "tick limit");
  batch->add_option("--set", batch_overrides, "dotted-path override key=value (repeatable)");

  auto *report = app.add_subcommand("report", "summarise a batch summary CSV");
  std::string summary_path;
  std::string long_path;
  report->add_option("--summary", summary_path, "summary.csv from a batch")->required();
  report->add_option("--out", long_path, "long-format CSV (default: next to the summary)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) {
      auto all = overrides;
      if (seed) all.push_back("seed=" + std::to_string(*seed));
      if (max_ticks) all.push_back("max_ticks=" + std::to_string(*max_ticks));
      const LoadedScenario scenario = load_scenario_document(scenario_path, all);
      const MetricsReport r = run_cell(scenario, out_dir, invocation);
      std::cout << scenario.config.name << ": "
                << (r.aborted ? "aborted" : r.completed ? "completed" : "stopped at max_ticks")
                << " after " << r.ticks << " ticks" << std::endl;
      return r.aborted ? kAborted : kOk;
    }

    if (batch->parsed()) {
      const auto [first, last] = parse_seed_range(seeds);
      std::vector<SummaryRow> rows;
      bool failed = false;
      for (const auto &path : batch_scenarios) {
        for (std::uint64_t s = first; s <= last; ++s) {
          auto all = batch_overrides;
          all.push_back("seed=" + std::to_string(s));
          if (batch_max_ticks) all.push_back("max_ticks=" + std::to_string(*batch_max_ticks));
          const LoadedScenario scenario = load_scenario_document(path, all);
          const fs::path dir =
              fs::path(batch_out) / scenario.config.name / ("seed_" + std::to_string(s));
          const MetricsReport r = run_cell(scenario, dir, invocation);
          failed |= r.aborted;
          rows.push_back(summary_row(scenario.config, r));
          std::cout << scenario.config.name << " seed " << s << ": "
                    << (r.aborted ? "aborted" : r.completed ? "completed" : "incomplete")
                    << std::endl;
        }
      }
      const double divisor = normalize_batch(rows);
      fs::create_directories(batch_out);
      write_file(fs::path(batch_out) / "summary.csv",
                 [&](std::ostream &o) { write_summary_csv(o, rows); });
      std::cout << "wrote " << rows.size() << " rows; distortion divisor "
                << fmt_double(divisor) << std::endl;
      return failed ? kAborted : kOk;
    }

    if (report->parsed()) {
      std::ifstream in(summary_path);
      if (!in) throw ConfigError("cannot open summary '" + summary_path + "'");
      const SummaryTable table = read_summary_csv(in);
      const fs::path long_out =
          long_path.empty() ? fs::path(summary_path).parent_path() / "summary_long.csv"
                            : fs::path(long_path);
      std::ostringstream long_csv;
      const auto rows = build_report(table, &long_csv);
      print_report(std::cout, rows);
      write_file(long_out, [&](std::ostream &o) { o << long_csv.str(); });
      return kOk;
    }
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const ReportError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kAborted;
  }
  return kUsage;
}
