#include "bench.hpp"

#include "safemm/errors.hpp"
#include "safemm/plots.hpp"
#include "safemm/sim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

constexpr int kTaskFailed = 2;
constexpr int kConfigError = 3;

int run_command(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& trace_path,
                std::optional<long> ticks, bool quiet) {
  safemm::Scenario scenario = safemm::load_scenario(scenario_path);
  safemm::RunOptions options;
  options.seed = seed;
  options.max_ticks = ticks;
  if (!quiet) options.logger = [](const std::string& msg) { std::cerr << msg << '\n'; };

  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw safemm::ConfigError("cannot write trace '" + trace_path + "'");
  }
  const safemm::RunResult result = safemm::run_scenario(std::move(scenario), options);
  if (trace.is_open()) {
    safemm::write_trace(trace, result.trace);
    trace.flush();
    if (!trace) throw safemm::ConfigError("failed writing trace '" + trace_path + "'");
  }
  if (!quiet) {
    for (const auto& t : result.tasks) {
      std::printf("task %-16s %-9s %-9s plans %d", t.name.c_str(), safemm::to_string(t.kind),
                  safemm::to_string(t.status), t.plans);
      if (!t.reason.empty()) std::printf("  (%s)", t.reason.c_str());
      std::printf("\n");
    }
    std::cout << safemm::format_metrics(result.metrics);
  }
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile manipulator safety simulator"};
  app.require_subcommand(1);

  std::string scenario_path, trace_path, trace_in, out_dir, suite;
  std::optional<std::uint64_t> seed;
  std::optional<long> ticks;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Simulate a scenario file");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--trace", trace_path, "Write the per-tick CSV trace here");
  run->add_option("--ticks", ticks, "Stop after this many ticks")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "Print nothing");

  auto* replay = app.add_subcommand("replay", "Derive metrics from a trace");
  replay->add_option("trace", trace_in, "Trace CSV")->required();

  auto* plot = app.add_subcommand("plot", "Export SVG plots of a trace");
  plot->add_option("trace", trace_in, "Trace CSV")->required();
  plot->add_option("--out", out_dir, "Output directory")->required();

  auto* bench = app.add_subcommand("bench", "Run a benchmark suite");
  bench->add_option("suite", suite, "One of: " + CLI::detail::join(safemm::bench::suites(), ", "))->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return run_command(scenario_path, seed, trace_path, ticks, quiet);
    if (*replay) {
      std::cout << safemm::format_metrics(safemm::compute_metrics(safemm::read_trace_file(trace_in)));
      return 0;
    }
    if (*plot) {
      for (const auto& path : safemm::export_plots(safemm::read_trace_file(trace_in), out_dir)) {
        std::cout << path << '\n';
      }
      return 0;
    }
    if (*bench) {
      if (!safemm::bench::run_suite(suite, std::cout)) {
        std::cerr << "unknown suite '" << suite << "'\n";
        return kConfigError;
      }
      return 0;
    }
  } catch (const safemm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const safemm::NotFoundError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTaskFailed;
  }
  return 0;
}
