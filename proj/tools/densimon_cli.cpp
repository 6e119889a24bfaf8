// Command-line front end: run experiments, generate synthetic traces, and
// project result streams to CSV.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "densimon/config.hpp"
#include "densimon/runner.hpp"
#include "densimon/trace_io.hpp"
#include "densimon/traffic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitRuntime = 4;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw densimon::IoError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive traffic distribution monitor"};
  app.require_subcommand(1);

  std::string config_path, tracespec_path, trace_out, results_path, report_out;
  std::optional<std::uint64_t> seed_flag, steps_flag;
  std::optional<std::string> out_flag;

  CLI::App* cmd_run = app.add_subcommand("run", "execute a monitoring run");
  cmd_run->add_option("config", config_path, "run configuration file")->required();
  cmd_run->add_option("--seed", seed_flag, "override the configured seed");
  cmd_run->add_option("--steps", steps_flag, "override the configured step count");
  cmd_run->add_option("--out", out_flag, "override the configured output directory");

  CLI::App* cmd_gen = app.add_subcommand("generate", "write a synthetic trace CSV");
  cmd_gen->add_option("tracespec", tracespec_path, "trace spec file")->required();
  cmd_gen->add_option("out", trace_out, "output CSV path")->required();
  cmd_gen->add_option("--seed", seed_flag, "generator seed");

  CLI::App* cmd_report = app.add_subcommand("report", "project results to CSV");
  cmd_report->add_option("results", results_path, "results directory")->required();
  cmd_report->add_option("--out", report_out, "CSV output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (cmd_run->parsed()) {
      densimon::RunConfig cfg = densimon::parse_config(slurp(config_path));
      if (seed_flag) cfg.seed = *seed_flag;
      if (steps_flag) cfg.steps = *steps_flag;
      if (out_flag) cfg.output_path = *out_flag;
      densimon::RunResult result = densimon::run(cfg);
      densimon::write_results(cfg.output_path, result);
      std::cout << "processed " << result.packets_processed << " packets, wrote "
                << result.outputs.size() << " records to " << cfg.output_path
                << "\n";
    } else if (cmd_gen->parsed()) {
      densimon::TraceSpec spec = densimon::parse_trace_spec(slurp(tracespec_path));
      std::uint64_t seed = seed_flag.value_or(1);
      std::vector<densimon::Packet> packets = densimon::generate_trace(spec, seed);
      densimon::write_trace_csv(trace_out, packets);
      std::cout << "wrote " << packets.size() << " packets to " << trace_out << "\n";
    } else if (cmd_report->parsed()) {
      std::string csv = densimon::report_csv(results_path);
      if (report_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(report_out, std::ios::binary);
        if (!out) throw densimon::IoError("cannot open: " + report_out);
        out << csv;
      }
    }
  } catch (const densimon::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const densimon::IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
