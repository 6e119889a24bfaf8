#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "controller.hpp"
#include "dataplane.hpp"
#include "trace_io.hpp"
#include "traffic.hpp"

namespace densimon {

struct RunResult {
  std::vector<TaskStepOutput> outputs;  // one record per task per step
  std::uint64_t packets_processed = 0;
};

// Drives the closed loop: trace packets flow through one pipeline per
// location; at every step boundary the controller consumes the report,
// estimates, and re-configures tables and meter rates.
inline RunResult run(const RunConfig& cfg) {
  std::vector<Packet> packets;
  if (!cfg.trace_file.empty())
    packets = read_trace_csv(cfg.trace_file);
  else
    packets = generate_trace(*cfg.trace_spec, cfg.seed);

  // one pipeline per location, fed the same trace
  std::map<std::string, std::unique_ptr<Pipeline>> pipelines;
  std::map<std::uint32_t, std::string> task_location;
  std::map<std::string, std::vector<TaskDecl>> by_location;
  for (const TaskDecl& t : cfg.tasks) {
    by_location[t.location].push_back(t);
    task_location[t.id] = t.location;
  }
  PipelineConfig pcfg;
  pcfg.flowlet_timeout_ns = cfg.flowlet_timeout_ns;
  for (const auto& [loc, tasks] : by_location) {
    std::map<std::uint32_t, Feature> features;
    for (const TaskDecl& t : tasks) features.emplace(t.id, t.feature);
    pipelines.emplace(loc, std::make_unique<Pipeline>(compile_rules(tasks),
                                                      std::move(features), pcfg));
  }

  std::vector<MonitoringTask> mts;
  for (const TaskDecl& t : cfg.tasks) {
    MonitoringTask mt;
    mt.id = t.id;
    mt.location = t.location;
    mt.feature = t.feature;
    mt.target_accuracy = t.target_accuracy;
    if (cfg.objective.kind == ObjectiveKind::MinimizeResources && !mt.target_accuracy)
      mt.target_accuracy = cfg.default_target;
    mts.push_back(std::move(mt));
  }
  ControllerConfig ccfg;
  ccfg.subsamples = cfg.subsamples;
  ccfg.min_rate = cfg.min_rate;
  ccfg.max_rate = cfg.objective.kind == ObjectiveKind::MaximizeAccuracy
                      ? std::min<std::uint64_t>(cfg.max_rate, cfg.objective.budget)
                      : cfg.max_rate;
  ccfg.seed = cfg.seed;
  Controller controller(mts, cfg.objective, ccfg);

  auto install = [&](std::uint32_t task, std::vector<ScoreTable> tables,
                     std::vector<std::size_t> sizes, std::uint64_t version) {
    pipelines.at(task_location.at(task))
        ->install_tables(task, std::move(tables), std::move(sizes), version);
  };
  auto apply_rate = [&](std::uint32_t task, std::uint64_t rate) {
    pipelines.at(task_location.at(task))->set_rate(task, rate);
  };
  for (const MonitoringTask& mt : mts) apply_rate(mt.id, controller.state(mt.id).rate);

  RunResult result;
  const auto step_ns = static_cast<std::uint64_t>(cfg.step_length_s * 1e9);
  std::uint64_t step_end = step_ns;
  std::size_t next_packet = 0;
  auto run_boundary = [&](bool last) {
    if (last)
      for (auto& [loc, pipe] : pipelines) pipe->flush_flowlets();
    StepReport merged;
    bool first = true;
    for (auto& [loc, pipe] : pipelines) {
      StepReport r = pipe->end_of_step();
      if (first) {
        merged = std::move(r);
        first = false;
      } else {
        merged.samples.insert(merged.samples.end(), r.samples.begin(), r.samples.end());
        merged.per_task.merge(r.per_task);
        merged.collisions += r.collisions;
      }
    }
    std::vector<TaskStepOutput> outputs =
        controller.run_step(merged, install, apply_rate);
    result.outputs.insert(result.outputs.end(), outputs.begin(), outputs.end());
  };

  for (std::uint64_t step = 0; step < cfg.steps; ++step, step_end += step_ns) {
    while (next_packet < packets.size() && packets[next_packet].ts_ns < step_end) {
      for (auto& [loc, pipe] : pipelines) pipe->process(packets[next_packet]);
      ++next_packet;
      ++result.packets_processed;
    }
    run_boundary(step + 1 == cfg.steps || next_packet == packets.size());
  }
  return result;
}

namespace detail {

inline std::string real_repr(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Writes the result stream: one JSON line per task per step, density grids in
// a raw little-endian double sidecar, and a manifest resolving the references.
inline void write_results(const std::string& dir, const RunResult& result) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);

  std::ofstream bin(fs::path(dir) / "densities.bin", std::ios::binary);
  std::ofstream jsonl(fs::path(dir) / "results.jsonl", std::ios::binary);
  if (!bin || !jsonl) throw IoError("cannot open output files under " + dir);

  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const TaskStepOutput& o : result.outputs) {
    nlohmann::ordered_json rec;
    rec["step"] = o.step;
    rec["task_id"] = o.task_id;
    rec["sample_count"] = o.sample_count;
    rec["accuracy"] = o.accuracy_valid ? nlohmann::ordered_json(o.accuracy)
                                       : nlohmann::ordered_json(nullptr);
    rec["stale"] = o.stale;
    rec["qs_opt"] = o.qs_opt;
    rec["c"] = o.c;
    rec["rate"] = o.rate;
    if (o.has_density) {
      const Density& d = o.density;
      std::string ref = "densities.bin#" + std::to_string(offset) + ":" +
                        std::to_string(d.values.size());
      rec["density"] = ref;
      nlohmann::ordered_json m;
      m["step"] = o.step;
      m["task_id"] = o.task_id;
      m["ref"] = ref;
      m["offset"] = offset;
      m["points"] = d.values.size();
      m["lo"] = d.grid.lo;
      m["hi"] = d.grid.hi;
      m["bandwidth"] = d.bandwidth;
      m["train_size"] = d.train_size;
      manifest.push_back(std::move(m));
      bin.write(reinterpret_cast<const char*>(d.values.data()),
                static_cast<std::streamsize>(d.values.size() * sizeof(double)));
      offset += d.values.size() * sizeof(double);
    } else {
      rec["density"] = nullptr;
    }
    jsonl << rec.dump() << '\n';
  }
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
  mf << manifest.dump(2) << '\n';
  if (!bin || !jsonl || !mf) throw IoError("failed writing results under " + dir);
}

// Reads a density back from the sidecar via its manifest entry.
inline Density load_density(const std::string& dir, const nlohmann::json& entry) {
  namespace fs = std::filesystem;
  Density d;
  d.grid.lo = entry.at("lo").get<double>();
  d.grid.hi = entry.at("hi").get<double>();
  d.grid.points = entry.at("points").get<std::size_t>();
  d.bandwidth = entry.at("bandwidth").get<double>();
  d.train_size = entry.at("train_size").get<std::size_t>();
  d.values.resize(d.grid.points);
  std::ifstream bin(fs::path(dir) / "densities.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open densities.bin under " + dir);
  bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
  bin.read(reinterpret_cast<char*>(d.values.data()),
           static_cast<std::streamsize>(d.values.size() * sizeof(double)));
  if (!bin) throw IoError("short read from densities.bin");
  return d;
}

// Projects a result stream to a per-task time-series CSV for plotting.
inline std::string report_csv(const std::string& results_dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(results_dir) / "results.jsonl", std::ios::binary);
  if (!in) throw IoError("cannot open results.jsonl under " + results_dir);
  std::ostringstream os;
  os << "step,task_id,sample_count,rate,accuracy,stale,qs_opt,c\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    os << rec.at("step").get<std::uint64_t>() << ','
       << rec.at("task_id").get<std::uint32_t>() << ','
       << rec.at("sample_count").get<std::uint64_t>() << ','
       << rec.at("rate").get<std::uint64_t>() << ',';
    if (rec.at("accuracy").is_null())
      os << "";
    else
      os << detail::real_repr(rec.at("accuracy").get<double>());
    os << ',' << (rec.at("stale").get<bool>() ? 1 : 0) << ','
       << detail::real_repr(rec.at("qs_opt").get<double>()) << ','
       << detail::real_repr(rec.at("c").get<double>()) << '\n';
  }
  return os.str();
}

}  // namespace densimon
