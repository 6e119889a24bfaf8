#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "scoring.hpp"

namespace densimon {

struct Packet {
  std::uint64_t ts_ns = 0;
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint8_t proto = 0;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::uint32_t size = 0;
  bool tcp_fin = false;
};

enum class Feature : std::uint8_t {
  PacketSize,
  InterArrivalTime,
  FlowletPackets,
  FlowletBytes,
  FlowletDuration,
};

inline bool needs_flowlet_state(Feature f) {
  return f == Feature::FlowletPackets || f == Feature::FlowletBytes ||
         f == Feature::FlowletDuration;
}

// (task id, quantized feature value) tuple flowing from the data plane to the
// control plane. Sizes and counts are unit, times are microseconds.
struct FeatureEvent {
  std::uint32_t task_id = 0;
  std::int64_t value = 0;
  std::uint64_t ts_ns = 0;

  bool operator==(const FeatureEvent&) const = default;
};

// Value/mask pair per five-tuple field; a zero mask wildcards the field.
struct TernaryRule {
  std::uint32_t src_value = 0, src_mask = 0;
  std::uint32_t dst_value = 0, dst_mask = 0;
  std::uint8_t proto_value = 0, proto_mask = 0;
  std::uint16_t sport_value = 0, sport_mask = 0;
  std::uint16_t dport_value = 0, dport_mask = 0;
  std::vector<std::uint32_t> task_ids;
  int priority = 0;

  bool matches(const Packet& p) const {
    return (p.src_ip & src_mask) == (src_value & src_mask) &&
           (p.dst_ip & dst_mask) == (dst_value & dst_mask) &&
           (p.proto & proto_mask) == (proto_value & proto_mask) &&
           (p.sport & sport_mask) == (sport_value & sport_mask) &&
           (p.dport & dport_mask) == (dport_value & dport_mask);
  }
};

// All active tasks whose constraint matches the packet, as a sorted set.
inline std::vector<std::uint32_t> match_tasks(const Packet& p,
                                              const std::vector<TernaryRule>& rules) {
  std::vector<std::uint32_t> out;
  for (const TernaryRule& r : rules)
    if (r.matches(p))
      out.insert(out.end(), r.task_ids.begin(), r.task_ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Minimal prefix cover of the inclusive 16-bit range [lo, hi], as
// (value, mask) pairs.
inline std::vector<std::pair<std::uint16_t, std::uint16_t>> range_to_prefixes(
    std::uint32_t lo, std::uint32_t hi) {
  if (lo > hi || hi > 0xFFFF)
    throw std::invalid_argument("range_to_prefixes: bad range");
  std::vector<std::pair<std::uint16_t, std::uint16_t>> out;
  std::uint32_t cur = lo;
  while (cur <= hi) {
    std::uint32_t block = cur == 0 ? 0x10000u : (cur & (~cur + 1));
    while (cur + block - 1 > hi) block >>= 1;
    out.emplace_back(static_cast<std::uint16_t>(cur),
                     static_cast<std::uint16_t>(~(block - 1) & 0xFFFF));
    cur += block;
    if (block == 0x10000u) break;
  }
  return out;
}

struct FlowKey {
  std::uint32_t src_ip = 0, dst_ip = 0;
  std::uint8_t proto = 0;
  std::uint16_t sport = 0, dport = 0;

  bool operator==(const FlowKey&) const = default;

  std::uint64_t hash() const {
    std::uint64_t x = (std::uint64_t{src_ip} << 32) | dst_ip;
    x = mix_seed(x);
    x ^= (std::uint64_t{proto} << 32) | (std::uint64_t{sport} << 16) | dport;
    return mix_seed(x);
  }
};

inline FlowKey flow_key(const Packet& p) {
  return FlowKey{p.src_ip, p.dst_ip, p.proto, p.sport, p.dport};
}

struct FlowletSummary {
  FlowKey flow;
  std::uint64_t first_seen = 0;
  std::uint64_t last_seen = 0;
  std::uint64_t packet_count = 0;
  std::uint64_t byte_count = 0;

  std::uint64_t duration_ns() const { return last_seen - first_seen; }
};

struct FlowletStatus {
  enum class Kind { NewFlowlet, Active, Ended, Collision } kind = Kind::Active;
  std::optional<FlowletSummary> completed;  // evicted or ended flowlet, if any
};

// Hash-indexed register array of flowlet slots: power-of-2 size, single hash,
// no chaining. A slot stores the flow id plus first/last timestamps and
// packet/byte counters; colliding live flows are counted, not resolved.
class FlowletTable {
 public:
  explicit FlowletTable(std::size_t slots = std::size_t{1} << 16)
      : slots_(slots) {
    if (slots < 1 || (slots & (slots - 1)) != 0)
      throw std::invalid_argument("FlowletTable: slot count must be a power of 2");
  }

  FlowletStatus update(const Packet& p, std::uint64_t timeout_ns) {
    if (timeout_ns == 0)
      throw std::invalid_argument("FlowletTable: timeout must be positive");
    Slot& s = slots_[flow_key(p).hash() & (slots_.size() - 1)];
    if (!s.occupied) {
      occupy(s, p);
      return {FlowletStatus::Kind::NewFlowlet, std::nullopt};
    }
    if (p.ts_ns - s.data.last_seen > timeout_ns) {
      FlowletSummary prev = s.data;
      occupy(s, p);
      return {FlowletStatus::Kind::NewFlowlet, prev};
    }
    if (s.data.flow == flow_key(p)) {
      s.data.last_seen = p.ts_ns;
      s.data.packet_count += 1;
      s.data.byte_count += p.size;
      if (p.tcp_fin) {
        FlowletSummary done = s.data;
        s.occupied = false;
        return {FlowletStatus::Kind::Ended, done};
      }
      return {FlowletStatus::Kind::Active, std::nullopt};
    }
    ++collisions_;
    return {FlowletStatus::Kind::Collision, std::nullopt};
  }

  // Sweeps live slots in index order and returns their summaries; used at
  // end of trace so completed-flowlet accounting balances.
  std::vector<FlowletSummary> flush() {
    std::vector<FlowletSummary> out;
    for (Slot& s : slots_) {
      if (s.occupied) {
        out.push_back(s.data);
        s.occupied = false;
      }
    }
    return out;
  }

  std::uint64_t collisions() const { return collisions_; }
  void reset_collisions() { collisions_ = 0; }

 private:
  struct Slot {
    bool occupied = false;
    FlowletSummary data;
  };

  void occupy(Slot& s, const Packet& p) {
    s.occupied = true;
    s.data = FlowletSummary{flow_key(p), p.ts_ns, p.ts_ns, 1, p.size};
  }

  std::vector<Slot> slots_;
  std::uint64_t collisions_ = 0;
};

// Deterministic per-step token bucket: the first `rate` events of a step are
// sampled, the rest are used for scoring.
struct Meter {
  std::uint64_t rate = 0;
  std::uint64_t tokens = 0;

  enum class Decision { Sampled, Scored };

  Decision take() {
    if (tokens > 0) {
      --tokens;
      return Decision::Sampled;
    }
    return Decision::Scored;
  }

  void refill() { tokens = rate; }
};

// Per-task feature extraction. Keeps the last matching-packet timestamp per
// task for inter-arrival times; flowlet features come only from completed
// flowlet summaries.
class FeatureExtractor {
 public:
  std::vector<FeatureEvent> extract(const Packet& p, const FlowletStatus& status,
                                    const std::vector<std::uint32_t>& active_tasks,
                                    const std::map<std::uint32_t, Feature>& features) {
    std::vector<FeatureEvent> out;
    for (std::uint32_t task : active_tasks) {
      auto it = features.find(task);
      if (it == features.end()) continue;
      switch (it->second) {
        case Feature::PacketSize:
          out.push_back({task, static_cast<std::int64_t>(p.size), p.ts_ns});
          break;
        case Feature::InterArrivalTime: {
          auto [prev, inserted] = last_seen_.try_emplace(task, p.ts_ns);
          if (!inserted) {
            out.push_back({task,
                           static_cast<std::int64_t>((p.ts_ns - prev->second) / 1000),
                           p.ts_ns});
            prev->second = p.ts_ns;
          }
          break;
        }
        case Feature::FlowletPackets:
        case Feature::FlowletBytes:
        case Feature::FlowletDuration:
          if (status.completed) {
            const FlowletSummary& f = *status.completed;
            std::int64_t v = it->second == Feature::FlowletPackets
                                 ? static_cast<std::int64_t>(f.packet_count)
                             : it->second == Feature::FlowletBytes
                                 ? static_cast<std::int64_t>(f.byte_count)
                                 : static_cast<std::int64_t>(f.duration_ns() / 1000);
            out.push_back({task, v, p.ts_ns});
          }
          break;
      }
    }
    return out;
  }

  void reset() { last_seen_.clear(); }

 private:
  std::map<std::uint32_t, std::uint64_t> last_seen_;
};

struct TaskStepStats {
  std::uint64_t extracted = 0;
  std::uint64_t sampled = 0;
  std::uint64_t scored = 0;
  ScoreCounters counters;
  std::vector<std::size_t> table_sizes;  // training sizes behind the counters
  std::uint64_t table_version = 0;
  bool has_tables = false;
};

struct StepReport {
  std::uint64_t step_index = 0;
  std::vector<FeatureEvent> samples;  // export buffer
  std::map<std::uint32_t, TaskStepStats> per_task;
  std::uint64_t collisions = 0;
};

struct PipelineConfig {
  std::uint64_t flowlet_timeout_ns = 500'000'000;
  std::size_t flowlet_slots = std::size_t{1} << 16;
};

// Software model of the switch pipeline: ternary task matching, shared
// flowlet state, feature extraction, per-task meters, score counters.
// Processes packets strictly in trace order; the control plane interacts
// only at step boundaries.
class Pipeline {
 public:
  Pipeline(std::vector<TernaryRule> rules, std::map<std::uint32_t, Feature> features,
           PipelineConfig cfg = {})
      : rules_(std::move(rules)),
        features_(std::move(features)),
        cfg_(cfg),
        flowlets_(cfg.flowlet_slots) {
    for (const auto& [task, feature] : features_) {
      states_.emplace(task, TaskState{});
      any_flowlet_ |= needs_flowlet_state(feature);
    }
  }

  void set_rate(std::uint32_t task, std::uint64_t rate) {
    states_.at(task).meter.rate = rate;
  }

  std::uint64_t rate(std::uint32_t task) const { return states_.at(task).meter.rate; }

  // Installs the score tables for one task; takes effect for all traffic
  // until the next installation. `version` tags which control step produced
  // the estimates.
  void install_tables(std::uint32_t task, std::vector<ScoreTable> tables,
                      std::vector<std::size_t> sizes, std::uint64_t version) {
    TaskState& st = states_.at(task);
    st.tables = std::move(tables);
    st.table_sizes = std::move(sizes);
    st.table_version = version;
    st.counters.reset(st.tables.size());
  }

  void process(const Packet& p) {
    std::vector<std::uint32_t> tasks = match_tasks(p, rules_);
    if (tasks.empty()) return;

    FlowletStatus status;
    bool want_flowlet = false;
    for (std::uint32_t t : tasks) {
      auto it = features_.find(t);
      if (it != features_.end() && needs_flowlet_state(it->second)) {
        want_flowlet = true;
        break;
      }
    }
    if (want_flowlet) status = flowlets_.update(p, cfg_.flowlet_timeout_ns);

    for (const FeatureEvent& ev : extractor_.extract(p, status, tasks, features_))
      route(ev);
  }

  // Emits summaries of still-live flowlets through the normal feature path.
  // Hardware cannot do this sweep; the emulator does it at end of trace so
  // per-flow accounting balances.
  void flush_flowlets() {
    if (!any_flowlet_) return;
    for (const FlowletSummary& f : flowlets_.flush()) {
      Packet pseudo;
      pseudo.src_ip = f.flow.src_ip;
      pseudo.dst_ip = f.flow.dst_ip;
      pseudo.proto = f.flow.proto;
      pseudo.sport = f.flow.sport;
      pseudo.dport = f.flow.dport;
      pseudo.ts_ns = f.last_seen;
      for (std::uint32_t task : match_tasks(pseudo, rules_)) {
        auto it = features_.find(task);
        if (it == features_.end() || !needs_flowlet_state(it->second)) continue;
        std::int64_t v = it->second == Feature::FlowletPackets
                             ? static_cast<std::int64_t>(f.packet_count)
                         : it->second == Feature::FlowletBytes
                             ? static_cast<std::int64_t>(f.byte_count)
                             : static_cast<std::int64_t>(f.duration_ns() / 1000);
        route(FeatureEvent{task, v, f.last_seen});
      }
    }
  }

  // Atomic snapshot-and-reset barrier between data plane and control plane:
  // returns the step's export buffer and counter snapshots, then zeroes
  // counters and refills meters.
  StepReport end_of_step() {
    StepReport report;
    report.step_index = step_index_++;
    report.samples = std::move(export_buffer_);
    export_buffer_.clear();
    report.collisions = flowlets_.collisions();
    flowlets_.reset_collisions();
    for (auto& [task, st] : states_) {
      TaskStepStats stats;
      stats.extracted = st.extracted;
      stats.sampled = st.sampled;
      stats.scored = st.scored;
      stats.counters = st.counters;
      stats.table_sizes = st.table_sizes;
      stats.table_version = st.table_version;
      stats.has_tables = !st.tables.empty();
      report.per_task.emplace(task, std::move(stats));
      st.extracted = st.sampled = st.scored = 0;
      st.counters.reset(st.tables.size());
      st.meter.refill();
    }
    return report;
  }

  std::uint64_t flowlet_collisions() const { return flowlets_.collisions(); }

 private:
  struct TaskState {
    Meter meter;
    std::vector<ScoreTable> tables;
    std::vector<std::size_t> table_sizes;
    std::uint64_t table_version = 0;
    ScoreCounters counters;
    std::uint64_t extracted = 0, sampled = 0, scored = 0;
  };

  void route(const FeatureEvent& ev) {
    TaskState& st = states_.at(ev.task_id);
    ++st.extracted;
    if (st.meter.take() == Meter::Decision::Sampled) {
      ++st.sampled;
      export_buffer_.push_back(ev);
    } else {
      ++st.scored;
      // no tables installed yet: the value is dropped, test_count stays 0
      if (!st.tables.empty()) score_update(st.tables, st.counters, ev.value);
    }
  }

  std::vector<TernaryRule> rules_;
  std::map<std::uint32_t, Feature> features_;
  PipelineConfig cfg_;
  FlowletTable flowlets_;
  FeatureExtractor extractor_;
  std::map<std::uint32_t, TaskState> states_;
  std::vector<FeatureEvent> export_buffer_;
  std::uint64_t step_index_ = 0;
  bool any_flowlet_ = false;
};

}  // namespace densimon
