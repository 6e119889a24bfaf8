#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataplane.hpp"
#include "density.hpp"
#include "kde.hpp"
#include "normalizer.hpp"
#include "rng.hpp"
#include "scoring.hpp"

namespace densimon {

enum class DistFamily : std::uint8_t {
  Lognormal,    // a = log-space mean, b = log-space sd
  TruncNormal,  // a = mean, b = sd; truncated by the support bounds
  Exponential,  // a = mean
  Spike,        // point mass at a, smoothed with width b
};

struct MixtureComponent {
  DistFamily family = DistFamily::TruncNormal;
  double a = 0.0;
  double b = 1.0;
  double weight = 1.0;
};

// Parameterized ground-truth distribution of a feature: a mixture truncated
// to [lo, hi] in quantized feature units.
struct GroundTruthSpec {
  Feature feature = Feature::PacketSize;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<MixtureComponent> components;

  void validate() const {
    if (!(lo < hi)) throw std::invalid_argument("GroundTruthSpec: lo must be < hi");
    if (components.empty())
      throw std::invalid_argument("GroundTruthSpec: no mixture components");
    double total = 0.0;
    for (const MixtureComponent& c : components) {
      if (!(c.weight > 0.0))
        throw std::invalid_argument("GroundTruthSpec: weights must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("GroundTruthSpec: weights must sum to 1");
  }
};

namespace detail {

inline double component_pdf(const MixtureComponent& c, double x) {
  switch (c.family) {
    case DistFamily::Lognormal: {
      if (x <= 0.0) return 0.0;
      double z = (std::log(x) - c.a) / c.b;
      return std::exp(-0.5 * z * z) /
             (x * c.b * std::sqrt(2.0 * std::numbers::pi));
    }
    case DistFamily::TruncNormal:
    case DistFamily::Spike: {
      double z = (x - c.a) / c.b;
      return std::exp(-0.5 * z * z) / (c.b * std::sqrt(2.0 * std::numbers::pi));
    }
    case DistFamily::Exponential:
      return x < 0.0 ? 0.0 : std::exp(-x / c.a) / c.a;
  }
  return 0.0;
}

inline double component_draw(const MixtureComponent& c, Rng& rng) {
  switch (c.family) {
    case DistFamily::Lognormal:
      return std::exp(c.a + c.b * rng.normal());
    case DistFamily::TruncNormal:
    case DistFamily::Spike:
      return c.a + c.b * rng.normal();
    case DistFamily::Exponential:
      return rng.exponential(c.a);
  }
  return 0.0;
}

}  // namespace detail

// Analytic mixture evaluated on the grid, truncated to the spec's support and
// renormalized to integrate to 1.
inline Density ground_truth_density(const GroundTruthSpec& spec, const GridSpec& grid) {
  spec.validate();
  grid.validate();
  Density d;
  d.grid = grid;
  d.values.assign(grid.points, 0.0);
  for (std::size_t i = 0; i < grid.points; ++i) {
    double x = grid.node(i);
    if (x < spec.lo || x > spec.hi) continue;
    double v = 0.0;
    for (const MixtureComponent& c : spec.components)
      v += c.weight * detail::component_pdf(c, x);
    d.values[i] = v;
  }
  double mass = trapezoid(d.values, grid.step());
  if (!(mass > 0.0))
    throw std::invalid_argument("ground_truth_density: no mass inside grid/support");
  for (double& v : d.values) v /= mass;
  d.bandwidth = grid.step();
  d.train_size = 1;
  return d;
}

// One draw from the truncated mixture: rejection at the mixture level, so the
// result follows the same truncated density the analytic form integrates.
inline double draw_ground_truth(const GroundTruthSpec& spec, Rng& rng) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    double u = rng.uniform();
    double acc = 0.0;
    const MixtureComponent* chosen = &spec.components.back();
    for (const MixtureComponent& c : spec.components) {
      acc += c.weight;
      if (u < acc) {
        chosen = &c;
        break;
      }
    }
    double x = detail::component_draw(*chosen, rng);
    if (x >= spec.lo && x <= spec.hi) return x;
  }
  throw std::runtime_error("draw_ground_truth: support rejects all mass");
}

inline Sample draw_sample(const GroundTruthSpec& spec, std::size_t n, Rng& rng,
                          std::uint32_t task_id = 0) {
  Sample s;
  s.task_id = task_id;
  s.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    s.values.push_back(draw_ground_truth(spec, rng));
  return s;
}

// Normalized score of an estimate when the truth is known: expected score
// divided by the optimal score.
inline double true_accuracy(const Density& estimate, const Density& truth) {
  double optimal = expected_score(truth, truth);
  if (!(optimal > 0.0)) throw NonPositiveOptimumError{};
  return expected_score(estimate, truth) / optimal;
}

// One traffic population: flows under a shared source prefix emitting packets
// whose features follow the stream's ground truths. With flowlet specs
// present, packets are grouped into gap-separated bursts; otherwise the
// stream is a plain packet process paced by the inter-arrival spec.
struct StreamSpec {
  std::string name;
  std::uint32_t src_prefix = 0;
  int src_prefix_len = 8;
  std::uint32_t dst_ip = 0x0a000001;
  std::uint8_t proto = 6;
  std::uint64_t flows = 16;
  std::vector<GroundTruthSpec> feature_specs;

  const GroundTruthSpec* spec_for(Feature f) const {
    for (const GroundTruthSpec& s : feature_specs)
      if (s.feature == f) return &s;
    return nullptr;
  }
};

struct TraceSpec {
  double duration_s = 10.0;
  std::uint64_t flowlet_gap_ns = 500'000'000;
  std::vector<StreamSpec> streams;
};

namespace detail {

struct RawPacket {
  Packet pkt;
  std::size_t stream;
  std::uint64_t seq;
};

inline std::uint32_t flow_src(const StreamSpec& s, std::uint64_t flow, Rng& rng) {
  std::uint32_t host_bits = 32 - static_cast<std::uint32_t>(s.src_prefix_len);
  std::uint32_t host = host_bits >= 32
                           ? static_cast<std::uint32_t>(rng.bits())
                           : static_cast<std::uint32_t>(rng.below(1u << host_bits));
  (void)flow;
  std::uint32_t mask = s.src_prefix_len == 0 ? 0 : ~0u << host_bits;
  return (s.src_prefix & mask) | (host & ~mask);
}

}  // namespace detail

// Deterministic synthetic packet trace for a spec. The same seed always
// yields the same byte-for-byte stream.
inline std::vector<Packet> generate_trace(const TraceSpec& spec, std::uint64_t seed) {
  if (spec.duration_s < 0.0)
    throw std::invalid_argument("generate_trace: negative duration");
  const auto duration_ns = static_cast<std::uint64_t>(spec.duration_s * 1e9);
  std::vector<detail::RawPacket> raw;

  for (std::size_t si = 0; si < spec.streams.size(); ++si) {
    const StreamSpec& s = spec.streams[si];
    if (s.flows == 0)
      throw std::invalid_argument("generate_trace: stream needs at least one flow");
    const GroundTruthSpec* size_spec = s.spec_for(Feature::PacketSize);
    const GroundTruthSpec* gap_spec = s.spec_for(Feature::InterArrivalTime);
    const GroundTruthSpec* burst_packets = s.spec_for(Feature::FlowletPackets);
    const GroundTruthSpec* burst_duration = s.spec_for(Feature::FlowletDuration);
    std::uint64_t seq = 0;

    auto draw_size = [&](Rng& rng) -> std::uint32_t {
      if (!size_spec) return 1000;
      return static_cast<std::uint32_t>(
          std::max(1.0, std::floor(draw_ground_truth(*size_spec, rng))));
    };

    if (burst_packets && burst_duration) {
      // flowlet-structured stream: per flow, bursts separated by gaps that
      // always exceed the segmentation timeout
      for (std::uint64_t f = 0; f < s.flows; ++f) {
        Rng rng(derive_seed(seed, si * 1315423911ULL + 17, f));
        FlowKey key;
        key.src_ip = detail::flow_src(s, f, rng);
        key.dst_ip = s.dst_ip;
        key.proto = s.proto;
        key.sport = static_cast<std::uint16_t>(1024 + rng.below(60000));
        key.dport = static_cast<std::uint16_t>(1024 + rng.below(60000));
        double mean_cycle =
            static_cast<double>(spec.flowlet_gap_ns) * 3.0 * static_cast<double>(s.flows);
        std::uint64_t t = static_cast<std::uint64_t>(rng.uniform() * mean_cycle);
        while (t < duration_ns) {
          auto count = static_cast<std::uint64_t>(
              std::max(1.0, std::floor(draw_ground_truth(*burst_packets, rng))));
          auto burst_ns = static_cast<std::uint64_t>(
              std::max(0.0, draw_ground_truth(*burst_duration, rng)) * 1000.0);
          std::uint64_t gap = count > 1 ? burst_ns / (count - 1) : 0;
          for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t ts = t + i * gap;
            if (ts >= duration_ns) break;
            Packet p{ts, key.src_ip, key.dst_ip, key.proto, key.sport, key.dport,
                     draw_size(rng), false};
            raw.push_back({p, si, seq++});
          }
          t += burst_ns + spec.flowlet_gap_ns +
               static_cast<std::uint64_t>(
                   (0.25 + rng.exponential(1.0)) *
                   static_cast<double>(spec.flowlet_gap_ns));
        }
      }
    } else {
      // plain stream: one packet clock paced by the inter-arrival spec,
      // flow tuple picked per packet
      Rng rng(derive_seed(seed, si * 1315423911ULL + 17, 0xfeed));
      std::vector<FlowKey> keys(s.flows);
      for (std::uint64_t f = 0; f < s.flows; ++f) {
        keys[f].src_ip = detail::flow_src(s, f, rng);
        keys[f].dst_ip = s.dst_ip;
        keys[f].proto = s.proto;
        keys[f].sport = static_cast<std::uint16_t>(1024 + rng.below(60000));
        keys[f].dport = static_cast<std::uint16_t>(1024 + rng.below(60000));
      }
      std::uint64_t t = 0;
      while (t < duration_ns) {
        const FlowKey& key = keys[rng.below(s.flows)];
        Packet p{t, key.src_ip, key.dst_ip, key.proto, key.sport, key.dport,
                 draw_size(rng), false};
        raw.push_back({p, si, seq++});
        double gap_us = gap_spec ? draw_ground_truth(*gap_spec, rng) : 100.0;
        t += std::max<std::uint64_t>(1, static_cast<std::uint64_t>(gap_us * 1000.0));
      }
    }
  }

  std::sort(raw.begin(), raw.end(), [](const detail::RawPacket& a,
                                       const detail::RawPacket& b) {
    if (a.pkt.ts_ns != b.pkt.ts_ns) return a.pkt.ts_ns < b.pkt.ts_ns;
    if (a.stream != b.stream) return a.stream < b.stream;
    return a.seq < b.seq;
  });
  std::vector<Packet> out;
  out.reserve(raw.size());
  for (const detail::RawPacket& r : raw) out.push_back(r.pkt);
  return out;
}

// The five stock feature distributions used by the synthetic workloads:
// scales range from microseconds to hundreds of kilobytes, shapes include
// bimodal and heavy-tailed cases.
inline std::vector<GroundTruthSpec> standard_feature_truths() {
  std::vector<GroundTruthSpec> out;

  GroundTruthSpec size;
  size.feature = Feature::PacketSize;
  size.lo = 0.0;
  size.hi = 1600.0;
  size.components = {
      {DistFamily::Spike, 64.0, 14.0, 0.42},
      {DistFamily::Spike, 1480.0, 30.0, 0.28},
      {DistFamily::Lognormal, std::log(420.0), 0.55, 0.30},
  };
  out.push_back(size);

  GroundTruthSpec gap;
  gap.feature = Feature::InterArrivalTime;
  gap.lo = 0.0;
  gap.hi = 60000.0;  // microseconds
  gap.components = {
      {DistFamily::Lognormal, std::log(400.0), 1.10, 0.60},
      {DistFamily::Lognormal, std::log(8000.0), 0.70, 0.40},
  };
  out.push_back(gap);

  GroundTruthSpec packets;
  packets.feature = Feature::FlowletPackets;
  packets.lo = 0.0;
  packets.hi = 600.0;
  packets.components = {
      {DistFamily::Lognormal, std::log(8.0), 0.95, 0.70},
      {DistFamily::Lognormal, std::log(60.0), 0.80, 0.30},
  };
  out.push_back(packets);

  GroundTruthSpec bytes;
  bytes.feature = Feature::FlowletBytes;
  bytes.lo = 40.0;
  bytes.hi = 200000.0;
  bytes.components = {
      {DistFamily::Lognormal, std::log(2200.0), 1.15, 0.78},
      {DistFamily::TruncNormal, 95000.0, 16000.0, 0.22},
  };
  out.push_back(bytes);

  GroundTruthSpec duration;
  duration.feature = Feature::FlowletDuration;
  duration.lo = 0.0;
  duration.hi = 400000.0;  // microseconds
  duration.components = {
      {DistFamily::TruncNormal, 900.0, 350.0, 0.28},
      {DistFamily::Lognormal, std::log(22000.0), 0.75, 0.38},
      {DistFamily::TruncNormal, 150000.0, 35000.0, 0.22},
      {DistFamily::Exponential, 60000.0, 0.0, 0.12},
  };
  out.push_back(duration);

  return out;
}

}  // namespace densimon
