#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "density.hpp"

namespace densimon {

struct NoTestTrafficError : std::runtime_error {
  NoTestTrafficError() : std::runtime_error("no test traffic in this step") {}
};

struct BinningError : std::invalid_argument {
  unsigned suggested_exponent;
  BinningError(const std::string& msg, unsigned suggestion)
      : std::invalid_argument(msg + " (suggested bin_exponent: " +
                              std::to_string(suggestion) + ")"),
        suggested_exponent(suggestion) {}
};

// Integral of the squared density, the score's complexity penalty.
inline double regularization(const Density& d) {
  std::vector<double> sq(d.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = d.values[i] * d.values[i];
  return trapezoid(sq, d.grid.step());
}

inline double quadratic_score(const Density& d, double x, double reg) {
  return 2.0 * evaluate(d, x) - reg;
}

inline double quadratic_score(const Density& d, double x) {
  return quadratic_score(d, x, regularization(d));
}

// Expected quadratic score of `estimate` under test values drawn from `truth`:
// 2 * integral(estimate * truth) - integral(estimate^2).
inline double expected_score(const Density& estimate, const Density& truth) {
  if (!(estimate.grid == truth.grid)) throw GridMismatchError{};
  std::vector<double> cross(estimate.values.size());
  for (std::size_t i = 0; i < cross.size(); ++i)
    cross[i] = estimate.values[i] * truth.values[i];
  double step = estimate.grid.step();
  return 2.0 * trapezoid(cross, step) - regularization(estimate);
}

// Binned reward lookup for one density estimate. Bins are 2^bin_exponent wide
// in quantized feature units and aligned so the low bits of a key can simply
// be masked off, one rule per bin.
struct ScoreTable {
  std::uint32_t task_id = 0;
  unsigned bin_exponent = 0;
  std::int64_t origin = 0;  // aligned lower edge of bin 0
  std::vector<double> rewards;
  double regularization = 0.0;

  double lookup(std::int64_t key) const {
    if (key < origin) return 0.0;
    auto idx = static_cast<std::uint64_t>(key - origin) >> bin_exponent;
    return idx < rewards.size() ? rewards[idx] : 0.0;
  }
};

namespace detail {

inline std::int64_t align_down(std::int64_t v, std::int64_t width) {
  std::int64_t q = v / width;
  if (v % width != 0 && v < 0) --q;
  return q * width;
}

inline std::uint64_t bin_count(const GridSpec& grid, unsigned bin_exponent) {
  const std::int64_t width = std::int64_t{1} << bin_exponent;
  std::int64_t lo = align_down(static_cast<std::int64_t>(std::floor(grid.lo)), width);
  std::int64_t hi = align_down(static_cast<std::int64_t>(std::ceil(grid.hi)), width);
  return static_cast<std::uint64_t>((hi - lo) / width) + 1;
}

}  // namespace detail

// Smallest exponent whose aligned bins cover the density support with at most
// `max_bins` bins; the table stays a fixed size while the resolution adapts.
inline unsigned auto_bin_exponent(const GridSpec& grid, std::uint64_t max_bins = 256) {
  for (unsigned e = 0; e < 63; ++e)
    if (detail::bin_count(grid, e) <= max_bins) return e;
  return 63;
}

inline ScoreTable build_score_table(const Density& d, unsigned bin_exponent,
                                    std::uint32_t task_id = 0) {
  const std::int64_t width = std::int64_t{1} << bin_exponent;
  std::uint64_t bins = detail::bin_count(d.grid, bin_exponent);
  if (bins < 16)
    throw BinningError("bin width resolves support into fewer than 16 bins",
                       auto_bin_exponent(d.grid));
  if (bins > (std::uint64_t{1} << 20))
    throw BinningError("bin width resolves support into too many bins",
                       auto_bin_exponent(d.grid));

  ScoreTable t;
  t.task_id = task_id;
  t.bin_exponent = bin_exponent;
  t.origin = detail::align_down(static_cast<std::int64_t>(std::floor(d.grid.lo)), width);
  t.rewards.resize(bins);
  for (std::uint64_t b = 0; b < bins; ++b) {
    double center = static_cast<double>(t.origin + static_cast<std::int64_t>(b) * width) +
                    static_cast<double>(width) / 2.0;
    t.rewards[b] = evaluate(d, center);
  }
  t.regularization = regularization(d);
  return t;
}

// k + 1 accumulators per task: one shared test count plus one reward sum per
// scored estimate.
struct ScoreCounters {
  std::uint64_t test_count = 0;
  std::vector<double> reward_sums;

  void reset(std::size_t k) {
    test_count = 0;
    reward_sums.assign(k, 0.0);
  }
};

// Single pass, constant work per table: bump the shared count and add each
// table's reward for the test value.
inline void score_update(const std::vector<ScoreTable>& tables,
                         ScoreCounters& counters, std::int64_t value) {
  if (counters.reward_sums.size() != tables.size())
    counters.reward_sums.resize(tables.size(), 0.0);
  ++counters.test_count;
  for (std::size_t i = 0; i < tables.size(); ++i)
    counters.reward_sums[i] += tables[i].lookup(value);
}

// Mean quadratic score from the counters; the reward factor 2 lives here, not
// in the data-plane sums.
inline double empirical_mean_score(const ScoreCounters& counters, std::size_t index,
                                   double reg) {
  if (counters.test_count == 0) throw NoTestTrafficError{};
  return 2.0 * counters.reward_sums.at(index) /
             static_cast<double>(counters.test_count) -
         reg;
}

}  // namespace densimon
