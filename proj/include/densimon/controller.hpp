#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dataplane.hpp"
#include "density.hpp"
#include "kde.hpp"
#include "normalizer.hpp"
#include "rng.hpp"
#include "scoring.hpp"

namespace densimon {

enum class ObjectiveKind : std::uint8_t { MinimizeResources, MaximizeAccuracy };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::MinimizeResources;
  std::uint64_t budget = 0;  // total samples per step, MaximizeAccuracy only
};

struct ControllerConfig {
  int subsamples = 6;  // k: number of split rounds, k-1 sizes beyond the full one
  std::uint64_t min_rate = 64;
  std::uint64_t max_rate = 65536;
  std::size_t grid_points = std::size_t{1} << 14;
  std::size_t min_split_part = 64;   // smallest usable subsample
  int qs_window_steps = 10;          // sliding window for the observed maximum score
  double rate_smoothing = 4.0;       // max upward rate change factor per step
  double rate_smoothing_down = 1.5;  // max downward factor; dips cost accuracy
  std::uint64_t seed = 1;
  bool parallel = true;
};

struct SizeGroup {
  std::size_t size = 0;
  std::vector<std::vector<double>> parts;
};

// Split rounds j = 1..k: each round partitions a fresh permutation of the
// sample into j disjoint parts of floor(n/j) values, so every round uses all
// the data once and no value twice.
inline std::vector<SizeGroup> subsample_split(const std::vector<double>& values,
                                              int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("subsample_split: k must be >= 1");
  const std::size_t n = values.size();
  std::vector<SizeGroup> out;
  for (int j = 1; j <= k; ++j) {
    std::size_t part = n / static_cast<std::size_t>(j);
    if (part == 0) break;
    SizeGroup g;
    g.size = part;
    if (j == 1) {
      g.parts.push_back(values);
    } else {
      std::vector<double> perm = values;
      rng.shuffle(perm);
      for (int i = 0; i < j; ++i)
        g.parts.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i * part),
                             perm.begin() + static_cast<std::ptrdiff_t>((i + 1) * part));
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct SizeEstimate {
  std::size_t size = 0;
  Density mean;      // pointwise mean of the round's estimates, for scoring
  double mean_reg = 0.0;  // mean of per-estimate regularizations
};

struct EstimationResult {
  Density full;
  std::vector<SizeEstimate> sizes;  // descending size, the full sample first
  bool reduced = false;             // some rounds were dropped (too small/degenerate)
  bool bandwidth_fallback = false;
};

// Estimates the full-sample density plus one mean density per subsample size.
// All densities share a grid sized from the full sample and the largest
// selected bandwidth.
inline EstimationResult estimation_phase(const std::vector<double>& values, int k,
                                         const ControllerConfig& cfg, Rng& rng) {
  if (values.size() < 8)
    throw std::invalid_argument("estimation_phase: sample too small");

  std::vector<SizeGroup> groups = subsample_split(values, k, rng);

  struct Planned {
    std::size_t size;
    std::vector<std::pair<const std::vector<double>*, double>> parts;  // values, bandwidth
  };
  std::vector<Planned> planned;
  double h_max = 0.0;
  bool reduced = groups.size() < static_cast<std::size_t>(k);
  bool fallback = false;
  std::set<std::size_t> seen;
  for (const SizeGroup& g : groups) {
    if (g.size < cfg.min_split_part && !planned.empty()) {
      reduced = true;
      continue;
    }
    if (!seen.insert(g.size).second) {
      reduced = true;  // duplicate size from integer division on tiny samples
      continue;
    }
    Planned pl{g.size, {}};
    bool ok = true;
    for (const std::vector<double>& part : g.parts) {
      BandwidthResult bw;
      try {
        bw = select_bandwidth(Sample{part});
      } catch (const std::exception&) {
        ok = false;
        break;
      }
      fallback |= bw.fallback;
      h_max = std::max(h_max, bw.value);
      pl.parts.emplace_back(&part, bw.value);
    }
    if (!ok) {
      reduced = true;
      continue;
    }
    planned.push_back(std::move(pl));
  }
  if (planned.empty() || planned.front().size != values.size())
    throw ZeroVarianceError{};

  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  GridSpec grid{*mn - 3.0 * h_max, *mx + 3.0 * h_max, cfg.grid_points};

  EstimationResult result;
  result.reduced = reduced;
  result.bandwidth_fallback = fallback;
  for (const Planned& pl : planned) {
    std::vector<Density> estimates;
    double reg_sum = 0.0;
    for (const auto& [part, h] : pl.parts) {
      estimates.push_back(estimate_density(Sample{*part}, h, grid));
      reg_sum += regularization(estimates.back());
    }
    SizeEstimate se;
    se.size = pl.size;
    se.mean = mean_density(estimates);
    se.mean_reg = reg_sum / static_cast<double>(estimates.size());
    if (pl.size == values.size()) result.full = estimates.front();
    result.sizes.push_back(std::move(se));
  }
  return result;
}

// A (location, constraint, feature) triple with an optional accuracy target,
// the unit of estimation and adaptation.
struct MonitoringTask {
  std::uint32_t id = 0;
  std::string location;
  Feature feature = Feature::PacketSize;
  std::optional<double> target_accuracy;
};

struct TaskState {
  MonitoringTask task;
  Density density;
  bool has_density = false;
  FitModel fit;
  bool has_fit = false;
  double accuracy = 0.0;
  bool accuracy_valid = false;
  bool stale = true;
  std::uint64_t rate = 0;
  std::size_t last_sample_count = 0;
  std::deque<double> qs_history;  // per-step max observed score
  // estimates installed for scoring, consumed one step later
  std::vector<std::size_t> pending_sizes;
  std::vector<double> pending_regs;
  std::uint64_t pending_version = 0;
  bool has_pending = false;
};

struct TaskStepOutput {
  std::uint64_t step = 0;
  std::uint32_t task_id = 0;
  std::size_t sample_count = 0;
  double accuracy = 0.0;
  bool accuracy_valid = false;
  bool stale = true;
  double qs_opt = 0.0;
  double c = 0.0;
  std::uint64_t rate = 0;
  Density density;  // empty until the first successful estimation
  bool has_density = false;
};

// Install callback: (task id, tables, sizes, version).
using TableInstaller =
    std::function<void(std::uint32_t, std::vector<ScoreTable>, std::vector<std::size_t>,
                       std::uint64_t)>;
using RateApplier = std::function<void(std::uint32_t, std::uint64_t)>;

// Per-step closed loop: consume scores for the previous step's estimates,
// estimate from this step's samples, install new score tables, then adapt
// sampling rates toward the operator objective.
class Controller {
 public:
  Controller(std::vector<MonitoringTask> tasks, Objective objective,
             ControllerConfig cfg)
      : objective_(objective), cfg_(cfg) {
    for (MonitoringTask& t : tasks) {
      TaskState st;
      st.task = t;
      st.rate = initial_rate(tasks.size());
      states_.emplace(t.id, std::move(st));
    }
  }

  std::uint64_t initial_rate(std::size_t num_tasks) const {
    // warm-up: no fit yet; under a shared budget, start from an even split
    if (objective_.kind == ObjectiveKind::MaximizeAccuracy && num_tasks > 0)
      return std::max<std::uint64_t>(cfg_.min_rate,
                                     objective_.budget / num_tasks);
    return std::max<std::uint64_t>(cfg_.min_rate, cfg_.max_rate / 4);
  }

  const TaskState& state(std::uint32_t task_id) const { return states_.at(task_id); }
  std::map<std::uint32_t, TaskState>& states() { return states_; }

  // Normalizes one task's scores from a step report: builds fit points from
  // (size, empirical mean score), solves the constrained fit, and divides the
  // full-sample score by the fitted optimum.
  bool normalization_phase(TaskState& st, const TaskStepStats& stats) {
    if (!st.has_pending || !stats.has_tables || stats.counters.test_count == 0 ||
        stats.table_sizes.size() < 2)
      return false;
    if (stats.table_version != st.pending_version)
      throw std::logic_error("normalization_phase: score/table version skew");

    FitPoints points;
    double full_score = 0.0;
    std::size_t full_size = 0;
    double step_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < stats.table_sizes.size(); ++i) {
      double s = empirical_mean_score(stats.counters, i, st.pending_regs[i]);
      points.sizes.push_back(stats.table_sizes[i]);
      points.mean_scores.push_back(s);
      step_max = std::max(step_max, s);
      if (stats.table_sizes[i] > full_size) {
        full_size = stats.table_sizes[i];
        full_score = s;
      }
    }
    st.qs_history.push_back(step_max);
    while (st.qs_history.size() > static_cast<std::size_t>(cfg_.qs_window_steps))
      st.qs_history.pop_front();
    points.qs_max = *std::max_element(st.qs_history.begin(), st.qs_history.end());

    FitModel fit = fit_linear(points);
    st.accuracy = normalize_score(full_score, fit);
    st.accuracy_valid = true;
    st.fit = fit;
    st.has_fit = true;
    return true;
  }

  // Resource minimization: each task independently collects just enough.
  void adapt_minimize() {
    for (auto& [id, st] : states_) {
      if (!st.has_fit) continue;
      double target = st.task.target_accuracy.value_or(0.98);
      std::uint64_t want;
      try {
        want = predict_sample_size(st.fit, target, cfg_.min_rate, cfg_.max_rate);
      } catch (const NonPositiveOptimumError&) {
        continue;
      }
      st.rate = smooth(st.rate, want);
    }
  }

  // Max-min accuracy for a fixed budget: the common achievable accuracy is a
  // scalar root, bracketed by bisection over the predicted sample sizes.
  void adapt_maxmin() {
    std::uint64_t budget = objective_.budget;
    std::vector<TaskState*> fitted;
    for (auto& [id, st] : states_) {
      if (st.has_fit && st.fit.c > 0.0 && st.fit.qs_opt > 0.0) {
        fitted.push_back(&st);
      } else {
        budget -= std::min(budget, st.rate);  // warm-up tasks keep their rate
      }
    }
    if (fitted.empty()) return;
    if (budget < cfg_.min_rate * fitted.size())
      throw std::runtime_error("adapt_maxmin: budget below the per-task minimum");

    auto demand = [&](double a) {
      std::uint64_t total = 0;
      for (TaskState* st : fitted)
        total += predict_sample_size(st->fit, a, cfg_.min_rate, cfg_.max_rate);
      return total;
    };

    double lo = 1e-9, hi = 1.0 - 1e-12;
    if (demand(lo) > budget)
      throw std::runtime_error("adapt_maxmin: infeasible budget");
    for (int i = 0; i < 64 && hi - lo > 1e-6; ++i) {
      double mid = 0.5 * (lo + hi);
      if (demand(mid) <= budget)
        lo = mid;
      else
        hi = mid;
    }
    for (TaskState* st : fitted) {
      std::uint64_t alloc =
          predict_sample_size(st->fit, lo, cfg_.min_rate, cfg_.max_rate);
      // ramp up smoothly but never overshoot the allocation, so the step
      // total stays within budget
      std::uint64_t capped = std::max(
          cfg_.min_rate,
          std::min(alloc, static_cast<std::uint64_t>(
                              cfg_.rate_smoothing * static_cast<double>(
                                                        std::max<std::uint64_t>(st->rate, 1)))));
      st->rate = std::min(alloc, capped);
    }
  }

  // One full control step against a data-plane report. Per-task failures mark
  // that task stale and never abort the others.
  std::vector<TaskStepOutput> run_step(const StepReport& report,
                                       const TableInstaller& install,
                                       const RateApplier& apply_rate) {
    // group the exported samples per task
    std::map<std::uint32_t, std::vector<double>> samples;
    for (const FeatureEvent& ev : report.samples)
      samples[ev.task_id].push_back(static_cast<double>(ev.value));

    struct PerTask {
      TaskState* st;
      const std::vector<double>* values;
      const TaskStepStats* stats;
      std::optional<EstimationResult> estimation;
      bool normalized = false;
    };
    std::vector<PerTask> work;
    for (auto& [id, st] : states_) {
      PerTask pt{&st, nullptr, nullptr, std::nullopt, false};
      auto sit = samples.find(id);
      if (sit != samples.end()) pt.values = &sit->second;
      auto rit = report.per_task.find(id);
      if (rit != report.per_task.end()) pt.stats = &rit->second;
      work.push_back(pt);
    }

    // estimation and normalization are independent across tasks
    auto run_one = [&](PerTask& pt) {
      if (pt.stats) {
        try {
          pt.normalized = normalization_phase(*pt.st, *pt.stats);
        } catch (const std::logic_error&) {
          throw;
        } catch (const std::exception&) {
          pt.normalized = false;
        }
      }
      if (pt.values && pt.values->size() >= 8) {
        Rng rng(derive_seed(cfg_.seed, pt.st->task.id, report.step_index));
        try {
          pt.estimation = estimation_phase(*pt.values, cfg_.subsamples, cfg_, rng);
        } catch (const std::exception&) {
          pt.estimation.reset();
        }
      }
    };
    if (cfg_.parallel && work.size() > 1) {
      // worker pool sized to the hardware; more threads than cores only
      // thrash the estimator's FFT working sets
      unsigned workers = std::min<unsigned>(
          std::max(1u, std::thread::hardware_concurrency()),
          static_cast<unsigned>(work.size()));
      std::atomic<std::size_t> next{0};
      std::vector<std::future<void>> futs;
      for (unsigned w = 0; w < workers; ++w)
        futs.push_back(std::async(std::launch::async, [&]() {
          for (std::size_t i = next.fetch_add(1); i < work.size();
               i = next.fetch_add(1))
            run_one(work[i]);
        }));
      for (auto& f : futs) f.get();
    } else {
      for (PerTask& pt : work) run_one(pt);
    }

    // install the new estimates for scoring during the next step
    for (PerTask& pt : work) {
      TaskState& st = *pt.st;
      st.stale = !pt.normalized;
      if (pt.estimation) {
        const EstimationResult& er = *pt.estimation;
        std::vector<ScoreTable> tables;
        std::vector<std::size_t> sizes;
        std::vector<double> regs;
        for (const SizeEstimate& se : er.sizes) {
          unsigned exponent = auto_bin_exponent(se.mean.grid);
          ScoreTable table = build_score_table(se.mean, exponent, st.task.id);
          table.regularization = se.mean_reg;  // mean of per-estimate penalties
          tables.push_back(std::move(table));
          sizes.push_back(se.size);
          regs.push_back(se.mean_reg);
        }
        install(st.task.id, std::move(tables), sizes, report.step_index);
        st.pending_sizes = std::move(sizes);
        st.pending_regs = std::move(regs);
        st.pending_version = report.step_index;
        st.has_pending = true;
        st.density = er.full;
        st.has_density = true;
        st.last_sample_count = pt.values->size();
      } else {
        st.last_sample_count = pt.values ? pt.values->size() : 0;
        st.stale = true;  // previous density and fit carry forward
      }
    }

    // adaptation is the only cross-task barrier
    if (objective_.kind == ObjectiveKind::MinimizeResources)
      adapt_minimize();
    else
      adapt_maxmin();
    for (auto& [id, st] : states_) apply_rate(id, st.rate);

    std::vector<TaskStepOutput> out;
    for (auto& [id, st] : states_) {
      TaskStepOutput o;
      o.step = report.step_index;
      o.task_id = id;
      o.sample_count = st.last_sample_count;
      o.accuracy = st.accuracy;
      o.accuracy_valid = st.accuracy_valid;
      o.stale = st.stale;
      o.qs_opt = st.has_fit ? st.fit.qs_opt : 0.0;
      o.c = st.has_fit ? st.fit.c : 0.0;
      o.rate = st.rate;
      o.density = st.density;
      o.has_density = st.has_density;
      out.push_back(std::move(o));
    }
    return out;
  }

 private:
  std::uint64_t smooth(std::uint64_t prev, std::uint64_t want) const {
    double p = static_cast<double>(std::max<std::uint64_t>(prev, 1));
    double lo = p / cfg_.rate_smoothing_down;
    double hi = p * cfg_.rate_smoothing;
    double clamped = std::clamp(static_cast<double>(want), lo, hi);
    auto r = static_cast<std::uint64_t>(clamped);
    return std::clamp(r, cfg_.min_rate, cfg_.max_rate);
  }

  Objective objective_;
  ControllerConfig cfg_;
  std::map<std::uint32_t, TaskState> states_;
};

}  // namespace densimon
