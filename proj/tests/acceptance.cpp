// Acceptance suite: one criterion per section, each printing a PASS/FAIL line.
// Run `acceptance all` or `acceptance <n>`; exits nonzero if anything fails.

#include <atomic>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "densimon/config.hpp"
#include "densimon/controller.hpp"
#include "densimon/runner.hpp"
#include "densimon/traffic.hpp"
#include "oracles.hpp"

using namespace densimon;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool passed = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      notes.push_back(what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

int g_failures = 0;

void report(const Criterion& c) {
  std::printf("[%s] criterion %d: %s", c.passed ? "PASS" : "FAIL", c.id,
              c.name.c_str());
  if (!c.notes.empty()) {
    std::printf(" (");
    for (std::size_t i = 0; i < c.notes.size(); ++i)
      std::printf("%s%s", i ? "; " : "", c.notes[i].c_str());
    std::printf(")");
  }
  std::printf("\n");
  std::fflush(stdout);
  if (!c.passed) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

// Evaluates a density onto another grid and renormalizes, so estimates from
// per-sample grids can be compared against one fixed truth grid.
Density resample(const Density& d, const GridSpec& grid) {
  Density out;
  out.grid = grid;
  out.values.resize(grid.points);
  for (std::size_t i = 0; i < grid.points; ++i)
    out.values[i] = evaluate(d, grid.node(i));
  double mass = integral(out);
  for (double& v : out.values) v /= mass;
  out.bandwidth = d.bandwidth;
  out.train_size = d.train_size;
  return out;
}

GridSpec truth_grid(const GroundTruthSpec& spec) {
  double pad = 0.1 * (spec.hi - spec.lo);
  return GridSpec{spec.lo - pad, spec.hi + pad, std::size_t{1} << 14};
}

Density estimate_from(const GroundTruthSpec& spec, std::size_t n, Rng& rng) {
  Sample s = draw_sample(spec, n, rng);
  BandwidthResult bw = select_bandwidth(s);
  return estimate_density(s, bw.value, default_grid(s, bw.value));
}

// Parallel map over trial indices; each trial seeds its own generator, so the
// result does not depend on scheduling.
template <typename F>
std::vector<double> run_trials(int trials, F&& body) {
  std::vector<double> results(trials);
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> futs;
  std::atomic<int> next{0};
  for (unsigned w = 0; w < workers; ++w)
    futs.push_back(std::async(std::launch::async, [&]() {
      for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1))
        results[static_cast<std::size_t>(t)] = body(t);
    }));
  for (auto& f : futs) f.get();
  return results;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

const char* truth_name(int i) {
  static const char* names[] = {"packet_size", "inter_arrival_time",
                                "flowlet_packets", "flowlet_bytes",
                                "flowlet_duration"};
  return names[i];
}

// ---------------------------------------------------------------------------
// 1. Estimation convergence across the stock feature distributions
// ---------------------------------------------------------------------------

Criterion criterion1() {
  Criterion c{1, "estimation error decreases at the expected rate"};
  auto started = std::chrono::steady_clock::now();
  std::vector<GroundTruthSpec> truths = standard_feature_truths();
  const std::size_t sizes[] = {1000, 10000, 100000};
  constexpr int kTrials = 100;

  for (int d = 0; d < 5; ++d) {
    const GroundTruthSpec& spec = truths[d];
    GridSpec grid = truth_grid(spec);
    Density truth = ground_truth_density(spec, grid);
    double mise[3];
    for (int si = 0; si < 3; ++si) {
      std::size_t n = sizes[si];
      std::vector<double> errs = run_trials(kTrials, [&](int t) {
        Rng rng(derive_seed(1001, d * 16 + si, t));
        return ise(resample(estimate_from(spec, n, rng), grid), truth);
      });
      mise[si] = mean(errs);
    }
    bool decreasing = mise[0] > mise[1] && mise[1] > mise[2];
    // least-squares slope of log10(mise) against log10(n)
    double xs[3] = {3.0, 4.0, 5.0};
    double ys[3] = {std::log10(mise[0]), std::log10(mise[1]), std::log10(mise[2])};
    double slope = ((ys[2] - ys[0]) * (xs[2] - xs[0]) +
                    (ys[1] - ys[0]) * (xs[1] - xs[0])) /
                   ((xs[2] - xs[0]) * (xs[2] - xs[0]) +
                    (xs[1] - xs[0]) * (xs[1] - xs[0]));
    c.require(decreasing, fmt("%s: mean ISE not strictly decreasing", truth_name(d)));
    c.require(slope >= -1.0 && slope <= -0.6,
              fmt("%s: slope %.2f outside [-1.0, -0.6]", truth_name(d), slope));
    c.note(fmt("%s slope %.2f", truth_name(d), slope));
  }
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                 started)
                       .count();
  c.require(elapsed < 600.0, fmt("runtime %.0fs exceeds 10 min", elapsed));
  c.note(fmt("%.0fs", elapsed));
  return c;
}

// ---------------------------------------------------------------------------
// 2. Reliability of empirical scores against the oracle expected score
// ---------------------------------------------------------------------------

Criterion criterion2() {
  Criterion c{2, "empirical scores are reliable once test >= train"};
  std::vector<GroundTruthSpec> truths = standard_feature_truths();
  constexpr std::size_t kTrain = 10000;
  const double ratios[] = {0.1, 1.0, 10.0, 100.0};
  constexpr int kTrials = 100;

  for (int d = 0; d < 5; ++d) {
    const GroundTruthSpec& spec = truths[d];
    GridSpec grid = truth_grid(spec);
    Density truth = ground_truth_density(spec, grid);
    double medians[4];
    for (int ri = 0; ri < 4; ++ri) {
      auto test_n = static_cast<std::size_t>(kTrain * ratios[ri]);
      std::vector<double> errs = run_trials(kTrials, [&](int t) {
        Rng rng(derive_seed(2002, d * 8 + ri, t));
        Density est = resample(estimate_from(spec, kTrain, rng), grid);
        double reg = regularization(est);
        double expected = expected_score(est, truth);
        double reward_sum = 0.0;
        for (std::size_t i = 0; i < test_n; ++i)
          reward_sum += evaluate(est, draw_ground_truth(spec, rng));
        double empirical = 2.0 * reward_sum / static_cast<double>(test_n) - reg;
        return std::abs(empirical - expected) / std::abs(expected);
      });
      medians[ri] = median(errs);
      if (ratios[ri] >= 1.0) {
        int ok = 0;
        for (double e : errs)
          if (e <= 0.10) ++ok;
        c.require(ok >= 90, fmt("%s ratio %g: only %d/100 within 10%%",
                                truth_name(d), ratios[ri], ok));
      }
    }
    bool monotone = medians[0] > medians[1] && medians[1] > medians[2] &&
                    medians[2] > medians[3];
    c.require(monotone, fmt("%s: medians not decreasing (%.4f %.4f %.4f %.4f)",
                            truth_name(d), medians[0], medians[1], medians[2],
                            medians[3]));
    c.note(fmt("%s med@1x %.3f", truth_name(d), medians[1]));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 3. Accuracy of score normalization, end to end through binned tables
// ---------------------------------------------------------------------------

double normalization_trial(const GroundTruthSpec& spec, const GridSpec& grid,
                           const Density& truth, int k, int trial) {
  Rng rng(derive_seed(3003, static_cast<std::uint64_t>(k) * 101 + spec.components.size(),
                      trial));
  Sample s = draw_sample(spec, 10000, rng);
  ControllerConfig cfg;
  EstimationResult er = estimation_phase(s.values, k, cfg, rng);

  std::vector<ScoreTable> tables;
  for (const SizeEstimate& se : er.sizes)
    tables.push_back(build_score_table(se.mean, auto_bin_exponent(se.mean.grid)));
  ScoreCounters counters;
  counters.reset(tables.size());
  constexpr std::size_t kTest = 100000;
  for (std::size_t i = 0; i < kTest; ++i)
    score_update(tables, counters,
                 static_cast<std::int64_t>(std::llround(draw_ground_truth(spec, rng))));

  FitPoints pts;
  double full_score = 0.0;
  for (std::size_t i = 0; i < er.sizes.size(); ++i) {
    double sc = empirical_mean_score(counters, i, er.sizes[i].mean_reg);
    pts.sizes.push_back(er.sizes[i].size);
    pts.mean_scores.push_back(sc);
    if (er.sizes[i].size == s.values.size()) full_score = sc;
  }
  pts.qs_max = *std::max_element(pts.mean_scores.begin(), pts.mean_scores.end());
  double reported = normalize_score(full_score, fit_linear(pts));
  double actual = true_accuracy(resample(er.full, grid), truth);
  return std::abs(reported - actual);
}

Criterion criterion3() {
  Criterion c{3, "reported accuracy tracks the true accuracy"};
  std::vector<GroundTruthSpec> truths = standard_feature_truths();
  constexpr int kTrials = 100;
  for (int d = 0; d < 5; ++d) {
    const GroundTruthSpec& spec = truths[d];
    GridSpec grid = truth_grid(spec);
    Density truth = ground_truth_density(spec, grid);
    double err6 = mean(run_trials(kTrials, [&](int t) {
      return normalization_trial(spec, grid, truth, 6, t);
    }));
    double err3 = mean(run_trials(kTrials, [&](int t) {
      return normalization_trial(spec, grid, truth, 3, t);
    }));
    c.require(err6 < 0.05,
              fmt("%s: mean error %.4f >= 0.05 with 5 extra sizes", truth_name(d), err6));
    c.require(err3 < 0.15,
              fmt("%s: mean error %.4f >= 0.15 with 2 extra sizes", truth_name(d), err3));
    c.note(fmt("%s %.3f/%.3f", truth_name(d), err6, err3));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 4. Closed-loop resource minimization on stationary traffic
// ---------------------------------------------------------------------------

GroundTruthSpec loop_size_truth() {
  GroundTruthSpec spec;
  spec.feature = Feature::PacketSize;
  spec.lo = 0.0;
  spec.hi = 1600.0;
  spec.components = {
      {DistFamily::Spike, 64.0, 25.0, 0.42},
      {DistFamily::Spike, 1480.0, 50.0, 0.28},
      {DistFamily::Lognormal, std::log(420.0), 0.55, 0.30},
  };
  return spec;
}

const char* kLoopSizeDist = R"(
    packet_size {
      support 0 1600
      spike 64 25 weight 0.42
      spike 1480 50 weight 0.28
      lognormal 6.0402547317441945 0.55 weight 0.30
    })";

Criterion criterion4() {
  Criterion c{4, "resource minimization holds the target accuracy"};
  GroundTruthSpec spec = loop_size_truth();
  GridSpec grid = truth_grid(spec);
  Density truth = ground_truth_density(spec, grid);

  // oracle-optimal rate: a fit on expected scores from the known truth
  FitPoints pts;
  for (std::size_t n : {250, 500, 1000, 2000, 4000, 8000}) {
    std::vector<double> scores = run_trials(30, [&](int t) {
      Rng rng(derive_seed(4004, n, t));
      return expected_score(resample(estimate_from(spec, n, rng), grid), truth);
    });
    pts.sizes.push_back(n);
    pts.mean_scores.push_back(mean(scores));
  }
  pts.qs_max = *std::max_element(pts.mean_scores.begin(), pts.mean_scores.end());
  std::size_t oracle_rate = predict_sample_size(fit_linear(pts), 0.98);
  c.note(fmt("oracle rate %zu", oracle_rate));

  std::string config = std::string(R"(
seed 44
steps 50
step_length 1s
subsamples 6
min_rate 64
max_rate 16384
objective minimize
target 0.98
trace {
  duration 50s
  stream main {
    src 42.0.0.0/8
    flows 32
)") + kLoopSizeDist + R"(
    inter_arrival_time { support 1 400 lognormal 3.0 0.35 weight 1.0 }
  }
}
tasks { switch1 { src(42.0.0.0/8) { packet_size } } }
)";
  RunResult res = run(parse_config(config));

  double rate_sum = 0;
  int n_steps = 0, in_2 = 0, in_4 = 0;
  double worst = 0.0;
  for (const TaskStepOutput& o : res.outputs) {
    if (o.step < 5) continue;  // warm-up
    ++n_steps;
    rate_sum += static_cast<double>(o.rate);
    double acc = true_accuracy(resample(o.density, grid), truth);
    double dev = std::abs(acc - 0.98);
    worst = std::max(worst, dev);
    if (dev <= 0.02) ++in_2;
    if (dev <= 0.04) ++in_4;
  }
  double mean_rate = rate_sum / n_steps;
  c.require(in_4 == n_steps, fmt("|accuracy-0.98| > 0.04 at %d steps", n_steps - in_4));
  c.require(in_2 * 5 >= n_steps * 4,
            fmt("only %d/%d steps within +-0.02", in_2, n_steps));
  c.require(mean_rate <= 1.25 * static_cast<double>(oracle_rate),
            fmt("mean rate %.0f above 1.25x oracle %zu", mean_rate, oracle_rate));
  c.note(fmt("mean rate %.0f, worst dev %.3f, in band %d/%d", mean_rate, worst, in_2,
             n_steps));
  return c;
}

// ---------------------------------------------------------------------------
// 5. Max-min adaptation beats a static equal split
// ---------------------------------------------------------------------------

std::vector<GroundTruthSpec> maxmin_truths() {
  std::vector<GroundTruthSpec> out(4);
  for (GroundTruthSpec& t : out) {
    t.feature = Feature::PacketSize;
    t.lo = 0.0;
    t.hi = 1600.0;
  }
  out[0].components = {{DistFamily::Lognormal, 5.7, 0.7, 1.0}};
  out[1].components = {{DistFamily::TruncNormal, 800.0, 200.0, 1.0}};
  out[2].components = {{DistFamily::Spike, 64.0, 25.0, 0.42},
                       {DistFamily::Spike, 1480.0, 50.0, 0.28},
                       {DistFamily::Lognormal, 6.04, 0.55, 0.30}};
  out[3].components = {{DistFamily::Lognormal, 6.0, 0.9, 0.80},
                       {DistFamily::Spike, 300.0, 4.0, 0.07},
                       {DistFamily::Spike, 900.0, 5.0, 0.07},
                       {DistFamily::Spike, 1480.0, 6.0, 0.06}};
  return out;
}

const char* kMaxminTrace = R"(
trace {
  duration 40s
  stream easy1 {
    src 10.0.0.0/8
    flows 16
    packet_size { support 0 1600 lognormal 5.7 0.7 weight 1.0 }
    inter_arrival_time { support 1 400 lognormal 4.38 0.35 weight 1.0 }
  }
  stream easy2 {
    src 20.0.0.0/8
    flows 16
    packet_size { support 0 1600 truncnormal 800 200 weight 1.0 }
    inter_arrival_time { support 1 400 lognormal 4.38 0.35 weight 1.0 }
  }
  stream medium {
    src 30.0.0.0/8
    flows 16
    packet_size {
      support 0 1600
      spike 64 25 weight 0.42
      spike 1480 50 weight 0.28
      lognormal 6.04 0.55 weight 0.30
    }
    inter_arrival_time { support 1 400 lognormal 4.38 0.35 weight 1.0 }
  }
  stream hard {
    src 40.0.0.0/8
    flows 16
    packet_size {
      support 0 1600
      lognormal 6.0 0.9 weight 0.80
      spike 300 4 weight 0.07
      spike 900 5 weight 0.07
      spike 1480 6 weight 0.06
    }
    inter_arrival_time { support 1 400 lognormal 4.38 0.35 weight 1.0 }
  }
}
tasks {
  switch1 {
    src(10.0.0.0/8) { packet_size }
    src(20.0.0.0/8) { packet_size }
    src(30.0.0.0/8) { packet_size }
    src(40.0.0.0/8) { packet_size }
  }
}
)";

double maxmin_run(std::uint64_t budget, bool adaptive, Criterion& c) {
  char head[512];
  std::snprintf(head, sizeof head, R"(
seed 9
steps 40
step_length 1s
subsamples 6
min_rate %llu
max_rate %llu
objective maximize budget %llu
)",
                static_cast<unsigned long long>(adaptive ? 64 : budget / 4),
                static_cast<unsigned long long>(adaptive ? budget : budget / 4),
                static_cast<unsigned long long>(budget));
  RunResult res = run(parse_config(std::string(head) + kMaxminTrace));

  std::vector<GroundTruthSpec> truths = maxmin_truths();
  GridSpec grid{-720.0, 2320.0, std::size_t{1} << 14};
  std::vector<Density> tds;
  for (const GroundTruthSpec& t : truths) tds.push_back(ground_truth_density(t, grid));

  std::map<std::uint64_t, double> step_min;
  std::map<std::uint64_t, std::uint64_t> step_total_rate;
  for (const TaskStepOutput& o : res.outputs) {
    if (o.step < 6 || !o.has_density) continue;
    double acc = true_accuracy(resample(o.density, grid), tds[o.task_id - 1]);
    auto [it, fresh] = step_min.try_emplace(o.step, acc);
    if (!fresh) it->second = std::min(it->second, acc);
    step_total_rate[o.step] += o.rate;
  }
  for (const auto& [step, total] : step_total_rate)
    c.require(total <= budget,
              fmt("rates exceed budget at step %llu", (unsigned long long)step));
  double sum = 0;
  for (const auto& [step, m] : step_min) sum += m;
  return sum / static_cast<double>(step_min.size());
}

Criterion criterion5() {
  Criterion c{5, "adaptive max-min beats static equal split"};
  constexpr std::uint64_t kBudget = 1600;
  double adaptive = maxmin_run(kBudget, true, c);
  double fixed = maxmin_run(kBudget, false, c);
  c.require(adaptive > fixed,
            fmt("adaptive %.4f not above static %.4f", adaptive, fixed));
  c.note(fmt("min accuracy: adaptive %.4f vs static %.4f, margin %+.4f", adaptive,
             fixed, adaptive - fixed));
  return c;
}

// ---------------------------------------------------------------------------
// 6. Exact algebra: propriety, distance identity, mean-of-scores, fit
//    recovery, prediction round trips, bin masking
// ---------------------------------------------------------------------------

Criterion criterion6() {
  Criterion c{6, "exact algebraic identities hold"};
  Rng rng(6006);
  GridSpec grid{0.0, 2000.0, std::size_t{1} << 12};

  auto random_density = [&](std::uint64_t seed) {
    Rng r(seed);
    Density d;
    d.grid = grid;
    d.values.resize(grid.points);
    for (double& v : d.values) v = r.uniform() + 0.01;
    double mass = integral(d);
    for (double& v : d.values) v /= mass;
    d.bandwidth = 1.0;
    d.train_size = 1;
    return d;
  };

  // propriety and the score-distance identity
  for (int i = 0; i < 50; ++i) {
    Density t = random_density(rng.bits());
    Density e = random_density(rng.bits());
    double self = expected_score(t, t);
    double cross = expected_score(e, t);
    c.require(self >= cross, "propriety violated");
    c.require(std::abs((self - cross) - ise(e, t)) <= 1e-9,
              "distance identity off by more than 1e-9");
  }

  // mean-of-scores identity on grid nodes
  {
    std::vector<Density> models;
    std::vector<double> regs;
    for (int i = 0; i < 5; ++i) {
      models.push_back(random_density(rng.bits()));
      regs.push_back(regularization(models.back()));
    }
    Density mixed = mean_density(models);
    double mean_reg = 0;
    for (double r : regs) mean_reg += r;
    mean_reg /= static_cast<double>(regs.size());
    for (std::size_t g = 0; g < grid.points; g += 3) {
      double mean_reward = 0, mean_score = 0;
      for (std::size_t i = 0; i < models.size(); ++i) {
        mean_reward += 2.0 * models[i].values[g];
        mean_score += 2.0 * models[i].values[g] - regs[i];
      }
      mean_reward /= static_cast<double>(models.size());
      mean_score /= static_cast<double>(models.size());
      c.require(2.0 * mixed.values[g] == mean_reward,
                "reward term of the mean-density identity not exact");
      c.require(std::abs((2.0 * mixed.values[g] - mean_reg) - mean_score) <= 1e-12,
                "mean-of-scores identity off by more than 1e-12");
    }
  }

  // fit recovery, linear and free-exponent
  for (int trial = 0; trial < 60; ++trial) {
    double q = -1.0 + 4.0 * rng.uniform();
    double cc = 0.5 + 12.0 * rng.uniform();
    FitPoints p;
    for (std::size_t n : {120, 260, 700, 1700, 4100}) {
      p.sizes.push_back(n);
      p.mean_scores.push_back(q - cc * std::pow(static_cast<double>(n), -0.8));
    }
    p.qs_max = *std::max_element(p.mean_scores.begin(), p.mean_scores.end());
    FitModel lin = fit_linear(p);
    c.require(std::abs(lin.qs_opt - q) < 1e-6 && std::abs(lin.c - cc) < 1e-6 &&
                  lin.residual < 1e-6,
              "linear fit recovery misses 1e-6");

    double r = 0.2 + 1.5 * rng.uniform();
    FitPoints pn;
    for (std::size_t n : {120, 260, 700, 1700, 4100}) {
      pn.sizes.push_back(n);
      pn.mean_scores.push_back(q - cc * std::pow(static_cast<double>(n), -r));
    }
    pn.qs_max = *std::max_element(pn.mean_scores.begin(), pn.mean_scores.end());
    FitModel non = fit_nonlinear(pn);
    c.require(std::abs(non.r - r) < 1e-3 &&
                  std::abs(non.qs_opt - q) < 1e-3 * std::max(1.0, std::abs(q)),
              fmt("free-exponent recovery misses 1e-3 (r %.4f vs %.4f)", non.r, r));
    c.require(non.r > 0.0 && non.c >= 0.0 && non.qs_opt >= pn.qs_max - 1e-9,
              "fit constraints violated");
  }

  // prediction round trips
  {
    FitModel m{2.0, 10.0, 0.8, 0.0};
    c.require(predict_score(m, 1024) == 0.98046875, "closed-form prediction wrong");
    c.require(predict_sample_size(m, 0.98046875) == 1024, "inverse prediction wrong");
    for (double a = 0.02; a < 0.999; a += 0.00173) {
      std::size_t n = predict_sample_size(m, a);
      c.require(predict_score(m, n) >= a - 1e-12, "round trip undershoots");
    }
  }

  // power-of-2 bin masking vs exhaustive arithmetic reference
  {
    GridSpec bg{0.0, 60000.0, std::size_t{1} << 12};
    Density d = ground_truth_density(standard_feature_truths()[1], bg);
    for (unsigned e : {4u, 6u, 8u, 9u}) {
      ScoreTable t = build_score_table(d, e);
      const std::int64_t width = std::int64_t{1} << e;
      for (std::int64_t key = -500; key < 66000; ++key) {
        std::int64_t bin = key >= t.origin ? (key - t.origin) / width : -1;
        double want = bin >= 0 && bin < static_cast<std::int64_t>(t.rewards.size())
                          ? t.rewards[static_cast<std::size_t>(bin)]
                          : 0.0;
        if (t.lookup(key) != want) {
          c.require(false, fmt("bin lookup mismatch at key %lld, exponent %u",
                               static_cast<long long>(key), e));
          break;
        }
      }
      // all keys inside one bin share the masked reward
      std::int64_t probe = t.origin + 5 * width;
      for (std::int64_t k = probe; k < probe + width; ++k)
        c.require(t.lookup(k) == t.lookup(probe), "mask does not ignore low bits");
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// 7. Determinism and conservation in the data plane
// ---------------------------------------------------------------------------

Criterion criterion7() {
  Criterion c{7, "data plane is deterministic and conserves events"};

  // a flowlet-heavy trace exercised twice through the full loop
  const char* config = R"(
seed 31
steps 12
step_length 1s
subsamples 4
min_rate 64
max_rate 2048
objective minimize
target 0.9
trace {
  duration 12s
  stream bursts {
    src 42.0.0.0/8
    flows 48
    packet_size {
      support 0 1600
      spike 64 25 weight 0.5
      lognormal 6.04 0.55 weight 0.5
    }
    flowlet_packets { support 0 600 lognormal 2.08 0.95 weight 0.7 lognormal 4.09 0.8 weight 0.3 }
    flowlet_duration { support 0 400000 lognormal 9.99 0.75 weight 0.6 truncnormal 900 350 weight 0.4 }
  }
}
tasks {
  switch1 {
    src(42.0.0.0/8) { flowlet_bytes packet_size }
  }
}
)";
  RunConfig cfg = parse_config(config);
  RunResult a = run(cfg);
  RunResult b = run(cfg);
  c.require(a.outputs.size() == b.outputs.size(), "replay changed record count");
  for (std::size_t i = 0; i < a.outputs.size(); ++i) {
    const TaskStepOutput& x = a.outputs[i];
    const TaskStepOutput& y = b.outputs[i];
    bool same = x.rate == y.rate && x.sample_count == y.sample_count &&
                x.accuracy == y.accuracy && x.stale == y.stale &&
                x.density.values == y.density.values;
    if (!same) {
      c.require(false, fmt("replay diverges at record %zu", i));
      break;
    }
  }

  // conservation per task per step, on the raw pipeline
  {
    std::vector<Packet> packets = generate_trace(*cfg.trace_spec, cfg.seed);
    std::vector<TernaryRule> rules = compile_rules(cfg.tasks);
    std::map<std::uint32_t, Feature> feats;
    for (const TaskDecl& t : cfg.tasks) feats.emplace(t.id, t.feature);
    Pipeline pipe(rules, feats, PipelineConfig{});
    for (const TaskDecl& t : cfg.tasks) pipe.set_rate(t.id, 100);
    pipe.end_of_step();
    std::uint64_t boundary = 1'000'000'000;
    std::uint64_t total_scored = 0, total_test = 0;
    auto check_step = [&]() {
      StepReport r = pipe.end_of_step();
      for (const auto& [task, stats] : r.per_task) {
        c.require(stats.extracted == stats.sampled + stats.scored,
                  "extracted != sampled + scored");
        total_scored += stats.scored;
        total_test += stats.counters.test_count;
      }
    };
    for (const Packet& p : packets) {
      if (p.ts_ns >= boundary) {
        check_step();
        boundary += 1'000'000'000;
      }
      pipe.process(p);
    }
    pipe.flush_flowlets();
    check_step();
    c.require(total_test == 0, "counters moved with no tables installed");
    c.require(total_scored > 0, "no scored traffic seen");
  }

  // flowlet segmentation against the offline reference
  {
    std::vector<Packet> packets = generate_trace(*cfg.trace_spec, 77);
    auto reference = oracles::reference_segmentation(packets, 500'000'000);
    TernaryRule all;
    all.task_ids = {1};
    Pipeline pipe({all}, {{1, Feature::FlowletPackets}}, PipelineConfig{});
    pipe.set_rate(1, packets.size() + 1);
    pipe.end_of_step();
    for (const Packet& p : packets) pipe.process(p);
    pipe.flush_flowlets();
    StepReport r = pipe.end_of_step();
    c.require(pipe.flowlet_collisions() == 0, "unexpected collisions");
    std::uint64_t ref_count = 0, ref_packets = 0, got_packets = 0;
    for (const auto& [flow, bursts] : reference) {
      ref_count += bursts.size();
      for (const oracles::RefFlowlet& f : bursts) ref_packets += f.packets;
    }
    for (const FeatureEvent& ev : r.samples)
      got_packets += static_cast<std::uint64_t>(ev.value);
    c.require(r.samples.size() == ref_count,
              fmt("flowlet count %zu vs reference %llu", r.samples.size(),
                  (unsigned long long)ref_count));
    c.require(got_packets == ref_packets && ref_packets == packets.size(),
              "flowlet packet totals do not balance");
  }

  // exact collision counting on a constructed workload
  {
    TernaryRule all;
    all.task_ids = {1};
    PipelineConfig pc;
    pc.flowlet_slots = 1;
    Pipeline pipe({all}, {{1, Feature::FlowletDuration}}, pc);
    pipe.set_rate(1, 100);
    pipe.end_of_step();
    auto mk = [](std::uint64_t ts, std::uint32_t src) {
      return Packet{ts, src, 1, 6, 1, 1, 100, false};
    };
    constexpr std::uint64_t kMs = 1'000'000;
    pipe.process(mk(0, 0x01010101));
    std::uint64_t expected = 0;
    for (int i = 1; i <= 40; ++i) {
      pipe.process(mk(i * 2 * kMs, 0x02020202));      // collides with live flow
      pipe.process(mk(i * 2 * kMs + kMs, 0x01010101));  // keeps it live
      ++expected;
    }
    StepReport r = pipe.end_of_step();
    c.require(r.collisions == expected,
              fmt("collision counter %llu != %llu", (unsigned long long)r.collisions,
                  (unsigned long long)expected));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 8. Performance properties
// ---------------------------------------------------------------------------

Criterion criterion8() {
  Criterion c{8, "estimation and fitting meet the time budgets"};
  GroundTruthSpec spec = loop_size_truth();
  Rng rng(8008);
  Sample sample = draw_sample(spec, 100000, rng);

  // single estimate: bandwidth selection plus FFT estimation under 500 ms
  double best_ms = 1e18;
  for (int rep = 0; rep < 3; ++rep) {
    auto t0 = std::chrono::steady_clock::now();
    BandwidthResult bw = select_bandwidth(sample);
    Density d = estimate_density(sample, bw.value, default_grid(sample, bw.value));
    auto t1 = std::chrono::steady_clock::now();
    best_ms = std::min(best_ms,
                       std::chrono::duration<double, std::milli>(t1 - t0).count());
    c.require(d.train_size == 100000, "estimate lost samples");
  }
  c.require(best_ms < 500.0, fmt("100k estimate took %.0f ms", best_ms));
  c.note(fmt("100k estimate %.0f ms", best_ms));

  // normalization fit under 10 ms
  {
    FitPoints pts;
    for (std::size_t n : {100000, 50000, 33333, 25000, 20000, 16666}) {
      pts.sizes.push_back(n);
      pts.mean_scores.push_back(2.0 - 10.0 * std::pow(static_cast<double>(n), -0.8));
    }
    pts.qs_max = *std::max_element(pts.mean_scores.begin(), pts.mean_scores.end());
    auto t0 = std::chrono::steady_clock::now();
    FitModel m = fit_linear(pts);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    c.require(m.qs_opt > 0, "fit failed");
    c.require(ms < 10.0, fmt("fit took %.2f ms", ms));
    c.note(fmt("fit %.3f ms", ms));
  }

  // concurrent estimation across 16 tasks
  {
    std::vector<Sample> samples;
    for (int i = 0; i < 16; ++i) {
      Rng r(derive_seed(8009, i));
      samples.push_back(draw_sample(spec, 100000, r));
    }
    auto estimate_one = [&](const Sample& s) {
      BandwidthResult bw = select_bandwidth(s);
      return estimate_density(s, bw.value, default_grid(s, bw.value));
    };
    unsigned cores = std::thread::hardware_concurrency();
    double speedup = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      for (const Sample& s : samples) (void)estimate_one(s);
      auto t1 = std::chrono::steady_clock::now();
      std::atomic<std::size_t> next{0};
      std::vector<std::future<void>> futs;
      for (unsigned w = 0; w < cores; ++w)
        futs.push_back(std::async(std::launch::async, [&]() {
          for (std::size_t i = next.fetch_add(1); i < samples.size();
               i = next.fetch_add(1))
            (void)estimate_one(samples[i]);
        }));
      for (auto& f : futs) f.get();
      auto t2 = std::chrono::steady_clock::now();
      double serial = std::chrono::duration<double>(t1 - t0).count();
      double parallel = std::chrono::duration<double>(t2 - t1).count();
      speedup = std::max(speedup, serial / parallel);
    }
    // the 4x bound presumes at least 8 cores; scale it on smaller hosts
    double required = cores >= 8 ? 4.0 : std::max(1.2, 0.55 * cores);
    c.require(speedup >= required,
              fmt("speedup %.2fx below %.2fx on %u cores", speedup, required, cores));
    c.note(fmt("16-task speedup %.2fx on %u cores (bound %.2fx)", speedup, cores,
               required));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::string which = argc > 1 ? argv[1] : "all";
  std::vector<Criterion (*)()> all = {criterion1, criterion2, criterion3, criterion4,
                                      criterion5, criterion6, criterion7, criterion8};
  if (which == "all") {
    for (auto* fn : all) report(fn());
  } else {
    int idx = std::atoi(which.c_str());
    if (idx < 1 || idx > static_cast<int>(all.size())) {
      std::fprintf(stderr, "usage: acceptance [1-%zu|all]\n", all.size());
      return 2;
    }
    report(all[static_cast<std::size_t>(idx - 1)]());
  }
  return g_failures == 0 ? 0 : 1;
}
