#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

namespace densimon {

struct NonPositiveOptimumError : std::runtime_error {
  NonPositiveOptimumError()
      : std::runtime_error("optimal score is not positive; normalized score undefined") {}
};

// Observed (sample size, mean score) pairs for one task, plus the highest
// score seen for any of its estimates.
struct FitPoints {
  std::vector<std::size_t> sizes;
  std::vector<double> mean_scores;
  double qs_max = -std::numeric_limits<double>::infinity();

  void validate(std::size_t min_points) const {
    if (sizes.size() != mean_scores.size())
      throw std::invalid_argument("FitPoints: size/score length mismatch");
    if (sizes.size() < min_points)
      throw std::invalid_argument("FitPoints: need at least " +
                                  std::to_string(min_points) + " points");
    std::set<std::size_t> uniq(sizes.begin(), sizes.end());
    if (uniq.size() != sizes.size())
      throw std::invalid_argument("FitPoints: sizes must be pairwise distinct");
    if (*uniq.begin() == 0)
      throw std::invalid_argument("FitPoints: sizes must be positive");
  }
};

// Fitted approximation of the score curve: score(n) = qs_opt - c * n^(-r).
struct FitModel {
  double qs_opt = 0.0;
  double c = 0.0;
  double r = 0.8;
  double residual = 0.0;
};

namespace detail {

inline double fit_residual(const FitPoints& p, const std::vector<double>& u,
                           double q, double c) {
  double ss = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double e = q - c * u[i] - p.mean_scores[i];
    ss += e * e;
  }
  return std::sqrt(ss);
}

}  // namespace detail

// Least squares for (qs_opt, c) with qs_opt >= qs_max and c >= 0, at a fixed
// decay exponent. Two unknowns and two inequality constraints admit an exact
// active-set enumeration: solve unconstrained, then each constraint pinned,
// then both, and keep the best feasible candidate.
inline FitModel fit_with_exponent(const FitPoints& p, double r) {
  p.validate(2);
  const std::size_t m = p.sizes.size();
  std::vector<double> u(m);
  for (std::size_t i = 0; i < m; ++i)
    u[i] = std::pow(static_cast<double>(p.sizes[i]), -r);

  double bound = p.qs_max;
  for (double s : p.mean_scores) bound = std::max(bound, s);

  double mu = 0.0, ms = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mu += u[i];
    ms += p.mean_scores[i];
  }
  mu /= static_cast<double>(m);
  ms /= static_cast<double>(m);
  double suu = 0.0, sus = 0.0, uu = 0.0, uq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    sus += (u[i] - mu) * (p.mean_scores[i] - ms);
    uu += u[i] * u[i];
    uq += u[i] * (bound - p.mean_scores[i]);
  }

  struct Candidate {
    double q, c;
  };
  std::vector<Candidate> cands;
  if (suu > 0.0) {
    double c0 = -sus / suu;
    cands.push_back({ms + c0 * mu, c0});           // both constraints inactive
  }
  cands.push_back({bound, uu > 0.0 ? uq / uu : 0.0});  // qs_opt pinned
  cands.push_back({std::max(ms, bound), 0.0});         // c pinned
  cands.push_back({bound, 0.0});                       // both pinned

  const double tol = 1e-12 * (1.0 + std::abs(bound));
  FitModel best;
  double best_res = std::numeric_limits<double>::infinity();
  for (const Candidate& cd : cands) {
    if (cd.c < -tol || cd.q < bound - tol) continue;
    double q = std::max(cd.q, bound);
    double c = std::max(cd.c, 0.0);
    double res = detail::fit_residual(p, u, q, c);
    if (res < best_res) {
      best_res = res;
      best = FitModel{q, c, r, res};
    }
  }
  return best;
}

// The asymptotic decay exponent of the mean integrated square error for a
// kernel estimate at optimal bandwidth is -4/5, so the score curve is fitted
// with that exponent fixed.
inline FitModel fit_linear(const FitPoints& p) { return fit_with_exponent(p, 0.8); }

// Generalized fit with the decay rate unknown: golden-section search over
// r in [0.1, 2.0], exact constrained fit inside.
inline FitModel fit_nonlinear(const FitPoints& p) {
  p.validate(3);
  constexpr double kInvPhi = 0.6180339887498949;
  double a = 0.1, b = 2.0;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = fit_with_exponent(p, x1).residual;
  double f2 = fit_with_exponent(p, x2).residual;
  for (int i = 0; i < 90; ++i) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = fit_with_exponent(p, x1).residual;
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = fit_with_exponent(p, x2).residual;
    }
  }
  return fit_with_exponent(p, (a + b) / 2.0);
}

// Score divided by the approximated optimal score; 1 means optimal.
inline double normalize_score(double score, const FitModel& model) {
  if (!(model.qs_opt > 0.0)) throw NonPositiveOptimumError{};
  return score / model.qs_opt;
}

// Predicted normalized score for a training sample of size n.
inline double predict_score(const FitModel& model, std::size_t n) {
  return 1.0 - model.c / model.qs_opt *
                   std::pow(static_cast<double>(n), -model.r);
}

constexpr std::size_t kDefaultSampleCap = std::size_t{1} << 40;

// Inverse of predict_score: smallest sample size whose predicted normalized
// score reaches `accuracy`, clamped to [min_n, max_n].
inline std::size_t predict_sample_size(const FitModel& model, double accuracy,
                                       std::size_t min_n = 1,
                                       std::size_t max_n = kDefaultSampleCap) {
  if (!(accuracy > 0.0) || accuracy >= 1.0)
    throw std::invalid_argument("predict_sample_size: accuracy must be in (0, 1)");
  if (model.c == 0.0) return min_n;
  if (!(model.qs_opt > 0.0)) throw NonPositiveOptimumError{};
  double n = std::pow(model.c / (model.qs_opt * (1.0 - accuracy)), 1.0 / model.r);
  if (!std::isfinite(n) || n >= static_cast<double>(max_n)) return max_n;
  auto rounded = static_cast<std::size_t>(std::ceil(n));
  return std::clamp(rounded, min_n, max_n);
}

}  // namespace densimon
