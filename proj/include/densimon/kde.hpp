#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <set>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "density.hpp"

namespace densimon {

// Ordered feature values for one task, the unit handed from the data plane
// to estimation.
struct Sample {
  std::vector<double> values;
  std::uint32_t task_id = 0;

  std::size_t size() const { return values.size(); }
};

struct ZeroVarianceError : std::runtime_error {
  ZeroVarianceError() : std::runtime_error("sample has zero variance") {}
};

struct GridCoverageError : std::runtime_error {
  double clipped_mass;
  explicit GridCoverageError(double clipped)
      : std::runtime_error("grid too narrow for sample: clipped kernel mass " +
                           std::to_string(clipped)),
        clipped_mass(clipped) {}
};

struct BandwidthResult {
  double value = 0.0;
  bool fallback = false;  // true when the normal-reference rule was used
};

namespace detail {

inline double gauss_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double gauss_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Linear binning: splits each point between its two neighboring nodes.
// Sum of counts equals the number of in-range points.
inline std::vector<double> linear_bin(const std::vector<double>& xs,
                                      double lo, double hi, std::size_t nodes) {
  std::vector<double> counts(nodes, 0.0);
  const double step = (hi - lo) / static_cast<double>(nodes - 1);
  for (double x : xs) {
    double pos = (x - lo) / step;
    if (pos <= 0.0) {
      counts.front() += 1.0;
      continue;
    }
    if (pos >= static_cast<double>(nodes - 1)) {
      counts.back() += 1.0;
      continue;
    }
    auto i = static_cast<std::size_t>(pos);
    double rem = pos - static_cast<double>(i);
    counts[i] += 1.0 - rem;
    counts[i + 1] += rem;
  }
  return counts;
}

// Unnormalized DCT-II via a complex FFT of the even/odd reordered input.
inline std::vector<double> dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> re(n);
  for (std::size_t j = 0; j < n / 2; ++j) {
    re[j] = x[2 * j];
    re[n - 1 - j] = x[2 * j + 1];
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, re);
  std::vector<double> out(n);
  out[0] = spec[0].real();
  const double theta = std::numbers::pi / (2.0 * static_cast<double>(n));
  for (std::size_t k = 1; k < n; ++k) {
    double a = theta * static_cast<double>(k);
    out[k] = 2.0 * (std::cos(a) * spec[k].real() + std::sin(a) * spec[k].imag());
  }
  return out;
}

// One application of the pilot-bandwidth functional chain: given a squared
// scaled bandwidth t, estimate the next t from plug-in functionals of orders 7..2.
// `a2` holds the squared half-coefficients of the DCT of the binned data.
inline double isj_step(double t, double n_unique, const std::vector<double>& a2) {
  constexpr int kLevels = 7;
  const double pi = std::numbers::pi;
  const double pi2 = pi * pi;

  auto functional = [&](int order, double time) {
    // terms decay like exp(-k^2 pi^2 time); stop once they underflow
    double sum = 0.0;
    for (std::size_t k = 0; k < a2.size(); ++k) {
      double i2 = static_cast<double>((k + 1)) * static_cast<double>(k + 1);
      double e = i2 * pi2 * time;
      if (e > 750.0) break;
      sum += std::pow(i2, order) * a2[k] * std::exp(-e);
    }
    return 2.0 * std::pow(pi, 2.0 * order) * sum;
  };

  double f = functional(kLevels, t);
  for (int s = kLevels - 1; s >= 2; --s) {
    double odd_prod = 1.0;
    for (int j = 3; j <= 2 * s - 1; j += 2) odd_prod *= j;
    double k0 = odd_prod / std::sqrt(2.0 * pi);
    double cst = (1.0 + std::pow(0.5, s + 0.5)) / 3.0;
    double time = std::pow(2.0 * cst * k0 / (n_unique * f),
                           2.0 / (3.0 + 2.0 * static_cast<double>(s)));
    f = functional(s, time);
  }
  return std::pow(2.0 * n_unique * std::sqrt(pi) * f, -0.4);
}

inline double stddev(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

inline double normal_reference_bandwidth(double sigma, std::size_t n) {
  return 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);
}

// Plug-in bandwidth selection via the fixed-point iteration of the
// Sheather-Jones style pilot functional chain, computed on a binned DCT of
// the sample. Falls back to the normal-reference rule when the iteration
// fails to converge.
inline BandwidthResult select_bandwidth(const Sample& sample) {
  const std::vector<double>& xs = sample.values;
  if (xs.empty()) throw std::invalid_argument("select_bandwidth: empty sample");
  for (double x : xs)
    if (!std::isfinite(x))
      throw std::invalid_argument("select_bandwidth: non-finite value");

  std::set<double> uniq(xs.begin(), xs.end());
  if (uniq.size() <= 1) throw ZeroVarianceError{};
  if (uniq.size() < 8)
    throw std::invalid_argument("select_bandwidth: need >= 8 distinct values");

  const double minimum = *uniq.begin();
  const double maximum = *uniq.rbegin();
  const double data_range = maximum - minimum;
  const double lo = minimum - data_range / 2.0;
  const double hi = maximum + data_range / 2.0;
  const double span = hi - lo;
  constexpr std::size_t kNodes = std::size_t{1} << 14;

  std::vector<double> counts = detail::linear_bin(xs, lo, hi, kNodes);
  const double total = static_cast<double>(xs.size());
  for (double& c : counts) c /= total;
  std::vector<double> dct = detail::dct2(counts);
  std::vector<double> a2(kNodes - 1);
  for (std::size_t k = 1; k < kNodes; ++k) {
    double half = dct[k] / 2.0;
    a2[k - 1] = half * half;
  }

  const double sigma = detail::stddev(xs);
  const double h_ref = normal_reference_bandwidth(sigma, xs.size());
  const double n_unique = static_cast<double>(uniq.size());

  double t = (h_ref / span) * (h_ref / span);
  bool converged = false;
  for (int iter = 0; iter < 50; ++iter) {
    double next = detail::isj_step(t, n_unique, a2);
    if (!std::isfinite(next) || next <= 0.0) break;
    if (std::abs(next - t) < 1e-9) {
      t = next;
      converged = true;
      break;
    }
    t = next;
  }

  double h = std::sqrt(t) * span;
  if (!converged || !std::isfinite(h) || h <= 0.0)
    return {h_ref, true};
  return {h, false};
}

// Gaussian-kernel density estimate on `grid` via linear binning and FFT
// convolution, renormalized so the trapezoid integral is exactly 1.
// The grid must cover [min - 3h, max + 3h] of the sample.
inline Density estimate_density(const Sample& sample, double bandwidth,
                                const GridSpec& grid) {
  grid.validate();
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw std::invalid_argument("estimate_density: bandwidth must be positive");
  const std::vector<double>& xs = sample.values;
  if (xs.empty()) throw std::invalid_argument("estimate_density: empty sample");

  auto [mn_it, mx_it] = std::minmax_element(xs.begin(), xs.end());
  if (grid.lo > *mn_it - 3.0 * bandwidth || grid.hi < *mx_it + 3.0 * bandwidth) {
    double clipped = 0.0;
    for (double x : xs)
      clipped += detail::gauss_cdf((grid.lo - x) / bandwidth) +
                 detail::gauss_cdf((x - grid.hi) / bandwidth);
    throw GridCoverageError(clipped / static_cast<double>(xs.size()));
  }

  const std::size_t p = grid.points;
  const double step = grid.step();
  std::vector<double> counts = detail::linear_bin(xs, grid.lo, grid.hi, p);

  // kernel reach: 10 sigma, capped at the full grid
  std::size_t reach = static_cast<std::size_t>(std::ceil(10.0 * bandwidth / step));
  reach = std::min(reach, p - 1);
  std::size_t padded = 2 * p;  // power of 2, >= p + reach + 1

  const double norm = 1.0 / (static_cast<double>(xs.size()) * bandwidth);
  std::vector<std::complex<double>> sig(padded), ker(padded);
  for (std::size_t i = 0; i < p; ++i) sig[i] = counts[i];
  ker[0] = detail::gauss_pdf(0.0) * norm;
  for (std::size_t m = 1; m <= reach; ++m) {
    double k = detail::gauss_pdf(static_cast<double>(m) * step / bandwidth) * norm;
    ker[m] = k;
    ker[padded - m] = k;
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fs, fk;
  fft.fwd(fs, sig);
  fft.fwd(fk, ker);
  for (std::size_t i = 0; i < padded; ++i) fs[i] *= fk[i];
  std::vector<std::complex<double>> conv;
  fft.inv(conv, fs);

  Density out;
  out.grid = grid;
  out.values.resize(p);
  for (std::size_t i = 0; i < p; ++i)
    out.values[i] = std::max(0.0, conv[i].real());
  double mass = trapezoid(out.values, step);
  if (!(mass > 0.0))
    throw std::runtime_error("estimate_density: degenerate mass");
  for (double& v : out.values) v /= mass;
  out.bandwidth = bandwidth;
  out.train_size = xs.size();
  return out;
}

// Default estimation grid for a sample: [min - 3h, max + 3h] on 2^14 nodes.
inline GridSpec default_grid(const Sample& sample, double bandwidth,
                             std::size_t points = std::size_t{1} << 14) {
  auto [mn, mx] = std::minmax_element(sample.values.begin(), sample.values.end());
  return GridSpec{*mn - 3.0 * bandwidth, *mx + 3.0 * bandwidth, points};
}

}  // namespace densimon
