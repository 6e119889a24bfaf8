#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace densimon {

// Equidistant grid of `points` nodes spanning [lo, hi], endpoints included.
// Node count is a power of 2 so FFT smoothing and power-of-2 reward binning
// line up with the same mesh.
struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t points = std::size_t{1} << 14;

  double step() const { return (hi - lo) / static_cast<double>(points - 1); }
  double node(std::size_t i) const {
    return lo + step() * static_cast<double>(i);
  }

  bool operator==(const GridSpec&) const = default;

  void validate() const {
    if (!(lo < hi))
      throw std::invalid_argument("GridSpec: lo must be smaller than hi");
    if (points < 2 || (points & (points - 1)) != 0)
      throw std::invalid_argument("GridSpec: points must be a power of 2, >= 2");
  }
};

struct GridMismatchError : std::invalid_argument {
  GridMismatchError() : std::invalid_argument("densities live on different grids") {}
};

// Grid-sampled probability density. `values[i]` is density-per-unit at
// grid.node(i); the trapezoid integral over the grid is 1.
struct Density {
  GridSpec grid;
  std::vector<double> values;
  double bandwidth = 0.0;
  std::size_t train_size = 0;
};

inline double trapezoid(const std::vector<double>& v, double step) {
  if (v.size() < 2) return 0.0;
  double sum = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) sum += v[i];
  return sum * step;
}

inline double integral(const Density& d) { return trapezoid(d.values, d.grid.step()); }

inline void validate(const Density& d) {
  d.grid.validate();
  if (d.values.size() != d.grid.points)
    throw std::invalid_argument("Density: value count does not match grid");
  for (double v : d.values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("Density: values must be finite and >= 0");
  double mass = integral(d);
  if (std::abs(mass - 1.0) > 1e-6)
    throw std::invalid_argument("Density: integral is " + std::to_string(mass) +
                                ", expected 1 within 1e-6");
}

// Linear interpolation between adjacent nodes; 0 outside [lo, hi].
// An exact node hit returns the stored value bit-for-bit, which keeps
// pointwise identities on the grid exact.
inline double evaluate(const Density& d, double x) {
  const GridSpec& g = d.grid;
  if (x < g.lo || x > g.hi || !std::isfinite(x)) return 0.0;
  double pos = (x - g.lo) / g.step();
  auto near = static_cast<std::size_t>(pos + 0.5);
  if (near < g.points && g.node(near) == x) return d.values[near];
  auto i = static_cast<std::size_t>(pos);
  if (i >= g.points - 1) i = g.points - 2;
  double r = pos - static_cast<double>(i);
  return d.values[i] + r * (d.values[i + 1] - d.values[i]);
}

// Pointwise arithmetic mean of densities on one shared grid.
inline Density mean_density(const std::vector<Density>& ds) {
  if (ds.empty()) throw std::invalid_argument("mean_density: empty input");
  const GridSpec& g = ds.front().grid;
  for (const Density& d : ds)
    if (!(d.grid == g)) throw GridMismatchError{};
  Density out;
  out.grid = g;
  out.values.assign(g.points, 0.0);
  double bw = 0.0;
  for (const Density& d : ds) {
    for (std::size_t i = 0; i < g.points; ++i) out.values[i] += d.values[i];
    bw += d.bandwidth;
  }
  const auto k = static_cast<double>(ds.size());
  for (double& v : out.values) v /= k;
  out.bandwidth = bw / k;
  out.train_size = ds.front().train_size;
  return out;
}

// Integrated square error between two densities on one shared grid.
inline double ise(const Density& a, const Density& b) {
  if (!(a.grid == b.grid)) throw GridMismatchError{};
  std::vector<double> sq(a.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    double diff = a.values[i] - b.values[i];
    sq[i] = diff * diff;
  }
  return trapezoid(sq, a.grid.step());
}

}  // namespace densimon
