#pragma once

#include <memory>
#include <unordered_map>

#include "perstab/lattice.hpp"
#include "perstab/system.hpp"

namespace perstab {

// Kernel coefficients K_f(t) of the fundamental solution, with the sign
// convention X(t,s) = sum_{f in F, f <= t-s} K_f(t):
//
//   K_0(t) = I,
//   K_f(t) = sum_{j : f - tau_j in F} D_j(t) K_{f-tau_j}(t - tau_j),
//
// so the forced response reads y(t) = sum_f K_f(t) u(t-f). Each K_f is
// T-periodic. Values are tabulated on a uniform grid over one period;
// off-grid arguments (which the recursion produces whenever a delay is not
// a grid multiple) are computed exactly through the same recursion and
// memoized on quantized residues mod T.
class KernelCoefficients {
 public:
  KernelCoefficients(const DelaySystem& system, double horizon, int grid_cells = 256,
                     double merge_tol = -1.0)
      : system_(system), grid_cells_(grid_cells) {
    system_.validate();
    if (grid_cells_ < 1) throw PerstabError("kernel_coefficients: grid must be >= 1");
    lattice_ = build_lattice(system_.delays, horizon, merge_tol);
    table_.assign(lattice_.size(), {});
    const double T = system_.period;
    for (std::size_t i = 0; i < lattice_.size(); ++i) {
      table_[i].resize(static_cast<std::size_t>(grid_cells_));
      for (int g = 0; g < grid_cells_; ++g)
        table_[i][static_cast<std::size_t>(g)] = evaluate(i, g * T / grid_cells_);
    }
  }

  const DelaySystem& system() const { return system_; }
  const DelayLattice& lattice() const { return lattice_; }
  double horizon() const { return lattice_.horizon; }
  int grid_cells() const { return grid_cells_; }

  /// K_f(t) for the lattice point with given index, exact in t.
  Matrix evaluate(std::size_t point, double t) const {
    if (point == 0) return identity(system_.dim);
    Key key{point, quantize(t)};
    {
      std::lock_guard<std::mutex> lock(memo_mutex_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    Matrix acc = Matrix::Zero(system_.dim, system_.dim);
    for (std::size_t j = 0; j < system_.delays.size(); ++j) {
      int pred = lattice_.predecessors[point][j];
      if (pred < 0) continue;
      acc += system_.coefficients[j](t) *
             evaluate(static_cast<std::size_t>(pred), t - system_.delays[j]);
    }
    std::lock_guard<std::mutex> lock(memo_mutex_);
    auto [it, inserted] = memo_.emplace(key, std::move(acc));
    return it->second;
  }

  /// Tabulated K_f at grid cell g (t = g*T/M_t).
  const Matrix& at_grid(std::size_t point, int g) const {
    return table_[point][static_cast<std::size_t>(g)];
  }

  double grid_time(int g) const { return g * system_.period / grid_cells_; }

 private:
  struct Key {
    std::size_t point;
    long long tq;
    bool operator==(const Key& o) const { return point == o.point && tq == o.tq; }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::size_t>()(k.point) ^
             (std::hash<long long>()(k.tq) * 0x9e3779b97f4a7c15ULL);
    }
  };

  long long quantize(double t) const {
    // ~1e-15 * T cells: fine enough to keep distinct lattice residues apart,
    // coarse enough that recomputation from rounding noise stays rare.
    double w = wrap_period(t, system_.period) / system_.period;
    return static_cast<long long>(w * 1125899906842624.0);  // 2^50
  }

  DelaySystem system_;
  DelayLattice lattice_;
  int grid_cells_;
  std::vector<std::vector<Matrix>> table_;
  mutable std::unordered_map<Key, Matrix, KeyHash> memo_;
  mutable std::mutex memo_mutex_;
};

inline KernelCoefficients kernel_coefficients(const DelaySystem& system, double horizon,
                                              int grid_cells = 256) {
  return KernelCoefficients(system, horizon, grid_cells);
}

/// Fundamental solution X(t,s) = sum_{f <= t-s} K_f(t); zero for t < s.
inline Matrix fundamental_solution(const KernelCoefficients& kernels, double t, double s) {
  const int d = kernels.system().dim;
  if (t < s) return Matrix::Zero(d, d);
  const double gap = t - s;
  const auto& lat = kernels.lattice();
  if (gap > lat.horizon + lat.lookup_tol())
    throw PerstabError("fundamental_solution: t-s exceeds the kernel horizon");
  const double incl = gap + std::max(lat.merge_tol, 1e-12 * std::max(1.0, gap));
  Matrix acc = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (lat.points[i].value > incl) break;
    acc += kernels.evaluate(i, t);
  }
  return acc;
}

/// max_t sum_{f <= tau} |||K_f(t)|||: the total variation of d_s X(t, t-s)
/// on [0, tau] (norms are sign-invariant). Evaluated on the period grid.
inline double kernel_growth_norms(const KernelCoefficients& kernels, double tau) {
  const auto& lat = kernels.lattice();
  if (tau > lat.horizon + lat.lookup_tol())
    throw PerstabError("kernel_growth_norms: tau exceeds the kernel horizon");
  const double incl = tau + std::max(lat.merge_tol, 1e-12 * std::max(1.0, tau));
  double worst = 0.0;
  for (int g = 0; g < kernels.grid_cells(); ++g) {
    double sum = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
      if (lat.points[i].value > incl) break;
      sum += operator_norm(kernels.at_grid(i, g));
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

/// Fits the exponential envelope K e^{gamma tau} over the growth norms,
/// shifting the intercept so the envelope lies above every sample.
struct GrowthEnvelope {
  double K = 0.0;
  double gamma = 0.0;
};

inline GrowthEnvelope fit_growth_envelope(const KernelCoefficients& kernels,
                                          double tau_max, int samples = 24) {
  std::vector<double> xs, ys;
  for (int i = 1; i <= samples; ++i) {
    double tau = tau_max * i / samples;
    double v = kernel_growth_norms(kernels, tau);
    if (v <= 0) continue;
    xs.push_back(tau);
    ys.push_back(std::log(v));
  }
  if (xs.size() < 2) return {1.0, 0.0};
  auto [intercept, slope] = fit_line(xs, ys);
  double gamma = std::max(slope, 0.0);
  double shift = -1e300;
  for (std::size_t i = 0; i < xs.size(); ++i)
    shift = std::max(shift, ys[i] - gamma * xs[i]);
  return {std::exp(shift), gamma};
}

}  // namespace perstab
