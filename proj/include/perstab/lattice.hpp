#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "perstab/core.hpp"

namespace perstab {

struct LatticePoint {
  double value = 0.0;
  std::vector<std::vector<int>> generators;  // multi-indices merged into this value
};

/// The positive lattice { sum_j n_j tau_j } truncated at a horizon. Values
/// closer than merge_tol are merged with their generator sets unioned; the
/// fundamental solution jumps exactly on these points.
struct DelayLattice {
  std::vector<double> delays;
  double horizon = 0.0;
  double merge_tol = 0.0;
  std::vector<LatticePoint> points;            // sorted ascending, points[0] = 0
  std::vector<std::vector<int>> predecessors;  // predecessors[i][j]: index of value_i - tau_j, or -1

  std::size_t size() const { return points.size(); }

  /// Index of the lattice point nearest to v within tol (default: merge-scale).
  std::optional<std::size_t> find(double v, double tol = -1.0) const {
    if (tol < 0) tol = lookup_tol();
    auto it = std::lower_bound(points.begin(), points.end(), v,
                               [](const LatticePoint& p, double x) { return p.value < x; });
    std::optional<std::size_t> best;
    double best_err = tol;
    if (it != points.end() && std::abs(it->value - v) <= best_err) {
      best = static_cast<std::size_t>(it - points.begin());
      best_err = std::abs(it->value - v);
    }
    if (it != points.begin()) {
      auto prev = std::prev(it);
      if (std::abs(prev->value - v) <= best_err)
        best = static_cast<std::size_t>(prev - points.begin());
    }
    return best;
  }

  double lookup_tol() const {
    return std::max(4.0 * merge_tol, 1e-12 * std::max(1.0, horizon));
  }
};

/// Enumerates all sums n_1 tau_1 + ... + n_N tau_N <= horizon by bounded
/// multi-index search. A cap guards against combinatorial blow-up with many
/// incommensurate delays.
inline DelayLattice build_lattice(const std::vector<double>& delays, double horizon,
                                  double merge_tol = -1.0,
                                  std::size_t point_cap = 2'000'000) {
  if (delays.empty()) throw PerstabError("build_lattice: no delays");
  for (double tau : delays)
    if (tau <= 0) throw PerstabError("build_lattice: delays must be positive");
  if (horizon < 0) throw PerstabError("build_lattice: horizon must be >= 0");
  if (merge_tol < 0) merge_tol = 1e-9 * delays.front();

  DelayLattice lat;
  lat.delays = delays;
  lat.horizon = horizon;
  lat.merge_tol = merge_tol;

  const int N = static_cast<int>(delays.size());
  std::vector<std::pair<double, std::vector<int>>> raw;
  std::vector<int> index(static_cast<std::size_t>(N), 0);
  const double incl = horizon + merge_tol;

  // Depth-first enumeration over multi-indices with running partial sums.
  std::function<void(int, double)> enumerate = [&](int j, double partial) {
    if (j == N) {
      raw.emplace_back(partial, index);
      if (raw.size() > point_cap)
        throw PerstabError("build_lattice: lattice point cap exceeded (" +
                           std::to_string(point_cap) + ")");
      return;
    }
    double v = partial;
    for (int n = 0; v <= incl; ++n, v = partial + n * delays[static_cast<std::size_t>(j)]) {
      index[static_cast<std::size_t>(j)] = n;
      enumerate(j + 1, v);
    }
    index[static_cast<std::size_t>(j)] = 0;
  };
  enumerate(0, 0.0);

  std::sort(raw.begin(), raw.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  for (auto& [value, gen] : raw) {
    if (!lat.points.empty() && value - lat.points.back().value <= merge_tol) {
      lat.points.back().generators.push_back(std::move(gen));
    } else {
      LatticePoint p;
      p.value = value;
      p.generators.push_back(std::move(gen));
      lat.points.push_back(std::move(p));
    }
  }

  lat.predecessors.assign(lat.size(), std::vector<int>(static_cast<std::size_t>(N), -1));
  for (std::size_t i = 1; i < lat.size(); ++i) {
    bool found = false;
    for (int j = 0; j < N; ++j) {
      double want = lat.points[i].value - delays[static_cast<std::size_t>(j)];
      if (want < -lat.lookup_tol()) continue;
      if (auto idx = lat.find(want)) {
        lat.predecessors[i][static_cast<std::size_t>(j)] = static_cast<int>(*idx);
        found = true;
      }
    }
    if (!found)
      throw PerstabError("build_lattice: point without predecessor (merge_tol inconsistency)");
  }
  return lat;
}

}  // namespace perstab
