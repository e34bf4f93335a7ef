#pragma once

#include <random>

#include "perstab/system.hpp"

namespace perstab {

/// Uniformly sampled vector signal, read back as a piecewise-constant
/// function on cells [start + i h, start + (i+1) h); zero outside coverage.
struct Signal {
  double start = 0.0;
  double step = 0.0;
  std::vector<Vector> values;

  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
  std::size_t size() const { return values.size(); }
  double end() const { return start + step * static_cast<double>(values.size()); }
  double time_at(std::size_t i) const { return start + step * static_cast<double>(i); }

  Vector at(double t) const {
    if (values.empty()) return Vector();
    if (t < start || t >= end()) return Vector::Zero(values.front().size());
    auto idx = static_cast<std::size_t>(std::floor((t - start) / step));
    if (idx >= values.size()) idx = values.size() - 1;
    return values[idx];
  }

  std::function<Vector(double)> as_function() const {
    Signal copy = *this;
    return [copy](double t) { return copy.at(t); };
  }
};

/// Initial condition phi on [-tau_N, 0]. The continuous space C_s carries the
/// splicing condition phi(0) = sum_j D_j(s) phi(-tau_j); L^2 data is free.
struct InitialCondition {
  enum class Space { Continuous, L2 };

  std::function<Vector(double)> phi;
  Space space = Space::L2;

  static InitialCondition from_function(std::function<Vector(double)> f,
                                        Space sp = Space::L2) {
    return {std::move(f), sp};
  }
  static InitialCondition from_signal(const Signal& s, Space sp = Space::L2) {
    return {s.as_function(), sp};
  }
  static InitialCondition zero(int dim) {
    return {[dim](double) { return Vector::Zero(dim); }, Space::Continuous};
  }

  double compatibility_residual(const DelaySystem& system, double s) const {
    Vector lhs = phi(0.0);
    Vector rhs = Vector::Zero(system.dim);
    for (std::size_t j = 0; j < system.delays.size(); ++j)
      rhs += system.coefficients[j](s) * phi(-system.delays[j]);
    return (lhs - rhs).norm();
  }
};

/// Piecewise-constant random initial data from a seeded generator
/// (reproducible across runs and platforms using the same libstdc++).
inline InitialCondition random_initial_condition(const DelaySystem& system,
                                                 std::uint64_t seed, int cells = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Vector> vals(static_cast<std::size_t>(cells));
  for (auto& v : vals) {
    v = Vector(system.dim);
    for (int i = 0; i < system.dim; ++i) {
      double re = unit(rng);
      double im = system.real ? 0.0 : unit(rng);
      v(i) = Complex(re, im);
    }
  }
  double tau = system.max_delay();
  Signal sig{-tau, tau / cells, std::move(vals)};
  return InitialCondition::from_signal(sig);
}

}  // namespace perstab
