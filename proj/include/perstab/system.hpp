#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "perstab/periodic_matrix.hpp"

namespace perstab {

/// Periodic difference-delay system y(t) = sum_j D_j(t) y(t - tau_j) with
/// 0 < tau_1 < ... < tau_N < T and T-periodic coefficients D_j.
struct DelaySystem {
  int dim = 0;
  double period = 0.0;
  std::vector<double> delays;
  std::vector<PeriodicMatrixFunction> coefficients;
  bool real = false;

  int delay_count() const { return static_cast<int>(delays.size()); }
  double max_delay() const { return delays.back(); }
  double min_delay() const { return delays.front(); }
  double omega() const { return 2.0 * kPi / period; }

  void validate() const {
    if (dim <= 0) throw PerstabError("system: dimension must be positive");
    if (period <= 0) throw PerstabError("system: period must be positive");
    if (delays.empty()) throw PerstabError("system: at least one delay required");
    if (delays.front() <= 0.0) throw PerstabError("system: delays must be positive");
    for (std::size_t j = 1; j < delays.size(); ++j)
      if (delays[j] <= delays[j - 1])
        throw PerstabError("system: delays must be strictly increasing");
    if (delays.back() >= period)
      throw PerstabError(
          "system: largest delay must be smaller than the period "
          "(enable inflate_period to replace T by kT)");
    if (coefficients.size() != delays.size())
      throw PerstabError("system: one coefficient per delay required");
    for (const auto& c : coefficients) {
      if (c.dim() != dim) throw PerstabError("system: coefficient dimension mismatch");
      if (std::abs(c.period() - period) > 1e-12 * period)
        throw PerstabError("system: coefficient period mismatch");
    }
  }

  /// Replaces T by the smallest kT exceeding the largest delay. Opt-in
  /// because it changes the base frequency omega.
  void inflate_period() {
    if (delays.empty()) throw PerstabError("system: no delays");
    if (delays.back() < period) return;
    int k = static_cast<int>(std::floor(delays.back() / period)) + 1;
    for (auto& c : coefficients) c = c.inflated(k);
    period *= k;
  }

  bool is_constant(double tol = 1e-13, int grid = 64) const {
    for (const auto& c : coefficients) {
      Matrix base = c(0.0);
      for (int m = 1; m < grid; ++m)
        if ((c(m * period / grid) - base).cwiseAbs().maxCoeff() > tol) return false;
    }
    return true;
  }

  /// Sup-norm of each coefficient over a period (used in Neumann bounds).
  std::vector<double> coefficient_sup_norms(int grid = 256) const {
    std::vector<double> out;
    out.reserve(coefficients.size());
    for (const auto& c : coefficients) {
      double sup = 0.0;
      for (int m = 0; m < grid; ++m)
        sup = std::max(sup, operator_norm(c(m * period / grid)));
      out.push_back(sup);
    }
    return out;
  }

  /// Frozen-time matrix I - sum_j e^{-p tau_j} D_j(t).
  Matrix frozen_matrix(Complex p, double t) const {
    Matrix m = identity(dim);
    for (std::size_t j = 0; j < delays.size(); ++j)
      m -= std::exp(-p * delays[j]) * coefficients[j](t);
    return m;
  }

  /// Approximate common divisor of the delays, or 0 when they look
  /// incommensurate (continued-fraction test against tau_1).
  double commensurate_base(double rel_tol = 1e-9) const {
    double g = delays.front();
    for (std::size_t j = 1; j < delays.size(); ++j) {
      double a = g, b = delays[j];
      // Euclidean algorithm on reals with a relative cutoff.
      for (int iter = 0; iter < 64 && b > rel_tol * delays.front(); ++iter) {
        double r = std::fmod(a, b);
        if (r > b - rel_tol * delays.front()) r = 0.0;  // landed on a multiple
        a = b;
        b = r;
      }
      if (b > rel_tol * delays.front()) return 0.0;
      g = a;
    }
    for (double tau : delays) {
      double q = tau / g;
      if (std::abs(q - std::round(q)) > 1e-6) return 0.0;
    }
    return g;
  }
};

}  // namespace perstab
