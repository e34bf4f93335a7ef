#pragma once

#include <limits>
#include <unordered_map>

#include "perstab/signal.hpp"

namespace perstab {

enum class Backend { ExactLattice, Grid };

struct SimOptions {
  Backend backend = Backend::ExactLattice;
  double output_step = 0.0;     // 0: tau_1 / 32
  double grid_step = 0.0;       // 0: tau_1 / 64
  double delay_round_tol = 0.0; // 0: h / 100; grid backend warns past this
  std::size_t memo_cap = 2'000'000;
};

struct SimDiagnostics {
  std::vector<std::string> warnings;
  double max_delay_rounding = 0.0;  // worst |tau_j - r_j h| on the grid backend
};

/// Exact solver for y(t) = sum_j D_j(t) y(t - tau_j) (+ u(t)): recursive
/// descent with memoization on quantized times. Arguments reached by the
/// recursion are t minus lattice offsets, so the memo stays proportional to
/// the lattice size over the horizon. The reference backend; cost grows like
/// (1 + (t-s)/tau_1)^N for incommensurate delays.
class ExactEvaluator {
 public:
  static ExactEvaluator homogeneous(const DelaySystem& system, InitialCondition phi,
                                    double s, std::size_t memo_cap = 2'000'000) {
    return ExactEvaluator(system, std::move(phi.phi), nullptr, s, memo_cap);
  }
  static ExactEvaluator forced(const DelaySystem& system, std::function<Vector(double)> u,
                               double s, std::size_t memo_cap = 2'000'000) {
    return ExactEvaluator(system, nullptr, std::move(u), s, memo_cap);
  }

  Vector at(double t) const {
    if (forced_input_) {
      if (t < s_) return Vector::Zero(system_.dim);
      return recurse(t);
    }
    if (t <= s_) {
      double theta = std::max(t - s_, -system_.max_delay());
      return history_(theta);
    }
    return recurse(t);
  }

  Vector operator()(double t) const { return at(t); }

 private:
  ExactEvaluator(const DelaySystem& system, std::function<Vector(double)> history,
                 std::function<Vector(double)> input, double s, std::size_t memo_cap)
      : system_(system), history_(std::move(history)), input_(std::move(input)), s_(s),
        memo_cap_(memo_cap), forced_input_(static_cast<bool>(input_)) {
    system_.validate();
    quantum_ = system_.min_delay() * 9.094947017729282e-13;  // tau_1 * 2^-40
  }

  Vector recurse(double t) const {
    long long key = static_cast<long long>(std::llround((t - s_) / quantum_));
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    Vector acc = Vector::Zero(system_.dim);
    for (std::size_t j = 0; j < system_.delays.size(); ++j) {
      double tj = t - system_.delays[j];
      Vector prev;
      if (forced_input_)
        prev = tj < s_ ? Vector::Zero(system_.dim) : recurse(tj);
      else
        prev = tj <= s_ ? history_(std::max(tj - s_, -system_.max_delay())) : recurse(tj);
      acc += system_.coefficients[j](t) * prev;
    }
    if (forced_input_) acc += input_(t);
    std::lock_guard<std::mutex> lock(mutex_);
    if (memo_.size() >= memo_cap_)
      throw PerstabError("exact backend: memo cap exceeded; use the grid backend");
    auto [it, ok] = memo_.emplace(key, std::move(acc));
    return it->second;
  }

  DelaySystem system_;
  std::function<Vector(double)> history_;
  std::function<Vector(double)> input_;
  double s_;
  double quantum_;
  std::size_t memo_cap_;
  bool forced_input_;
  mutable std::unordered_map<long long, Vector> memo_;
  mutable std::mutex mutex_;
};

namespace detail {

inline std::vector<long long> rounded_delays(const DelaySystem& system, double h,
                                             double tol, SimDiagnostics* diag) {
  std::vector<long long> r;
  double worst = 0.0;
  for (double tau : system.delays) {
    long long rj = std::llround(tau / h);
    if (rj < 1)
      throw PerstabError("grid backend: step exceeds a delay; decrease the step");
    worst = std::max(worst, std::abs(tau - static_cast<double>(rj) * h));
    r.push_back(rj);
  }
  if (diag) {
    diag->max_delay_rounding = worst;
    if (worst > tol)
      diag->warnings.push_back("grid backend: delay rounding " + std::to_string(worst) +
                               " exceeds tolerance " + std::to_string(tol));
  }
  return r;
}

/// Shared grid recursion. history(theta) supplies y on [-tau_N, 0] for the
/// homogeneous problem; input(t) supplies u for the forced one (zero
/// pre-history in that case).
inline Signal grid_recursion(const DelaySystem& system,
                             const std::function<Vector(double)>* history,
                             const std::function<Vector(double)>* input, double s,
                             double t_end, double h, double delay_round_tol,
                             SimDiagnostics* diag) {
  if (t_end < s) throw PerstabError("simulate: t_end must be >= s");
  auto r = rounded_delays(system, h, delay_round_tol, diag);
  long long hist = 0;
  for (long long rj : r) hist = std::max(hist, rj);
  long long n = static_cast<long long>(std::ceil((t_end - s) / h - 1e-9));
  std::vector<Vector> buf(static_cast<std::size_t>(hist + n + 1));
  auto slot = [&](long long i) -> Vector& {
    return buf[static_cast<std::size_t>(i + hist)];
  };
  for (long long i = -hist; i <= 0; ++i) {
    if (history)
      slot(i) = (*history)(std::max(static_cast<double>(i) * h, -system.max_delay()));
    else
      slot(i) = Vector::Zero(system.dim);
  }
  long long first = input ? 0 : 1;  // forced runs the recursion at t = s too
  for (long long i = first; i <= n; ++i) {
    double t = s + static_cast<double>(i) * h;
    Vector acc = Vector::Zero(system.dim);
    for (std::size_t j = 0; j < r.size(); ++j)
      acc += system.coefficients[j](t) * slot(i - r[j]);
    if (input) acc += (*input)(t);
    slot(i) = std::move(acc);
  }
  Signal out;
  out.start = s;
  out.step = h;
  out.values.assign(buf.begin() + static_cast<std::ptrdiff_t>(hist), buf.end());
  return out;
}

}  // namespace detail

inline Signal simulate_homogeneous(const DelaySystem& system, const InitialCondition& phi,
                                   double s, double t_end, SimOptions opts = {},
                                   SimDiagnostics* diag = nullptr) {
  system.validate();
  if (t_end < s) throw PerstabError("simulate: t_end must be >= s");
  if (opts.backend == Backend::Grid) {
    double h = opts.grid_step > 0 ? opts.grid_step : system.min_delay() / 64;
    double tol = opts.delay_round_tol > 0 ? opts.delay_round_tol : h / 100;
    return detail::grid_recursion(system, &phi.phi, nullptr, s, t_end, h, tol, diag);
  }
  ExactEvaluator ev = ExactEvaluator::homogeneous(system, phi, s, opts.memo_cap);
  double h = opts.output_step > 0 ? opts.output_step : system.min_delay() / 32;
  Signal out;
  out.start = s;
  out.step = h;
  auto n = static_cast<std::size_t>(std::floor((t_end - s) / h + 1e-9)) + 1;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = ev.at(s + static_cast<double>(i) * h);
  return out;
}

inline Signal simulate_forced(const DelaySystem& system,
                              const std::function<Vector(double)>& u, double s,
                              double t_end, SimOptions opts = {},
                              SimDiagnostics* diag = nullptr) {
  system.validate();
  if (t_end < s) throw PerstabError("simulate: t_end must be >= s");
  if (opts.backend == Backend::Grid) {
    double h = opts.grid_step > 0 ? opts.grid_step : system.min_delay() / 64;
    double tol = opts.delay_round_tol > 0 ? opts.delay_round_tol : h / 100;
    return detail::grid_recursion(system, nullptr, &u, s, t_end, h, tol, diag);
  }
  ExactEvaluator ev = ExactEvaluator::forced(system, u, s, opts.memo_cap);
  double h = opts.output_step > 0 ? opts.output_step : system.min_delay() / 32;
  Signal out;
  out.start = s;
  out.step = h;
  auto n = static_cast<std::size_t>(std::floor((t_end - s) / h + 1e-9)) + 1;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = ev.at(s + static_cast<double>(i) * h);
  return out;
}

inline Signal simulate_forced(const DelaySystem& system, const Signal& u, double s,
                              double t_end, SimOptions opts = {},
                              SimDiagnostics* diag = nullptr) {
  return simulate_forced(system, u.as_function(), s, t_end, opts, diag);
}

/// Discretized solution operator U_2(t,s) on piecewise-constant states over
/// [-tau_N, 0] with M cells (cell i is represented by its right node
/// -tau_N + (i+1)h, h = tau_N/M). Column j is the grid response to the j-th
/// basis state; all columns are propagated together. Delays are rounded to
/// the grid (reported through diag).
inline Matrix solution_operator_matrix(const DelaySystem& system, double s, double t,
                                       int M, SimDiagnostics* diag = nullptr) {
  system.validate();
  if (M < 2) throw PerstabError("solution_operator_matrix: need M >= 2");
  if (t < s) throw PerstabError("solution_operator_matrix: need t >= s");
  const int d = system.dim;
  const double tau = system.max_delay();
  const double h = tau / M;
  double tol = h / 100;
  SimDiagnostics local;
  auto r = detail::rounded_delays(system, h, tol, &local);
  long long n = std::llround((t - s) / h);
  if (std::abs((t - s) - static_cast<double>(n) * h) > tol)
    local.warnings.push_back("solution operator: t-s rounded to the grid");
  if (diag) *diag = local;

  const int cols = M * d;
  // Ring buffer of the last M+1 time-levels of the d x (M d) multi-state.
  std::vector<Matrix> ring(static_cast<std::size_t>(M + 1));
  auto level = [&](long long i) -> Matrix& {
    long long m = (i % (M + 1) + (M + 1)) % (M + 1);
    return ring[static_cast<std::size_t>(m)];
  };
  // Initial data: level i (i in [-(M-1), 0]) holds basis row theta = i h,
  // i.e. state cell index M - 1 + i.
  for (long long i = -(M - 1); i <= 0; ++i) {
    Matrix row = Matrix::Zero(d, cols);
    long long cell = M - 1 + i;
    row.block(0, static_cast<int>(cell) * d, d, d) = identity(d);
    level(i) = std::move(row);
  }
  long long hist = 0;
  for (long long rj : r) hist = std::max(hist, rj);
  if (hist > M)
    throw PerstabError("solution_operator_matrix: rounded delay exceeds state depth");
  for (long long i = 1; i <= n; ++i) {
    double ti = s + static_cast<double>(i) * h;
    Matrix acc = Matrix::Zero(d, cols);
    for (std::size_t j = 0; j < r.size(); ++j)
      acc += system.coefficients[j](ti) * level(i - r[j]);
    level(i) = std::move(acc);
  }
  Matrix out(cols, cols);
  for (int i = 0; i < M; ++i) {
    long long lvl = n - (M - 1) + i;
    out.block(i * d, 0, d, cols) = level(lvl);
  }
  return out;
}

/// Least-squares exponential decay fit: window sup-norms (width tau_N) of the
/// trajectory against time. Returns gamma (decay rate; negative = growth)
/// and the envelope constant. A zero trajectory yields the +inf sentinel.
struct DecayFit {
  double gamma = 0.0;
  double K = 0.0;
  bool zero_trajectory = false;
};

inline DecayFit decay_rate_fit(const Signal& trajectory, double window_width,
                               bool l2_window = false) {
  if (trajectory.step <= 0 || trajectory.values.empty())
    throw PerstabError("decay_rate_fit: empty trajectory");
  double span = trajectory.step * static_cast<double>(trajectory.values.size());
  if (span < 5 * window_width)
    throw PerstabError("decay_rate_fit: trajectory shorter than five windows");
  auto per_window = static_cast<std::size_t>(std::max(1.0, window_width / trajectory.step));
  std::size_t stride = std::max<std::size_t>(1, per_window / 4);
  std::vector<double> xs, ys;
  double peak = 0.0;
  for (std::size_t i0 = 0; i0 + per_window <= trajectory.values.size(); i0 += stride) {
    double w = 0.0;
    for (std::size_t i = i0; i < i0 + per_window; ++i) {
      double v = trajectory.values[i].norm();
      w = l2_window ? w + v * v * trajectory.step : std::max(w, v);
    }
    if (l2_window) w = std::sqrt(w);
    peak = std::max(peak, w);
    if (w > 0) {
      xs.push_back(trajectory.time_at(i0 + per_window - 1));
      ys.push_back(std::log(w));
    }
  }
  if (peak < 1e-280 || xs.size() < 2)
    return {std::numeric_limits<double>::infinity(), 0.0, true};
  auto [intercept, slope] = fit_line(xs, ys);
  return {-slope, std::exp(intercept), false};
}

inline DecayFit decay_rate_fit(const Signal& trajectory, const DelaySystem& system,
                               bool l2_window = false) {
  return decay_rate_fit(trajectory, system.max_delay(), l2_window);
}

}  // namespace perstab
