#pragma once

#include "perstab/kernels.hpp"
#include "perstab/simulate.hpp"
#include "perstab/spectral.hpp"
#include "perstab/stability.hpp"

namespace perstab {

// Harmonic transfer function H(p) = R^{-1}(p) and the instantaneous transfer
// function
//
//   G(t, p) = sum_{f in F} K_f(t) e^{-p f},
//
// two routes to the same frequency-domain object. With Fourier expansion
// G(t,p) = sum_k G_k(p) e^{i k w t}, the entry identity reads
//
//   [R^{-1}(p)]_{output harmonic n, input harmonic m} = G_{n-m}(p + i m w),
//
// where "harmonic n" addresses the Laplace sample at p + i n w, i.e. storage
// block row K - n (see spectral.hpp for the ordering). Each side is computed
// by an independent pipeline (dense inversion vs. lattice sums), which makes
// the residual an effective cross-check of both.

/// Dense inverse of the truncated R(p). Refuses near-singular sections.
inline Matrix htf_matrix(const HarmonicModel& model, Complex p, int K,
                         double sigma_floor = 1e-10) {
  auto R = assemble_R(model, p, K);
  double sigma = smallest_singular_value(R.data);
  if (sigma < sigma_floor)
    throw PerstabError("htf_matrix: R(p) is near-singular (sigma_min = " +
                       std::to_string(sigma) + ")");
  return R.data.partialPivLu().inverse();
}

inline Matrix htf_matrix(const DelaySystem& system, Complex p, int K,
                         double sigma_floor = 1e-10) {
  return htf_matrix(make_harmonic_model(system, 2 * K), p, K, sigma_floor);
}

/// Block of an HTF (or R) matrix addressed by output/input harmonics n, m.
inline Eigen::Block<const Matrix> harmonic_block(const Matrix& mat, int K, int d, int n,
                                                 int m) {
  return mat.block((K - n) * d, (K - m) * d, d, d);
}

struct InstantaneousTF {
  double t = 0.0;
  Complex p;
  Matrix value;
  double horizon = 0.0;
  double tail_bound = 0.0;
};

/// Finite lattice sum for G(t, p) with the exponential-envelope tail bound
/// sum_{f > H} |||K_f(t)||| e^{-Re(p) f} <= K e^{(g - Re p) H} / (1 - e^{-(Re p - g) tau_1}).
inline InstantaneousTF instantaneous_tf(const KernelCoefficients& kernels,
                                        const GrowthEnvelope& envelope, double t,
                                        Complex p, double horizon,
                                        double margin = 1e-6) {
  if (p.real() <= envelope.gamma + margin)
    throw PerstabError("instantaneous_tf: Re(p) must exceed the fitted growth rate " +
                       std::to_string(envelope.gamma));
  const auto& lat = kernels.lattice();
  if (horizon > lat.horizon + lat.lookup_tol())
    throw PerstabError("instantaneous_tf: horizon exceeds the kernel table");
  InstantaneousTF out;
  out.t = t;
  out.p = p;
  out.horizon = horizon;
  out.value = Matrix::Zero(kernels.system().dim, kernels.system().dim);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    double f = lat.points[i].value;
    if (f > horizon) break;
    out.value += kernels.evaluate(i, t) * std::exp(-p * f);
  }
  double rate = p.real() - envelope.gamma;
  out.tail_bound = envelope.K * std::exp(-rate * horizon) /
                   (1.0 - std::exp(-rate * kernels.system().min_delay()));
  return out;
}

/// Fourier coefficients G_k(p), |k| <= K, of t -> G(t,p) by quadrature on the
/// kernel period grid.
inline std::vector<Matrix> itf_fourier(const KernelCoefficients& kernels,
                                       const GrowthEnvelope& envelope, Complex p, int K,
                                       double horizon, double margin = 1e-6) {
  if (p.real() <= envelope.gamma + margin)
    throw PerstabError("itf_fourier: Re(p) must exceed the fitted growth rate");
  const auto& sys = kernels.system();
  const int M = kernels.grid_cells();
  const double T = sys.period;
  const double omega = sys.omega();
  const auto& lat = kernels.lattice();
  // G on the grid from the tabulated kernels.
  std::vector<Matrix> g(static_cast<std::size_t>(M));
  for (int gidx = 0; gidx < M; ++gidx) {
    Matrix acc = Matrix::Zero(sys.dim, sys.dim);
    for (std::size_t i = 0; i < lat.size(); ++i) {
      double f = lat.points[i].value;
      if (f > horizon) break;
      acc += kernels.at_grid(i, gidx) * std::exp(-p * f);
    }
    g[static_cast<std::size_t>(gidx)] = std::move(acc);
  }
  std::vector<Matrix> out(static_cast<std::size_t>(2 * K + 1));
  for (int k = -K; k <= K; ++k) {
    Matrix acc = Matrix::Zero(sys.dim, sys.dim);
    for (int gidx = 0; gidx < M; ++gidx) {
      double t = gidx * T / M;
      acc += g[static_cast<std::size_t>(gidx)] * std::exp(Complex(0, -k * omega * t));
    }
    out[static_cast<std::size_t>(K + k)] = acc / static_cast<double>(M);
  }
  return out;
}

/// Residual of the entry identity between R^{-1} and the G_k, evaluated on
/// the central harmonic window |n|, |m| <= K/2 (the outermost harmonics of a
/// truncated inverse converge last and are excluded).
inline double htf_consistency(const DelaySystem& system, const KernelCoefficients& kernels,
                              const GrowthEnvelope& envelope, Complex p, int K,
                              double horizon) {
  auto model = make_harmonic_model(system, 2 * K);
  Matrix H = htf_matrix(model, p, K);
  const int d = system.dim;
  const int W = K / 2;
  const double omega = system.omega();
  double worst = 0.0;
  for (int m = -W; m <= W; ++m) {
    auto g = itf_fourier(kernels, envelope, p + Complex(0, m * omega), K, horizon);
    for (int n = -W; n <= W; ++n) {
      Matrix lhs = harmonic_block(H, K, d, n, m);
      const Matrix& rhs = g[static_cast<std::size_t>(K + (n - m))];
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Numerical Laplace transform of a sampled signal by composite Simpson with
/// exponential damping; the integration stops once the integrand's envelope
/// falls below 1e-14.
inline Vector laplace_transform(const Signal& sig, Complex p) {
  if (sig.values.empty()) return Vector();
  const int d = sig.dim();
  std::size_t n = sig.values.size();
  std::size_t cut = n;
  double floor_level = 1e-14;
  for (std::size_t i = 0; i < n; ++i) {
    double env = sig.values[i].norm() * std::exp(-p.real() * sig.time_at(i));
    if (env < floor_level && i > 8) {
      cut = i;
      break;
    }
  }
  if (cut < 3) cut = std::min<std::size_t>(3, n);
  std::size_t m = cut;          // number of samples used
  if (m % 2 == 0) m -= 1;       // Simpson needs an odd sample count
  Vector acc = Vector::Zero(d);
  auto f = [&](std::size_t i) {
    return Vector(sig.values[i] * std::exp(-p * sig.time_at(i)));
  };
  for (std::size_t i = 0; i + 2 < m + 1; i += 2)
    acc += (sig.step / 3.0) * (f(i) + 4.0 * f(i + 1) + f(i + 2));
  return acc;
}

struct SteadyStateResult {
  Vector harmonic_weights;  // w = H(ik) applied to v at harmonic 0 (storage order)
  Signal predicted;
  Signal simulated;
  double mismatch = 0.0;  // terminal relative error over the last period
  double rho = 0.0;
  int periods = 0;
};

/// Response to u(t) = v e^{i k t}: predicted as e^{ikt} times the wave with
/// Fourier coefficients H(ik) (v at harmonic zero), then checked against a
/// forced simulation run past the transient (length scaled by -log rho).
inline SteadyStateResult steady_state_response(const DelaySystem& system, int k,
                                               const Vector& v, int K,
                                               int monodromy_cells = 128,
                                               int samples_per_period = 256) {
  system.validate();
  if (v.size() != system.dim) throw PerstabError("steady_state_response: bad v size");
  SteadyStateResult out;
  auto mono = monodromy_radius(system, monodromy_cells);
  out.rho = mono.rho_refined;
  if (out.rho >= 1.0)
    throw PerstabError("steady_state_response: system is unstable (rho = " +
                       std::to_string(out.rho) + ")");

  auto model = make_harmonic_model(system, 2 * K);
  Matrix H = htf_matrix(model, Complex(0.0, static_cast<double>(k)), K);
  const int d = system.dim;
  Vector stacked = Vector::Zero(H.rows());
  stacked.segment(K * d, d) = v;  // harmonic 0 block
  out.harmonic_weights = H * stacked;

  double log_rho = std::log(out.rho);
  int periods = out.rho > 0 ? static_cast<int>(std::ceil(20.0 / -log_rho)) + 2 : 3;
  out.periods = periods;
  const double T = system.period;
  const double omega = system.omega();
  double h = T / samples_per_period;

  auto u = [&](double t) { return Vector(v * std::exp(Complex(0, k) * t)); };
  SimOptions sim;
  sim.backend = Backend::Grid;
  sim.grid_step = h;
  out.simulated = simulate_forced(system, u, 0.0, periods * T, sim);

  auto predict = [&](double t) {
    Vector w = Vector::Zero(d);
    for (int n = -K; n <= K; ++n)
      w += Vector(out.harmonic_weights.segment((K - n) * d, d)) *
           std::exp(Complex(0, n * omega) * t);
    return Vector(w * std::exp(Complex(0, k) * t));
  };
  out.predicted.start = (periods - 1) * T;
  out.predicted.step = h;
  double peak = 0.0, err = 0.0;
  for (int i = 0; i <= samples_per_period; ++i) {
    double t = (periods - 1) * T + i * h;
    Vector yp = predict(t);
    out.predicted.values.push_back(yp);
    peak = std::max(peak, yp.norm());
    err = std::max(err, (out.simulated.at(t) - yp).norm());
  }
  out.mismatch = peak > 0 ? err / peak : err;
  return out;
}

}  // namespace perstab
