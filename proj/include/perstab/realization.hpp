#pragma once

#include "perstab/htf.hpp"
#include "perstab/kernels.hpp"
#include "perstab/simulate.hpp"
#include "perstab/spectral.hpp"

namespace perstab {

// Discrete-time realization of the periodic input-output system over one
// period: states are cell-sampled functions on [-tau_N, 0] (M_z cells, the
// monodromy grid), inputs/outputs cell-sampled functions on [0, T) (M_u
// cells, left-endpoint representatives). Period-boundary bookkeeping is
// resolved by the half-open cell convention [a, b).

struct DiscreteRealization {
  Matrix A;  // U_2(T,0) on the state grid (same code path as the monodromy matrix)
  Matrix B;  // input period -> state at T
  Matrix C;  // state -> output trace over one period
  Matrix D;  // input period -> output trace, zero state
  int Mz = 0;
  int Mu = 0;
  int d = 0;
  double period = 0.0;
  double tau_max = 0.0;

  double state_step() const { return tau_max / Mz; }
  double io_step() const { return period / Mu; }
};

namespace detail {

/// Propagates the grid dynamics for a d x c multistate with an optional
/// per-step input block, returning the requested time levels.
struct PropagationOutputs {
  Matrix state;    // Mz*d x c, rows = state cells at the final time
  Matrix outputs;  // Mu*d x c, rows = y at output-cell representatives
};

inline PropagationOutputs propagate(const DelaySystem& system, int Mz, int Mu,
                                    const Matrix* initial_blocks,  // d x c per level or null
                                    const std::function<Matrix(double)>* input, int cols) {
  const int d = system.dim;
  const double tau = system.max_delay();
  const double h = tau / Mz;
  const double hu = system.period / Mu;
  SimDiagnostics diag;
  auto r = rounded_delays(system, h, h / 100, &diag);
  long long hist = 0;
  for (long long rj : r) hist = std::max(hist, rj);
  if (hist > Mz)
    throw PerstabError("build_realization: rounded delay exceeds the state depth");
  long long n = std::llround(system.period / h);
  std::vector<Matrix> ring(static_cast<std::size_t>(Mz + 1));
  auto level = [&](long long i) -> Matrix& {
    long long m = (i % (Mz + 1) + (Mz + 1)) % (Mz + 1);
    return ring[static_cast<std::size_t>(m)];
  };
  // State basis fills cells -(Mz-1)..0; the forced pass may read one level
  // further back (zero pre-history).
  for (long long i = -std::max<long long>(hist, Mz - 1); i <= 0; ++i) {
    if (initial_blocks && i >= -(Mz - 1))
      level(i) = initial_blocks[i + Mz - 1];
    else
      level(i) = Matrix::Zero(d, cols);
  }
  PropagationOutputs out;
  out.outputs = Matrix::Zero(Mu * d, cols);
  // Each output cell c (representative t = c * hu) is captured from the
  // nearest grid node; exact when the grids align.
  std::vector<std::vector<int>> targets(static_cast<std::size_t>(n) + 1);
  for (int c = 0; c < Mu; ++c) {
    long long ic = std::llround(static_cast<double>(c) * hu / h);
    ic = std::clamp<long long>(ic, 0, n - 1);
    targets[static_cast<std::size_t>(ic)].push_back(c);
  }
  auto record = [&](long long i) {
    for (int c : targets[static_cast<std::size_t>(i)])
      out.outputs.block(c * d, 0, d, cols) = level(i);
  };
  long long first = input ? 0 : 1;
  if (!input) record(0);
  for (long long i = first; i <= n; ++i) {
    double ti = static_cast<double>(i) * h;
    Matrix acc = Matrix::Zero(d, cols);
    for (std::size_t j = 0; j < r.size(); ++j)
      acc += system.coefficients[j](ti) * level(i - r[j]);
    if (input) acc += (*input)(ti);
    level(i) = std::move(acc);
    if (i < n) record(i);
  }
  out.state = Matrix::Zero(Mz * d, cols);
  for (int i = 0; i < Mz; ++i) out.state.block(i * d, 0, d, cols) = level(n - (Mz - 1) + i);
  return out;
}

}  // namespace detail

inline DiscreteRealization build_realization(const DelaySystem& system, int Mz, int Mu) {
  system.validate();
  if (Mz < 4 || Mu < 4) throw PerstabError("build_realization: need Mz, Mu >= 4");
  DiscreteRealization real;
  real.Mz = Mz;
  real.Mu = Mu;
  real.d = system.dim;
  real.period = system.period;
  real.tau_max = system.max_delay();
  const int d = system.dim;

  // A through the very same routine the monodromy test uses.
  real.A = solution_operator_matrix(system, 0.0, system.period, Mz);

  // C: output traces of the state basis (homogeneous propagation).
  {
    std::vector<Matrix> init(static_cast<std::size_t>(Mz));
    for (int i = 0; i < Mz; ++i) {
      init[static_cast<std::size_t>(i)] = Matrix::Zero(d, Mz * d);
      init[static_cast<std::size_t>(i)].block(0, i * d, d, d) = identity(d);
    }
    auto res = detail::propagate(system, Mz, Mu, init.data(), nullptr, Mz * d);
    real.C = std::move(res.outputs);
  }

  // B, D: responses to the input-cell indicator basis (zero initial state).
  {
    const double hu = system.period / Mu;
    std::function<Matrix(double)> input = [&](double t) {
      Matrix u = Matrix::Zero(d, Mu * d);
      auto c = static_cast<long long>(std::floor(t / hu));
      if (c >= 0 && c < Mu) u.block(0, static_cast<int>(c) * d, d, d) = identity(d);
      return u;
    };
    auto res = detail::propagate(system, Mz, Mu, nullptr, &input, Mu * d);
    real.B = std::move(res.state);
    real.D = std::move(res.outputs);
  }
  return real;
}

/// Iterates z_{k+1} = A z_k + B u_k, y_k = C z_k + D u_k from z_0 = 0.
inline std::vector<Vector> run_discrete(const DiscreteRealization& real,
                                        const std::vector<Vector>& u_segments) {
  const auto cols = real.B.cols();
  std::vector<Vector> out;
  out.reserve(u_segments.size());
  Vector z = Vector::Zero(real.A.rows());
  for (const auto& u : u_segments) {
    if (u.size() != cols)
      throw PerstabError("run_discrete: segment length does not match Mu*d");
    out.emplace_back(real.C * z + real.D * u);
    z = real.A * z + real.B * u;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block impulse operators H_[k] and the multiplication-conjugated transfer
// Lambda(p) = E_{-p} (sum_k H_[k] e^{-pkT}) E_p, which reproduces R^{-1}(p)
// on Fourier modes.

struct BlockImpulseOperators {
  std::vector<Matrix> H;  // H[k], each Mu*d x Mu*d
  int Mu = 0;
  int d = 0;
  double period = 0.0;
  double rep_offset = 0.0;  // cell representative: 0 = left edge, 0.5 = midpoint

  int k_max() const { return static_cast<int>(H.size()) - 1; }
  double rep_time(int i) const { return (i + rep_offset) * period / Mu; }
};

/// H_[k] acts on one input period: (H_[k] v)(t) = sum over lattice points f
/// with kT + t - f in [0, T) of K_f(kT + t) v(kT + t - f), sampled on the
/// output grid. Left-edge representatives reproduce the grid simulation
/// exactly on aligned grids; midpoint representatives halve the error each
/// time the grid doubles on smooth data.
inline BlockImpulseOperators build_block_impulse(const KernelCoefficients& kernels,
                                                 int k_max, int Mu,
                                                 bool midpoint = false) {
  const auto& sys = kernels.system();
  const double T = sys.period;
  if (kernels.horizon() < (k_max + 1) * T - kernels.lattice().lookup_tol())
    throw PerstabError("build_block_impulse: kernel horizon below (k_max+1)*T");
  BlockImpulseOperators out;
  out.Mu = Mu;
  out.d = sys.dim;
  out.period = T;
  out.rep_offset = midpoint ? 0.5 : 0.0;
  const int d = sys.dim;
  const double hu = T / Mu;
  const auto& lat = kernels.lattice();
  out.H.assign(static_cast<std::size_t>(k_max) + 1, Matrix::Zero(Mu * d, Mu * d));
  // Half-open membership [0, T) with a small inward nudge so that lattice
  // points landing on cell boundaries (the aligned case) resolve to the
  // convention rather than to rounding noise.
  const double nudge = 1e-9 * T;
  for (int k = 0; k <= k_max; ++k) {
    Matrix& Hk = out.H[static_cast<std::size_t>(k)];
    for (int i = 0; i < Mu; ++i) {
      double t = out.rep_time(i);
      double tk = k * T + t;
      for (std::size_t fi = 0; fi < lat.size(); ++fi) {
        double f = lat.points[fi].value;
        if (f > tk + lat.lookup_tol()) break;
        double arg = tk - f + nudge;
        if (arg < 0.0 || arg >= T) continue;  // belongs to another input period
        auto j = static_cast<long long>(std::floor(arg / hu));
        if (j >= Mu) j = Mu - 1;
        Hk.block(i * d, static_cast<int>(j) * d, d, d) += kernels.evaluate(fi, tk);
      }
    }
  }
  return out;
}

/// Picks the number of z-transform terms needed for a 1e-12 relative tail at
/// the given p (requires Re(p) above the kernel growth rate).
inline int choose_n_terms(const BlockImpulseOperators& blocks, Complex p,
                          double tol = 1e-12) {
  double peak = 0.0;
  for (int k = 0; k <= blocks.k_max(); ++k) {
    double q = blocks.H[static_cast<std::size_t>(k)].norm() *
               std::exp(-p.real() * k * blocks.period);
    peak = std::max(peak, q);
    if (k >= 1 && q <= tol * peak) return k;
  }
  return blocks.k_max();
}

inline Matrix lambda_operator(const BlockImpulseOperators& blocks, Complex p,
                              int n_terms) {
  if (n_terms > blocks.k_max())
    throw PerstabError("lambda_operator: n_terms exceeds available blocks");
  const double T = blocks.period;
  const int n = blocks.Mu * blocks.d;
  Matrix sum = Matrix::Zero(n, n);
  double peak = 0.0, last = 0.0;
  for (int k = 0; k <= n_terms; ++k) {
    Complex w = std::exp(-p * (k * T));
    sum += blocks.H[static_cast<std::size_t>(k)] * w;
    last = blocks.H[static_cast<std::size_t>(k)].norm() * std::abs(w);
    peak = std::max(peak, last);
  }
  if (peak > 0 && last > 1e-12 * peak)
    throw PerstabError("lambda_operator: z-transform tail not converged at this p");
  Matrix out(n, n);
  for (int i = 0; i < blocks.Mu; ++i) {
    Complex left = std::exp(-p * blocks.rep_time(i));
    for (int j = 0; j < blocks.Mu; ++j) {
      Complex right = std::exp(p * blocks.rep_time(j));
      out.block(i * blocks.d, j * blocks.d, blocks.d, blocks.d) =
          left * sum.block(i * blocks.d, j * blocks.d, blocks.d, blocks.d) * right;
    }
  }
  return out;
}

/// Applies Lambda(p) to Fourier modes e^{i w m t} and compares the Fourier
/// coefficients of the result against the columns of R^{-1}(p), the
/// conjugacy between the period-lifted transfer function and the harmonic
/// transfer function. The measures d_tau X are atomic, so the action of
/// Lambda on a continuous mode is an exact finite sum; M_u enters only
/// through the output grid used for coefficient extraction. Returns the max
/// mismatch over the central window |n|, |m| <= K/2.
inline double verify_lambda_equals_htf(const DelaySystem& system,
                                       const KernelCoefficients& kernels, Complex p,
                                       int K, int Mu, int n_terms) {
  auto model = make_harmonic_model(system, 2 * K);
  Matrix Hinv = htf_matrix(model, p, K);
  const int d = system.dim;
  const double T = system.period;
  const double omega = system.omega();
  const double hu = T / Mu;
  const auto& lat = kernels.lattice();
  if (kernels.horizon() < (n_terms + 1) * T - lat.lookup_tol())
    throw PerstabError("verify_lambda_equals_htf: kernel horizon below (n_terms+1)*T");
  const double nudge = 1e-9 * T;
  const int W = K / 2;
  double worst = 0.0;
  for (int m = -W; m <= W; ++m) {
    Complex em(0, m * omega);
    std::vector<Matrix> psi(static_cast<std::size_t>(Mu));
    for (int i = 0; i < Mu; ++i) {
      double t = i * hu;
      Matrix acc = Matrix::Zero(d, d);
      for (int k = 0; k <= n_terms; ++k) {
        double tk = k * T + t;
        Complex zk = std::exp(-p * (k * T));
        for (std::size_t fi = 0; fi < lat.size(); ++fi) {
          double f = lat.points[fi].value;
          if (f > tk + lat.lookup_tol()) break;
          double x = tk - f + nudge;
          if (x < 0.0 || x >= T) continue;
          acc += zk * std::exp((p + em) * (x - nudge)) * kernels.evaluate(fi, tk);
        }
      }
      psi[static_cast<std::size_t>(i)] = std::exp(-p * t) * acc;
    }
    for (int nharm = -W; nharm <= W; ++nharm) {
      Matrix coeff = Matrix::Zero(d, d);
      for (int i = 0; i < Mu; ++i)
        coeff += psi[static_cast<std::size_t>(i)] *
                 std::exp(Complex(0, -nharm * omega) * (i * hu));
      coeff /= static_cast<double>(Mu);
      Matrix expect = harmonic_block(Hinv, K, d, nharm, m);
      worst = std::max(worst, (coeff - expect).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Same comparison with the mode carried through the sampled cell space (the
/// matrix Lambda applied to mode samples at the blocks' representatives):
/// the discretization-limited variant whose residual shrinks as the output
/// grid is refined.
inline double verify_lambda_sampled(const DelaySystem& system,
                                    const BlockImpulseOperators& blocks, Complex p,
                                    int K, int n_terms) {
  auto model = make_harmonic_model(system, 2 * K);
  Matrix Hinv = htf_matrix(model, p, K);
  Matrix lambda = lambda_operator(blocks, p, n_terms);
  const int d = system.dim;
  const int Mu = blocks.Mu;
  const double omega = system.omega();
  const int W = K / 2;
  double worst = 0.0;
  for (int m = -W; m <= W; ++m) {
    for (int c = 0; c < d; ++c) {
      Vector phi = Vector::Zero(Mu * d);
      for (int i = 0; i < Mu; ++i)
        phi(i * d + c) = std::exp(Complex(0, m * omega) * blocks.rep_time(i));
      Vector psi = lambda * phi;
      for (int nharm = -W; nharm <= W; ++nharm) {
        Vector coeff = Vector::Zero(d);
        for (int i = 0; i < Mu; ++i)
          coeff += Vector(psi.segment(i * d, d)) *
                   std::exp(Complex(0, -nharm * omega) * blocks.rep_time(i));
        coeff /= static_cast<double>(Mu);
        Vector expect = harmonic_block(Hinv, K, d, nharm, m).col(c);
        worst = std::max(worst, (coeff - expect).cwiseAbs().maxCoeff());
      }
    }
  }
  return worst;
}

/// z-domain transfer of the realization: C (zI - A)^{-1} B + D.
inline Matrix realization_transfer(const DiscreteRealization& real, Complex z) {
  Matrix zi = z * Matrix::Identity(real.A.rows(), real.A.cols()) - real.A;
  return real.C * zi.partialPivLu().solve(real.B) + real.D;
}

}  // namespace perstab
