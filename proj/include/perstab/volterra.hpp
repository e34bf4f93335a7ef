#pragma once

#include <map>
#include <memory>

#include "perstab/signal.hpp"
#include "perstab/system.hpp"

namespace perstab {

// Atomic Stieltjes-Volterra kernels on a window [a,b]: kappa(t, .) is left
// continuous, vanishes for tau >= t, and its measure d kappa(t, .) is a
// finite sum of matrix-weighted Dirac atoms strictly below t. This is the
// subclass the difference-delay system produces (atoms at t - tau_j with
// weights D_j(t)); general bounded-variation kernels are out of scope, since
// atomic kernels admit exact finite computation.
//
// Two Heaviside conventions appear in the construction and are kept explicit
// to avoid off-by-one atoms: the kernel-side step h with h(0) = 0 (an atom
// sitting exactly at the window edge a still charges integrals from a^-),
// and the solution-side step H with H(0) = 1 (X(t,t) = I).

struct VolterraAtom {
  double loc = 0.0;
  Matrix weight;
  int depth = 1;  // convolution depth that produced the atom
};

enum class Heaviside { JumpAfter /* h(0)=0 */, JumpAt /* H(0)=1 */ };

class AtomicKernel {
 public:
  AtomicKernel(double a, double b, int dim,
               std::function<std::vector<VolterraAtom>(double)> atoms, double gap_min)
      : a_(a), b_(b), dim_(dim), atoms_(std::move(atoms)), gap_min_(gap_min) {
    if (b_ <= a_) throw PerstabError("atomic kernel: empty window");
  }

  double a() const { return a_; }
  double b() const { return b_; }
  int dim() const { return dim_; }
  double gap_min() const { return gap_min_; }

  /// Atoms of d kappa(t, .): locations in [a, t), each at least gap_min
  /// below t for system-derived kernels.
  std::vector<VolterraAtom> atoms_at(double t) const { return atoms_(t); }

  /// Function value kappa(t, tau) = -sum of atom weights in [tau, t).
  Matrix value(double t, double tau) const {
    Matrix acc = Matrix::Zero(dim_, dim_);
    if (tau >= t) return acc;
    for (const auto& atom : atoms_(t))
      if (atom.loc >= tau - 1e-12 * (b_ - a_)) acc -= atom.weight;
    return acc;
  }

  /// Total variation of kappa(t, .) (sum of atom weight norms).
  double total_variation(double t) const {
    double tv = 0.0;
    for (const auto& atom : atoms_(t)) tv += operator_norm(atom.weight);
    return tv;
  }

 private:
  double a_, b_;
  int dim_;
  std::function<std::vector<VolterraAtom>(double)> atoms_;
  double gap_min_;
};

/// System kernel on [s, s + tau_N]: atoms at t - tau_j with weight D_j(t),
/// kept while they fall inside the window (kernel-side Heaviside h(0) = 0,
/// so the atom at exactly a is kept).
inline AtomicKernel kernel_from_system(const DelaySystem& system, double s) {
  system.validate();
  const double a = s;
  const double b = s + system.max_delay();
  DelaySystem sys = system;
  return AtomicKernel(
      a, b, system.dim,
      [sys, a](double t) {
        std::vector<VolterraAtom> atoms;
        for (std::size_t j = 0; j < sys.delays.size(); ++j) {
          double loc = t - sys.delays[j];
          if (loc >= a - 1e-12 * sys.max_delay() && loc < t)
            atoms.push_back({loc, sys.coefficients[j](t), 1});
        }
        return atoms;
      },
      system.min_delay());
}

/// Resolvent rho of an atomic kernel: the unique kernel with
/// rho = -kappa + kappa * rho (Stieltjes convolution). For atomic kernels the
/// Neumann series -sum_{n>=1} kappa^{*n} terminates, every convolution
/// shifting the support down by at least gap_min; atom lists satisfy
///   atoms(rho, t) = { (loc, -w) } + { (loc', w w') : (loc', w') in atoms(rho, loc) }
/// over the atoms (loc, w) of kappa(t, .).
class ResolventKernel {
 public:
  explicit ResolventKernel(const AtomicKernel& kernel)
      : kernel_(std::make_shared<AtomicKernel>(kernel)),
        memo_(std::make_shared<Memo>()) {
    if (!(kernel.gap_min() > 0.0))
      throw PerstabError(
          "resolvent: atoms accumulate at t (gap_min = 0); outside the atomic "
          "subclass handled here");
  }

  double a() const { return kernel_->a(); }
  double b() const { return kernel_->b(); }
  int dim() const { return kernel_->dim(); }

  std::vector<VolterraAtom> atoms_at(double t) const {
    long long key = quantize(t);
    {
      std::lock_guard<std::mutex> lock(memo_->mutex);
      auto it = memo_->table.find(key);
      if (it != memo_->table.end()) return it->second;
    }
    std::vector<VolterraAtom> out;
    for (const auto& [loc, w, depth] : kernel_->atoms_at(t)) {
      out.push_back({loc, -w, 1});
      for (const auto& sub : atoms_at(loc))
        out.push_back({sub.loc, w * sub.weight, sub.depth + 1});
    }
    merge_atoms(out, 1e-12 * (b() - a()));
    std::lock_guard<std::mutex> lock(memo_->mutex);
    auto [it, ok] = memo_->table.emplace(key, std::move(out));
    return it->second;
  }

  /// rho(t, tau): function value from the atoms, zero for tau >= t.
  Matrix value(double t, double tau) const {
    Matrix acc = Matrix::Zero(dim(), dim());
    if (tau >= t) return acc;
    double tol = 1e-12 * (b() - a());
    for (const auto& atom : atoms_at(t))
      if (atom.loc >= tau - tol) acc -= atom.weight;
    return acc;
  }

  /// Deepest convolution chain seen at t; bounded by ceil(tau_N / tau_1) for
  /// system kernels.
  int neumann_depth(double t) const {
    int depth = 0;
    for (const auto& atom : atoms_at(t)) depth = std::max(depth, atom.depth);
    return depth;
  }

  const AtomicKernel& kernel() const { return *kernel_; }

 private:
  struct Memo {
    std::map<long long, std::vector<VolterraAtom>> table;
    std::mutex mutex;
  };

  long long quantize(double t) const {
    double rel = (t - kernel_->a()) / (kernel_->b() - kernel_->a());
    return static_cast<long long>(std::llround(rel * 1125899906842624.0));  // 2^50
  }

  static void merge_atoms(std::vector<VolterraAtom>& atoms, double tol) {
    if (atoms.empty()) return;
    std::sort(atoms.begin(), atoms.end(),
              [](const VolterraAtom& x, const VolterraAtom& y) { return x.loc < y.loc; });
    std::vector<VolterraAtom> merged;
    for (auto& atom : atoms) {
      if (!merged.empty() && atom.loc - merged.back().loc <= tol) {
        merged.back().weight += atom.weight;
        merged.back().depth = std::max(merged.back().depth, atom.depth);
      } else {
        merged.push_back(std::move(atom));
      }
    }
    atoms = std::move(merged);
  }

  std::shared_ptr<AtomicKernel> kernel_;
  std::shared_ptr<Memo> memo_;
};

inline ResolventKernel resolvent(const AtomicKernel& kernel) {
  return ResolventKernel(kernel);
}

/// Max residual of the resolvent identity
/// rho(t,b) + kappa(t,b) - int_{b^-}^{t^-} d kappa(t,.) rho(., b) over a grid
/// of (t, beta) pairs.
inline double resolvent_residual(const AtomicKernel& kernel, const ResolventKernel& rho,
                                 int grid = 24) {
  double worst = 0.0;
  const double a = kernel.a(), b = kernel.b();
  for (int i = 0; i <= grid; ++i) {
    double t = a + (b - a) * i / grid;
    for (int j = 0; j <= grid; ++j) {
      double beta = a + (b - a) * j / grid;
      Matrix lhs = rho.value(t, beta);
      Matrix rhs = -kernel.value(t, beta);
      double tol = 1e-12 * (b - a);
      for (const auto& atom : kernel.atoms_at(t))
        if (atom.loc >= beta - tol) rhs += atom.weight * rho.value(atom.loc, beta);
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Solution formula y(t) = g(t) - int_{a^-}^{t^-} d rho(t,.) g(.): for atomic
/// resolvents a finite weighted sum of g samples.
inline Vector solve_volterra(const ResolventKernel& rho,
                             const std::function<Vector(double)>& g, double t) {
  Vector y = g(t);
  for (const auto& atom : rho.atoms_at(t)) y -= atom.weight * g(atom.loc);
  return y;
}

/// Forcing induced by the initial condition:
/// f(t) = sum over delays tau_l in (t-s, tau_N] of D_l(t) phi(t - s - tau_l);
/// continuous when phi and the coefficients are, and f(s) = phi(0) for
/// splicing-compatible phi.
inline std::function<Vector(double)> forcing_from_initial(const DelaySystem& system,
                                                          const InitialCondition& phi,
                                                          double s) {
  DelaySystem sys = system;
  auto ph = phi.phi;
  return [sys, ph, s](double t) {
    Vector f = Vector::Zero(sys.dim);
    double tol = 1e-12 * sys.max_delay();
    for (std::size_t j = 0; j < sys.delays.size(); ++j)
      if (sys.delays[j] > (t - s) + tol)
        f += sys.coefficients[j](t) * ph(t - s - sys.delays[j]);
    return f;
  };
}

/// X~(t, alpha) = I H(t - alpha) + rho(t, alpha) with the solution-side
/// Heaviside (H(0) = 1); coincides with the fundamental solution on the
/// window square.
inline Matrix fundamental_from_resolvent(const ResolventKernel& rho, double t,
                                         double alpha) {
  Matrix x = rho.value(t, alpha);
  if (t >= alpha) x += identity(rho.dim());
  return x;
}

}  // namespace perstab
