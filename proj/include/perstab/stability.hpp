#pragma once

#include <optional>

#include "perstab/simulate.hpp"
#include "perstab/spectral.hpp"

namespace perstab {

enum class Verdict { Stable, Unstable, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::Unstable: return "unstable";
    default: return "inconclusive";
  }
}

// ---------------------------------------------------------------------------
// Frozen-coefficient scans. sigma(t, p) = sigma_min(I - sum_j e^{-p tau_j}
// D_j(t)): cheap d x d evaluations, scanned over a (t, p) box with a local
// zoom so that genuine zeros are driven toward machine scale.

struct FrozenScanOptions {
  double beta = -0.1;
  double re_max = std::numeric_limits<double>::quiet_NaN();  // auto
  double im_window = std::numeric_limits<double>::quiet_NaN();  // auto, see below
  int t_grid = 200;
  int n_re = 24;
  int n_im = 120;
  double m_bound = 1e6;
  int refine_rounds = 12;
  int threads = 0;
};

struct FrozenScanResult {
  double min_sigma = 0.0;
  Complex argmin_p;
  double argmin_t = 0.0;
  bool pass = false;
  double threshold = 0.0;
  double im_window = 0.0;
  bool commensurate = false;
};

namespace detail {

inline double frozen_sigma(const DelaySystem& system, double t, Complex p) {
  Eigen::JacobiSVD<Matrix> svd(system.frozen_matrix(p, t));
  return svd.singularValues()(svd.singularValues().size() - 1);
}

inline FrozenScanResult frozen_scan(const DelaySystem& system,
                                    const FrozenScanOptions& opts) {
  FrozenScanResult res;
  res.threshold = 1.0 / opts.m_bound;
  double g = system.commensurate_base();
  res.commensurate = g > 0;
  // For commensurate delays the frozen symbol is 2 pi / g periodic in Im(p).
  // Otherwise it is only almost periodic; the default window is a heuristic
  // (this test exists to be shown insufficient, not to certify).
  double im_window = opts.im_window;
  if (!std::isfinite(im_window))
    im_window = res.commensurate ? 2.0 * kPi / g : 4.0 * kPi / system.min_delay();
  res.im_window = im_window;

  auto sup = system.coefficient_sup_norms();
  double total_sup = 0.0;
  for (double v : sup) total_sup += v;
  double re_max = opts.re_max;
  if (!std::isfinite(re_max)) {
    double gamma1 = total_sup > 0 ? std::log(total_sup) / system.min_delay()
                                  : -std::numeric_limits<double>::infinity();
    re_max = std::max({opts.beta + 1.0, std::isfinite(gamma1) ? gamma1 + 1.0 : 0.0, 0.5});
  }

  const int nt = system.is_constant() ? 1 : std::max(1, opts.t_grid);
  const double T = system.period;
  std::size_t total = static_cast<std::size_t>(nt) * opts.n_re * opts.n_im;
  std::vector<double> sigmas(total);
  auto point = [&](std::size_t idx) {
    std::size_t it = idx / (static_cast<std::size_t>(opts.n_re) * opts.n_im);
    std::size_t rem = idx % (static_cast<std::size_t>(opts.n_re) * opts.n_im);
    int ire = static_cast<int>(rem) / opts.n_im;
    int iim = static_cast<int>(rem) % opts.n_im;
    double t = static_cast<double>(it) * T / nt;
    double re = opts.n_re == 1 ? opts.beta
                               : opts.beta + (re_max - opts.beta) * ire / (opts.n_re - 1.0);
    double im = im_window * iim / opts.n_im;
    return std::tuple<double, Complex>(t, Complex(re, im));
  };
  parallel_for(total, [&](std::size_t idx) {
    auto [t, p] = point(idx);
    sigmas[idx] = frozen_sigma(system, t, p);
  }, opts.threads);

  res.min_sigma = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < total; ++i)
    if (sigmas[i] < res.min_sigma) {
      res.min_sigma = sigmas[i];
      best_idx = i;
    }
  auto [t0, p0] = point(best_idx);
  res.argmin_t = t0;
  res.argmin_p = p0;

  // Joint (t, Re p, Im p) zoom around the grid argmin.
  double half_t = nt > 1 ? T / nt : 0.0;
  double half_re = opts.n_re > 1 ? (re_max - opts.beta) / (opts.n_re - 1) : 0.0;
  double half_im = im_window / opts.n_im;
  for (int round = 0; round < opts.refine_rounds; ++round) {
    double ct = res.argmin_t;
    Complex cp = res.argmin_p;
    const int nq = 5;
    for (int a = 0; a < (half_t > 0 ? nq : 1); ++a)
      for (int b = 0; b < nq; ++b)
        for (int c = 0; c < nq; ++c) {
          double t = half_t > 0 ? ct + half_t * (2.0 * a / (nq - 1) - 1.0) : ct;
          double re = cp.real() + half_re * (2.0 * b / (nq - 1) - 1.0);
          double im = cp.imag() + half_im * (2.0 * c / (nq - 1) - 1.0);
          re = std::clamp(re, opts.beta, re_max);
          im = std::clamp(im, 0.0, im_window);
          double sig = frozen_sigma(system, t, Complex(re, im));
          if (sig < res.min_sigma) {
            res.min_sigma = sig;
            res.argmin_t = t;
            res.argmin_p = Complex(re, im);
          }
        }
    half_t /= 3.0;
    half_re /= 3.0;
    half_im /= 3.0;
  }
  res.pass = res.min_sigma >= res.threshold;
  return res;
}

}  // namespace detail

/// The naive "freeze t and apply the constant-coefficient criterion" test.
/// Implemented because it is known to be insufficient for periodic
/// coefficients; stability_report highlights the discordance when it passes
/// while the monodromy radius exceeds one.
inline FrozenScanResult pointwise_frozen_test(const DelaySystem& system,
                                              const FrozenScanOptions& opts) {
  system.validate();
  return detail::frozen_scan(system, opts);
}

// ---------------------------------------------------------------------------
// Constant-coefficient characterization with stability-abscissa estimate.

struct HenryHaleResult {
  Verdict verdict = Verdict::Inconclusive;
  double abscissa = 0.0;  // -inf when every tested beta passes
  double min_sigma_at_beta = 0.0;
  double beta = 0.0;
  bool abscissa_bracketed = false;
  double beta_floor = 0.0;
};

// The search floor keeps sigma_min(I - sum e^{-p tau_j} D_j) meaningfully
// above the 1/M_bound threshold: far to the left the exponential factors
// alone inflate the condition number (a nilpotent D has det = 1 for every p
// yet sigma_min ~ e^{Re p}), so "passes for every tested beta" is reported
// as a -inf abscissa once the floor is reached.
inline HenryHaleResult henry_hale_constant(const DelaySystem& system, double beta,
                                           FrozenScanOptions opts = {},
                                           double bisect_tol = 1e-3,
                                           double beta_floor = -12.0) {
  system.validate();
  if (!system.is_constant())
    throw PerstabError("henry_hale_constant: system has non-constant coefficients");
  opts.t_grid = 1;
  auto pass_at = [&](double b) {
    FrozenScanOptions o = opts;
    o.beta = b;
    return detail::frozen_scan(system, o);
  };
  HenryHaleResult res;
  res.beta = beta;
  res.beta_floor = beta_floor;
  auto at_beta = pass_at(beta);
  res.min_sigma_at_beta = at_beta.min_sigma;
  res.verdict = at_beta.pass ? Verdict::Stable : Verdict::Unstable;

  // Bracket the pass/fail boundary in beta, then bisect.
  double lo, hi;  // lo fails, hi passes
  if (at_beta.pass) {
    hi = beta;
    lo = beta;
    double step = 0.25;
    bool bracketed = false;
    while (lo > beta_floor) {
      lo = std::max(beta_floor, lo - step);
      step *= 2.0;
      if (!pass_at(lo).pass) {
        bracketed = true;
        break;
      }
    }
    if (!bracketed) {
      res.abscissa = -std::numeric_limits<double>::infinity();
      return res;
    }
  } else {
    lo = beta;
    hi = beta;
    double step = 0.25;
    // The Neumann bound guarantees a pass far enough right.
    auto sup = system.coefficient_sup_norms();
    double total = 0.0;
    for (double v : sup) total += v;
    double gamma1 = total > 0 ? std::log(total) / system.min_delay() : 0.0;
    double ceiling = std::max(gamma1, 0.0) + 1.0;
    bool bracketed = false;
    while (hi < ceiling + 1.0) {
      hi = std::min(hi + step, ceiling + 1.0);
      step *= 2.0;
      if (pass_at(hi).pass) {
        bracketed = true;
        break;
      }
    }
    if (!bracketed) {
      res.abscissa = std::numeric_limits<double>::infinity();
      return res;
    }
  }
  while (hi - lo > bisect_tol) {
    double mid = 0.5 * (lo + hi);
    if (pass_at(mid).pass) hi = mid;
    else lo = mid;
  }
  res.abscissa = 0.5 * (lo + hi);
  res.abscissa_bracketed = true;
  return res;
}

// ---------------------------------------------------------------------------
// Generalized half-plane test on the truncated operator R(p).

struct GeneralizedResult {
  Verdict verdict = Verdict::Inconclusive;
  HalfPlaneScanResult scan;
  bool commensurate = false;
  std::string note;
};

inline GeneralizedResult generalized_test(const DelaySystem& system,
                                          const ScanOptions& opts) {
  system.validate();
  GeneralizedResult res;
  res.commensurate = system.commensurate_base() > 0;
  if (res.commensurate)
    res.note =
        "commensurate delays: the uniform bound (ii) follows from invertibility "
        "(i); the sigma_min floor is reported as a diagnostic only";
  res.scan = scan_halfplane(system, opts);
  if (!res.scan.converged)
    res.verdict = Verdict::Inconclusive;
  else
    res.verdict = res.scan.verdict_pass ? Verdict::Stable : Verdict::Unstable;
  return res;
}

// ---------------------------------------------------------------------------
// Monodromy spectral radius of the discretized U_2(T, 0).

struct MonodromyResult {
  double rho = 0.0;
  double rho_refined = 0.0;  // at 2M cells
  int M = 0;
  bool converged = false;
};

inline MonodromyResult monodromy_radius(const DelaySystem& system, int M,
                                        double conv_tol = 0.02) {
  system.validate();
  if (M < 8) throw PerstabError("monodromy_radius: need M >= 8");
  auto radius_at = [&](int cells) {
    Matrix U = solution_operator_matrix(system, 0.0, system.period, cells);
    Eigen::ComplexEigenSolver<Matrix> eig(U, false);
    if (eig.info() != Eigen::Success)
      throw PerstabError("monodromy_radius: eigensolver failed");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
  };
  MonodromyResult res;
  res.M = M;
  res.rho = radius_at(M);
  res.rho_refined = radius_at(2 * M);
  double scale = std::max(res.rho_refined, 1e-12);
  res.converged = std::abs(res.rho - res.rho_refined) <= conv_tol * scale;
  return res;
}

// ---------------------------------------------------------------------------
// Aggregated report.

struct ConsistencyFlags {
  std::optional<bool> monodromy_generalized_agree;
  std::optional<bool> decay_matches_monodromy;
  bool pointwise_discordance = false;  // pointwise passes yet the system is unstable
  bool contradiction = false;          // monodromy says stable, generalized says fail
  std::vector<std::string> notes;
};

struct StabilityReport {
  FrozenScanResult pointwise;
  std::optional<HenryHaleResult> henry_hale;
  GeneralizedResult generalized;
  MonodromyResult monodromy;
  DecayFit decay;
  ConsistencyFlags consistency;
};

struct StabilityOptions {
  double beta = -0.1;
  int K = 16;
  int monodromy_cells = 128;
  double m_bound = 1e6;
  double monodromy_margin = 0.05;
  double decay_tol = 0.15;
  std::uint64_t seed = 12345;
  int threads = 0;
  ScanOptions scan;          // beta/K/m_bound copied in
  FrozenScanOptions frozen;  // beta/m_bound copied in
};

inline StabilityReport stability_report(const DelaySystem& system,
                                        StabilityOptions opts = {}) {
  system.validate();
  StabilityReport rep;
  opts.scan.beta = opts.beta;
  opts.scan.K = opts.K;
  opts.scan.m_bound = opts.m_bound;
  opts.scan.threads = opts.threads;
  opts.frozen.beta = opts.beta;
  opts.frozen.m_bound = opts.m_bound;
  opts.frozen.threads = opts.threads;

  rep.pointwise = pointwise_frozen_test(system, opts.frozen);
  if (system.is_constant())
    rep.henry_hale = henry_hale_constant(system, opts.beta, opts.frozen);
  rep.generalized = generalized_test(system, opts.scan);
  rep.monodromy = monodromy_radius(system, opts.monodromy_cells);

  // Seeded random trajectory for the decay fit.
  auto phi = random_initial_condition(system, opts.seed);
  double t_end = std::max(16.0 * system.max_delay(), 4.0 * system.period);
  SimOptions sim;
  sim.backend = Backend::Grid;
  sim.grid_step = system.min_delay() / 64;
  auto traj = simulate_homogeneous(system, phi, 0.0, t_end, sim);
  rep.decay = decay_rate_fit(traj, system);

  // Consistency flags.
  const double margin = opts.monodromy_margin;
  std::optional<bool> mono_stable;
  if (rep.monodromy.converged) {
    if (rep.monodromy.rho_refined < 1.0 - margin) mono_stable = true;
    else if (rep.monodromy.rho_refined > 1.0 + margin) mono_stable = false;
  }
  if (mono_stable && rep.generalized.verdict != Verdict::Inconclusive) {
    bool gen_stable = rep.generalized.verdict == Verdict::Stable;
    rep.consistency.monodromy_generalized_agree = (*mono_stable == gen_stable);
    if (*mono_stable && !gen_stable) {
      rep.consistency.contradiction = true;
      rep.consistency.notes.push_back(
          "monodromy radius below 1 but the generalized test fails: "
          "inspect truncation order and scan window");
    }
  }
  double rho = rep.monodromy.rho_refined;
  if (rho > 0 && std::isfinite(rep.decay.gamma)) {
    double target = -std::log(rho) / system.period;
    if (std::abs(target) > 1e-12) {
      bool ok = std::abs(rep.decay.gamma - target) <= opts.decay_tol * std::abs(target);
      rep.consistency.decay_matches_monodromy = ok;
      if (!ok)
        rep.consistency.notes.push_back("fitted decay rate differs from -log(rho)/T "
                                        "beyond tolerance");
    }
  } else if (rho == 0.0 && rep.decay.zero_trajectory) {
    rep.consistency.decay_matches_monodromy = true;  // both report instant death
  }
  bool unstable_evidence = (mono_stable && !*mono_stable) ||
                           rep.generalized.verdict == Verdict::Unstable;
  if (rep.pointwise.pass && unstable_evidence) {
    rep.consistency.pointwise_discordance = true;
    rep.consistency.notes.push_back(
        "pointwise frozen test passes although the system is unstable: the "
        "naive generalization of the constant-coefficient criterion fails here");
  }
  return rep;
}

}  // namespace perstab
