// perstab: stability analysis of linear periodic difference-delay systems
//   y(t) = sum_j D_j(t) y(t - tau_j)
// Subcommands cover time-domain simulation, kernel tables, half-plane
// sigma_min scans, the four-way stability report, harmonic transfer
// functions, discrete realizations, and the Volterra resolvent cross-check.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "perstab/config.hpp"
#include "perstab/htf.hpp"
#include "perstab/realization.hpp"
#include "perstab/report.hpp"
#include "perstab/system_io.hpp"
#include "perstab/volterra.hpp"

namespace {

using namespace perstab;

constexpr int kExitOk = 0;
constexpr int kExitInconclusive = 1;
constexpr int kExitInputError = 2;

/// Reads a signal CSV (t, re_0, im_0, ...) as written by the simulate
/// subcommand; used for file-based initial data.
Signal read_signal_csv(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw PerstabError("cannot open signal file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw PerstabError("empty signal file: " + path);
  Signal sig;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) < 1 + 2 * dim)
      throw PerstabError("signal file row needs 1+2*dim columns");
    times.push_back(row[0]);
    Vector v(dim);
    for (int i = 0; i < dim; ++i)
      v(i) = Complex(row[static_cast<std::size_t>(1 + 2 * i)],
                     row[static_cast<std::size_t>(2 + 2 * i)]);
    sig.values.push_back(v);
  }
  if (times.size() < 2) throw PerstabError("signal file needs at least two samples");
  sig.start = times.front();
  sig.step = times[1] - times[0];
  return sig;
}

InitialCondition parse_phi(const std::string& spec, const DelaySystem& sys,
                           std::uint64_t seed) {
  if (spec.empty() || spec == "random") return random_initial_condition(sys, seed);
  if (spec.rfind("random:", 0) == 0)
    return random_initial_condition(sys, std::stoull(spec.substr(7)));
  if (std::ifstream probe(spec); probe.good())
    return InitialCondition::from_signal(read_signal_csv(spec, sys.dim));
  if (spec == "zero") return InitialCondition::zero(sys.dim);
  if (spec == "one") {
    int d = sys.dim;
    return InitialCondition::from_function(
        [d](double) { return Vector(Vector::Ones(d)); });
  }
  if (spec.rfind("const:", 0) == 0) {
    std::stringstream ss(spec.substr(6));
    std::vector<double> vals;
    for (double v; ss >> v;) {
      vals.push_back(v);
      if (ss.peek() == ',') ss.ignore();
    }
    if (static_cast<int>(vals.size()) != sys.dim)
      throw PerstabError("--phi const: expected " + std::to_string(sys.dim) + " values");
    Vector v(sys.dim);
    for (int i = 0; i < sys.dim; ++i) v(i) = vals[static_cast<std::size_t>(i)];
    return InitialCondition::from_function([v](double) { return v; });
  }
  throw PerstabError("unrecognized --phi spec: " + spec +
                     " (use zero|one|random[:seed]|const:v1,...)");
}

Complex parse_complex(const std::string& s) {
  auto comma = s.find(',');
  if (comma == std::string::npos) return Complex(std::stod(s), 0.0);
  return Complex(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)));
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw PerstabError("cannot open output file: " + path);
  return file;
}

DelaySystem counterexample_system(double alpha) {
  // d=2, T=2*pi, tau=pi/2, D(t) = [[1/2, a cos^2 t], [a sin^2 t, 1/2]].
  DelaySystem sys;
  sys.dim = 2;
  sys.period = 2.0 * kPi;
  sys.delays = {kPi / 2.0};
  sys.real = true;
  std::map<int, Matrix> terms;
  Matrix c0(2, 2), c2(2, 2);
  c0 << 0.5, alpha / 2, alpha / 2, 0.5;
  c2 << 0.0, alpha / 4, -alpha / 4, 0.0;
  terms[0] = c0;
  terms[2] = c2;
  terms[-2] = c2;
  sys.coefficients.push_back(PeriodicMatrixFunction::from_fourier(terms, 2, sys.period));
  sys.validate();
  return sys;
}

int run(int argc, char** argv) {
  CLI::App app{"perstab: exponential stability of periodic difference-delay systems"};
  app.require_subcommand(1);

  std::string config_path;
  bool strict = false;
  app.add_option("--config", config_path, "JSON file overriding analysis defaults");
  app.add_flag("--strict", strict, "exit 1 when any verdict is inconclusive");

  AnalysisConfig cfg;

  // simulate
  auto* sim = app.add_subcommand("simulate", "time-domain solution");
  std::string sim_system, sim_phi = "random", sim_backend = "exact", sim_out;
  double sim_from = 0.0, sim_to = 10.0;
  sim->add_option("--system", sim_system)->required();
  sim->add_option("--phi", sim_phi, "zero|one|random[:seed]|const:v1,...");
  sim->add_option("--from", sim_from);
  sim->add_option("--to", sim_to);
  sim->add_option("--backend", sim_backend)->check(CLI::IsMember({"exact", "grid"}));
  sim->add_option("--out", sim_out, "CSV path (default stdout)");

  // kernel
  auto* ker = app.add_subcommand("kernel", "kernel coefficient table");
  std::string ker_system, ker_out;
  double ker_horizon = 10.0;
  int ker_grid = 0;
  ker->add_option("--system", ker_system)->required();
  ker->add_option("--horizon", ker_horizon)->required();
  ker->add_option("--grid", ker_grid, "samples per period");
  ker->add_option("--out", ker_out);

  // scan
  auto* scn = app.add_subcommand("scan", "sigma_min(R_K(p)) over a half-plane window");
  std::string scn_system, scn_out;
  double scn_beta = -0.1, scn_remax = std::numeric_limits<double>::quiet_NaN();
  int scn_K = 0;
  std::vector<int> scn_grid;
  scn->add_option("--system", scn_system)->required();
  scn->add_option("--beta", scn_beta)->required();
  scn->add_option("--K", scn_K);
  scn->add_option("--remax", scn_remax);
  scn->add_option("--grid", scn_grid)->expected(2);
  scn->add_option("--out", scn_out);

  // stability
  auto* stab = app.add_subcommand("stability", "four-way stability report");
  std::string stab_system, stab_json, stab_csv;
  double stab_beta = std::numeric_limits<double>::quiet_NaN();
  int stab_K = 0, stab_cells = 0;
  double stab_mbound = 0.0;
  stab->add_option("--system", stab_system)->required();
  stab->add_option("--beta", stab_beta);
  stab->add_option("--K", stab_K);
  stab->add_option("--M-cells", stab_cells);
  stab->add_option("--M-bound", stab_mbound);
  stab->add_option("--json", stab_json, "also write the report as JSON");
  stab->add_option("--csv", stab_csv, "also write a one-row CSV summary");

  // htf
  auto* htf = app.add_subcommand("htf", "harmonic transfer function blocks");
  std::string htf_system, htf_p = "1,0", htf_out;
  int htf_K = 0;
  bool htf_consist = false;
  double htf_horizon = 0.0;
  htf->add_option("--system", htf_system)->required();
  htf->add_option("--p", htf_p, "complex frequency re,im");
  htf->add_option("--K", htf_K);
  htf->add_flag("--consistency", htf_consist, "also report the G_k cross-check residual");
  htf->add_option("--horizon", htf_horizon, "lattice horizon for the G_k pipeline");
  htf->add_option("--out", htf_out);

  // realize
  auto* rlz = app.add_subcommand("realize", "discrete state-space realization");
  std::string rlz_system, rlz_verify;
  int rlz_Mz = 0, rlz_Mu = 0;
  rlz->add_option("--system", rlz_system)->required();
  rlz->add_option("--Mz", rlz_Mz);
  rlz->add_option("--Mu", rlz_Mu);
  rlz->add_option("--verify-lambda", rlz_verify, "p as re,im: check Lambda(p) vs R^-1(p)");

  // volterra-check
  auto* vol = app.add_subcommand("volterra-check", "resolvent residual and X~ vs X");
  std::string vol_system, vol_phi = "random";
  vol->add_option("--system", vol_system)->required();
  vol->add_option("--phi", vol_phi);

  // demo
  auto* demo = app.add_subcommand("demo", "bundled demonstrations");
  auto* demo_ce = demo->add_subcommand("counterexample",
                                       "periodic system that defeats the frozen test");
  double demo_alpha = 0.9;
  std::string demo_json;
  demo_ce->add_option("--alpha", demo_alpha, "coupling in (0,1)");
  demo_ce->add_option("--json", demo_json, "also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw PerstabError("cannot open config file: " + config_path);
    nlohmann::json j;
    in >> j;
    cfg.apply_json(j);
  }
  cfg.apply_env();
  cfg.strict = cfg.strict || strict;
  cfg.validate();

  auto load = [&](const std::string& path) {
    auto file = load_system(path);
    if (!file.options.is_null()) cfg.apply_json(file.options);
    return file;
  };

  if (*sim) {
    auto file = load(sim_system);
    auto phi = parse_phi(sim_phi, file.system, cfg.seed);
    SimOptions o;
    o.backend = sim_backend == "grid" ? Backend::Grid : Backend::ExactLattice;
    SimDiagnostics diag;
    auto sig = simulate_homogeneous(file.system, phi, sim_from, sim_to, o, &diag);
    for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
    std::ofstream f;
    write_signal_csv(sig, open_out(f, sim_out));
    return kExitOk;
  }

  if (*ker) {
    auto file = load(ker_system);
    KernelCoefficients kc(file.system, ker_horizon,
                          ker_grid > 0 ? ker_grid : cfg.kernel_grid);
    std::ofstream f;
    write_kernel_csv(kc, open_out(f, ker_out));
    return kExitOk;
  }

  if (*scn) {
    auto file = load(scn_system);
    ScanOptions o = cfg.scan_options();
    o.beta = scn_beta;
    if (scn_K > 0) o.K = scn_K;
    if (std::isfinite(scn_remax)) o.re_max = scn_remax;
    if (scn_grid.size() == 2) {
      o.n_re = scn_grid[0];
      o.n_im = scn_grid[1];
    }
    auto res = scan_halfplane(file.system, o);
    std::ofstream f;
    write_scan_csv(res, open_out(f, scn_out));
    std::cerr << "min sigma " << res.min_sigma << " at p = " << res.argmin.real() << "+"
              << res.argmin.imag() << "i; verdict "
              << (res.verdict_pass ? "pass" : "fail")
              << (res.converged ? "" : " (K-convergence FAILED)") << "\n";
    if (!res.converged && cfg.strict) return kExitInconclusive;
    return kExitOk;
  }

  if (*stab || *demo_ce) {
    SystemFile file;
    if (*stab) {
      file = load(stab_system);
      if (std::isfinite(stab_beta)) cfg.beta = stab_beta;
      if (stab_K > 0) cfg.K = stab_K;
      if (stab_cells > 0) cfg.monodromy_cells = stab_cells;
      if (stab_mbound > 0) cfg.m_bound = stab_mbound;
    } else {
      file.system = counterexample_system(demo_alpha);
      cfg.beta = -0.01;
      stab_json = demo_json;
    }
    auto rep = stability_report(file.system, cfg.stability_options());
    std::cout << report_to_text(rep);
    if (!stab_json.empty()) {
      std::ofstream f(stab_json);
      if (!f) throw PerstabError("cannot write " + stab_json);
      f << report_to_json(rep).dump(2) << "\n";
    }
    if (!stab_csv.empty()) {
      std::ofstream f(stab_csv);
      if (!f) throw PerstabError("cannot write " + stab_csv);
      write_report_csv(rep, f);
    }
    bool inconclusive = rep.generalized.verdict == Verdict::Inconclusive ||
                        !rep.monodromy.converged;
    if (inconclusive && cfg.strict) return kExitInconclusive;
    return kExitOk;
  }

  if (*htf) {
    auto file = load(htf_system);
    Complex p = parse_complex(htf_p);
    int K = htf_K > 0 ? htf_K : cfg.K;
    Matrix H = htf_matrix(file.system, p, K);
    std::ofstream f;
    auto& os = open_out(f, htf_out);
    const int d = file.system.dim;
    os << "n,m,row,col,re,im\n" << std::setprecision(17);
    for (int n = -K; n <= K; ++n)
      for (int m = -K; m <= K; ++m)
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) {
            Complex v = harmonic_block(H, K, d, n, m)(r, c);
            os << n << "," << m << "," << r << "," << c << "," << v.real() << ","
               << v.imag() << "\n";
          }
    if (htf_consist) {
      double horizon = htf_horizon > 0 ? htf_horizon : 40.0 * file.system.max_delay();
      KernelCoefficients kc(file.system, horizon, cfg.kernel_grid);
      auto envelope = fit_growth_envelope(kc, horizon);
      double resid = htf_consistency(file.system, kc, envelope, p, K, horizon);
      std::cerr << "entry-identity residual (central window): " << resid << "\n";
    }
    return kExitOk;
  }

  if (*rlz) {
    auto file = load(rlz_system);
    int Mz = rlz_Mz > 0 ? rlz_Mz : cfg.Mz;
    int Mu = rlz_Mu > 0 ? rlz_Mu : cfg.Mu;
    auto real = build_realization(file.system, Mz, Mu);
    std::cout << "A: " << real.A.rows() << "x" << real.A.cols()
              << "  B: " << real.B.rows() << "x" << real.B.cols()
              << "  C: " << real.C.rows() << "x" << real.C.cols()
              << "  D: " << real.D.rows() << "x" << real.D.cols() << "\n";
    Eigen::ComplexEigenSolver<Matrix> eig(real.A, false);
    std::cout << "rho(A) = " << eig.eigenvalues().cwiseAbs().maxCoeff() << "\n";
    if (!rlz_verify.empty()) {
      Complex p = parse_complex(rlz_verify);
      int k_max = 24;
      KernelCoefficients kc(file.system, (k_max + 1) * file.system.period,
                            cfg.kernel_grid);
      auto blocks = build_block_impulse(kc, k_max, Mu);
      int n_terms = choose_n_terms(blocks, p);
      double resid = verify_lambda_equals_htf(file.system, kc, p, cfg.K, Mu, n_terms);
      double sampled = verify_lambda_sampled(file.system, blocks, p, cfg.K, n_terms);
      std::cout << "Lambda(p) vs R^-1(p) residual: " << resid
                << " (cell-sampled modes: " << sampled << ", n_terms " << n_terms
                << ")\n";
    }
    return kExitOk;
  }

  if (*vol) {
    auto file = load(vol_system);
    const auto& sys = file.system;
    auto kappa = kernel_from_system(sys, 0.0);
    auto rho = resolvent(kappa);
    double resid = resolvent_residual(kappa, rho);
    std::cout << "resolvent identity residual: " << resid << "\n";
    KernelCoefficients kc(sys, sys.max_delay(), cfg.kernel_grid);
    double worst = 0.0;
    int n = 24;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        double t = sys.max_delay() * (i + 0.37) / n;
        double al = sys.max_delay() * (j + 0.11) / n;
        Matrix xt = fundamental_from_resolvent(rho, t, al);
        Matrix x = fundamental_solution(kc, t, al);
        worst = std::max(worst, (xt - x).cwiseAbs().maxCoeff());
      }
    std::cout << "X~ vs X max error on the window square: " << worst << "\n";
    auto phi = parse_phi(vol_phi, sys, cfg.seed);
    auto f = forcing_from_initial(sys, phi, 0.0);
    auto exact = ExactEvaluator::homogeneous(sys, phi, 0.0);
    double sol_err = 0.0;
    for (int i = 1; i < n; ++i) {
      double t = sys.max_delay() * (i + 0.29) / n;
      Vector y = solve_volterra(rho, f, t);
      sol_err = std::max(sol_err, (y - exact.at(t)).norm());
    }
    std::cout << "volterra solution vs simulation: " << sol_err << "\n";
    return kExitOk;
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const perstab::PerstabError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}
