#pragma once

#include <cstdlib>
#include <json.hpp>

#include "perstab/stability.hpp"

namespace perstab {

/// Analysis defaults shared by the CLI subcommands; a JSON config file and
/// the PERSTAB_THREADS environment variable override them.
struct AnalysisConfig {
  int K = 16;
  double beta = -0.1;
  int monodromy_cells = 128;
  int Mz = 128;
  int Mu = 256;
  int kernel_grid = 256;
  int n_re = 40;
  int n_im = 200;
  double m_bound = 1e6;
  double conv_tol = 1e-3;
  double monodromy_margin = 0.05;
  double decay_tol = 0.15;
  int threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 12345;
  bool strict = false;

  void validate() const {
    if (K < 1) throw PerstabError("config: K must be >= 1");
    if (m_bound <= 0 || conv_tol <= 0 || monodromy_margin <= 0 || decay_tol <= 0)
      throw PerstabError("config: tolerances must be positive");
    if (monodromy_cells < 8) throw PerstabError("config: monodromy cells must be >= 8");
  }

  void apply_json(const nlohmann::json& j) {
    if (j.contains("K")) K = j["K"].get<int>();
    if (j.contains("beta")) beta = j["beta"].get<double>();
    if (j.contains("monodromy_cells")) monodromy_cells = j["monodromy_cells"].get<int>();
    if (j.contains("Mz")) Mz = j["Mz"].get<int>();
    if (j.contains("Mu")) Mu = j["Mu"].get<int>();
    if (j.contains("kernel_grid")) kernel_grid = j["kernel_grid"].get<int>();
    if (j.contains("n_re")) n_re = j["n_re"].get<int>();
    if (j.contains("n_im")) n_im = j["n_im"].get<int>();
    if (j.contains("m_bound")) m_bound = j["m_bound"].get<double>();
    if (j.contains("conv_tol")) conv_tol = j["conv_tol"].get<double>();
    if (j.contains("monodromy_margin"))
      monodromy_margin = j["monodromy_margin"].get<double>();
    if (j.contains("decay_tol")) decay_tol = j["decay_tol"].get<double>();
    if (j.contains("threads")) threads = j["threads"].get<int>();
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    if (j.contains("strict")) strict = j["strict"].get<bool>();
  }

  void apply_env() {
    if (const char* env = std::getenv("PERSTAB_THREADS")) {
      int t = std::atoi(env);
      if (t > 0) threads = t;
    }
  }

  StabilityOptions stability_options() const {
    StabilityOptions o;
    o.beta = beta;
    o.K = K;
    o.monodromy_cells = monodromy_cells;
    o.m_bound = m_bound;
    o.monodromy_margin = monodromy_margin;
    o.decay_tol = decay_tol;
    o.seed = seed;
    o.threads = threads;
    o.scan.n_re = n_re;
    o.scan.n_im = n_im;
    o.scan.conv_tol = conv_tol;
    return o;
  }

  ScanOptions scan_options() const {
    ScanOptions o;
    o.beta = beta;
    o.K = K;
    o.n_re = n_re;
    o.n_im = n_im;
    o.m_bound = m_bound;
    o.conv_tol = conv_tol;
    o.threads = threads;
    return o;
  }
};

}  // namespace perstab
