#pragma once

#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "perstab/kernels.hpp"
#include "perstab/stability.hpp"

namespace perstab {

inline nlohmann::json report_to_json(const StabilityReport& rep) {
  nlohmann::json j;
  j["pointwise_frozen"] = {
      {"min_sigma", rep.pointwise.min_sigma},
      {"argmin_re", rep.pointwise.argmin_p.real()},
      {"argmin_im", rep.pointwise.argmin_p.imag()},
      {"argmin_t", rep.pointwise.argmin_t},
      {"pass", rep.pointwise.pass},
      {"im_window", rep.pointwise.im_window},
      {"commensurate", rep.pointwise.commensurate},
  };
  if (rep.henry_hale) {
    nlohmann::json hh;
    hh["verdict"] = to_string(rep.henry_hale->verdict);
    if (std::isfinite(rep.henry_hale->abscissa)) hh["abscissa"] = rep.henry_hale->abscissa;
    else hh["abscissa"] = rep.henry_hale->abscissa > 0 ? "+inf" : "-inf";
    hh["min_sigma_at_beta"] = rep.henry_hale->min_sigma_at_beta;
    j["henry_hale"] = hh;
  }
  nlohmann::json gen;
  gen["verdict"] = to_string(rep.generalized.verdict);
  gen["min_sigma"] = rep.generalized.scan.min_sigma;
  gen["argmin_re"] = rep.generalized.scan.argmin.real();
  gen["argmin_im"] = rep.generalized.scan.argmin.imag();
  gen["threshold"] = rep.generalized.scan.threshold;
  gen["converged"] = rep.generalized.scan.converged;
  gen["commensurate"] = rep.generalized.commensurate;
  if (!rep.generalized.note.empty()) gen["note"] = rep.generalized.note;
  nlohmann::json hist = nlohmann::json::array();
  for (auto& [K, m] : rep.generalized.scan.k_history)
    hist.push_back({{"K", K}, {"min_sigma", m}});
  gen["k_history"] = hist;
  j["generalized"] = gen;
  j["monodromy"] = {
      {"rho", rep.monodromy.rho},
      {"rho_refined", rep.monodromy.rho_refined},
      {"M", rep.monodromy.M},
      {"converged", rep.monodromy.converged},
  };
  nlohmann::json decay;
  if (rep.decay.zero_trajectory) {
    decay["gamma"] = "+inf";
    decay["zero_trajectory"] = true;
  } else {
    decay["gamma"] = rep.decay.gamma;
    decay["K"] = rep.decay.K;
  }
  j["decay_fit"] = decay;
  nlohmann::json cons;
  if (rep.consistency.monodromy_generalized_agree)
    cons["monodromy_generalized_agree"] = *rep.consistency.monodromy_generalized_agree;
  if (rep.consistency.decay_matches_monodromy)
    cons["decay_matches_monodromy"] = *rep.consistency.decay_matches_monodromy;
  cons["pointwise_discordance"] = rep.consistency.pointwise_discordance;
  cons["contradiction"] = rep.consistency.contradiction;
  cons["notes"] = rep.consistency.notes;
  j["consistency"] = cons;
  return j;
}

inline std::string report_to_text(const StabilityReport& rep) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "pointwise frozen test : " << (rep.pointwise.pass ? "pass" : "fail")
     << "  (min sigma " << rep.pointwise.min_sigma << " at t=" << rep.pointwise.argmin_t
     << ", p=" << rep.pointwise.argmin_p.real() << "+" << rep.pointwise.argmin_p.imag()
     << "i)\n";
  if (rep.henry_hale) {
    os << "henry-hale (constant) : " << to_string(rep.henry_hale->verdict)
       << "  (abscissa ~ " << rep.henry_hale->abscissa << ")\n";
  }
  os << "generalized criterion : " << to_string(rep.generalized.verdict)
     << "  (min sigma " << rep.generalized.scan.min_sigma << " vs threshold "
     << rep.generalized.scan.threshold
     << (rep.generalized.scan.converged ? ", K-converged" : ", K-NOT-converged") << ")\n";
  os << "monodromy radius      : rho = " << rep.monodromy.rho_refined << " (M="
     << rep.monodromy.M << (rep.monodromy.converged ? ", converged" : ", not converged")
     << ") -> " << (rep.monodromy.rho_refined < 1.0 ? "stable" : "unstable") << "\n";
  if (rep.decay.zero_trajectory)
    os << "decay fit             : zero trajectory (gamma = +inf)\n";
  else
    os << "decay fit             : gamma = " << rep.decay.gamma << " ("
       << (rep.decay.gamma > 0 ? "decay" : "growth") << ")\n";
  os << "consistency           :";
  if (rep.consistency.monodromy_generalized_agree)
    os << " monodromy/generalized "
       << (*rep.consistency.monodromy_generalized_agree ? "agree" : "DISAGREE") << ";";
  if (rep.consistency.decay_matches_monodromy)
    os << " decay/monodromy "
       << (*rep.consistency.decay_matches_monodromy ? "agree" : "DISAGREE") << ";";
  if (rep.consistency.pointwise_discordance) os << " POINTWISE-DISCORDANCE;";
  if (rep.consistency.contradiction) os << " CONTRADICTION;";
  os << "\n";
  for (const auto& note : rep.consistency.notes) os << "  note: " << note << "\n";
  return os.str();
}

inline void write_scan_csv(const HalfPlaneScanResult& scan, std::ostream& os) {
  os << "re_p,im_p,sigma_min\n";
  os << std::setprecision(17);
  for (const auto& g : scan.grid) os << g[0] << "," << g[1] << "," << g[2] << "\n";
}

inline void write_kernel_csv(const KernelCoefficients& kernels, std::ostream& os) {
  const auto& lat = kernels.lattice();
  const int d = kernels.system().dim;
  os << "f,t";
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) os << ",re_" << r << c << ",im_" << r << c;
  os << "\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    for (int g = 0; g < kernels.grid_cells(); ++g) {
      os << lat.points[i].value << "," << kernels.grid_time(g);
      const Matrix& m = kernels.at_grid(i, g);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          os << "," << m(r, c).real() << "," << m(r, c).imag();
      os << "\n";
    }
  }
}

/// Flat one-row CSV rendering of the report (header + values), for
/// spreadsheet-style collection across many systems.
inline void write_report_csv(const StabilityReport& rep, std::ostream& os) {
  os << "pointwise_pass,pointwise_min_sigma,henry_hale_verdict,henry_hale_abscissa,"
        "generalized_verdict,generalized_min_sigma,generalized_converged,"
        "monodromy_rho,monodromy_converged,decay_gamma,pointwise_discordance,"
        "contradiction\n";
  os << std::setprecision(17);
  os << (rep.pointwise.pass ? 1 : 0) << "," << rep.pointwise.min_sigma << ",";
  if (rep.henry_hale)
    os << to_string(rep.henry_hale->verdict) << "," << rep.henry_hale->abscissa << ",";
  else
    os << ",,";
  os << to_string(rep.generalized.verdict) << "," << rep.generalized.scan.min_sigma
     << "," << (rep.generalized.scan.converged ? 1 : 0) << ","
     << rep.monodromy.rho_refined << "," << (rep.monodromy.converged ? 1 : 0) << ","
     << rep.decay.gamma << "," << (rep.consistency.pointwise_discordance ? 1 : 0) << ","
     << (rep.consistency.contradiction ? 1 : 0) << "\n";
}

inline void write_signal_csv(const Signal& sig, std::ostream& os) {
  os << "t";
  for (int i = 0; i < sig.dim(); ++i) os << ",re_" << i << ",im_" << i;
  os << "\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < sig.values.size(); ++i) {
    os << sig.time_at(i);
    for (int c = 0; c < sig.dim(); ++c)
      os << "," << sig.values[i](c).real() << "," << sig.values[i](c).imag();
    os << "\n";
  }
}

}  // namespace perstab
