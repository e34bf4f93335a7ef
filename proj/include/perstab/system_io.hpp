#pragma once

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "perstab/expr.hpp"
#include "perstab/system.hpp"

namespace perstab {

/// A system spec file: the system itself plus free-form analysis options and
/// the original coefficient descriptions, kept so load/save round-trips
/// losslessly.
struct SystemFile {
  DelaySystem system;
  nlohmann::json coefficients;  // original "coefficients" array
  nlohmann::json options;       // analysis options passthrough
  bool inflate_requested = false;
};

namespace detail {

inline Matrix parse_real_matrix(const nlohmann::json& j, int dim, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw PerstabError(std::string("system file: ") + what + " must be a " +
                       std::to_string(dim) + "x" + std::to_string(dim) + " array");
  Matrix m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != dim)
      throw PerstabError(std::string("system file: ragged matrix in ") + what);
    for (int c = 0; c < dim; ++c)
      m(r, c) = Complex(row[static_cast<std::size_t>(c)].get<double>(), 0.0);
  }
  return m;
}

inline nlohmann::json real_matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c).real());
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json imag_matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c).imag());
    rows.push_back(row);
  }
  return rows;
}

inline PeriodicMatrixFunction parse_coefficient(const nlohmann::json& j, int dim,
                                                double period) {
  if (!j.contains("kind")) throw PerstabError("system file: coefficient missing 'kind'");
  std::string kind = j["kind"].get<std::string>();
  if (kind == "constant") {
    Matrix m;
    if (j.contains("matrix")) {
      m = parse_real_matrix(j["matrix"], dim, "constant matrix");
    } else if (j.contains("re")) {
      m = parse_real_matrix(j["re"], dim, "constant re part");
      if (j.contains("im"))
        m += Complex(0, 1) * parse_real_matrix(j["im"], dim, "constant im part");
    } else {
      throw PerstabError("system file: constant coefficient needs 'matrix' or 're'/'im'");
    }
    return PeriodicMatrixFunction::constant(m, period);
  }
  if (kind == "fourier") {
    if (!j.contains("terms"))
      throw PerstabError("system file: fourier coefficient needs 'terms'");
    std::map<int, Matrix> coeffs;
    for (const auto& term : j["terms"]) {
      if (!term.is_array() || term.size() < 2)
        throw PerstabError("system file: fourier term must be [k, re, im?]");
      int k = term[0].get<int>();
      Matrix c = parse_real_matrix(term[1], dim, "fourier re part");
      if (term.size() >= 3)
        c += Complex(0, 1) * parse_real_matrix(term[2], dim, "fourier im part");
      if (!coeffs.emplace(k, c).second)
        throw PerstabError("system file: duplicate fourier index " + std::to_string(k));
    }
    return PeriodicMatrixFunction::from_fourier(std::move(coeffs), dim, period);
  }
  if (kind == "expr") {
    if (!j.contains("entries"))
      throw PerstabError("system file: expr coefficient needs 'entries'");
    const auto& entries = j["entries"];
    if (!entries.is_array() || static_cast<int>(entries.size()) != dim)
      throw PerstabError("system file: expr entries must form a dim x dim grid");
    std::vector<std::vector<Expr>> grid;
    grid.reserve(static_cast<std::size_t>(dim));
    for (const auto& row : entries) {
      if (!row.is_array() || static_cast<int>(row.size()) != dim)
        throw PerstabError("system file: ragged expr entries");
      std::vector<Expr> cells;
      cells.reserve(static_cast<std::size_t>(dim));
      for (const auto& cell : row) cells.emplace_back(cell.get<std::string>());
      grid.push_back(std::move(cells));
    }
    PeriodicMatrixFunction f(dim, period, [grid, dim](double t) {
      Matrix m(dim, dim);
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
          m(r, c) = Complex(grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)](t), 0.0);
      return m;
    });
    f.set_real(true);
    return f;
  }
  throw PerstabError("system file: unknown coefficient kind '" + kind + "'");
}

}  // namespace detail

inline SystemFile parse_system_json(const nlohmann::json& j) {
  SystemFile out;
  try {
    out.system.dim = j.at("dim").get<int>();
    out.system.period = j.at("period").get<double>();
    out.system.delays = j.at("delays").get<std::vector<double>>();
    out.system.real = j.value("real", false);
    out.inflate_requested = j.value("inflate_period", false);
    const auto& coeffs = j.at("coefficients");
    if (!coeffs.is_array())
      throw PerstabError("system file: 'coefficients' must be an array");
    for (const auto& c : coeffs)
      out.system.coefficients.push_back(
          detail::parse_coefficient(c, out.system.dim, out.system.period));
    if (j.contains("holder_exponent")) {
      double delta = j["holder_exponent"].get<double>();
      for (auto& c : out.system.coefficients) c.set_holder_exponent(delta);
    }
    out.coefficients = coeffs;
    if (j.contains("options")) out.options = j["options"];
  } catch (const nlohmann::json::exception& e) {
    throw PerstabError(std::string("system file: ") + e.what());
  }
  if (out.system.delays.size() >= 1 && out.system.delays.back() >= out.system.period) {
    if (!out.inflate_requested)
      throw PerstabError(
          "system file: largest delay exceeds the period; set inflate_period "
          "to allow T -> kT");
    out.system.inflate_period();
  }
  out.system.validate();
  return out;
}

inline SystemFile load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PerstabError("cannot open system file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw PerstabError("malformed JSON in " + path + ": " + e.what());
  }
  return parse_system_json(j);
}

inline nlohmann::json system_json(const SystemFile& file) {
  nlohmann::json j;
  j["dim"] = file.system.dim;
  j["period"] = file.system.period;
  j["delays"] = file.system.delays;
  j["real"] = file.system.real;
  if (file.inflate_requested) j["inflate_period"] = true;
  if (!file.system.coefficients.empty() &&
      file.system.coefficients.front().holder_exponent())
    j["holder_exponent"] = *file.system.coefficients.front().holder_exponent();
  if (!file.coefficients.is_null()) {
    j["coefficients"] = file.coefficients;
  } else {
    // Reconstruct specs from the in-memory representation.
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : file.system.coefficients) {
      nlohmann::json cj;
      if (c.has_fourier() && c.fourier_order() == 0) {
        cj["kind"] = "constant";
        Matrix m = c.stored_coefficient(0);
        cj["re"] = detail::real_matrix_json(m);
        if (m.imag().cwiseAbs().maxCoeff() > 0) cj["im"] = detail::imag_matrix_json(m);
      } else if (c.has_fourier()) {
        cj["kind"] = "fourier";
        nlohmann::json terms = nlohmann::json::array();
        for (int k = -c.fourier_order(); k <= c.fourier_order(); ++k) {
          Matrix m = c.stored_coefficient(k);
          if (m.cwiseAbs().maxCoeff() == 0.0) continue;
          terms.push_back(nlohmann::json::array(
              {k, detail::real_matrix_json(m), detail::imag_matrix_json(m)}));
        }
        cj["terms"] = terms;
      } else {
        throw PerstabError("save_system: sampler-only coefficient has no file form");
      }
      arr.push_back(cj);
    }
    j["coefficients"] = arr;
  }
  if (!file.options.is_null()) j["options"] = file.options;
  return j;
}

inline void save_system(const SystemFile& file, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PerstabError("cannot write system file: " + path);
  out << system_json(file).dump(2) << "\n";
}

}  // namespace perstab
