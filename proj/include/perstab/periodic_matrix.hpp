#pragma once

#include <map>
#include <optional>
#include <utility>

#include "perstab/core.hpp"

namespace perstab {

/// T-periodic matrix-valued coefficient D(t). Carries both a sampler (used by
/// time-domain simulation) and, when known in closed form, a Fourier series
/// (used to assemble harmonic matrices). The two representations are kept
/// because the downstream pipelines have different accuracy needs.
class PeriodicMatrixFunction {
 public:
  using Sampler = std::function<Matrix(double)>;

  PeriodicMatrixFunction(int dim, double period, Sampler sampler)
      : dim_(dim), period_(period), sampler_(std::move(sampler)) {
    if (dim_ <= 0) throw PerstabError("coefficient: dimension must be positive");
    if (period_ <= 0) throw PerstabError("coefficient: period must be positive");
  }

  static PeriodicMatrixFunction constant(const Matrix& m, double period) {
    PeriodicMatrixFunction f(static_cast<int>(m.rows()), period,
                             [m](double) { return m; });
    f.real_ = m.imag().cwiseAbs().maxCoeff() == 0.0;
    f.fourier_ = std::map<int, Matrix>{{0, m}};
    return f;
  }

  /// Builds D(t) = sum_k C(k) e^{i k w t} from explicit coefficients.
  static PeriodicMatrixFunction from_fourier(std::map<int, Matrix> coeffs, int dim,
                                             double period) {
    double omega = 2.0 * kPi / period;
    auto terms = coeffs;  // copy captured by the sampler
    PeriodicMatrixFunction f(dim, period, [terms, dim, omega](double t) {
      Matrix m = Matrix::Zero(dim, dim);
      for (const auto& [k, c] : terms) m += c * std::exp(Complex(0.0, k * omega * t));
      return m;
    });
    f.fourier_ = std::move(coeffs);
    f.real_ = f.is_hermitian_symmetric(1e-14);
    return f;
  }

  int dim() const { return dim_; }
  double period() const { return period_; }
  bool real() const { return real_; }
  void set_real(bool r) { real_ = r; }
  std::optional<double> holder_exponent() const { return holder_exponent_; }
  void set_holder_exponent(std::optional<double> d) {
    if (d && (*d <= 0.0 || *d >= 1.0))
      throw PerstabError("holder_exponent must lie in (0,1)");
    holder_exponent_ = d;
  }

  /// D(t) with exact periodic extension (sampler evaluated at t mod T).
  Matrix operator()(double t) const { return sampler_(wrap_period(t, period_)); }

  bool has_fourier() const { return fourier_.has_value(); }
  int fourier_order() const {
    if (!fourier_ || fourier_->empty()) return -1;
    int order = 0;
    for (const auto& [k, c] : *fourier_) order = std::max(order, std::abs(k));
    return order;
  }

  /// Exact coefficient when a closed-form series is stored; zero beyond it.
  Matrix stored_coefficient(int k) const {
    auto it = fourier_->find(k);
    return it == fourier_->end() ? Matrix::Zero(dim_, dim_) : it->second;
  }

  bool is_hermitian_symmetric(double tol) const {
    if (!fourier_) return false;
    for (const auto& [k, c] : *fourier_) {
      auto it = fourier_->find(-k);
      Matrix other = it == fourier_->end() ? Matrix::Zero(dim_, dim_) : it->second;
      if ((c - other.conjugate()).cwiseAbs().maxCoeff() > tol) return false;
    }
    return true;
  }

  /// Reinterprets the function as kT-periodic (period inflation). Exact: the
  /// sampler is already T-periodic, and stored coefficients move to index k*m.
  PeriodicMatrixFunction inflated(int factor) const {
    if (factor < 1) throw PerstabError("inflation factor must be >= 1");
    PeriodicMatrixFunction out(dim_, period_ * factor, sampler_);
    out.real_ = real_;
    out.holder_exponent_ = holder_exponent_;
    if (fourier_) {
      std::map<int, Matrix> scaled;
      for (const auto& [k, c] : *fourier_) scaled.emplace(k * factor, c);
      out.fourier_ = std::move(scaled);
    }
    return out;
  }

 private:
  int dim_;
  double period_;
  Sampler sampler_;
  std::optional<std::map<int, Matrix>> fourier_;
  std::optional<double> holder_exponent_;
  bool real_ = false;
};

/// Fourier coefficients of D to order K with a quadrature error estimate.
struct FourierSeries {
  int order = 0;
  std::vector<Matrix> coeffs;  // coeffs[order + k] for |k| <= order
  double quad_error = 0.0;     // Nyquist-doubling discrepancy
  int samples = 0;

  const Matrix& at(int k) const { return coeffs[static_cast<std::size_t>(order + k)]; }
};

namespace detail {

inline std::vector<Matrix> dft_coefficients(const PeriodicMatrixFunction& fn, int order,
                                            int samples) {
  const double T = fn.period();
  const double omega = 2.0 * kPi / T;
  std::vector<Matrix> values(samples);
  for (int m = 0; m < samples; ++m) values[m] = fn(m * T / samples);
  std::vector<Matrix> out(2 * order + 1);
  for (int k = -order; k <= order; ++k) {
    Matrix acc = Matrix::Zero(fn.dim(), fn.dim());
    for (int m = 0; m < samples; ++m) {
      double t = m * T / samples;
      acc += values[static_cast<std::size_t>(m)] * std::exp(Complex(0.0, -k * omega * t));
    }
    out[static_cast<std::size_t>(order + k)] = acc / static_cast<double>(samples);
  }
  return out;
}

}  // namespace detail

/// Computes the Fourier coefficients (1/T) int_0^T D(t) e^{-ikwt} dt for
/// |k| <= K by uniform-grid quadrature (spectrally accurate for smooth
/// periodic D). Doubling the sample count gives the reported error estimate;
/// a large estimate signals undersampling.
inline FourierSeries fourier_coefficients(const PeriodicMatrixFunction& fn, int K,
                                          int min_samples = 0) {
  if (K < 0) throw PerstabError("fourier_coefficients: K must be >= 0");
  FourierSeries series;
  series.order = K;
  if (fn.has_fourier()) {
    // Closed-form series: exact, no quadrature.
    series.coeffs.resize(static_cast<std::size_t>(2 * K + 1));
    for (int k = -K; k <= K; ++k)
      series.coeffs[static_cast<std::size_t>(K + k)] = fn.stored_coefficient(k);
    return series;
  }
  int samples = std::max({4 * (K + 1), min_samples, 16});
  auto coarse = detail::dft_coefficients(fn, K, samples);
  auto fine = detail::dft_coefficients(fn, K, 2 * samples);
  double err = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i)
    err = std::max(err, (coarse[i] - fine[i]).cwiseAbs().maxCoeff());
  series.coeffs = std::move(fine);
  series.quad_error = err;
  series.samples = 2 * samples;
  return series;
}

inline Matrix evaluate_coefficient(const PeriodicMatrixFunction& fn, double t) {
  return fn(t);
}

/// Max-norm mismatch between the sampler and the truncated Fourier synthesis
/// on a uniform grid; used to validate closed-form series declarations.
inline double fourier_resynthesis_error(const PeriodicMatrixFunction& fn,
                                        const FourierSeries& series, int grid = 128) {
  const double T = fn.period();
  const double omega = 2.0 * kPi / T;
  double err = 0.0;
  for (int m = 0; m < grid; ++m) {
    double t = m * T / grid;
    Matrix synth = Matrix::Zero(fn.dim(), fn.dim());
    for (int k = -series.order; k <= series.order; ++k)
      synth += series.at(k) * std::exp(Complex(0.0, k * omega * t));
    err = std::max(err, (synth - fn(t)).cwiseAbs().maxCoeff());
  }
  return err;
}

}  // namespace perstab
