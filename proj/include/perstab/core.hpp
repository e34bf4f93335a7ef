#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace perstab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wraps t into [0, period). Exact for t already in range.
inline double wrap_period(double t, double period) {
  double r = t - period * std::floor(t / period);
  if (r >= period) r -= period;  // guard against floor rounding at the edge
  if (r < 0.0) r = 0.0;
  return r;
}

inline Matrix identity(int d) { return Matrix::Identity(d, d); }

/// Spectral (operator 2-) norm of a dense complex matrix.
inline double operator_norm(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

struct PerstabError : std::runtime_error {
  explicit PerstabError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers, each worker taking
/// one contiguous chunk (so per-worker state such as warm starts sees
/// adjacent indices). Results must be written to pre-sized storage indexed
/// by i so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int threads = 0) {
  if (threads <= 0) threads = hardware_threads();
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t nworkers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nworkers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < nworkers; ++w) {
    std::size_t lo = n * w / nworkers;
    std::size_t hi = n * (w + 1) / nworkers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Least-squares line fit y ~ a + b x. Returns {intercept a, slope b}.
inline std::pair<double, double> fit_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw PerstabError("fit_line: need at least two points");
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) throw PerstabError("fit_line: degenerate abscissae");
  double slope = (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  return {intercept, slope};
}

}  // namespace perstab
