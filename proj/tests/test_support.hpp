#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "test_systems.hpp"

namespace perstab::testing {

inline double max_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace perstab::testing
