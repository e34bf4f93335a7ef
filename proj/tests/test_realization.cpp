#include "perstab/realization.hpp"

#include "test_support.hpp"

using namespace perstab;
using namespace perstab::testing;

namespace {

std::vector<Vector> random_segments(int periods, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Vector> out;
  for (int k = 0; k < periods; ++k) {
    Vector u(n);
    for (int i = 0; i < n; ++i) u(i) = unit(rng);
    out.push_back(u);
  }
  return out;
}

/// The same input as a time function: cell values on consecutive periods.
std::function<Vector(double)> segments_as_function(const std::vector<Vector>& segs,
                                                   double period, int Mu, int d) {
  return [=](double t) {
    if (t < 0) return Vector(Vector::Zero(d));
    auto k = static_cast<long long>(std::floor(t / period));
    if (k >= static_cast<long long>(segs.size())) return Vector(Vector::Zero(d));
    double local = t - static_cast<double>(k) * period;
    auto c = static_cast<long long>(std::floor(local / (period / Mu)));
    if (c >= Mu) c = Mu - 1;
    return Vector(segs[static_cast<std::size_t>(k)].segment(c * d, d));
  };
}

}  // namespace

TEST_CASE("discrete realization construction", "[realization]") {
  SECTION("zero coefficients: A = 0 and D passes the input through") {
    DelaySystem sys;
    sys.dim = 1;
    sys.period = 2.0;
    sys.delays = {1.0};
    sys.coefficients.push_back(PeriodicMatrixFunction::constant(Matrix::Zero(1, 1), 2.0));
    auto real = build_realization(sys, 16, 32);
    CHECK(real.A.cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_diff(real.D, Matrix::Identity(32, 32)) == 0.0);
    // Input cells covering [T - tau_N, T) land in the final state.
    CHECK(real.B.cwiseAbs().maxCoeff() == 1.0);
    CHECK(real.B.rightCols(16).cwiseAbs().maxCoeff() == 1.0);
    CHECK(real.B.leftCols(16).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("A is exactly the monodromy matrix (same code path)") {
    auto sys = smooth_periodic_system();
    auto real = build_realization(sys, 24, 72);
    Matrix U = solution_operator_matrix(sys, 0.0, sys.period, 24);
    CHECK(max_diff(real.A, U) == 0.0);
  }

  SECTION("scalar spectral radius of A") {
    auto real = build_realization(scalar_system(0.5), 32, 64);
    Eigen::ComplexEigenSolver<Matrix> eig(real.A, false);
    CHECK(eig.eigenvalues().cwiseAbs().maxCoeff() == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("run_discrete reproduces the direct simulation", "[realization]") {
  auto sys = scalar_system(0.5);
  const int Mz = 64, Mu = 128;  // T/Mu == tau/Mz: aligned grids
  auto real = build_realization(sys, Mz, Mu);
  const int periods = 5;
  auto segs = random_segments(periods, Mu * sys.dim, 404);
  auto y_disc = run_discrete(real, segs);

  auto u = segments_as_function(segs, sys.period, Mu, sys.dim);
  SimOptions o;
  o.backend = Backend::Grid;
  o.grid_step = sys.max_delay() / Mz;
  auto y_sim = simulate_forced(sys, u, 0.0, periods * sys.period, o);

  double num = 0.0, den = 0.0;
  const double hu = sys.period / Mu;
  for (int k = 0; k < periods; ++k)
    for (int c = 0; c < Mu; ++c) {
      Complex direct = y_sim.at(k * sys.period + c * hu)(0);
      Complex disc = y_disc[static_cast<std::size_t>(k)](c);
      num += std::norm(direct - disc);
      den += std::norm(direct);
    }
  CHECK(std::sqrt(num / den) < 1e-8);

  SECTION("zero input stays zero") {
    std::vector<Vector> zeros(3, Vector::Zero(Mu));
    for (const auto& y : run_discrete(real, zeros)) CHECK(y.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("segment length mismatch is rejected") {
    std::vector<Vector> bad(1, Vector::Zero(Mu + 1));
    CHECK_THROWS_AS(run_discrete(real, bad), PerstabError);
  }
}

TEST_CASE("block impulse operators", "[realization]") {
  auto sys = scalar_system(0.5);
  const int Mu = 32;
  KernelCoefficients ker(sys, 12.0, 32);

  SECTION("insufficient horizon is rejected") {
    CHECK_THROWS_AS(build_block_impulse(ker, 10, Mu), PerstabError);
  }

  auto blocks = build_block_impulse(ker, 5, Mu);

  SECTION("H_0 carries the in-period kernel band") {
    // Lattice points 0 and 1 fall inside one period: diagonal 1, c at lag tau.
    const Matrix& H0 = blocks.H[0];
    const int lag = Mu / 2;  // tau = 1 = (Mu/2) * hu
    for (int i = 0; i < Mu; ++i) {
      CHECK(std::abs(H0(i, i) - 1.0) < 1e-14);
      if (i >= lag) CHECK(std::abs(H0(i, i - lag) - 0.5) < 1e-14);
    }
    CHECK(std::abs(H0.sum() - (Mu * 1.0 + (Mu - lag) * 0.5)) < 1e-12);
  }

  SECTION("impulse response through the realization matches H_[k]") {
    const int Mz = 16;  // tau/Mz == T/Mu: aligned
    auto real = build_realization(sys, Mz, Mu);
    std::vector<Vector> segs(4, Vector::Zero(Mu));
    segs[0] = Vector::Zero(Mu);
    segs[0](3) = 1.0;  // impulse cell in period zero
    auto y = run_discrete(real, segs);
    for (int k = 0; k < 4; ++k) {
      Vector expect = blocks.H[static_cast<std::size_t>(k)] * segs[0];
      CHECK((y[static_cast<std::size_t>(k)] - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SECTION("weighted block norms are summable for sigma above the growth rate") {
    double prev = -1.0;
    for (int k = 2; k <= 5; ++k) {
      double q = blocks.H[static_cast<std::size_t>(k)].norm();
      if (prev >= 0) CHECK(q < prev);
      prev = q;
    }
  }
}

TEST_CASE("lambda operator and the HTF conjugacy", "[realization]") {
  SECTION("zero system: Lambda is the identity block") {
    DelaySystem sys;
    sys.dim = 1;
    sys.period = 2.0;
    sys.delays = {1.0};
    sys.coefficients.push_back(PeriodicMatrixFunction::constant(Matrix::Zero(1, 1), 2.0));
    KernelCoefficients ker(sys, 6.0, 16);
    auto blocks = build_block_impulse(ker, 2, 16);
    Matrix lam = lambda_operator(blocks, Complex(0.5, 0.2), 2);
    CHECK(max_diff(lam, Matrix::Identity(16, 16)) < 1e-12);
  }

  SECTION("constant scalar: Lambda(1) recovers the transfer function") {
    auto sys = scalar_system(0.5);
    KernelCoefficients ker(sys, 42.0, 16);
    auto blocks = build_block_impulse(ker, 20, 32);
    int n_terms = choose_n_terms(blocks, Complex(1.0, 0.0));
    Matrix lam = lambda_operator(blocks, Complex(1.0, 0.0), n_terms);
    Vector ones = Vector::Ones(32);
    Vector out = lam * ones;
    double expect = 1.0 / (1.0 - 0.5 * std::exp(-1.0));
    for (int i = 0; i < 32; ++i) CHECK(std::abs(out(i) - expect) < 1e-10);
  }

  SECTION("tail convergence is enforced") {
    auto sys = counterexample_system(0.9);  // growing kernels
    KernelCoefficients ker(sys, 5 * sys.period, 16);
    auto blocks = build_block_impulse(ker, 4, 16);
    CHECK_THROWS_AS(lambda_operator(blocks, Complex(0.01, 0.0), 4), PerstabError);
  }

  SECTION("Lambda matches R^-1 on Fourier modes") {
    auto sys = scalar_system(0.5);
    KernelCoefficients ker(sys, 46.0, 16);
    auto blocks = build_block_impulse(ker, 22, 64);
    int n_terms = choose_n_terms(blocks, Complex(1.0, 0.0));
    double exact = verify_lambda_equals_htf(sys, ker, Complex(1.0, 0.0), 8, 64, n_terms);
    CHECK(exact < 1e-12);
    // On the aligned scalar grid even the cell-sampled route is sharp.
    double sampled = verify_lambda_sampled(sys, blocks, Complex(1.0, 0.0), 8, n_terms);
    CHECK(sampled < 1e-6);
  }

  SECTION("sampled-mode residual shrinks when the output grid doubles") {
    auto sys = smooth_periodic_system();
    KernelCoefficients ker(sys, 14 * sys.period, 32);
    double prev = -1.0;
    for (int Mu : {64, 128, 256}) {
      auto blocks = build_block_impulse(ker, 12, Mu, /*midpoint=*/true);
      int n_terms = choose_n_terms(blocks, Complex(1.0, 0.0));
      double resid = verify_lambda_sampled(sys, blocks, Complex(1.0, 0.0), 8, n_terms);
      if (prev >= 0) CHECK(resid < prev);
      prev = resid;
    }
  }

  SECTION("exact-mode residual is discretization-free") {
    auto sys = smooth_periodic_system();
    KernelCoefficients ker(sys, 14 * sys.period, 32);
    auto blocks = build_block_impulse(ker, 12, 16);
    int n_terms = choose_n_terms(blocks, Complex(1.0, 0.0));
    double resid = verify_lambda_equals_htf(sys, ker, Complex(1.0, 0.0), 16, 256, n_terms);
    CHECK(resid < 1e-10);
  }

  SECTION("bounded continuation left of the axis for a stable system") {
    auto sys = scalar_system(0.5);
    KernelCoefficients ker(sys, 152.0, 16);
    auto blocks = build_block_impulse(ker, 74, 32);
    // log(rho)/T = log(0.25)/2 ~ -0.693: Lambda stays bounded well left of 0.
    for (double re : {-0.1, -0.3, -0.5}) {
      Matrix lam = lambda_operator(blocks, Complex(re, 0.4), 74);
      CHECK(operator_norm(lam) < 50.0);
    }
  }
}

TEST_CASE("z-transform identity", "[realization]") {
  auto sys = scalar_system(0.5);
  const int Mz = 16, Mu = 32;
  auto real = build_realization(sys, Mz, Mu);
  KernelCoefficients ker(sys, 54.0, 16);
  auto blocks = build_block_impulse(ker, 26, Mu);

  SECTION("markov parameters: H_0 = D and H_k = C A^{k-1} B") {
    CHECK(max_diff(blocks.H[0], real.D) < 1e-12);
    CHECK(max_diff(blocks.H[1], real.C * real.B) < 1e-12);
    CHECK(max_diff(blocks.H[2], real.C * real.A * real.B) < 1e-12);
  }

  SECTION("series equals C(zI-A)^-1 B + D outside the spectral radius") {
    for (Complex z : {Complex(1.5, 0.0), Complex(0.9, 0.9), Complex(-1.2, 0.4)}) {
      Matrix lhs = Matrix::Zero(Mu, Mu);
      for (int k = 0; k <= 26; ++k)
        lhs += blocks.H[static_cast<std::size_t>(k)] * std::pow(z, -k);
      Matrix rhs = realization_transfer(real, z);
      CHECK(max_diff(lhs, rhs) < 1e-9);
    }
  }
}
