#include "perstab/volterra.hpp"

#include "perstab/kernels.hpp"
#include "perstab/simulate.hpp"
#include "test_support.hpp"

using namespace perstab;
using namespace perstab::testing;

namespace {

/// Two delays with ratio 2.5: resolvent chains reach depth 3 on the window.
DelaySystem deep_window_system() {
  DelaySystem sys;
  sys.dim = 2;
  sys.period = 3.0;
  sys.delays = {1.0, 2.5};
  sys.real = true;
  std::map<int, Matrix> t1, t2;
  t1[0] = mat2(0.4, 0.1, 0.0, 0.3);
  t1[1] = mat2(0.05, 0.0, 0.02, 0.0);
  t1[-1] = t1[1];
  t2[0] = mat2(0.1, 0.0, 0.2, 0.1);
  sys.coefficients.push_back(PeriodicMatrixFunction::from_fourier(t1, 2, sys.period));
  sys.coefficients.push_back(PeriodicMatrixFunction::from_fourier(t2, 2, sys.period));
  sys.validate();
  return sys;
}

}  // namespace

TEST_CASE("system kernel atoms", "[volterra]") {
  SECTION("no atoms before the first delay reaches the window") {
    auto kappa = kernel_from_system(scalar_system(0.5), 0.0);
    CHECK(kappa.atoms_at(0.5).empty());  // t - tau = -0.5 < s
    CHECK(kappa.value(0.5, 0.2).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("scalar kernel at t = 1.5 within a wider window") {
    // Use the two-delay system so the window [0, 2.5] contains t = 1.5.
    auto sys = deep_window_system();
    auto kappa = kernel_from_system(sys, 0.0);
    auto atoms = kappa.atoms_at(1.5);
    REQUIRE(atoms.size() == 1);  // only t - tau_1 = 0.5 lies in [0, t)
    CHECK(atoms[0].loc == Catch::Approx(0.5));
    CHECK(max_diff(atoms[0].weight, sys.coefficients[0](1.5)) == 0.0);
  }

  SECTION("counterexample atom placement just past the delay") {
    auto sys = counterexample_system(0.9);
    auto kappa = kernel_from_system(sys, 1.0);
    double eps = 1e-3;
    double t = 1.0 + kPi / 2 + eps;
    auto atoms = kappa.atoms_at(t);
    REQUIRE(atoms.size() == 1);
    CHECK(atoms[0].loc == Catch::Approx(1.0 + eps));
    CHECK(max_diff(atoms[0].weight, sys.coefficients[0](t)) == 0.0);
  }
}

TEST_CASE("resolvent of atomic kernels", "[volterra]") {
  SECTION("zero kernel has zero resolvent") {
    AtomicKernel zero(0.0, 1.0, 1, [](double) { return std::vector<VolterraAtom>{}; },
                      1.0);
    auto rho = resolvent(zero);
    CHECK(rho.atoms_at(0.7).empty());
    CHECK(resolvent_residual(zero, rho) == 0.0);
  }

  SECTION("explicit weights for the commensurate pair at the window edge") {
    auto sys = two_delay_system();
    Matrix A = sys.coefficients[0](0.0);
    Matrix B = sys.coefficients[1](0.0);
    auto kappa = kernel_from_system(sys, 0.0);
    auto rho = resolvent(kappa);
    auto atoms = rho.atoms_at(2.0);  // atoms at 1 (depth 1) and 0 (depths 1+2 merged)
    REQUIRE(atoms.size() == 2);
    CHECK(atoms[0].loc == Catch::Approx(0.0));
    CHECK(max_diff(atoms[0].weight, Matrix(-B - A * A)) < 1e-14);
    CHECK(atoms[1].loc == Catch::Approx(1.0));
    CHECK(max_diff(atoms[1].weight, Matrix(-A)) < 1e-14);
    CHECK(rho.neumann_depth(2.0) == 2);
  }

  SECTION("resolvent identity residual at machine scale") {
    for (auto sys : {two_delay_system(), deep_window_system(),
                     counterexample_system(0.9)}) {
      auto kappa = kernel_from_system(sys, 0.25);
      auto rho = resolvent(kappa);
      CHECK(resolvent_residual(kappa, rho) < 1e-12);
    }
  }

  SECTION("neumann depth is bounded by ceil(tau_N / tau_1)") {
    auto sys = deep_window_system();
    auto rho = resolvent(kernel_from_system(sys, 0.0));
    int bound = static_cast<int>(std::ceil(sys.max_delay() / sys.min_delay()));
    for (double t : {0.9, 1.7, 2.2, 2.5}) CHECK(rho.neumann_depth(t) <= bound);
    CHECK(rho.neumann_depth(2.5) >= 2);  // chains genuinely nest on this window
  }

  SECTION("a perturbed resolvent breaks the identity (uniqueness probe)") {
    auto sys = two_delay_system();
    auto kappa = kernel_from_system(sys, 0.0);
    auto good = resolvent(kappa);
    // Resolvent of a *different* kernel against kappa: residual must blow up.
    auto sys2 = two_delay_system();
    Matrix bump = mat2(0.2, 0.0, 0.0, 0.2);
    sys2.coefficients[0] = PeriodicMatrixFunction::constant(
        Matrix(sys.coefficients[0](0.0) + bump), sys.period);
    auto wrong = resolvent(kernel_from_system(sys2, 0.0));
    CHECK(resolvent_residual(kappa, good) < 1e-12);
    CHECK(resolvent_residual(kappa, wrong) > 1e-3);
  }

  SECTION("accumulating atoms are rejected") {
    AtomicKernel bad(0.0, 1.0, 1, [](double) { return std::vector<VolterraAtom>{}; },
                     0.0);
    CHECK_THROWS_AS(resolvent(bad), PerstabError);
  }
}

TEST_CASE("volterra solution formula", "[volterra]") {
  SECTION("zero forcing gives the zero solution") {
    auto sys = deep_window_system();
    auto rho = resolvent(kernel_from_system(sys, 0.0));
    auto zero = [](double) { return Vector(Vector::Zero(2)); };
    for (double t : {0.3, 1.1, 2.4}) CHECK(solve_volterra(rho, zero, t).norm() == 0.0);
  }

  SECTION("zero kernel returns the forcing") {
    AtomicKernel zero(0.0, 2.0, 1, [](double) { return std::vector<VolterraAtom>{}; },
                      1.0);
    auto rho = resolvent(zero);
    auto g = [](double t) {
      Vector v(1);
      v(0) = std::sin(t) + 2.0;
      return v;
    };
    for (double t : {0.2, 1.5}) CHECK((solve_volterra(rho, g, t) - g(t)).norm() == 0.0);
  }

  SECTION("system forcing reproduces the homogeneous solution on the window") {
    for (auto sys : {two_delay_system(), deep_window_system(),
                     counterexample_system(0.9)}) {
      double s = 0.4;
      auto phi = random_initial_condition(sys, 314);
      auto rho = resolvent(kernel_from_system(sys, s));
      auto f = forcing_from_initial(sys, phi, s);
      auto exact = ExactEvaluator::homogeneous(sys, phi, s);
      double tau = sys.max_delay();
      for (int i = 1; i < 16; ++i) {
        double t = s + tau * (i + 0.4) / 17.0;
        CHECK((solve_volterra(rho, f, t) - exact.at(t)).norm() < 1e-10);
      }
    }
  }
}

TEST_CASE("forcing from initial data", "[volterra]") {
  SECTION("past all delays the sum is empty") {
    auto sys = two_delay_system();
    auto phi = random_initial_condition(sys, 5);
    auto f = forcing_from_initial(sys, phi, 0.0);
    CHECK(f(sys.max_delay()).norm() == 0.0);
  }

  SECTION("at t = s the full sum appears; compatible data gives phi(0)") {
    auto sys = scalar_system(0.5);
    InitialCondition phi{[](double th) {
                           Vector v(1);
                           v(0) = std::pow(0.5, th);  // phi(0)=1 = 0.5*phi(-1)
                           return v;
                         },
                         InitialCondition::Space::Continuous};
    CHECK(phi.compatibility_residual(sys, 0.0) < 1e-14);
    auto f = forcing_from_initial(sys, phi, 0.0);
    CHECK((f(0.0) - phi.phi(0.0)).norm() < 1e-14);
  }

  SECTION("scalar step shape: c before the delay, zero after") {
    auto sys = scalar_system(0.5);
    InitialCondition one{[](double) { return Vector(Vector::Ones(1)); },
                         InitialCondition::Space::L2};
    auto f = forcing_from_initial(sys, one, 2.0);
    CHECK(std::abs(f(2.3)(0).real() - 0.5) < 1e-14);
    CHECK(std::abs(f(2.9)(0).real() - 0.5) < 1e-14);
    CHECK(std::abs(f(3.0)(0)) == 0.0);
  }
}

TEST_CASE("fundamental solution from the resolvent", "[volterra]") {
  auto sys = deep_window_system();
  auto kappa = kernel_from_system(sys, 0.0);
  auto rho = resolvent(kappa);

  SECTION("zero above the diagonal, identity on it") {
    CHECK(fundamental_from_resolvent(rho, 1.0, 1.5).cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_diff(fundamental_from_resolvent(rho, 1.3, 1.3), identity(2)) == 0.0);
  }

  SECTION("matches the lattice fundamental solution on the window square") {
    KernelCoefficients ker(sys, sys.max_delay(), 16);
    std::mt19937_64 rng(2718);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
      double t = sys.max_delay() * unit(rng);
      double al = t * unit(rng);
      Matrix xt = fundamental_from_resolvent(rho, t, al);
      Matrix x = fundamental_solution(ker, t, al);
      REQUIRE(max_diff(xt, x) < 1e-10);
    }
  }
}

TEST_CASE("total variation submultiplicativity", "[volterra]") {
  // W(fg) <= W(f) sup|g| + W(g) sup|f| on piecewise-constant samples.
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<double> f(24), g(24);
    for (auto& v : f) v = unit(rng);
    for (auto& v : g) v = unit(rng);
    auto tv = [](const std::vector<double>& x) {
      double w = 0;
      for (std::size_t i = 1; i < x.size(); ++i) w += std::abs(x[i] - x[i - 1]);
      return w;
    };
    auto sup = [](const std::vector<double>& x) {
      double s = 0;
      for (double v : x) s = std::max(s, std::abs(v));
      return s;
    };
    std::vector<double> fg(24);
    for (std::size_t i = 0; i < 24; ++i) fg[i] = f[i] * g[i];
    CHECK(tv(fg) <= tv(f) * sup(g) + tv(g) * sup(f) + 1e-12);
  }
}
