#include "perstab/simulate.hpp"

#include "perstab/kernels.hpp"
#include "test_support.hpp"

using namespace perstab;
using namespace perstab::testing;

namespace {

InitialCondition constant_one(int dim) {
  return InitialCondition::from_function(
      [dim](double) { return Vector(Vector::Ones(dim)); });
}

}  // namespace

TEST_CASE("homogeneous simulation", "[simulator]") {
  SECTION("zero initial data stays zero") {
    auto sys = counterexample_system(0.9);
    auto sig = simulate_homogeneous(sys, InitialCondition::zero(2), 0.0, 10.0);
    for (const auto& v : sig.values) CHECK(v.norm() == 0.0);
  }

  SECTION("scalar c = 0.5 with phi = 1: y(t) = 0.5^ceil(t)") {
    auto sys = scalar_system(0.5);
    auto ev = ExactEvaluator::homogeneous(sys, constant_one(1), 0.0);
    for (double t : {0.25, 0.5, 1.0, 1.5, 2.0, 3.7, 6.2}) {
      double expect = std::pow(0.5, std::ceil(t));
      CHECK(std::abs(ev.at(t)(0).real() - expect) < 1e-13);
    }
  }

  SECTION("grid and exact backends agree when delays sit on the grid") {
    auto sys = scalar_system(0.5);
    SimOptions grid;
    grid.backend = Backend::Grid;
    grid.grid_step = 1.0 / 32;
    auto a = simulate_homogeneous(sys, constant_one(1), 0.0, 8.0, grid);
    auto ev = ExactEvaluator::homogeneous(sys, constant_one(1), 0.0);
    for (std::size_t i = 0; i < a.size(); i += 7)
      CHECK((a.values[i] - ev.at(a.time_at(i))).norm() < 1e-12);
  }

  SECTION("counterexample with alpha = 0.9 grows without bound") {
    auto sys = counterexample_system(0.9);
    auto phi = random_initial_condition(sys, 7);
    SimOptions o;
    o.backend = Backend::Grid;
    o.grid_step = sys.min_delay() / 64;
    auto sig = simulate_homogeneous(sys, phi, 0.0, 24 * sys.max_delay(), o);
    auto fit = decay_rate_fit(sig, sys);
    CHECK(fit.gamma < 0.0);  // negative decay = growth
  }

  SECTION("linearity holds exactly") {
    auto sys = smooth_periodic_system();
    auto phi1 = random_initial_condition(sys, 11);
    auto phi2 = random_initial_condition(sys, 12);
    Complex a(1.7, 0.0), b(-0.4, 0.0);
    InitialCondition mix{[&](double th) {
                           return Vector(a * phi1.phi(th) + b * phi2.phi(th));
                         },
                         InitialCondition::Space::L2};
    auto ev1 = ExactEvaluator::homogeneous(sys, phi1, 0.0);
    auto ev2 = ExactEvaluator::homogeneous(sys, phi2, 0.0);
    auto evm = ExactEvaluator::homogeneous(sys, mix, 0.0);
    for (double t : {0.3, 1.4, 4.9, 7.2})
      CHECK((evm.at(t) - (a * ev1.at(t) + b * ev2.at(t))).norm() < 1e-12);
  }

  SECTION("compatibility residual detects non-spliced data") {
    auto sys = scalar_system(0.5);
    CHECK(constant_one(1).compatibility_residual(sys, 0.0) == Catch::Approx(0.5));
    InitialCondition good{[](double th) {
                            Vector v(1);
                            v(0) = std::pow(0.5, th);  // phi(0) = 1 = 0.5 * phi(-1)
                            return v;
                          },
                          InitialCondition::Space::Continuous};
    CHECK(good.compatibility_residual(sys, 0.0) < 1e-12);
  }
}

TEST_CASE("forced simulation", "[simulator]") {
  SECTION("zero input from zero history stays zero") {
    auto sys = smooth_periodic_system();
    auto sig = simulate_forced(
        sys, [](double) { return Vector(Vector::Zero(1)); }, 0.0, 8.0);
    for (const auto& v : sig.values) CHECK(v.norm() == 0.0);
  }

  SECTION("grid impulse response walks the kernel sequence") {
    auto sys = scalar_system(0.5);
    double h = 1.0 / 16;
    Signal impulse{0.0, h, {Vector::Ones(1)}};  // one cell at [0, h)
    SimOptions o;
    o.backend = Backend::Grid;
    o.grid_step = h;
    auto sig = simulate_forced(sys, impulse, 0.0, 5.0, o);
    for (int k = 0; k <= 4; ++k) {
      double expect = std::pow(0.5, k);
      CHECK(std::abs(sig.at(static_cast<double>(k))(0).real() - expect) < 1e-13);
      CHECK(std::abs(sig.at(k + 0.5)(0)) < 1e-13);  // off the lattice: no response
    }
  }

  SECTION("exact forced output equals the lattice kernel sum for random input") {
    auto sys = smooth_periodic_system();
    KernelCoefficients ker(sys, 12.0, 32);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Vector> uvals;
    for (int i = 0; i < 140; ++i) {
      Vector v(1);
      v(0) = unit(rng);
      uvals.push_back(v);
    }
    Signal u{0.0, 0.0737, uvals};  // step incommensurate with the delay lattice
    auto uf = u.as_function();
    auto ev = ExactEvaluator::forced(sys, uf, 0.0);
    const auto& lat = ker.lattice();
    for (double t : {0.9, 2.3, 5.1, 8.6, 9.9}) {
      Vector expect = Vector::Zero(1);
      for (std::size_t i = 0; i < lat.size(); ++i) {
        double f = lat.points[i].value;
        if (f > t) break;
        expect += ker.evaluate(i, t) * uf(t - f);
      }
      CHECK((ev.at(t) - expect).norm() < 1e-10);
    }
  }

  SECTION("variation-of-constants restart") {
    for (auto sys : {scalar_system(0.5), smooth_periodic_system(),
                     counterexample_system(0.9)}) {
      const double t0 = 2.25;
      auto u = [t0, &sys](double t) {
        Vector v = Vector::Zero(sys.dim);
        if (t >= 0.0 && t < t0)
          for (int i = 0; i < sys.dim; ++i) v(i) = std::sin(1.3 * t + i);
        return v;
      };
      auto forced = ExactEvaluator::forced(sys, u, 0.0);
      double t1 = t0 + sys.max_delay();
      InitialCondition restart{[&](double th) { return forced.at(t1 + th); },
                               InitialCondition::Space::L2};
      auto homog = ExactEvaluator::homogeneous(sys, restart, t1);
      for (double dt : {0.1, 0.9, 2.2, 4.4})
        CHECK((forced.at(t1 + dt) - homog.at(t1 + dt)).norm() < 1e-10);
    }
  }
}

TEST_CASE("discretized solution operator", "[simulator]") {
  SECTION("t = s gives the identity") {
    auto sys = smooth_periodic_system();
    Matrix U = solution_operator_matrix(sys, 0.5, 0.5, 16);
    CHECK(max_diff(U, Matrix::Identity(16, 16)) == 0.0);
  }

  SECTION("scalar monodromy radius is c^2 with M-convergence") {
    auto sys = scalar_system(0.5);
    double err_prev = -1.0;
    for (int M : {32, 64, 128}) {
      Matrix U = solution_operator_matrix(sys, 0.0, 2.0, M);
      Eigen::ComplexEigenSolver<Matrix> eig(U, false);
      double rho = eig.eigenvalues().cwiseAbs().maxCoeff();
      double err = std::abs(rho - 0.25);
      CHECK(err < 0.0125);
      if (err_prev >= 0) CHECK(err <= 0.5 * err_prev + 1e-12);
      err_prev = err;
    }
  }

  SECTION("period shift leaves the operator unchanged") {
    auto sys = smooth_periodic_system();
    Matrix a = solution_operator_matrix(sys, 0.0, sys.period, 32);
    Matrix b = solution_operator_matrix(sys, sys.period, 2 * sys.period, 32);
    CHECK(max_diff(a, b) < 1e-12);
  }

  SECTION("semigroup property on the grid") {
    auto sys = smooth_periodic_system();
    for (int M : {16, 32}) {
      Matrix u10 = solution_operator_matrix(sys, 0.0, sys.period, M);
      Matrix u21 = solution_operator_matrix(sys, sys.period, 2 * sys.period, M);
      Matrix u20 = solution_operator_matrix(sys, 0.0, 2 * sys.period, M);
      CHECK(max_diff(u20, u21 * u10) < 1e-10);
    }
  }

  SECTION("fundamental solution growth ratio stays bounded") {
    auto sys = smooth_periodic_system();
    KernelCoefficients ker(sys, 14.0, 16);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
      double s = 3.0 * unit(rng);
      double gap = 2.0 + 11.0 * unit(rng);
      Matrix x = fundamental_solution(ker, s + gap, s);
      double ratio = std::log(std::max(x.cwiseAbs().maxCoeff(), 1e-300)) / gap;
      CHECK(ratio < 5.0);
    }
  }
}

TEST_CASE("decay rate fitting", "[simulator]") {
  SECTION("scalar c = 0.5 decays at ln 2") {
    auto sys = scalar_system(0.5);
    auto sig = simulate_homogeneous(sys, constant_one(1), 0.0, 14.0);
    auto fit = decay_rate_fit(sig, sys);
    CHECK(std::abs(fit.gamma - std::log(2.0)) < 0.05 * std::log(2.0));
  }

  SECTION("zero trajectory yields the sentinel") {
    auto sys = scalar_system(0.5);
    auto sig = simulate_homogeneous(sys, InitialCondition::zero(1), 0.0, 10.0);
    auto fit = decay_rate_fit(sig, sys);
    CHECK(fit.zero_trajectory);
    CHECK(std::isinf(fit.gamma));
  }

  SECTION("short trajectories are rejected") {
    auto sys = scalar_system(0.5);
    auto sig = simulate_homogeneous(sys, constant_one(1), 0.0, 3.0);
    CHECK_THROWS_AS(decay_rate_fit(sig, sys), PerstabError);
  }

  SECTION("L2 window option gives a comparable rate") {
    auto sys = scalar_system(0.5);
    auto sig = simulate_homogeneous(sys, constant_one(1), 0.0, 14.0);
    auto fit = decay_rate_fit(sig, sys.max_delay(), true);
    CHECK(std::abs(fit.gamma - std::log(2.0)) < 0.1 * std::log(2.0));
  }
}
