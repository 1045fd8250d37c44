#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "levisim/constants.hpp"
#include "levisim/model.hpp"
#include "levisim/riccati.hpp"
#include "support/oracles.hpp"

using namespace levisim;
namespace c = levisim::constants;

TEST_CASE("drag coefficient vanishes at zero pressure") {
  auto sys = oracles::paper_system();
  sys.gas.pressure = 0.0;
  CHECK(drag_coefficient(sys.gas, sys.particle) == 0.0);
}

TEST_CASE("drag coefficient matches the kinetic formula by hand") {
  const auto sys = oracles::paper_system();
  const double vbar =
      std::sqrt(8.0 * c::gas_constant * 293.0 / (c::pi * 28.97e-3));
  const double expected =
      15.8 * 71.5e-9 * 71.5e-9 * 120.0 / (3.37e-18 * vbar);
  const double gamma = drag_coefficient(sys.gas, sys.particle);
  CHECK(gamma == doctest::Approx(expected).epsilon(1e-12));
  // order of magnitude sanity at 1.2 mbar
  CHECK(gamma > 1e3);
  CHECK(gamma < 1e4);
}

TEST_CASE("drag is linear in pressure") {
  auto sys = oracles::paper_system();
  const double g1 = drag_coefficient(sys.gas, sys.particle);
  sys.gas.pressure *= 2.0;
  const double g2 = drag_coefficient(sys.gas, sys.particle);
  CHECK(g2 == doctest::Approx(2.0 * g1).epsilon(1e-12));
}

TEST_CASE("drag rejects non-finite inputs") {
  auto sys = oracles::paper_system();
  sys.gas.pressure = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(drag_coefficient(sys.gas, sys.particle),
                  std::invalid_argument);
  sys.gas.pressure = -1.0;
  CHECK_THROWS_AS(drag_coefficient(sys.gas, sys.particle),
                  std::invalid_argument);
}

TEST_CASE("mass derived from radius and density") {
  ParticleParams p;
  p.radius = 71.5e-9;
  p.density = 2200.0;
  const double expected =
      2200.0 * (4.0 / 3.0) * c::pi * std::pow(71.5e-9, 3);
  CHECK(p.resolved().mass == doctest::Approx(expected).epsilon(1e-14));
  // consistent with the published 3.37 fg
  CHECK(p.resolved().mass == doctest::Approx(3.37e-18).epsilon(0.01));
}

TEST_CASE("state space has the canonical block form") {
  const auto sys = oracles::paper_system();
  const auto ss = build_state_space(sys.trap, 0.0, sys.actuator, sys.particle,
                                    sys.gas);
  CHECK(ss.A.block<3, 3>(0, 0).isZero(0.0));
  CHECK(ss.A.block<3, 3>(0, 3).isIdentity(0.0));
  CHECK(ss.A.block<3, 3>(3, 3).isZero(0.0));  // gamma = 0
  for (int i = 0; i < 3; ++i) {
    CHECK(ss.A(3 + i, i) ==
          doctest::Approx(-sys.trap.omega[i] * sys.trap.omega[i]));
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(ss.A(3 + i, j) == 0.0);
    }
  }
  CHECK(ss.B.block<3, 3>(0, 0).isZero(0.0));
  CHECK(ss.C.block<3, 3>(0, 0).isIdentity(0.0));
  CHECK(ss.C.block<3, 3>(0, 3).isZero(0.0));
  // positions are not directly forced
  CHECK((ss.C * ss.B).isZero(0.0));
}

TEST_CASE("process noise vanishes without gas and is PSD otherwise") {
  auto sys = oracles::paper_system();
  auto ss = build_state_space(sys.trap, 0.0, sys.actuator, sys.particle,
                              sys.gas);
  CHECK(ss.process_noise_psd.isZero(0.0));

  const double gamma = sys.drag();
  ss = build_state_space(sys.trap, gamma, sys.actuator, sys.particle, sys.gas);
  const double expected = 2.0 * gamma * c::k_boltzmann * 293.0 / 3.37e-18;
  for (int i = 0; i < 3; ++i) {
    CHECK(ss.process_noise_psd(3 + i, 3 + i) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(ss.process_noise_psd.isApprox(ss.process_noise_psd.transpose()));
  Eigen::SelfAdjointEigenSolver<Mat6> es(ss.process_noise_psd);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("eigenvalues of A sit at real part -gamma/2") {
  const auto sys = oracles::paper_system();
  const double gamma = sys.drag();  // well below 2*Omega here
  const auto ss = build_state_space(sys.trap, gamma, sys.actuator,
                                    sys.particle, sys.gas);
  Eigen::EigenSolver<Eigen::MatrixXd> es(ss.A);
  for (int i = 0; i < 6; ++i) {
    CHECK(es.eigenvalues()[i].real() ==
          doctest::Approx(-gamma / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("free flow preserves the energy metric when undamped") {
  const auto sys = oracles::paper_system();
  const double omega = sys.trap.omega[0];
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -omega * omega, 0.0;
  // series exponential over a quarter period
  const double t = 0.25 * c::two_pi / omega;
  const Eigen::Matrix2d e = matrix_exponential_series(a * t, 1e-15);
  const Eigen::Matrix2d metric =
      Eigen::Vector2d(omega * omega, 1.0).asDiagonal();
  const Eigen::Matrix2d preserved = e.transpose() * metric * e;
  CHECK(preserved.isApprox(metric, 1e-12));
}

TEST_CASE("actuator matrix from the published coefficients") {
  const auto sys = oracles::paper_system();
  const auto b = actuator_matrix(sys.actuator, sys.particle);
  const double m = 3.37e-18;
  CHECK(b(0, 0) == doctest::Approx(-1.0 / m).epsilon(1e-12));
  CHECK(b(0, 1) == doctest::Approx(2.18 / 2.83 / m).epsilon(1e-12));
  CHECK(b(1, 0) == doctest::Approx(2.21 / 2.83 / m).epsilon(1e-12));
  CHECK(b(1, 1) == doctest::Approx(2.36 / 2.83 / m).epsilon(1e-12));
  CHECK(b(2, 2) == doctest::Approx(1.0 / m).epsilon(1e-12));
  CHECK(b(0, 2) == 0.0);
  CHECK(b(2, 0) == 0.0);
}

TEST_CASE("decoupled electrodes give a diagonal actuator") {
  auto sys = oracles::paper_system();
  sys.actuator.c_nv << 2.83e-16, 0.0, 0.0, 2.83e-16;
  const auto b = actuator_matrix(sys.actuator, sys.particle);
  const double m = 3.37e-18;
  CHECK(b(0, 0) == doctest::Approx(-1.0 / m));
  CHECK(b(1, 1) == doctest::Approx(1.0 / m));
  CHECK(b(0, 1) == 0.0);
  CHECK(b(1, 0) == 0.0);
}

TEST_CASE("actuator matrix invariant under uniform coefficient rescaling") {
  auto sys = oracles::paper_system();
  const auto b1 = actuator_matrix(sys.actuator, sys.particle);
  sys.actuator.c_nv *= 7.25;
  const auto b2 = actuator_matrix(sys.actuator, sys.particle);
  // exact equality: only ratios enter
  CHECK(b1.block<2, 2>(0, 0) == b2.block<2, 2>(0, 0));
}

TEST_CASE("z electrode falls back to the configured scale") {
  auto sys = oracles::paper_system();
  sys.actuator.b_z_fallback = 2.0e17;
  const auto b = actuator_matrix(sys.actuator, sys.particle);
  CHECK(b(2, 2) == 2.0e17);
  sys.actuator.c_nv_z = 5.0e-16;
  CHECK(sys.actuator.z_reference() == 5.0e-16);
  sys.actuator.c_nv_z.reset();
  CHECK(sys.actuator.z_reference() == doctest::Approx(2.83e-16));
}

TEST_CASE("quantum closure ties imprecision and backaction") {
  const Vec3 s_imp(1e-25, 1e-25, 1e-25);
  const Vec3 eta(0.05, 0.05, 0.3);
  const Vec3 ba = NoiseParams::backaction_from_imprecision(s_imp, eta);
  for (int i = 0; i < 3; ++i) {
    CHECK(s_imp[i] * ba[i] ==
          doctest::Approx(c::hbar * c::hbar / (4.0 * eta[i])).epsilon(1e-12));
  }

  NoiseParams noise;
  noise.quantum_enabled = true;
  noise.measurement_sigma = s_imp.cwiseSqrt();
  noise.detection_efficiency = eta;
  noise.backaction_force_psd = ba;
  CHECK_NOTHROW(noise.validate());
  noise.backaction_force_psd[2] *= 1.5;  // violates the closure
  CHECK_THROWS_AS(noise.validate(), std::invalid_argument);
}
