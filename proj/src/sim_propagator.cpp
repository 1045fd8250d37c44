#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/riccati.hpp"
#include "levisim/sim.hpp"

namespace levisim {

namespace {

// Cholesky of a 2x2 PSD matrix, tolerating (semi)definite input.
Eigen::Matrix2d chol2(const Eigen::Matrix2d& c) {
  Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
  const double c11 = std::max(c(0, 0), 0.0);
  l(0, 0) = std::sqrt(c11);
  if (l(0, 0) > 0.0) l(1, 0) = c(1, 0) / l(0, 0);
  const double rem = c(1, 1) - l(1, 0) * l(1, 0);
  l(1, 1) = std::sqrt(std::max(rem, 0.0));
  return l;
}

}  // namespace

AxisPropagator::AxisPropagator(double omega, double gamma, double accel_psd,
                               double dt)
    : dt_(dt) {
  if (!(omega > 0.0) || gamma < 0.0 || accel_psd < 0.0 || !(dt > 0.0)) {
    throw std::invalid_argument("AxisPropagator: bad parameters");
  }
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -omega * omega, -gamma;
  a_ = matrix_exponential_series(a * dt, 1e-16);
  // ZOH response to a held unit acceleration; a is invertible (omega>0).
  bf_ = a.partialPivLu().solve((a_ - Eigen::Matrix2d::Identity()) *
                               Eigen::Vector2d(0.0, 1.0));
  Eigen::Matrix2d psd = Eigen::Matrix2d::Zero();
  psd(1, 1) = accel_psd;
  cov_ = van_loan_covariance(a, psd, dt);
  chol_ = chol2(cov_);
}

void AxisPropagator::step(double& x, double& v, double force_over_mass,
                          Rng& rng) const {
  const double x0 = x, v0 = v;
  const double n1 = rng.normal();
  const double n2 = rng.normal();
  x = a_(0, 0) * x0 + a_(0, 1) * v0 + bf_[0] * force_over_mass +
      chol_(0, 0) * n1;
  v = a_(1, 0) * x0 + a_(1, 1) * v0 + bf_[1] * force_over_mass +
      chol_(1, 0) * n1 + chol_(1, 1) * n2;
}

std::array<AxisPropagator, 3> make_propagators(const PhysicalSystem& system,
                                               double dt) {
  const double gamma = system.drag();
  const double m = system.particle.resolved().mass;
  const double thermal =
      2.0 * gamma * constants::k_boltzmann * system.gas.temperature / m;
  std::array<AxisPropagator, 3> out;
  for (int i = 0; i < 3; ++i) {
    double accel_psd = thermal;
    if (system.noise.quantum_enabled) {
      accel_psd += system.noise.backaction_force_psd[i] / (m * m);
    }
    out[i] = AxisPropagator(system.trap.omega[i], gamma, accel_psd, dt);
  }
  return out;
}

Vec6 thermal_initial_state(const PhysicalSystem& system, Rng& rng) {
  const double m = system.particle.resolved().mass;
  const double kt = constants::k_boltzmann * system.gas.temperature;
  Vec6 state;
  for (int i = 0; i < 3; ++i) {
    const double omega = system.trap.omega[i];
    state[i] = std::sqrt(kt / (m * omega * omega)) * rng.normal();
    state[i + 3] = std::sqrt(kt / m) * rng.normal();
  }
  return state;
}

}  // namespace levisim
