#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/sim.hpp"
#include "levisim/threading.hpp"

namespace levisim {

Mat6 lqg_steady_state_covariance(const DiscreteStateSpace& dss,
                                 const GainMatrix& K_d,
                                 const Eigen::Matrix<double, 6, 3>& L,
                                 const Eigen::Matrix3d& measurement_cov) {
  using Eigen::MatrixXd;
  const Mat6 A = dss.A_d;
  const Mat63 B = dss.B_d;
  const Mat36 C = dss.C_d;
  const Mat6 I = Mat6::Identity();
  const Mat6 A_bk = A - B * K_d;
  const Mat6 ilc = I - L * C;

  // Joint dynamics of [true state; a-priori estimate] driven by the
  // process noise w and measurement noise v.
  MatrixXd phi(12, 12);
  phi.topLeftCorner(6, 6) = A - B * K_d * L * C;
  phi.topRightCorner(6, 6) = -B * K_d * ilc;
  phi.bottomLeftCorner(6, 6) = A_bk * L * C;
  phi.bottomRightCorner(6, 6) = A_bk * ilc;

  MatrixXd g(12, 9);
  g.setZero();
  g.topLeftCorner(6, 6) = Mat6::Identity();
  g.topRightCorner(6, 3) = -B * K_d * L;
  g.bottomRightCorner(6, 3) = A_bk * L;

  MatrixXd noise(9, 9);
  noise.setZero();
  noise.topLeftCorner(6, 6) = dss.process_covariance;
  noise.bottomRightCorner(3, 3) = measurement_cov;

  const MatrixXd sigma =
      solve_discrete_lyapunov(phi, g * noise * g.transpose());
  return Mat6(sigma.topLeftCorner(6, 6));
}

Vec3 occupancy_from_covariance(const Mat6& cov, const TrapParams& trap,
                               const ParticleParams& particle) {
  const double m = particle.resolved().mass;
  Vec3 n;
  for (int i = 0; i < 3; ++i) {
    const double t = effective_temperature(cov(i, i), cov(i + 3, i + 3),
                                           trap.omega[i], m);
    n[i] = occupancy(t, trap.omega[i]);
  }
  return n;
}

QuantumResult run_quantum(const PhysicalSystem& system,
                          const KalmanGain& estimator,
                          const ControllerGains& regulator, int runs,
                          const SimConfig& config) {
  system.validate();
  config.validate();
  if (runs < 2) throw std::invalid_argument("run_quantum: need >= 2 runs");
  if (!system.noise.quantum_enabled) {
    throw std::invalid_argument("run_quantum: quantum noise not enabled");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(system.noise.measurement_sigma[i] > 0.0)) {
      throw std::invalid_argument(
          "run_quantum: every measured axis needs nonzero imprecision");
    }
  }

  const double mass = system.particle.resolved().mass;
  const double dt = config.dt_physics();
  const auto props = make_propagators(system, dt);

  StateSpace ss = system.state_space();
  for (int i = 0; i < 3; ++i) {
    ss.process_noise_psd(i + 3, i + 3) +=
        system.noise.backaction_force_psd[i] / (mass * mass);
  }
  const DiscreteStateSpace dss = discretize(ss, config.T_s);
  const Eigen::Matrix3d force_map = mass * actuator_matrix(system.actuator,
                                                           system.particle);

  const long total_ctrl = std::lround(config.duration / config.T_s);
  const long measure_ctrl = std::lround(config.trace_length / config.T_s);
  const long warmup = total_ctrl - measure_ctrl;
  const double noise_scale = 1.0 / std::sqrt(config.T_s);

  std::vector<Vec3> nbar_runs(runs);
  parallel_for(runs, config.threads, [&](std::size_t r) {
    Rng rng(mix_seed(config.seed ^ 0x9a77ull, r));
    Vec6 state = thermal_initial_state(system, rng);
    Vec6 est = Vec6::Zero();  // a-priori estimate
    Vec3 x2 = Vec3::Zero(), v2 = Vec3::Zero();
    long counted = 0;

    for (long n = 0; n < total_ctrl; ++n) {
      Vec3 y;
      for (int i = 0; i < 3; ++i) {
        y[i] = state[i] +
               system.noise.measurement_sigma[i] * rng.normal() * noise_scale;
      }
      // Seed the estimator from the first sample: the narrowband filter
      // otherwise spends many milliseconds locking onto a thermal-sized
      // initial error.
      if (n == 0) est.head<3>() = y;
      // measurement update, steady-state gain
      const Vec3 innovation = y - est.head<3>();
      est += estimator.L * innovation;
      const Vec3 u = -(regulator.K_d * est);
      const Vec3 force = force_map * u;
      for (int s = 0; s < config.substeps; ++s) {
        for (int i = 0; i < 3; ++i) {
          props[i].step(state[i], state[i + 3], force[i] / mass, rng);
        }
      }
      const Vec6 predicted = dss.A_d * est + dss.B_d * u;
      est = predicted;
      if (n >= warmup) {
        for (int i = 0; i < 3; ++i) {
          x2[i] += state[i] * state[i];
          v2[i] += state[i + 3] * state[i + 3];
        }
        ++counted;
      }
    }
    Vec3 nb;
    for (int i = 0; i < 3; ++i) {
      const double t = effective_temperature(
          x2[i] / static_cast<double>(counted),
          v2[i] / static_cast<double>(counted), system.trap.omega[i], mass);
      nb[i] = occupancy(t, system.trap.omega[i]);
    }
    nbar_runs[r] = nb;
  });

  QuantumResult result;
  result.runs = runs;
  for (const auto& nb : nbar_runs) result.nbar += nb;
  result.nbar /= static_cast<double>(runs);
  Vec3 var = Vec3::Zero();
  for (const auto& nb : nbar_runs) {
    var += (nb - result.nbar).cwiseProduct(nb - result.nbar);
  }
  result.nbar_std = (var / static_cast<double>(runs - 1)).cwiseSqrt();

  Eigen::Matrix3d meas_cov = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) {
    meas_cov(i, i) =
        std::pow(system.noise.measurement_sigma[i], 2) / config.T_s;
  }
  const Mat6 sigma = lqg_steady_state_covariance(dss, regulator.K_d,
                                                 estimator.L, meas_cov);
  result.nbar_predicted =
      occupancy_from_covariance(sigma, system.trap, system.particle);
  for (int i = 0; i < 3; ++i) {
    result.t_eff[i] =
        (result.nbar[i] + 0.5) * constants::hbar * system.trap.omega[i] /
        constants::k_boltzmann;
  }
  return result;
}

}  // namespace levisim
