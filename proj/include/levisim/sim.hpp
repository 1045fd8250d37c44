#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "levisim/dsp.hpp"
#include "levisim/model.hpp"
#include "levisim/random.hpp"
#include "levisim/riccati.hpp"

namespace levisim {

struct SimConfig {
  double T_s = 64e-9;          // controller step, s
  int substeps = 8;            // physics steps per controller step
  double duration = 0.06;      // simulated time per trace, s
  double trace_length = 0.05;  // recorded tail of each trace, s
  std::uint64_t seed = 1;
  int n_traces = 1;
  double electronic_delay = 0.639e-6;  // tau_e, s
  double amplifier_gain = 5.0;         // V/V
  int decimation = 8;                  // ADC clock ticks per T_s, informational
  int adc_bits = 0;                    // 0 = ideal detector
  double adc_range = 1.0;              // +-V full scale when quantizing
  int record_every = 1;                // record every k-th physics step
  double instability_energy_factor = 1e6;
  int threads = 1;

  double dt_physics() const { return T_s / substeps; }
  double record_rate() const { return 1.0 / (dt_physics() * record_every); }
  void validate() const;
};

// Digital controller state per the FPGA block diagram: per-channel
// conditioning filters, delay lines, and the 2x4 (+1x2 for z) gain law.
struct FeedbackChainConfig {
  // rows: outputs (u_a, u_b); cols: x_a, x_b, x_a delayed, x_b delayed
  Eigen::Matrix<double, 2, 4> gains_xy = Eigen::Matrix<double, 2, 4>::Zero();
  double k_p_z = 0.0;  // digital proportional z gain (0 = cold damping)
  double k_d_z = 0.0;  // digital derivative z gain
  int delay_a = 0;     // N_a, controller samples
  int delay_b = 0;
  int delay_z = 0;
  std::vector<BiquadCoeffs> filters_xy;  // applied in order to both x and y
  std::vector<BiquadCoeffs> filters_z;

  void validate() const;
};

// Delay samples realizing a quarter-period (velocity-estimating) total
// delay: N = round(((pi/2)/omega - tau_e)/T_s), floored at 0.
int velocity_delay_samples(double omega, double tau_e, double T_s);

// Default conditioning filters: DC block + notch removing the other
// band's resonance (one notch for xy, two cascaded for z).
std::vector<BiquadCoeffs> default_filters_xy(const TrapParams& trap, double f_s,
                                             double notch_quality = 4.0,
                                             double dc_cutoff = 1e3);
std::vector<BiquadCoeffs> default_filters_z(const TrapParams& trap, double f_s,
                                            double notch_quality = 8.0,
                                            double dc_cutoff = 1e3);

struct Trace {
  std::array<std::vector<double>, 3> position;  // m
  std::array<std::vector<double>, 3> detector;  // V
  std::array<std::vector<double>, 3> control;   // DAC V (empty when unused)
};

struct TraceMeta {
  double pressure = 0.0;           // Pa
  double gamma = 0.0;              // 1/s
  std::uint64_t seed = 0;
  double sample_rate = 0.0;        // recorded rate, Hz
  double realized_tau_e = 0.0;     // s, after rounding to the physics grid
  double tau_e_residual = 0.0;     // s, requested minus realized
};

struct TraceSet {
  std::vector<Trace> traces;
  TraceMeta meta;
};

// Deterministic sinusoidal force drive (electrode calibration):
// volts amplitude_v at angular frequency omega on electrode pair j.
struct SinusoidalDrive {
  int electrode = 0;        // 0 = a(x), 1 = b(y), 2 = z
  double amplitude_v = 0.0;
  double omega = 0.0;       // rad/s
  double phase = 0.0;
};

// Free (uncontrolled) motion with exact one-step Gaussian transitions.
TraceSet simulate_free(const PhysicalSystem& system, const SimConfig& config);

// Free motion plus a deterministic electrode drive.
TraceSet simulate_driven(const PhysicalSystem& system, const SimConfig& config,
                         const SinusoidalDrive& drive);

// Full digital loop: sample detector volts at 1/T_s, condition, delay,
// apply the gain law, amplify, convert to force through the electrode
// map, and inject after the electronic delay. Throws InstabilityError
// if the energy bound is exceeded.
TraceSet run_closed_loop(const PhysicalSystem& system,
                         const FeedbackChainConfig& chain,
                         const SimConfig& config);

struct DelaySweepPoint {
  double phi_requested = 0.0;
  double phi_realized = 0.0;
  Vec3 t_eff = Vec3::Zero();
  Vec3 t_eff_stderr = Vec3::Zero();
  double t_oracle = 0.0;  // small-gain analytic prediction, swept axis
};

struct DelaySweepResult {
  int axis = 0;
  double gain = 0.0;  // N/m
  std::vector<DelaySweepPoint> points;
};

struct PressureSweepPoint {
  double pressure = 0.0;  // Pa
  Vec3 t_eff = Vec3::Zero();
  Vec3 t_eff_stderr = Vec3::Zero();
  bool unstable = false;
  double t_oracle_z = 0.0;  // analytic cold-damping steady state, z axis
};

struct PressureSweepResult {
  std::vector<PressureSweepPoint> points;
};

struct QuantumResult {
  Vec3 nbar = Vec3::Zero();          // Monte-Carlo mean over runs
  Vec3 nbar_std = Vec3::Zero();      // one standard deviation over runs
  Vec3 nbar_predicted = Vec3::Zero();  // algebraic LQG steady state
  Vec3 t_eff = Vec3::Zero();
  int runs = 0;
};

// Delayed-position force sweep u_i = -G x_i(t - tau) over the phase
// grid phi = omega_i tau. Repeats config.n_traces times per point.
// Throws std::invalid_argument for phases below omega_i * tau_e.
DelaySweepResult run_delay_sweep(const PhysicalSystem& system, double gain,
                                 std::span<const double> phi_grid, int axis,
                                 const SimConfig& config);

// Small-gain analytic prediction for the delayed-force experiment:
// T_eff = T gamma_m / (gamma_m + gamma_fb), gamma_fb = -G sin(phi)/(m w).
double delay_feedback_temperature(double temperature, double gamma_m,
                                  double gain, double phi, double mass,
                                  double omega);

// Analytic cold-damping steady state including fed-back detector noise:
// T = (2 m gamma kB T_gas + (m gfb w)^2 S_imp) / (2 m kB (gamma + gfb)).
double cold_damping_temperature(double temperature, double gamma_m,
                                double gamma_fb, double omega, double mass,
                                double imprecision_psd);

// Closed loop with fixed chain across a pressure grid. Instability at a
// grid point is recorded, not fatal.
PressureSweepResult run_pressure_sweep(const PhysicalSystem& system,
                                       const FeedbackChainConfig& chain,
                                       std::span<const double> pressures_pa,
                                       const SimConfig& config);

// Kalman-LQG loop with thermal + backaction process noise and
// imprecision measurement noise; per-run occupancies over >= 2 runs
// plus the algebraic steady-state prediction.
QuantumResult run_quantum(const PhysicalSystem& system,
                          const KalmanGain& estimator,
                          const ControllerGains& regulator, int runs,
                          const SimConfig& config);

// Algebraic steady-state covariance of the true state under the
// steady Kalman-LQG loop (the Monte-Carlo oracle).
Mat6 lqg_steady_state_covariance(const DiscreteStateSpace& dss,
                                 const GainMatrix& K_d,
                                 const Eigen::Matrix<double, 6, 3>& L,
                                 const Eigen::Matrix3d& measurement_cov);

Vec3 occupancy_from_covariance(const Mat6& cov, const TrapParams& trap,
                               const ParticleParams& particle);

// Exact per-axis transition over one physics step: harmonic oscillator
// with viscous damping, white force noise, and a zero-order-held
// external force. Used by every simulation path.
class AxisPropagator {
 public:
  AxisPropagator() = default;
  AxisPropagator(double omega, double gamma, double accel_psd, double dt);

  // Advances (x, v) one step under held force f (N) on this axis.
  void step(double& x, double& v, double force_over_mass, Rng& rng) const;
  double dt() const { return dt_; }

  // Transition matrix and one-step covariance, for the exactness tests.
  Eigen::Matrix2d transition() const { return a_; }
  Eigen::Matrix2d covariance() const { return cov_; }
  Eigen::Vector2d force_response() const { return bf_; }

 private:
  Eigen::Matrix2d a_ = Eigen::Matrix2d::Identity();
  Eigen::Vector2d bf_ = Eigen::Vector2d::Zero();  // accel -> (x, v)
  Eigen::Matrix2d chol_ = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d cov_ = Eigen::Matrix2d::Zero();
  double dt_ = 0.0;
};

// Per-axis propagators for a system at its configured pressure.
std::array<AxisPropagator, 3> make_propagators(const PhysicalSystem& system,
                                               double dt);

// Thermal-equilibrium initial condition at the gas temperature.
Vec6 thermal_initial_state(const PhysicalSystem& system, Rng& rng);

}  // namespace levisim
