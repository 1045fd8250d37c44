#pragma once

#include <Eigen/Dense>
#include <optional>

namespace levisim {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Trapped particle. Mass may be given directly or derived from the
// radius and bulk density (fused silica by default).
struct ParticleParams {
  double radius = 0.0;       // m
  double density = 2200.0;   // kg/m^3
  double mass = 0.0;         // kg; 0 means "derive from radius and density"
  int charge_count = 0;      // elementary charges, informational only

  // Returns a copy with mass filled in when it was left at 0.
  ParticleParams resolved() const;
  void validate() const;
};

struct TrapParams {
  Vec3 omega = Vec3::Zero();  // angular resonance frequencies, rad/s
  void validate() const;
};

struct GasEnvironment {
  double pressure = 0.0;           // Pa
  double temperature = 293.0;      // K
  double gas_molar_mass = 28.97e-3;  // kg/mol (air)
  double gas_viscosity = 1.81e-5;    // Pa*s (air), informational
  void validate() const;
};

// Detection and force-noise parameters. measurement_sigma is the
// one-sided amplitude of the white position-imprecision noise, in
// m/sqrt(Hz): the double-sided PSD is sigma^2 (m^2/Hz).
// When quantum_enabled, imprecision and backaction are tied per axis
// by S_imp * S_ba = hbar^2 / (4 eta).
struct NoiseParams {
  Vec3 measurement_sigma = Vec3::Zero();       // m/sqrt(Hz)
  Vec3 detection_efficiency = Vec3::Zero();    // eta in [0,1]
  bool quantum_enabled = false;
  Vec3 backaction_force_psd = Vec3::Zero();    // N^2/Hz, double-sided

  void validate() const;
  // Backaction PSD from the quantum-limit closure, given imprecision
  // PSDs S_imp = sigma^2 and efficiencies.
  static Vec3 backaction_from_imprecision(const Vec3& s_imp, const Vec3& eta);
};

// Electrode transduction coefficients, N/V. c_nv(i,j) is the force on
// axis i per volt on electrode pair j. The z pair could not be
// calibrated in the experiment, so it is optional; b_z_fallback (1/kg)
// is used for the input matrix when it is absent.
struct ActuatorCalibration {
  Eigen::Matrix2d c_nv = Eigen::Matrix2d::Zero();
  std::optional<double> c_nv_z;
  double b_z_fallback = 0.0;   // 1/kg; 0 means "use 1/mass"
  double xx_orientation = -1.0;  // sign of the (x, electrode-a) entry

  double z_reference() const;  // c_nv_z or |c_nv(0,0)| placeholder
  void validate() const;
};

// Continuous-time MIMO model
//   xdot = A x + B u + w,  y = C x + m
// with state [x y z vx vy vz], u in newtons, process_noise_psd the
// double-sided intensity of w.
struct StateSpace {
  Mat6 A = Mat6::Zero();
  Mat63 B = Mat63::Zero();
  Mat36 C = Mat36::Zero();
  Mat6 process_noise_psd = Mat6::Zero();
};

// Everything needed to simulate the experiment.
struct PhysicalSystem {
  ParticleParams particle;
  TrapParams trap;
  GasEnvironment gas;
  NoiseParams noise;
  ActuatorCalibration actuator;
  Vec3 detector_cvm = Vec3::Zero();  // V/m per axis

  void validate() const;
  double drag() const;
  StateSpace state_space() const;
};

// Gas drag rate gamma_m for a sphere in the free-molecular regime,
// gamma = 15.8 r^2 p / (m vbar), vbar = sqrt(8 kB T / (pi m_gas)).
double drag_coefficient(const GasEnvironment& env, const ParticleParams& particle);

// Normalized input matrix B_xyz (1/kg). The xy block is
// (1/m) [[-1, Cxy/Cxx], [Cyx/Cxx, Cyy/Cxx]]; the z entry is the
// configured fallback when the z pair is uncalibrated.
Eigen::Matrix3d actuator_matrix(const ActuatorCalibration& calib,
                                const ParticleParams& particle);

// Physical electrode force map, N/V: force = matrix * electrode volts.
// Sign convention chosen so that the digital-gain conversion law closes
// the loop as negative feedback; equals -Cxx_ref * m * actuator_matrix.
Eigen::Matrix3d electrode_force_matrix(const ActuatorCalibration& calib,
                                       const ParticleParams& particle);

StateSpace build_state_space(const TrapParams& trap, double gamma,
                             const ActuatorCalibration& actuator,
                             const ParticleParams& particle,
                             const GasEnvironment& env);

}  // namespace levisim
