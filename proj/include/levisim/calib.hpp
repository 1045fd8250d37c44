#pragma once

#include <optional>
#include <vector>

#include "levisim/dsp.hpp"
#include "levisim/model.hpp"
#include "levisim/riccati.hpp"
#include "levisim/sim.hpp"

namespace levisim {

struct DetectorCalibration {
  Vec3 c_vm = Vec3::Zero();        // V/m
  Vec3 c_vm_sigma = Vec3::Zero();  // 1-sigma uncertainty
  Vec3 omega = Vec3::Zero();       // fitted resonances, rad/s
  Vec3 omega_sigma = Vec3::Zero();
  double gamma = 0.0;              // fitted drag, 1/s
  double gamma_sigma = 0.0;
  std::vector<std::string> warnings;
};

struct DriveConfig {
  int electrode = 0;      // 0 = a(x), 1 = b(y), 2 = z
  double omega_dr = 0.0;  // rad/s, near (not at) the target resonance
  double tau_el = 0.05;   // duration of one measurement, s
};

// One amplitude point of an electrode calibration: the detector traces
// recorded while driving with amplitude_v volts.
struct DrivenRun {
  double amplitude_v = 0.0;
  std::vector<std::vector<double>> detector_traces;  // volts, one axis
  double f_s = 0.0;
};

struct ForceEstimate {
  double force = 0.0;  // N
  double sigma = 0.0;
};

struct ElectrodeCalibration {
  double coefficient = 0.0;  // N/V
  double sigma = 0.0;
  std::vector<double> amplitudes_v;
  std::vector<ForceEstimate> forces;
};

struct FixedPointValue {
  double quantized = 0.0;
  double error = 0.0;       // quantized - exact
  int integer_bits = 0;
  int fraction_bits = 0;
  bool exact = false;
};

struct DigitalGains {
  Eigen::Matrix<double, 2, 4> xy = Eigen::Matrix<double, 2, 4>::Zero();
  double k_p_z = 0.0;
  double k_d_z = 0.0;
  std::vector<FixedPointValue> fixed_point;  // row-major xy, then z pair
};

// Thermal-PSD detector calibration: averages trace PSDs, fits the
// voltage-domain Lorentzian per axis, extracts C_Vm given mass and
// temperature. Appends a warning when the fitted gamma disagrees with
// the pressure-derived value by more than 50%.
DetectorCalibration calibrate_detector(
    const std::vector<std::vector<double>>& traces_x,
    const std::vector<std::vector<double>>& traces_y,
    const std::vector<std::vector<double>>& traces_z, double f_s,
    const GasEnvironment& env, const ParticleParams& particle,
    const TrapParams& trap_guess);

// Integrated drive-peak force: averaged driven PSD in displacement
// units, thermal Lorentzian baseline subtracted, remaining peak power
// integrated over +-window_lobes sinc main lobes around omega_dr, then
// inverted through the mechanical susceptibility.
ForceEstimate extract_drive_force(const PsdEstimate& displacement_psd,
                                  const DriveConfig& drive, double omega_i,
                                  double gamma, double mass,
                                  double temperature, int window_lobes = 3);

// Transduction coefficient from a set of driven runs at different
// amplitudes: weighted linear fit of force vs volts. All-zero
// amplitudes return coefficient 0 with infinite sigma.
ElectrodeCalibration calibrate_electrode(const std::vector<DrivenRun>& runs,
                                         int response_axis,
                                         const DriveConfig& drive,
                                         const DetectorCalibration& detector,
                                         const PhysicalSystem& system,
                                         double min_peak_snr = 3.0);

// Published conversion law: kp_d = kp/(G Cxx Cvm_j),
// kd_d = -Omega_j kd/(G Cxx Cvm_j); the z channel uses its own
// reference coefficient.
DigitalGains digital_gains(const GainMatrix& K_d,
                           const DetectorCalibration& detector,
                           const ActuatorCalibration& actuator, double g_amp,
                           const TrapParams& trap);

// Round-to-nearest fixed-point quantization with the given format;
// throws on overflow naming the entry.
DigitalGains to_fixed_point(const DigitalGains& gains, int integer_bits,
                            int fraction_bits);

// Smallest signed (1 + int + frac = total_bits) format holding |value|,
// with the error of round-to-nearest in that format.
FixedPointValue best_fixed_point(double value, int total_bits = 16);

// Spectral radius of the closed loop after replacing the digital gains
// by their quantized values (re-check hook for to_fixed_point).
double quantized_closed_loop_radius(const DiscreteStateSpace& dss,
                                    const DigitalGains& quantized,
                                    const DetectorCalibration& detector,
                                    const ActuatorCalibration& actuator,
                                    double g_amp, const TrapParams& trap);

// Inverse of digital_gains: physical gain matrix from digital values.
GainMatrix physical_gains(const DigitalGains& digital,
                          const DetectorCalibration& detector,
                          const ActuatorCalibration& actuator, double g_amp,
                          const TrapParams& trap);

}  // namespace levisim
