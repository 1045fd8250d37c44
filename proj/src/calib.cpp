#include "levisim/calib.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/errors.hpp"

namespace levisim {

namespace {

PsdEstimate averaged_psd(const std::vector<std::vector<double>>& traces,
                         double f_s, TraceUnits units) {
  if (traces.empty()) throw std::invalid_argument("no traces");
  PsdAccumulator acc;
  const std::size_t seg = welch_segment_for(traces.front().size());
  for (const auto& tr : traces) {
    acc.add(welch_psd(tr, f_s, seg, Window::hann,
                      PsdConvention::double_sided, units));
  }
  return acc.mean;
}

}  // namespace

DetectorCalibration calibrate_detector(
    const std::vector<std::vector<double>>& traces_x,
    const std::vector<std::vector<double>>& traces_y,
    const std::vector<std::vector<double>>& traces_z, double f_s,
    const GasEnvironment& env, const ParticleParams& particle,
    const TrapParams& trap_guess) {
  env.validate();
  particle.validate();
  trap_guess.validate();
  const double mass = particle.resolved().mass;
  const double gamma_expected = drag_coefficient(env, particle);

  DetectorCalibration out;
  const std::vector<const std::vector<std::vector<double>>*> all = {
      &traces_x, &traces_y, &traces_z};
  double gamma_acc = 0.0, gamma_var_acc = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const auto psd = averaged_psd(*all[axis], f_s, TraceUnits::volts);
    const double omega0 = trap_guess.omega[axis];
    LorentzianGuess guess;
    guess.omega = omega0;
    guess.gamma = gamma_expected > 0.0 ? gamma_expected : 1e-3 * omega0;
    const double half_band = std::max(30.0 * guess.gamma, 40.0 * omega0 / 1e3);
    const auto fit = fit_lorentzian(
        psd, mass, env.temperature, guess,
        (omega0 - half_band) / constants::two_pi,
        (omega0 + half_band) / constants::two_pi, true);
    out.c_vm[axis] = std::sqrt(fit.amplitude);
    out.c_vm_sigma[axis] = fit.amplitude_sigma / (2.0 * out.c_vm[axis]);
    out.omega[axis] = fit.omega;
    out.omega_sigma[axis] = fit.omega_sigma;
    gamma_acc += fit.gamma;
    gamma_var_acc += fit.gamma_sigma * fit.gamma_sigma;
    if (gamma_expected > 0.0 &&
        std::abs(fit.gamma - gamma_expected) > 0.5 * gamma_expected) {
      std::ostringstream w;
      w << "axis " << axis << ": fitted gamma " << fit.gamma
        << " 1/s deviates >50% from the pressure-derived " << gamma_expected
        << " 1/s";
      out.warnings.push_back(w.str());
    }
  }
  out.gamma = gamma_acc / 3.0;
  out.gamma_sigma = std::sqrt(gamma_var_acc) / 3.0;
  return out;
}

ForceEstimate extract_drive_force(const PsdEstimate& psd,
                                  const DriveConfig& drive, double omega_i,
                                  double gamma, double mass,
                                  double temperature, int window_lobes) {
  if (psd.units != TraceUnits::displacement) {
    throw std::invalid_argument(
        "extract_drive_force: PSD must be calibrated to displacement");
  }
  const PsdEstimate ss = psd.to_convention(PsdConvention::single_sided);
  const double f_dr = drive.omega_dr / constants::two_pi;
  // sinc main lobe of the finite-duration drive peak
  const double lobe_hz = 1.0 / drive.tau_el;
  const double f_lo = f_dr - window_lobes * lobe_hz;
  const double f_hi = f_dr + window_lobes * lobe_hz;
  const double df = ss.bin_width();

  double peak_power = 0.0;
  double baseline_power = 0.0;
  double power_var = 0.0;  // chi^2 fluctuation of the averaged bins
  const double n_avg =
      static_cast<double>(std::max<std::size_t>(1, ss.segments_averaged));
  std::size_t bins = 0;
  for (std::size_t k = 0; k < ss.frequency_hz.size(); ++k) {
    const double f = ss.frequency_hz[k];
    if (f < f_lo || f > f_hi) continue;
    peak_power += ss.value[k] * df;
    const double thermal =
        2.0 * thermal_lorentzian_psd(f, omega_i, gamma, mass, temperature) * df;
    baseline_power += thermal;
    power_var += thermal * thermal / n_avg;
    ++bins;
  }
  if (bins == 0) {
    throw std::invalid_argument("extract_drive_force: drive outside the band");
  }
  const double signal = std::max(0.0, peak_power - baseline_power);
  // x(t) = F cos(w t) / (m chi): integrated peak power is x_amp^2 / 2.
  const double wd = drive.omega_dr;
  const double chi = std::sqrt(
      std::pow(wd * wd - omega_i * omega_i, 2) + gamma * gamma * wd * wd);
  ForceEstimate est;
  est.force = mass * chi * std::sqrt(2.0 * signal);
  const double sigma_p = std::sqrt(power_var);
  // F = m chi sqrt(2 P): propagate the power fluctuation, with the
  // zero-signal floor at the force equivalent of one sigma_p.
  est.sigma = mass * chi * sigma_p /
              std::sqrt(2.0 * std::max(signal, sigma_p));
  return est;
}

ElectrodeCalibration calibrate_electrode(const std::vector<DrivenRun>& runs,
                                         int response_axis,
                                         const DriveConfig& drive,
                                         const DetectorCalibration& detector,
                                         const PhysicalSystem& system,
                                         double min_peak_snr) {
  if (runs.empty()) throw std::invalid_argument("calibrate_electrode: no runs");
  const double mass = system.particle.resolved().mass;
  const double cvm = detector.c_vm[response_axis];
  const double omega_i = detector.omega[response_axis] > 0.0
                             ? detector.omega[response_axis]
                             : system.trap.omega[response_axis];
  const double gamma = detector.gamma > 0.0 ? detector.gamma : system.drag();

  ElectrodeCalibration out;
  bool any_drive = false;
  for (const auto& run : runs) {
    auto psd = averaged_psd(run.detector_traces, run.f_s, TraceUnits::volts);
    // volts -> displacement
    for (auto& v : psd.value) v /= cvm * cvm;
    psd.units = TraceUnits::displacement;
    const auto est = extract_drive_force(psd, drive, omega_i, gamma, mass,
                                         system.gas.temperature);
    out.amplitudes_v.push_back(run.amplitude_v);
    out.forces.push_back(est);
    if (run.amplitude_v != 0.0) any_drive = true;
  }

  if (!any_drive) {
    out.coefficient = 0.0;
    out.sigma = std::numeric_limits<double>::infinity();
    return out;
  }

  // weighted least squares through the origin: F = c V
  double sw_vf = 0.0, sw_vv = 0.0;
  double snr_best = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double v = out.amplitudes_v[i];
    const double f = out.forces[i].force;
    const double s = out.forces[i].sigma;
    const double w = 1.0 / (s * s);
    sw_vf += w * v * f;
    sw_vv += w * v * v;
    if (s > 0.0) snr_best = std::max(snr_best, f / s);
  }
  if (snr_best < min_peak_snr) {
    throw std::runtime_error(
        "calibrate_electrode: drive peak SNR below threshold; increase the "
        "measurement duration tau_el or the drive amplitude");
  }
  out.coefficient = sw_vf / sw_vv;
  out.sigma = std::sqrt(1.0 / sw_vv);
  return out;
}

DigitalGains digital_gains(const GainMatrix& K_d,
                           const DetectorCalibration& detector,
                           const ActuatorCalibration& actuator, double g_amp,
                           const TrapParams& trap) {
  if (!(g_amp > 0.0)) throw std::invalid_argument("amplifier gain must be > 0");
  actuator.validate();
  for (int j = 0; j < 3; ++j) {
    if (!(detector.c_vm[j] > 0.0)) {
      throw std::invalid_argument("digital_gains: missing C_Vm for axis " +
                                  std::to_string(j));
    }
  }
  const double cxx = std::abs(actuator.c_nv(0, 0));
  DigitalGains out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double denom = g_amp * cxx * detector.c_vm[j];
      out.xy(i, j) = K_d(i, j) / denom;
      out.xy(i, 2 + j) = -trap.omega[j] * K_d(i, 3 + j) / denom;
    }
  }
  const double denom_z = g_amp * actuator.z_reference() * detector.c_vm[2];
  out.k_p_z = K_d(2, 2) / denom_z;
  out.k_d_z = -trap.omega[2] * K_d(2, 5) / denom_z;
  return out;
}

GainMatrix physical_gains(const DigitalGains& digital,
                          const DetectorCalibration& detector,
                          const ActuatorCalibration& actuator, double g_amp,
                          const TrapParams& trap) {
  const double cxx = std::abs(actuator.c_nv(0, 0));
  GainMatrix k = GainMatrix::Zero();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double denom = g_amp * cxx * detector.c_vm[j];
      k(i, j) = digital.xy(i, j) * denom;
      k(i, 3 + j) = -digital.xy(i, 2 + j) * denom / trap.omega[j];
    }
  }
  const double denom_z = g_amp * actuator.z_reference() * detector.c_vm[2];
  k(2, 2) = digital.k_p_z * denom_z;
  k(2, 5) = -digital.k_d_z * denom_z / trap.omega[2];
  return k;
}

FixedPointValue best_fixed_point(double value, int total_bits) {
  // choose the smallest integer width that holds |value|
  int int_bits = 0;
  while (std::abs(value) >= std::ldexp(1.0, int_bits) && int_bits < total_bits)
    ++int_bits;
  const int frac_bits = total_bits - 1 - int_bits;
  FixedPointValue fp;
  fp.integer_bits = int_bits;
  fp.fraction_bits = frac_bits;
  const double scale = std::ldexp(1.0, frac_bits);
  fp.quantized = std::round(value * scale) / scale;
  fp.error = fp.quantized - value;
  fp.exact = fp.error == 0.0;
  return fp;
}

namespace {

FixedPointValue quantize_one(double value, int integer_bits, int fraction_bits,
                             const char* name) {
  const double limit = std::ldexp(1.0, integer_bits);
  const double scale = std::ldexp(1.0, fraction_bits);
  const double q = std::round(value * scale) / scale;
  if (std::abs(q) >= limit) {
    throw std::invalid_argument(std::string("fixed-point overflow on ") + name +
                                ": |" + std::to_string(value) + "| >= " +
                                std::to_string(limit));
  }
  FixedPointValue fp;
  fp.integer_bits = integer_bits;
  fp.fraction_bits = fraction_bits;
  fp.quantized = q;
  fp.error = q - value;
  fp.exact = fp.error == 0.0;
  return fp;
}

}  // namespace

DigitalGains to_fixed_point(const DigitalGains& gains, int integer_bits,
                            int fraction_bits) {
  if (integer_bits < 0 || fraction_bits < 0) {
    throw std::invalid_argument("fixed-point format bits must be >= 0");
  }
  static const char* names[] = {"kp_aa", "kp_ab", "kd_aa", "kd_ab",
                                "kp_ba", "kp_bb", "kd_ba", "kd_bb"};
  DigitalGains out = gains;
  out.fixed_point.clear();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) {
      auto fp = quantize_one(gains.xy(i, j), integer_bits, fraction_bits,
                             names[i * 4 + j]);
      out.xy(i, j) = fp.quantized;
      out.fixed_point.push_back(fp);
    }
  }
  auto fpz_p = quantize_one(gains.k_p_z, integer_bits, fraction_bits, "kp_z");
  auto fpz_d = quantize_one(gains.k_d_z, integer_bits, fraction_bits, "kd_z");
  out.k_p_z = fpz_p.quantized;
  out.k_d_z = fpz_d.quantized;
  out.fixed_point.push_back(fpz_p);
  out.fixed_point.push_back(fpz_d);
  return out;
}

double quantized_closed_loop_radius(const DiscreteStateSpace& dss,
                                    const DigitalGains& quantized,
                                    const DetectorCalibration& detector,
                                    const ActuatorCalibration& actuator,
                                    double g_amp, const TrapParams& trap) {
  const GainMatrix k = physical_gains(quantized, detector, actuator, g_amp, trap);
  return spectral_radius(Eigen::MatrixXd(dss.A_d - dss.B_d * k));
}

}  // namespace levisim
