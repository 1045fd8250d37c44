#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/dsp.hpp"

namespace levisim {

namespace {

// Rectangle-rule integrals of the PSD and its w^2-weighted version over
// nonnegative frequencies, with double-sided values counted twice on
// the interior bins (Parseval-consistent with the FFT grid).
void psd_moments(const PsdEstimate& psd, double& x_var, double& v_var) {
  const PsdEstimate ss = psd.to_convention(PsdConvention::single_sided);
  const double df = ss.bin_width();
  x_var = 0.0;
  v_var = 0.0;
  for (std::size_t k = 0; k < ss.value.size(); ++k) {
    const double w = constants::two_pi * ss.frequency_hz[k];
    x_var += ss.value[k] * df;
    v_var += w * w * ss.value[k] * df;
  }
}

}  // namespace

double effective_temperature(double x_variance, double v_variance,
                             double omega_i, double mass) {
  return mass * (omega_i * omega_i * x_variance + v_variance) /
         (2.0 * constants::k_boltzmann);
}

double effective_temperature(const PsdEstimate& psd, double omega_i,
                             double mass, TemperatureMode mode) {
  if (psd.units != TraceUnits::displacement) {
    throw std::invalid_argument(
        "effective_temperature: PSD is not in displacement units; apply the "
        "detector calibration factor first");
  }
  if (!(omega_i > 0.0) || !(mass > 0.0)) {
    throw std::invalid_argument("effective_temperature: need omega, mass > 0");
  }
  double x_var = 0.0, v_var = 0.0;
  psd_moments(psd, x_var, v_var);
  const double t_equi = effective_temperature(x_var, v_var, omega_i, mass);
  switch (mode) {
    case TemperatureMode::equipartition:
      return t_equi;
    case TemperatureMode::literal_integral:
      // The published integral keeps an extra 2pi (angular-frequency
      // measure) and subtracts its trailing 1/2 in zero-point units.
      return constants::two_pi * t_equi -
             0.5 * constants::hbar * omega_i / constants::k_boltzmann;
  }
  return t_equi;
}

double occupancy(double t_eff, double omega) {
  if (t_eff < 0.0 || !(omega > 0.0)) {
    throw std::invalid_argument("occupancy: need T >= 0 and omega > 0");
  }
  const double n = constants::k_boltzmann * t_eff /
                       (constants::hbar * omega) -
                   0.5;
  return std::max(0.0, n);
}

}  // namespace levisim
