#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace levisim {

// Second-order IIR section, a0 normalized to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct BiquadCoeffs {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
  double f_s = 0.0;  // Hz

  bool is_stable() const;  // poles strictly inside the unit circle
};

// RBJ-cookbook notch at f0 with quality Q (bandwidth f0/Q).
BiquadCoeffs design_notch(double f0, double quality, double f_s);

// One-pole/one-zero DC blocker with cutoff f_c, unity passband gain.
BiquadCoeffs design_dc_block(double f_c, double f_s);

std::complex<double> frequency_response(const BiquadCoeffs& c, double f_hz);

// Stateful direct-form II transposed realization.
class Biquad {
 public:
  Biquad() = default;
  explicit Biquad(const BiquadCoeffs& c) : c_(c) {}

  double step(double x) {
    const double y = c_.b0 * x + s1_;
    s1_ = c_.b1 * x - c_.a1 * y + s2_;
    s2_ = c_.b2 * x - c_.a2 * y;
    return y;
  }
  void reset() { s1_ = s2_ = 0.0; }
  const BiquadCoeffs& coeffs() const { return c_; }

 private:
  BiquadCoeffs c_{};
  double s1_ = 0.0, s2_ = 0.0;
};

std::vector<double> biquad_process(const BiquadCoeffs& c,
                                   std::span<const double> input);

// Fixed integer delay, zero-initialized: output(n) = input(n - N).
class DelayLine {
 public:
  explicit DelayLine(std::size_t length);
  double step(double x);
  std::size_t length() const { return buf_.size(); }
  void reset();

 private:
  std::vector<double> buf_;
  std::size_t pos_ = 0;
};

enum class PsdConvention { double_sided, single_sided };
enum class TraceUnits { displacement, volts, dimensionless };
enum class Window { rectangular, hann, hamming, blackman, flat_top };

struct PsdEstimate {
  std::vector<double> frequency_hz;  // ascending, DC first
  std::vector<double> value;         // units^2/Hz
  PsdConvention convention = PsdConvention::double_sided;
  TraceUnits units = TraceUnits::displacement;
  double f_s = 0.0;
  std::size_t segment_length = 0;
  std::size_t segments_averaged = 0;
  Window window = Window::hann;

  double bin_width() const { return f_s / static_cast<double>(segment_length); }
  PsdEstimate to_convention(PsdConvention target) const;
};

// Welch average of windowed periodograms. segment_length must be a
// power of two; segments overlap 50%.
PsdEstimate welch_psd(std::span<const double> x, double f_s,
                      std::size_t segment_length, Window window = Window::hann,
                      PsdConvention convention = PsdConvention::double_sided,
                      TraceUnits units = TraceUnits::displacement);

// Running average over equally-shaped PSDs (trace ensembles).
struct PsdAccumulator {
  PsdEstimate mean;
  std::size_t count = 0;
  void add(const PsdEstimate& p);
};

// In-place radix-2 FFT used by the spectral estimators; exposed for the
// oracle tests.
void fft_radix2(std::vector<std::complex<double>>& x, bool inverse = false);

// Largest power-of-two segment (256..65536) fitting the trace.
std::size_t welch_segment_for(std::size_t trace_length);

struct LorentzianGuess {
  double omega = 0.0;        // rad/s
  double gamma = 0.0;        // 1/s
  double amplitude = 0.0;    // calibration^2 prefactor; 0 = from data
  double background = 0.0;   // flat PSD floor; 0 = from data
};

struct LorentzianFit {
  double amplitude = 0.0;  // (C)^2 prefactor of the thermal Lorentzian
  double omega = 0.0;
  double gamma = 0.0;
  double background = 0.0;
  double amplitude_sigma = 0.0;
  double omega_sigma = 0.0;
  double gamma_sigma = 0.0;
  double background_sigma = 0.0;
  double rms_log_residual = 0.0;
  int iterations = 0;
};

// Least-squares fit (log domain, Levenberg-Marquardt) of
//   S(f) = amplitude * 2 gamma kB T / (m [(w^2-omega^2)^2 + gamma^2 omega^2]) + background
// over [f_min, f_max]; w = 2 pi f. amplitude is the squared
// calibration factor once mass and temperature are supplied.
LorentzianFit fit_lorentzian(const PsdEstimate& psd, double mass,
                             double temperature, const LorentzianGuess& guess,
                             double f_min, double f_max,
                             bool fit_background = true);

// Analytic thermal Lorentzian, double-sided, evaluated at frequency f
// (Hz); integrates (over all f) to kB T / (m omega^2).
double thermal_lorentzian_psd(double f_hz, double omega, double gamma,
                              double mass, double temperature);

enum class TemperatureMode {
  equipartition,     // T = m (w_i^2 <x^2> + <v^2>) / (2 kB)
  literal_integral,  // the published integral incl. its zero-point term
};

// Mode temperature from a displacement PSD. Throws if the PSD is not in
// displacement units (volts need a calibration factor first).
double effective_temperature(const PsdEstimate& psd, double omega_i,
                             double mass,
                             TemperatureMode mode = TemperatureMode::equipartition);

// Variance form of the equipartition temperature.
double effective_temperature(double x_variance, double v_variance,
                             double omega_i, double mass);

// Mean phonon number n = kB T / (hbar w) - 1/2, floored at zero.
double occupancy(double t_eff, double omega);

std::string window_name(Window w);

}  // namespace levisim
