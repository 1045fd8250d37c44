#include "levisim/dsp.hpp"

#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"

namespace levisim {

bool BiquadCoeffs::is_stable() const {
  // Jury criterion for a real quadratic 1 + a1 z^-1 + a2 z^-2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

BiquadCoeffs design_notch(double f0, double quality, double f_s) {
  if (!(f_s > 0.0) || !(f0 > 0.0) || f0 >= 0.5 * f_s) {
    throw std::invalid_argument("notch frequency must lie below Nyquist");
  }
  if (!(quality > 0.0)) throw std::invalid_argument("notch quality must be > 0");
  const double w0 = constants::two_pi * f0 / f_s;
  const double alpha = std::sin(w0) / (2.0 * quality);
  const double a0 = 1.0 + alpha;
  BiquadCoeffs c;
  c.b0 = 1.0 / a0;
  c.b1 = -2.0 * std::cos(w0) / a0;
  c.b2 = 1.0 / a0;
  c.a1 = -2.0 * std::cos(w0) / a0;
  c.a2 = (1.0 - alpha) / a0;
  c.f_s = f_s;
  return c;
}

BiquadCoeffs design_dc_block(double f_c, double f_s) {
  if (!(f_s > 0.0) || !(f_c > 0.0) || f_c >= 0.5 * f_s) {
    throw std::invalid_argument("DC-block cutoff must lie below Nyquist");
  }
  // One pole, one zero at DC; gain normalized to 1 at Nyquist.
  const double r = std::exp(-constants::two_pi * f_c / f_s);
  const double g = 0.5 * (1.0 + r);
  BiquadCoeffs c;
  c.b0 = g;
  c.b1 = -g;
  c.b2 = 0.0;
  c.a1 = -r;
  c.a2 = 0.0;
  c.f_s = f_s;
  return c;
}

std::complex<double> frequency_response(const BiquadCoeffs& c, double f_hz) {
  const double w = constants::two_pi * f_hz / c.f_s;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (c.b0 + c.b1 * z1 + c.b2 * z2) / (1.0 + c.a1 * z1 + c.a2 * z2);
}

std::vector<double> biquad_process(const BiquadCoeffs& c,
                                   std::span<const double> input) {
  Biquad bq(c);
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = bq.step(input[i]);
  return out;
}

DelayLine::DelayLine(std::size_t length) : buf_(length, 0.0) {}

double DelayLine::step(double x) {
  if (buf_.empty()) return x;
  const double out = buf_[pos_];
  buf_[pos_] = x;
  pos_ = (pos_ + 1) % buf_.size();
  return out;
}

void DelayLine::reset() {
  std::fill(buf_.begin(), buf_.end(), 0.0);
  pos_ = 0;
}

}  // namespace levisim
