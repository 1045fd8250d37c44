#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/dsp.hpp"

namespace levisim {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> out(n);
  const double N = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = constants::two_pi * static_cast<double>(i) / N;
    switch (w) {
      case Window::rectangular:
        out[i] = 1.0;
        break;
      case Window::hann:
        out[i] = 0.5 - 0.5 * std::cos(x);
        break;
      case Window::hamming:
        out[i] = 0.54 - 0.46 * std::cos(x);
        break;
      case Window::blackman:
        out[i] = 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
        break;
      case Window::flat_top:
        out[i] = 0.21557895 - 0.41663158 * std::cos(x) +
                 0.277263158 * std::cos(2.0 * x) -
                 0.083578947 * std::cos(3.0 * x) +
                 0.006947368 * std::cos(4.0 * x);
        break;
    }
  }
  return out;
}

}  // namespace

std::size_t welch_segment_for(std::size_t trace_length) {
  std::size_t seg = 256;
  while (seg * 2 <= trace_length && seg < 65536) seg *= 2;
  return seg;
}

std::string window_name(Window w) {
  switch (w) {
    case Window::rectangular: return "rectangular";
    case Window::hann: return "hann";
    case Window::hamming: return "hamming";
    case Window::blackman: return "blackman";
    case Window::flat_top: return "flat_top";
  }
  return "?";
}

void fft_radix2(std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("FFT length must be a power of two");
  }
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle =
        (inverse ? 1.0 : -1.0) * constants::two_pi / static_cast<double>(len);
    const std::complex<double> wlen = std::polar(1.0, angle);
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& v : x) v /= static_cast<double>(n);
  }
}

PsdEstimate welch_psd(std::span<const double> x, double f_s,
                      std::size_t segment_length, Window window,
                      PsdConvention convention, TraceUnits units) {
  if (x.empty()) throw std::invalid_argument("welch_psd: empty trace");
  if (!is_power_of_two(segment_length)) {
    throw std::invalid_argument("welch_psd: segment length must be 2^k");
  }
  if (x.size() < segment_length) {
    throw std::invalid_argument("welch_psd: trace shorter than one segment");
  }
  const std::size_t hop = segment_length / 2;  // 50% overlap
  const std::vector<double> win = make_window(window, segment_length);
  double win_power = 0.0;
  for (double w : win) win_power += w * w;

  const std::size_t n_bins = segment_length / 2 + 1;
  std::vector<double> acc(n_bins, 0.0);
  std::vector<std::complex<double>> buf(segment_length);
  std::size_t segments = 0;
  for (std::size_t start = 0; start + segment_length <= x.size();
       start += hop) {
    for (std::size_t i = 0; i < segment_length; ++i) {
      buf[i] = win[i] * x[start + i];
    }
    fft_radix2(buf);
    for (std::size_t k = 0; k < n_bins; ++k) {
      acc[k] += std::norm(buf[k]);
    }
    ++segments;
  }

  PsdEstimate psd;
  psd.f_s = f_s;
  psd.segment_length = segment_length;
  psd.segments_averaged = segments;
  psd.window = window;
  psd.units = units;
  psd.convention = PsdConvention::double_sided;
  psd.frequency_hz.resize(n_bins);
  psd.value.resize(n_bins);
  // |X_k|^2 / (f_s sum w^2) is the double-sided density at bin k; the
  // negative-frequency half carries the mirrored power.
  const double scale = 1.0 / (f_s * win_power * static_cast<double>(segments));
  for (std::size_t k = 0; k < n_bins; ++k) {
    psd.frequency_hz[k] =
        f_s * static_cast<double>(k) / static_cast<double>(segment_length);
    psd.value[k] = acc[k] * scale;
  }
  return convention == PsdConvention::double_sided
             ? psd
             : psd.to_convention(convention);
}

PsdEstimate PsdEstimate::to_convention(PsdConvention target) const {
  if (target == convention) return *this;
  PsdEstimate out = *this;
  out.convention = target;
  // Nonnegative-frequency grid: interior bins gain/lose the factor 2;
  // DC and Nyquist are unique.
  const double factor = target == PsdConvention::single_sided ? 2.0 : 0.5;
  for (std::size_t k = 1; k + 1 < out.value.size(); ++k) {
    out.value[k] *= factor;
  }
  return out;
}

void PsdAccumulator::add(const PsdEstimate& p) {
  if (count == 0) {
    mean = p;
    count = 1;
    return;
  }
  if (p.value.size() != mean.value.size()) {
    throw std::invalid_argument("PsdAccumulator: shape mismatch");
  }
  ++count;
  const double w = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < mean.value.size(); ++k) {
    mean.value[k] += (p.value[k] - mean.value[k]) * w;
  }
  mean.segments_averaged += p.segments_averaged;
}

}  // namespace levisim
