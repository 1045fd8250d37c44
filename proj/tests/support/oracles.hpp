// Independent test oracles: closed forms and brute-force routes kept
// deliberately separate from the library implementations they check.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <vector>

#include "levisim/constants.hpp"
#include "levisim/model.hpp"

namespace oracles {

// Closed-form exp(t * [[0, 1], [-w^2, -g]]) for the underdamped
// oscillator (g < 2w).
inline Eigen::Matrix2d oscillator_expm(double omega, double gamma, double t) {
  const double wd = std::sqrt(omega * omega - 0.25 * gamma * gamma);
  const double decay = std::exp(-0.5 * gamma * t);
  const double c = std::cos(wd * t);
  const double s = std::sin(wd * t);
  Eigen::Matrix2d m;
  m(0, 0) = decay * (c + 0.5 * gamma * s / wd);
  m(0, 1) = decay * s / wd;
  m(1, 0) = -decay * omega * omega * s / wd;
  m(1, 1) = decay * (c - 0.5 * gamma * s / wd);
  return m;
}

// One-step disturbance covariance by Simpson quadrature of
// int_0^T exp(A s) Q exp(A' s) ds.
inline Eigen::MatrixXd covariance_quadrature(const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& Q,
                                             double T, int intervals = 2000) {
  const auto n = A.rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  const double h = T / intervals;
  auto integrand = [&](double s) -> Eigen::MatrixXd {
    // series exponential, scaled and squared for robustness
    Eigen::MatrixXd as = A * s;
    int squarings = 0;
    while (as.norm() > 0.5) {
      as *= 0.5;
      ++squarings;
    }
    Eigen::MatrixXd e = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = e;
    for (int k = 1; k < 30; ++k) {
      term = term * as / k;
      e += term;
      if (term.norm() < 1e-17 * e.norm()) break;
    }
    for (int k = 0; k < squarings; ++k) e = e * e;
    return e * Q * e.transpose();
  };
  for (int i = 0; i <= intervals; ++i) {
    const double w = (i == 0 || i == intervals) ? 1.0
                     : (i % 2 == 1)             ? 4.0
                                                : 2.0;
    sum += w * integrand(i * h);
  }
  return sum * h / 3.0;
}

// Reference DFT, O(n^2).
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * levisim::constants::pi *
                         static_cast<double>(k * j) / static_cast<double>(n);
      acc += x[j] * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  return out;
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_two_sample_pvalue(std::vector<double> a,
                                   std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  const double ne = static_cast<double>(a.size()) * b.size() /
                    (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) *
         std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

// Published experiment parameters used as the shared fixture.
inline levisim::PhysicalSystem paper_system() {
  levisim::PhysicalSystem s;
  s.particle.radius = 71.5e-9;
  s.particle.density = 2200.0;
  s.particle.mass = 3.37e-18;
  s.trap.omega = 2.0 * levisim::constants::pi *
                 levisim::Vec3(96.24e3, 101.49e3, 31.52e3);
  s.gas.pressure = 120.0;  // 1.2 mbar
  s.gas.temperature = 293.0;
  s.actuator.c_nv << 2.83e-16, 2.18e-16, 2.21e-16, 2.36e-16;
  s.detector_cvm = levisim::Vec3(6.87e5, 7.08e5, 1.07e6);
  return s;
}

}  // namespace oracles
