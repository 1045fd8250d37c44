#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "levisim/constants.hpp"
#include "levisim/dsp.hpp"
#include "levisim/errors.hpp"

namespace levisim {

namespace {

// Fit model, the voltage-PSD Lorentzian with its resonant-width
// denominator plus an optional flat imprecision floor:
//   S(w) = amp * 2 g kB T / (m [(w^2 - W^2)^2 + g^2 W^2]) + bg
struct LogModel {
  double mass = 0.0;
  double temperature = 0.0;
  bool with_background = true;

  double numerator(double gamma) const {
    return 2.0 * gamma * constants::k_boltzmann * temperature / mass;
  }

  int n_params() const { return with_background ? 4 : 3; }

  // params: (log amp, log gamma, omega, [log bg])
  double value(const Eigen::VectorXd& p, double w) const {
    const double amp = std::exp(p[0]);
    const double gamma = std::exp(p[1]);
    const double omega = p[2];
    const double d = (w * w - omega * omega) * (w * w - omega * omega) +
                     gamma * gamma * omega * omega;
    double s = amp * numerator(gamma) / d;
    if (with_background) s += std::exp(p[3]);
    return s;
  }

  Eigen::Vector4d log_jacobian(const Eigen::VectorXd& p, double w) const {
    Eigen::Vector4d row = Eigen::Vector4d::Zero();
    const double amp = std::exp(p[0]);
    const double gamma = std::exp(p[1]);
    const double omega = p[2];
    const double d = (w * w - omega * omega) * (w * w - omega * omega) +
                     gamma * gamma * omega * omega;
    const double lorentz = amp * numerator(gamma) / d;
    const double s = with_background ? lorentz + std::exp(p[3]) : lorentz;
    row[0] = lorentz / s;
    // d/dlog(gamma): numerator is linear in gamma, denominator adds
    // 2 g^2 W^2.
    row[1] = (lorentz - lorentz * (2.0 * gamma * gamma * omega * omega) / d) / s;
    const double dd_domega = -4.0 * omega * (w * w - omega * omega) +
                             2.0 * gamma * gamma * omega;
    row[2] = -lorentz * dd_domega / d / s;
    if (with_background) row[3] = std::exp(p[3]) / s;
    return row;
  }
};

}  // namespace

double thermal_lorentzian_psd(double f_hz, double omega, double gamma,
                              double mass, double temperature) {
  const double w = constants::two_pi * f_hz;
  const double d = (w * w - omega * omega) * (w * w - omega * omega) +
                   gamma * gamma * w * w;
  return 2.0 * gamma * constants::k_boltzmann * temperature / (mass * d);
}

LorentzianFit fit_lorentzian(const PsdEstimate& psd, double mass,
                             double temperature, const LorentzianGuess& guess,
                             double f_min, double f_max, bool fit_background) {
  if (!(mass > 0.0) || !(temperature > 0.0)) {
    throw std::invalid_argument("fit_lorentzian: mass and temperature > 0");
  }
  std::vector<double> w_grid, log_data;
  double peak = 0.0;
  for (std::size_t k = 0; k < psd.frequency_hz.size(); ++k) {
    const double f = psd.frequency_hz[k];
    if (f < f_min || f > f_max || f == 0.0) continue;
    if (psd.value[k] <= 0.0) continue;
    w_grid.push_back(constants::two_pi * f);
    log_data.push_back(std::log(psd.value[k]));
    peak = std::max(peak, psd.value[k]);
  }
  LogModel model{mass, temperature, fit_background};
  const int np = model.n_params();
  if (static_cast<int>(w_grid.size()) < np + 2) {
    throw std::invalid_argument("fit_lorentzian: too few bins in band");
  }

  double omega0 = guess.omega;
  double gamma0 = guess.gamma;
  if (!(omega0 > 0.0)) {
    // peak bin
    double best = 0.0;
    for (std::size_t k = 0; k < w_grid.size(); ++k) {
      if (std::exp(log_data[k]) > best) {
        best = std::exp(log_data[k]);
        omega0 = w_grid[k];
      }
    }
  }
  if (!(gamma0 > 0.0)) gamma0 = 0.01 * omega0;
  double amp0 = guess.amplitude;
  if (!(amp0 > 0.0)) {
    // invert the peak height
    amp0 = peak * mass * gamma0 * omega0 * omega0 /
           (2.0 * constants::k_boltzmann * temperature);
  }
  double bg0 = guess.background;
  if (!(bg0 > 0.0)) {
    std::vector<double> sorted(log_data);
    std::sort(sorted.begin(), sorted.end());
    bg0 = std::exp(sorted[sorted.size() / 10]);  // low decile
  }

  Eigen::VectorXd p(np);
  p[0] = std::log(amp0);
  p[1] = std::log(gamma0);
  p[2] = omega0;
  if (fit_background) p[3] = std::log(bg0);

  const auto n = static_cast<Eigen::Index>(w_grid.size());
  auto cost = [&](const Eigen::VectorXd& q) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = std::log(model.value(q, w_grid[i])) - log_data[i];
      c += r * r;
    }
    return c;
  };

  Eigen::MatrixXd J(n, np);
  Eigen::VectorXd r(n);
  double lambda = 1e-3;
  double c_prev = cost(p);
  int it = 0;
  for (; it < 200; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      r[i] = std::log(model.value(p, w_grid[i])) - log_data[i];
      J.row(i) = model.log_jacobian(p, w_grid[i]).head(np).transpose();
    }
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      const Eigen::VectorXd p_next = p + step;
      const double c_next = cost(p_next);
      if (std::isfinite(c_next) && c_next <= c_prev) {
        const double rel = step.cwiseAbs().maxCoeff() /
                           std::max(1.0, p.cwiseAbs().maxCoeff());
        const double improvement = (c_prev - c_next) / std::max(c_prev, 1e-300);
        p = p_next;
        c_prev = c_next;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (rel < 1e-12 || improvement < 1e-12) it = 1000;  // converged
        break;
      }
      lambda *= 3.0;
    }
    if (!stepped) break;  // stuck at a minimum
  }
  if (it < 1000 && c_prev / static_cast<double>(n) > 25.0) {
    throw ConvergenceError("lorentzian fit did not converge",
                           std::sqrt(c_prev / static_cast<double>(n)));
  }

  // 1-sigma from the log-domain Gauss-Newton covariance.
  for (Eigen::Index i = 0; i < n; ++i) {
    r[i] = std::log(model.value(p, w_grid[i])) - log_data[i];
    J.row(i) = model.log_jacobian(p, w_grid[i]).head(np).transpose();
  }
  const double dof = std::max<double>(1.0, static_cast<double>(n - np));
  const double s2 = r.squaredNorm() / dof;
  const Eigen::MatrixXd cov =
      s2 * (J.transpose() * J)
               .ldlt()
               .solve(Eigen::MatrixXd::Identity(np, np));

  LorentzianFit fit;
  fit.amplitude = std::exp(p[0]);
  fit.gamma = std::exp(p[1]);
  fit.omega = p[2];
  fit.amplitude_sigma = fit.amplitude * std::sqrt(std::max(0.0, cov(0, 0)));
  fit.gamma_sigma = fit.gamma * std::sqrt(std::max(0.0, cov(1, 1)));
  fit.omega_sigma = std::sqrt(std::max(0.0, cov(2, 2)));
  if (fit_background) {
    fit.background = std::exp(p[3]);
    fit.background_sigma = fit.background * std::sqrt(std::max(0.0, cov(3, 3)));
  }
  fit.rms_log_residual = std::sqrt(c_prev / static_cast<double>(n));
  fit.iterations = std::min(it, 200);
  return fit;
}

}  // namespace levisim
