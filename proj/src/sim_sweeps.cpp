#include <cmath>
#include <deque>
#include <utility>
#include <stdexcept>

#include "levisim/constants.hpp"
#include "levisim/errors.hpp"
#include "levisim/sim.hpp"
#include "levisim/threading.hpp"

namespace levisim {

double delay_feedback_temperature(double temperature, double gamma_m,
                                  double gain, double phi, double mass,
                                  double omega) {
  const double gamma_fb = -gain * std::sin(phi) / (mass * omega);
  return temperature * gamma_m / (gamma_m + gamma_fb);
}

double cold_damping_temperature(double temperature, double gamma_m,
                                double gamma_fb, double omega, double mass,
                                double imprecision_psd) {
  // Force PSD fed back: thermal 2 m gamma kB T plus the derivative
  // path's amplified imprecision (m gfb w)^2 S_imp.
  const double kb = constants::k_boltzmann;
  const double thermal = 2.0 * mass * gamma_m * kb * temperature;
  const double fed_back = mass * gamma_fb * omega;
  const double noise = fed_back * fed_back * imprecision_psd;
  return (thermal + noise) / (2.0 * mass * kb * (gamma_m + gamma_fb));
}

namespace {

Vec3 trace_temperatures(const Trace& trace, double sample_rate,
                        const TrapParams& trap, double mass) {
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    const auto& x = trace.position[i];
    const auto psd =
        welch_psd(x, sample_rate, welch_segment_for(x.size()), Window::hann);
    t[i] = effective_temperature(psd, trap.omega[i], mass);
  }
  return t;
}

void mean_stderr(const std::vector<Vec3>& samples, Vec3& mean, Vec3& se) {
  const auto n = static_cast<double>(samples.size());
  mean = Vec3::Zero();
  for (const auto& s : samples) mean += s;
  mean /= n;
  Vec3 var = Vec3::Zero();
  for (const auto& s : samples) var += (s - mean).cwiseProduct(s - mean);
  se = n > 1.0 ? (var / (n - 1.0) / n).cwiseSqrt().eval() : Vec3::Zero().eval();
}

}  // namespace

DelaySweepResult run_delay_sweep(const PhysicalSystem& system, double gain,
                                 std::span<const double> phi_grid, int axis,
                                 const SimConfig& config) {
  system.validate();
  config.validate();
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis out of range");
  if (!std::isfinite(gain)) throw std::invalid_argument("gain must be finite");

  const double omega = system.trap.omega[axis];
  const double mass = system.particle.resolved().mass;
  const double gamma = system.drag();
  const double phi_e = omega * config.electronic_delay;
  for (double phi : phi_grid) {
    if (phi < phi_e - 1e-12) {
      throw std::invalid_argument(
          "requested phase " + std::to_string(phi) +
          " rad is below the electronic minimum " + std::to_string(phi_e) +
          " rad");
    }
  }

  const double dt = config.dt_physics();
  const long delay_substeps = std::lround(config.electronic_delay / dt);
  const long total_ctrl = std::lround(config.duration / config.T_s);
  const long trace_ctrl = std::lround(config.trace_length / config.T_s);
  const long record_from_sub =
      (total_ctrl - trace_ctrl) * static_cast<long>(config.substeps);
  const double record_dt = dt * config.record_every;
  const auto props = make_propagators(system, dt);
  const double sigma = system.noise.measurement_sigma[axis];

  DelaySweepResult result;
  result.axis = axis;
  result.gain = gain;
  result.points.resize(phi_grid.size());

  // one work item per (phase, repeat)
  const std::size_t repeats = static_cast<std::size_t>(config.n_traces);
  std::vector<std::vector<Vec3>> temps(phi_grid.size(),
                                       std::vector<Vec3>(repeats));
  parallel_for(phi_grid.size() * repeats, config.threads, [&](std::size_t job) {
    const std::size_t pi = job / repeats;
    const std::size_t rep = job % repeats;
    const double tau = phi_grid[pi] / omega;
    const int n_delay = std::max(
        0L, std::lround((tau - config.electronic_delay) / config.T_s));

    Rng rng(mix_seed(config.seed ^ (0x5eedull + pi), rep));
    Vec6 state = thermal_initial_state(system, rng);
    DelayLine delay(static_cast<std::size_t>(n_delay));
    std::deque<std::pair<long, double>> pending;
    double force = 0.0;
    const double noise_scale = 1.0 / std::sqrt(config.T_s);

    std::vector<double> recorded;
    recorded.reserve(static_cast<std::size_t>(
        trace_ctrl * config.substeps / config.record_every + 1));

    long substep = 0;
    for (long n = 0; n < total_ctrl; ++n) {
      const double meas = state[axis] + sigma * rng.normal() * noise_scale;
      const double delayed = delay.step(meas);
      pending.emplace_back(substep + delay_substeps, -gain * delayed);
      for (int s = 0; s < config.substeps; ++s, ++substep) {
        while (!pending.empty() && pending.front().first <= substep) {
          force = pending.front().second;
          pending.pop_front();
        }
        for (int i = 0; i < 3; ++i) {
          const double f = i == axis ? force : 0.0;
          props[i].step(state[i], state[i + 3], f / mass, rng);
        }
        if (substep >= record_from_sub &&
            (substep - record_from_sub) % config.record_every == 0) {
          recorded.push_back(state[axis]);
        }
      }
    }
    const auto psd = welch_psd(recorded, 1.0 / record_dt,
                               welch_segment_for(recorded.size()), Window::hann);
    Vec3 t = Vec3::Constant(system.gas.temperature);
    t[axis] = effective_temperature(psd, omega, mass);
    temps[pi][rep] = t;
  });

  for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
    auto& point = result.points[pi];
    point.phi_requested = phi_grid[pi];
    const double tau = phi_grid[pi] / omega;
    const long n_delay = std::max(
        0L, std::lround((tau - config.electronic_delay) / config.T_s));
    const long d_sub = std::lround(config.electronic_delay / dt);
    point.phi_realized =
        omega * (static_cast<double>(d_sub) * dt +
                 static_cast<double>(n_delay) * config.T_s);
    mean_stderr(temps[pi], point.t_eff, point.t_eff_stderr);
    point.t_oracle = delay_feedback_temperature(
        system.gas.temperature, gamma, gain, point.phi_realized, mass, omega);
  }
  return result;
}

PressureSweepResult run_pressure_sweep(const PhysicalSystem& system,
                                       const FeedbackChainConfig& chain,
                                       std::span<const double> pressures_pa,
                                       const SimConfig& config) {
  for (double p : pressures_pa) {
    if (!(p > 0.0)) throw std::invalid_argument("pressures must be > 0");
  }
  const double mass = system.particle.resolved().mass;
  PressureSweepResult result;
  result.points.resize(pressures_pa.size());

  // gamma_fb of the z cold-damping path, for the analytic steady state
  const double cvm_z = system.detector_cvm[2];
  const double cz = system.actuator.z_reference();
  const double k_dz_phys = -chain.k_d_z * config.amplifier_gain * cz * cvm_z /
                           system.trap.omega[2];
  const double gamma_fb_z = k_dz_phys / mass;

  for (std::size_t i = 0; i < pressures_pa.size(); ++i) {
    PhysicalSystem sys = system;
    sys.gas.pressure = pressures_pa[i];
    auto& point = result.points[i];
    point.pressure = pressures_pa[i];
    const double gamma = sys.drag();
    point.t_oracle_z = cold_damping_temperature(
        sys.gas.temperature, gamma, gamma_fb_z, sys.trap.omega[2], mass,
        std::pow(sys.noise.measurement_sigma[2], 2));
    try {
      const TraceSet set = run_closed_loop(sys, chain, config);
      std::vector<Vec3> temps(set.traces.size());
      for (std::size_t t = 0; t < set.traces.size(); ++t) {
        temps[t] = trace_temperatures(set.traces[t], set.meta.sample_rate,
                                      sys.trap, mass);
      }
      mean_stderr(temps, point.t_eff, point.t_eff_stderr);
    } catch (const InstabilityError&) {
      point.unstable = true;
    }
  }
  return result;
}

}  // namespace levisim
