#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <utility>

#include "levisim/constants.hpp"
#include "levisim/errors.hpp"
#include "levisim/sim.hpp"
#include "levisim/threading.hpp"

namespace levisim {

void FeedbackChainConfig::validate() const {
  if (delay_a < 0 || delay_b < 0 || delay_z < 0) {
    throw std::invalid_argument("delay lengths must be >= 0");
  }
  if (!gains_xy.allFinite() || !std::isfinite(k_p_z) || !std::isfinite(k_d_z)) {
    throw std::invalid_argument("chain gains must be finite");
  }
  for (const auto& f : filters_xy) {
    if (!f.is_stable()) throw std::invalid_argument("unstable xy filter");
  }
  for (const auto& f : filters_z) {
    if (!f.is_stable()) throw std::invalid_argument("unstable z filter");
  }
}

int velocity_delay_samples(double omega, double tau_e, double T_s) {
  const double tau = 0.5 * constants::pi / omega - tau_e;
  return std::max(0, static_cast<int>(std::lround(tau / T_s)));
}

std::vector<BiquadCoeffs> default_filters_xy(const TrapParams& trap, double f_s,
                                             double notch_quality,
                                             double dc_cutoff) {
  return {design_dc_block(dc_cutoff, f_s),
          design_notch(trap.omega[2] / constants::two_pi, notch_quality, f_s)};
}

std::vector<BiquadCoeffs> default_filters_z(const TrapParams& trap, double f_s,
                                            double notch_quality,
                                            double dc_cutoff) {
  return {design_dc_block(dc_cutoff, f_s),
          design_notch(trap.omega[0] / constants::two_pi, notch_quality, f_s),
          design_notch(trap.omega[1] / constants::two_pi, notch_quality, f_s)};
}

namespace {

struct Channel {
  std::vector<Biquad> filters;
  DelayLine delay;

  Channel(const std::vector<BiquadCoeffs>& coeffs, int delay_samples)
      : delay(static_cast<std::size_t>(delay_samples)) {
    filters.reserve(coeffs.size());
    for (const auto& c : coeffs) filters.emplace_back(c);
  }

  // Returns (filtered, delayed-filtered).
  std::pair<double, double> feed(double raw) {
    double v = raw;
    for (auto& f : filters) v = f.step(v);
    return {v, delay.step(v)};
  }
};

double quantize_adc(double v, int bits, double range) {
  if (bits <= 0) return v;
  const double lsb = 2.0 * range / static_cast<double>(1 << bits);
  const double clamped = std::clamp(v, -range, range - lsb);
  return std::round(clamped / lsb) * lsb;
}

}  // namespace

TraceSet run_closed_loop(const PhysicalSystem& system,
                         const FeedbackChainConfig& chain,
                         const SimConfig& config) {
  system.validate();
  config.validate();
  chain.validate();

  const double dt = config.dt_physics();
  const double mass = system.particle.resolved().mass;
  const Eigen::Matrix3d electrode =
      electrode_force_matrix(system.actuator, system.particle);
  const auto props = make_propagators(system, dt);

  const long total_ctrl = std::lround(config.duration / config.T_s);
  const long trace_ctrl = std::lround(config.trace_length / config.T_s);
  const long record_from_sub =
      (total_ctrl - trace_ctrl) * static_cast<long>(config.substeps);
  const long delay_substeps =
      std::lround(config.electronic_delay / dt);
  const double record_dt = dt * config.record_every;

  // Energy bound for the divergence guard (3 thermal modes).
  const double energy_bound = config.instability_energy_factor * 3.0 *
                              constants::k_boltzmann *
                              system.gas.temperature;

  TraceSet set;
  set.traces.resize(config.n_traces);
  set.meta.pressure = system.gas.pressure;
  set.meta.gamma = system.drag();
  set.meta.seed = config.seed;
  set.meta.sample_rate = 1.0 / record_dt;
  set.meta.realized_tau_e = static_cast<double>(delay_substeps) * dt;
  set.meta.tau_e_residual =
      config.electronic_delay - set.meta.realized_tau_e;

  parallel_for(config.n_traces, config.threads, [&](std::size_t t) {
    Rng rng(mix_seed(config.seed, t));
    Vec6 state = thermal_initial_state(system, rng);
    Channel ch_a(chain.filters_xy, chain.delay_a);
    Channel ch_b(chain.filters_xy, chain.delay_b);
    Channel ch_z(chain.filters_z, chain.delay_z);

    Trace& trace = set.traces[t];

    std::deque<std::pair<long, Vec3>> pending;  // (activation substep, force)
    Vec3 force = Vec3::Zero();
    Vec3 dac = Vec3::Zero();
    const double noise_scale = 1.0 / std::sqrt(config.T_s);

    long substep = 0;
    for (long n = 0; n < total_ctrl; ++n) {
      // sample + condition + gain law at the controller rate
      Vec3 raw;
      for (int i = 0; i < 3; ++i) {
        const double meas =
            state[i] + system.noise.measurement_sigma[i] * rng.normal() *
                           noise_scale;
        raw[i] = quantize_adc(system.detector_cvm[i] * meas, config.adc_bits,
                              config.adc_range);
      }
      const auto [xa, xa_del] = ch_a.feed(raw[0]);
      const auto [xb, xb_del] = ch_b.feed(raw[1]);
      const auto [xz, xz_del] = ch_z.feed(raw[2]);

      dac[0] = chain.gains_xy(0, 0) * xa + chain.gains_xy(0, 1) * xb +
               chain.gains_xy(0, 2) * xa_del + chain.gains_xy(0, 3) * xb_del;
      dac[1] = chain.gains_xy(1, 0) * xa + chain.gains_xy(1, 1) * xb +
               chain.gains_xy(1, 2) * xa_del + chain.gains_xy(1, 3) * xb_del;
      dac[2] = chain.k_p_z * xz + chain.k_d_z * xz_del;

      pending.emplace_back(substep + delay_substeps,
                           electrode * (config.amplifier_gain * dac));

      for (int s = 0; s < config.substeps; ++s, ++substep) {
        while (!pending.empty() && pending.front().first <= substep) {
          force = pending.front().second;
          pending.pop_front();
        }
        for (int i = 0; i < 3; ++i) {
          props[i].step(state[i], state[i + 3], force[i] / mass, rng);
        }
        if (substep >= record_from_sub &&
            (substep - record_from_sub) % config.record_every == 0) {
          for (int i = 0; i < 3; ++i) {
            trace.position[i].push_back(state[i]);
            trace.detector[i].push_back(raw[i]);
            trace.control[i].push_back(dac[i]);
          }
        }
      }

      double energy = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double w = system.trap.omega[i];
        energy += 0.5 * mass *
                  (w * w * state[i] * state[i] +
                   state[i + 3] * state[i + 3]);
      }
      if (!std::isfinite(energy) || energy > energy_bound) {
        throw InstabilityError(
            "closed loop diverged past the energy bound at t = " +
                std::to_string(static_cast<double>(n) * config.T_s) + " s",
            static_cast<double>(n) * config.T_s);
      }
    }
  });
  return set;
}

}  // namespace levisim
