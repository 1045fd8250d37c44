#include "levisim/scenarios.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include "levisim/constants.hpp"
#include "levisim/errors.hpp"
#include "levisim/io.hpp"

namespace levisim {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Outputs {
  fs::path dir;
  bool csv = true;
  bool jsn = true;

  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << text;
  }
  template <typename Fn>
  void write_csv(const std::string& name, Fn&& fn) const {
    if (!csv) return;
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    fn(os);
  }
  void write_json(const std::string& name, const json& j) const {
    if (!jsn) return;
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << j.dump(2) << "\n";
  }
};

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// Detector calibration assembled from the configured (true) factors,
// used when gains are designed rather than measured.
DetectorCalibration nominal_detector(const PhysicalSystem& sys) {
  DetectorCalibration det;
  det.c_vm = sys.detector_cvm;
  det.omega = sys.trap.omega;
  det.gamma = sys.drag();
  return det;
}

struct DesignOutput {
  ControllerGains gains;
  DigitalGains digital;
  DigitalGains quantized;
};

DesignOutput design_from_config(const ExperimentConfig& cfg, double gamma) {
  const auto& sys = cfg.system;
  const CostWeights weights =
      cfg.controller.q_form == QForm::energy
          ? CostWeights::energy_cost(sys.trap, sys.particle,
                                     cfg.controller.effort_scale)
          : CostWeights::position_only_cost(sys.trap, sys.particle,
                                            cfg.controller.effort_scale);
  const StateSpace ss = build_state_space(sys.trap, gamma, sys.actuator,
                                          sys.particle, sys.gas);
  DesignOutput out;
  out.gains = design_controller(
      ss, cfg.sim.T_s, weights,
      mask_block_structure(cfg.controller.cold_damping_z),
      cfg.controller.input_rule);
  out.digital = digital_gains(out.gains.K_d, nominal_detector(sys),
                              sys.actuator, cfg.sim.amplifier_gain, sys.trap);
  out.quantized = to_fixed_point(out.digital, 8, 7);
  return out;
}

FeedbackChainConfig chain_from_config(const ExperimentConfig& cfg) {
  const auto& sys = cfg.system;
  FeedbackChainConfig chain;
  if (cfg.controller.has_explicit_gains()) {
    chain.gains_xy = *cfg.controller.digital_xy;
    chain.k_p_z = cfg.controller.k_p_z;
    chain.k_d_z = cfg.controller.k_d_z;
  } else {
    const auto design = design_from_config(cfg, 0.0);
    chain.gains_xy = design.digital.xy;
    chain.k_p_z = design.digital.k_p_z;
    chain.k_d_z = design.digital.k_d_z;
  }
  const double f_s = 1.0 / cfg.sim.T_s;
  chain.filters_xy = default_filters_xy(sys.trap, f_s,
                                        cfg.chain.notch_quality_xy,
                                        cfg.chain.dc_cutoff);
  chain.filters_z = default_filters_z(sys.trap, f_s, cfg.chain.notch_quality_z,
                                      cfg.chain.dc_cutoff);
  auto resolve = [&](int configured, double omega) {
    return configured >= 0 ? configured
                           : velocity_delay_samples(
                                 omega, cfg.sim.electronic_delay, cfg.sim.T_s);
  };
  chain.delay_a = resolve(cfg.chain.delay_a, sys.trap.omega[0]);
  chain.delay_b = resolve(cfg.chain.delay_b, sys.trap.omega[1]);
  chain.delay_z = resolve(cfg.chain.delay_z, sys.trap.omega[2]);
  return chain;
}

// Ensemble temperatures from recorded positions, one PSD per trace.
void trace_summary(const TraceSet& set, const PhysicalSystem& sys,
                   json& out, const Outputs& files) {
  const double mass = sys.particle.resolved().mass;
  std::array<PsdAccumulator, 3> acc;
  Vec3 mean = Vec3::Zero(), m2 = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& tr : set.traces) {
    ++n;
    for (int a = 0; a < 3; ++a) {
      const auto psd = welch_psd(tr.position[a], set.meta.sample_rate,
                                 welch_segment_for(tr.position[a].size()));
      const double t = effective_temperature(psd, sys.trap.omega[a], mass);
      const double d = t - mean[a];
      mean[a] += d / static_cast<double>(n);
      m2[a] += d * (t - mean[a]);
      acc[a].add(psd);
    }
  }
  Vec3 stderr_t = Vec3::Zero();
  if (n > 1) {
    stderr_t = (m2 / (static_cast<double>(n - 1) * static_cast<double>(n)))
                   .cwiseSqrt();
  }
  out["t_eff_k"] = vec3_json(mean);
  out["t_eff_stderr_k"] = vec3_json(stderr_t);
  Vec3 nbar;
  for (int a = 0; a < 3; ++a) nbar[a] = occupancy(mean[a], sys.trap.omega[a]);
  out["occupancy"] = vec3_json(nbar);
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    files.write_csv(std::string("psd_") + names[a] + ".csv",
                    [&](std::ostream& os) { write_psd_csv(os, acc[a].mean); });
  }
}

json gain_table_json(const DesignOutput& d) {
  static const char* rows[8] = {"kp_xx", "kp_xy", "kp_yx", "kp_yy",
                                "kd_xx", "kd_xy", "kd_yx", "kd_yy"};
  json table = json::array();
  for (int k = 0; k < 8; ++k) {
    const int i = (k % 4) / 2;
    const int j = (k % 4) % 2;
    const bool deriv = k >= 4;
    const double lqr = deriv ? d.gains.K_d(i, 3 + j) : d.gains.K_d(i, j);
    const double dig = deriv ? d.digital.xy(i, 2 + j) : d.digital.xy(i, j);
    const double qnt = deriv ? d.quantized.xy(i, 2 + j) : d.quantized.xy(i, j);
    table.push_back({{"gain", rows[k]},
                     {"lqr", lqr},
                     {"units", deriv ? "N*s/m" : "N/m"},
                     {"digital", dig},
                     {"fixed_point", qnt}});
  }
  table.push_back({{"gain", "kp_z"},
                   {"lqr", d.gains.K_d(2, 2)},
                   {"units", "N/m"},
                   {"digital", d.digital.k_p_z},
                   {"fixed_point", d.quantized.k_p_z}});
  table.push_back({{"gain", "kd_z"},
                   {"lqr", d.gains.K_d(2, 5)},
                   {"units", "N*s/m"},
                   {"digital", d.digital.k_d_z},
                   {"fixed_point", d.quantized.k_d_z}});
  return table;
}

void write_gain_table_csv(std::ostream& os, const json& table) {
  os << "gain,lqr_value,units,digital_value,fixed_point_value\n";
  for (const auto& row : table) {
    os << row["gain"].get<std::string>() << ','
       << format_double(row["lqr"].get<double>()) << ','
       << row["units"].get<std::string>() << ','
       << format_double(row["digital"].get<double>()) << ','
       << format_double(row["fixed_point"].get<double>()) << '\n';
  }
}

int run_dispatch(const ExperimentConfig& cfg, const Outputs& files,
                 json& summary) {
  const auto& sys = cfg.system;
  switch (cfg.scenario) {
    case ScenarioType::free_run: {
      const TraceSet set = simulate_free(sys, cfg.sim);
      files.write_csv("trace.csv",
                      [&](std::ostream& os) { write_trace_csv(os, set); });
      trace_summary(set, sys, summary, files);
      summary["gamma_1_s"] = set.meta.gamma;
      return exit_ok;
    }
    case ScenarioType::closed_loop: {
      const FeedbackChainConfig chain = chain_from_config(cfg);
      const TraceSet set = run_closed_loop(sys, chain, cfg.sim);
      files.write_csv("trace.csv",
                      [&](std::ostream& os) { write_trace_csv(os, set); });
      trace_summary(set, sys, summary, files);
      summary["gamma_1_s"] = set.meta.gamma;
      summary["realized_tau_e_s"] = set.meta.realized_tau_e;
      summary["tau_e_residual_s"] = set.meta.tau_e_residual;
      json g;
      g["xy"] = json::array();
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 4; ++j) g["xy"].push_back(chain.gains_xy(i, j));
      }
      g["kp_z"] = chain.k_p_z;
      g["kd_z"] = chain.k_d_z;
      g["delay_a"] = chain.delay_a;
      g["delay_b"] = chain.delay_b;
      g["delay_z"] = chain.delay_z;
      summary["chain"] = g;
      return exit_ok;
    }
    case ScenarioType::delay_sweep: {
      std::vector<double> grid(cfg.delay_sweep.points);
      for (int i = 0; i < cfg.delay_sweep.points; ++i) {
        const double f = cfg.delay_sweep.points == 1
                             ? 0.0
                             : static_cast<double>(i) /
                                   static_cast<double>(cfg.delay_sweep.points - 1);
        grid[i] = cfg.delay_sweep.phi_min +
                  f * (cfg.delay_sweep.phi_max - cfg.delay_sweep.phi_min);
      }
      const DelaySweepResult result = run_delay_sweep(
          sys, cfg.delay_sweep.gain, grid, cfg.delay_sweep.axis, cfg.sim);
      files.write_csv("delay_sweep.csv", [&](std::ostream& os) {
        write_delay_sweep_csv(os, result);
      });
      summary["points"] = result.points.size();
      summary["axis"] = cfg.delay_sweep.axis;
      summary["gain_n_per_m"] = result.gain;
      double t_min = std::numeric_limits<double>::infinity();
      for (const auto& p : result.points) {
        t_min = std::min(t_min, p.t_eff[cfg.delay_sweep.axis]);
      }
      summary["t_eff_min_k"] = t_min;
      return exit_ok;
    }
    case ScenarioType::pressure_sweep: {
      const FeedbackChainConfig chain = chain_from_config(cfg);
      const PressureSweepResult result =
          run_pressure_sweep(sys, chain, cfg.pressures_pa, cfg.sim);
      files.write_csv("pressure_sweep.csv", [&](std::ostream& os) {
        write_pressure_sweep_csv(os, result);
      });
      json rows = json::array();
      for (const auto& p : result.points) {
        rows.push_back({{"pressure_pa", p.pressure},
                        {"t_eff_k", vec3_json(p.t_eff)},
                        {"t_eff_stderr_k", vec3_json(p.t_eff_stderr)},
                        {"unstable", p.unstable}});
      }
      summary["sweep"] = rows;
      return exit_ok;
    }
    case ScenarioType::quantum: {
      StateSpace ss = sys.state_space();
      const double mass = sys.particle.resolved().mass;
      for (int i = 0; i < 3; ++i) {
        ss.process_noise_psd(i + 3, i + 3) +=
            sys.noise.backaction_force_psd[i] / (mass * mass);
      }
      const DiscreteStateSpace dss = discretize(ss, cfg.sim.T_s);
      Eigen::Matrix3d meas_cov = Eigen::Matrix3d::Zero();
      for (int i = 0; i < 3; ++i) {
        meas_cov(i, i) =
            std::pow(sys.noise.measurement_sigma[i], 2) / cfg.sim.T_s;
      }
      const KalmanGain kalman = kalman_steady_gain(dss, meas_cov);
      const CostWeights weights =
          cfg.controller.q_form == QForm::energy
              ? CostWeights::energy_cost(sys.trap, sys.particle,
                                         cfg.controller.effort_scale)
              : CostWeights::position_only_cost(sys.trap, sys.particle,
                                                cfg.controller.effort_scale);
      ControllerGains gains;
      gains.S_d = solve_dare(dss, weights);
      gains.K_d = lqr_gain_discrete(dss, gains.S_d, weights, mask_none());
      const QuantumResult result =
          run_quantum(sys, kalman, gains, cfg.quantum_runs, cfg.sim);
      summary["runs"] = result.runs;
      summary["nbar"] = vec3_json(result.nbar);
      summary["nbar_std"] = vec3_json(result.nbar_std);
      summary["nbar_predicted"] = vec3_json(result.nbar_predicted);
      summary["t_eff_k"] = vec3_json(result.t_eff);
      files.write_csv("quantum.csv", [&](std::ostream& os) {
        os << "axis,nbar,nbar_std,nbar_predicted\n";
        const char* names[3] = {"x", "y", "z"};
        for (int a = 0; a < 3; ++a) {
          os << names[a] << ',' << format_double(result.nbar[a]) << ','
             << format_double(result.nbar_std[a]) << ','
             << format_double(result.nbar_predicted[a]) << '\n';
        }
      });
      return exit_ok;
    }
    case ScenarioType::calibrate: {
      // synthesize thermal traces with the configured (true) system,
      // then run both calibration procedures against them
      SimConfig det_cfg = cfg.sim;
      det_cfg.n_traces = cfg.calibrate.detector_traces;
      const TraceSet thermal = simulate_free(sys, det_cfg);
      std::vector<std::vector<double>> tx, ty, tz;
      for (const auto& tr : thermal.traces) {
        tx.push_back(tr.detector[0]);
        ty.push_back(tr.detector[1]);
        tz.push_back(tr.detector[2]);
      }
      const DetectorCalibration det =
          calibrate_detector(tx, ty, tz, thermal.meta.sample_rate, sys.gas,
                             sys.particle, sys.trap);

      DriveConfig drive;
      drive.electrode = cfg.calibrate.drive_electrode;
      drive.omega_dr = cfg.calibrate.drive_omega;
      drive.tau_el = cfg.sim.trace_length;
      const int axis = cfg.calibrate.drive_electrode == 2 ? 2 : 0;
      std::vector<DrivenRun> runs;
      std::uint64_t drive_seed = cfg.sim.seed + 1000;
      for (double amp : cfg.calibrate.drive_amplitudes_v) {
        SimConfig drv_cfg = cfg.sim;
        drv_cfg.n_traces = cfg.calibrate.traces_per_amplitude;
        drv_cfg.seed = drive_seed++;
        SinusoidalDrive sine;
        sine.electrode = cfg.calibrate.drive_electrode;
        sine.amplitude_v = amp;
        sine.omega = cfg.calibrate.drive_omega;
        const TraceSet driven = simulate_driven(sys, drv_cfg, sine);
        DrivenRun run;
        run.amplitude_v = amp;
        run.f_s = driven.meta.sample_rate;
        for (const auto& tr : driven.traces) {
          run.detector_traces.push_back(tr.detector[axis]);
        }
        runs.push_back(std::move(run));
      }
      const ElectrodeCalibration elec =
          calibrate_electrode(runs, axis, drive, det, sys);

      json report;
      report["c_vm"] = vec3_json(det.c_vm);
      report["c_vm_sigma"] = vec3_json(det.c_vm_sigma);
      report["c_vm_true"] = vec3_json(sys.detector_cvm);
      report["omega"] = vec3_json(det.omega);
      report["gamma_1_s"] = det.gamma;
      report["gamma_sigma"] = det.gamma_sigma;
      report["gamma_true_1_s"] = sys.drag();
      report["warnings"] = det.warnings;
      json e;
      e["electrode"] = cfg.calibrate.drive_electrode;
      e["response_axis"] = axis;
      e["coefficient_n_per_v"] = elec.coefficient;
      e["sigma"] = elec.sigma;
      const Eigen::Matrix3d em = electrode_force_matrix(sys.actuator,
                                                        sys.particle);
      e["coefficient_true_n_per_v"] =
          std::abs(em(axis, cfg.calibrate.drive_electrode));
      json pts = json::array();
      for (std::size_t i = 0; i < elec.amplitudes_v.size(); ++i) {
        pts.push_back({{"amplitude_v", elec.amplitudes_v[i]},
                       {"force_n", elec.forces[i].force},
                       {"force_sigma_n", elec.forces[i].sigma}});
      }
      e["points"] = pts;
      report["electrode"] = e;
      summary["calibration"] = report;
      files.write_json("calibration.json", report);
      return exit_ok;
    }
    case ScenarioType::design: {
      const auto design = design_from_config(cfg, sys.drag());
      const json table = gain_table_json(design);
      files.write_csv("gain_table.csv", [&](std::ostream& os) {
        write_gain_table_csv(os, table);
      });
      summary["gain_table"] = table;
      summary["closed_loop_radius_quantized"] = quantized_closed_loop_radius(
          discretize(build_state_space(sys.trap, 0.0, sys.actuator,
                                       sys.particle, sys.gas),
                     cfg.sim.T_s, 1e-15, cfg.controller.input_rule),
          design.quantized, nominal_detector(sys), sys.actuator,
          cfg.sim.amplifier_gain, sys.trap);
      return exit_ok;
    }
  }
  return exit_config_error;
}

}  // namespace

int execute_scenario(const ExperimentConfig& config, const RunOptions& options,
                     std::ostream& log) {
  ExperimentConfig cfg = config;
  if (options.seed) cfg.sim.seed = *options.seed;
  if (options.threads > 0) cfg.sim.threads = options.threads;
  if (!options.out_dir.empty()) cfg.output.directory = options.out_dir;
  if (!options.format.empty()) {
    cfg.output.write_csv = options.format.find("csv") != std::string::npos;
    cfg.output.write_json = options.format.find("json") != std::string::npos;
  }

  Outputs files;
  files.dir = cfg.output.directory;
  files.csv = cfg.output.write_csv;
  files.jsn = cfg.output.write_json;

  auto fail = [&log](int code, const char* category, const std::string& what) {
    json err{{"category", category}, {"message", what}};
    log << "error: " << err.dump() << "\n";
    return code;
  };

  try {
    fs::create_directories(files.dir);
    // manifest first: a re-runnable echo of the resolved config
    files.write_text("manifest.cfg", render_config(cfg));

    json summary;
    summary["version"] = kVersion;
    summary["scenario"] = scenario_name(cfg.scenario);
    summary["seed"] = cfg.sim.seed;
    const int code = run_dispatch(cfg, files, summary);
    files.write_json("summary.json", summary);
    if (!files.jsn) {
      // always keep the manifest pair complete
      files.write_text("summary.txt", summary.dump(2) + "\n");
    }
    return code;
  } catch (const InstabilityError& e) {
    return fail(exit_instability, "instability", e.what());
  } catch (const ConvergenceError& e) {
    return fail(exit_numerical_error, "numerical", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(exit_config_error, "config", e.what());
  } catch (const std::exception& e) {
    return fail(exit_io_error, "io", e.what());
  }
}

}  // namespace levisim
