#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "levisim/calib.hpp"
#include "levisim/model.hpp"
#include "levisim/riccati.hpp"
#include "levisim/sim.hpp"

namespace levisim {

enum class ScenarioType {
  free_run,
  closed_loop,
  delay_sweep,
  pressure_sweep,
  quantum,
  calibrate,
  design,
};

const char* scenario_name(ScenarioType t);
std::optional<ScenarioType> scenario_from_name(const std::string& name);

enum class QForm { energy, position_only };

struct ControllerSection {
  double effort_scale = 100.0;
  QForm q_form = QForm::energy;
  bool cold_damping_z = true;
  InputRule input_rule = InputRule::rectangle;
  // Explicit digital gains bypass the Riccati design when present.
  std::optional<Eigen::Matrix<double, 2, 4>> digital_xy;
  double k_p_z = 0.0;
  double k_d_z = 0.0;
  bool has_explicit_gains() const { return digital_xy.has_value(); }
};

struct ChainSection {
  double notch_quality_xy = 4.0;
  double notch_quality_z = 8.0;
  double dc_cutoff = 1e3;   // Hz
  int delay_a = -1;         // -1 = quarter-period auto
  int delay_b = -1;
  int delay_z = -1;
};

struct DelaySweepSection {
  int axis = 0;
  double gain = 0.0;  // N/m
  double phi_min = 0.0;
  double phi_max = 0.0;
  int points = 0;
};

struct CalibrateSection {
  double drive_omega = 0.0;  // rad/s
  std::vector<double> drive_amplitudes_v;
  int drive_electrode = 0;
  int traces_per_amplitude = 8;
  int detector_traces = 100;
};

struct OutputSection {
  std::string directory = "out";
  bool write_csv = true;
  bool write_json = true;
};

struct ExperimentConfig {
  PhysicalSystem system;
  ControllerSection controller;
  ChainSection chain;
  ScenarioType scenario = ScenarioType::free_run;
  SimConfig sim;
  DelaySweepSection delay_sweep;
  std::vector<double> pressures_pa;
  int quantum_runs = 30;
  CalibrateSection calibrate;
  OutputSection output;
};

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;  // all of them, not first-only
  bool ok() const { return errors.empty() && config.has_value(); }
};

ParseResult parse_config_text(const std::string& text);
ParseResult parse_config_file(const std::string& path);

// Complete config echo: every value explicit, SI units, 17 significant
// digits; parses back to an identical ExperimentConfig.
std::string render_config(const ExperimentConfig& config);

}  // namespace levisim
