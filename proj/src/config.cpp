#include "levisim/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "levisim/constants.hpp"
#include "levisim/io.hpp"

namespace levisim {

namespace {

struct UnitDef {
  const char* name;
  double factor;
};

struct Dimension {
  const char* label;   // for error messages
  std::vector<UnitDef> units;
  bool unit_required = true;
};

const Dimension& dim_angular_frequency() {
  static const Dimension d{
      "frequency",
      {{"Hz", constants::two_pi},
       {"kHz", constants::two_pi * 1e3},
       {"MHz", constants::two_pi * 1e6},
       {"rad/s", 1.0},
       {"krad/s", 1e3}}};
  return d;
}
const Dimension& dim_plain_frequency() {
  static const Dimension d{
      "frequency", {{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}}};
  return d;
}
const Dimension& dim_time() {
  static const Dimension d{
      "time", {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}}};
  return d;
}
const Dimension& dim_pressure() {
  static const Dimension d{"pressure",
                           {{"Pa", 1.0}, {"mbar", 100.0}, {"bar", 1e5}}};
  return d;
}
const Dimension& dim_mass() {
  static const Dimension d{
      "mass", {{"kg", 1.0}, {"g", 1e-3}, {"pg", 1e-15}, {"fg", 1e-18}}};
  return d;
}
const Dimension& dim_length() {
  static const Dimension d{"length",
                           {{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6},
                            {"nm", 1e-9}, {"pm", 1e-12}}};
  return d;
}
const Dimension& dim_temperature() {
  static const Dimension d{"temperature", {{"K", 1.0}}};
  return d;
}
const Dimension& dim_density() {
  static const Dimension d{"density", {{"kg/m3", 1.0}, {"g/cm3", 1e3}}};
  return d;
}
const Dimension& dim_molar_mass() {
  static const Dimension d{"molar mass", {{"kg/mol", 1.0}, {"g/mol", 1e-3}}};
  return d;
}
const Dimension& dim_viscosity() {
  static const Dimension d{"viscosity", {{"Pa.s", 1.0}, {"Pa*s", 1.0}}};
  return d;
}
const Dimension& dim_asd() {
  static const Dimension d{"amplitude spectral density",
                           {{"m/rtHz", 1.0}, {"nm/rtHz", 1e-9},
                            {"pm/rtHz", 1e-12}, {"fm/rtHz", 1e-15}}};
  return d;
}
const Dimension& dim_disp_psd() {
  static const Dimension d{"displacement PSD", {{"m2/Hz", 1.0}}};
  return d;
}
const Dimension& dim_force_psd() {
  static const Dimension d{"force PSD", {{"N2/Hz", 1.0}}};
  return d;
}
const Dimension& dim_force_per_volt() {
  static const Dimension d{"transduction", {{"N/V", 1.0}}};
  return d;
}
const Dimension& dim_volt_per_meter() {
  static const Dimension d{"detector gain", {{"V/m", 1.0}, {"kV/m", 1e3},
                                             {"MV/m", 1e6}}};
  return d;
}
const Dimension& dim_per_kg() {
  static const Dimension d{"inverse mass", {{"1/kg", 1.0}}};
  return d;
}
const Dimension& dim_voltage() {
  static const Dimension d{"voltage", {{"V", 1.0}, {"mV", 1e-3}}};
  return d;
}
const Dimension& dim_vv() {
  static const Dimension d{"voltage gain", {{"V/V", 1.0}}};
  return d;
}
const Dimension& dim_stiffness() {
  static const Dimension d{"force per length", {{"N/m", 1.0}}};
  return d;
}
const Dimension& dim_angle() {
  static const Dimension d{"angle", {{"rad", 1.0}}};
  return d;
}
const Dimension& dim_number() {
  static const Dimension d{"number", {}, false};
  return d;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct RawEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

class Parser {
 public:
  explicit Parser(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          error(lineno, "malformed section header '" + line + "'");
          continue;
        }
        section = trim(line.substr(1, line.size() - 2));
        sections_.insert(section);
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        error(lineno, "expected 'key = value', got '" + line + "'");
        continue;
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (section.empty()) {
        error(lineno, "key '" + key + "' outside any [section]");
        continue;
      }
      const std::string full = section + "." + key;
      if (entries_.count(full)) {
        error(lineno, "duplicate key '" + full + "'");
        continue;
      }
      entries_[full] = RawEntry{value, lineno, false};
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

  void error(int line, const std::string& msg) {
    std::ostringstream os;
    if (line > 0) os << "line " << line << ": ";
    os << msg;
    errors.push_back(os.str());
  }
  void error(const std::string& msg) { errors.push_back(msg); }

  double quantity(const std::string& key, const Dimension& dim,
                  double fallback, bool* present = nullptr) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      if (present) *present = false;
      return fallback;
    }
    if (present) *present = true;
    it->second.used = true;
    return parse_quantity(it->second.value, dim, key, it->second.line);
  }

  std::vector<double> quantity_list(const std::string& key,
                                    const Dimension& dim) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    it->second.used = true;
    std::string body = it->second.value;
    // shared trailing unit
    double factor = 1.0;
    if (!dim.units.empty()) {
      const std::size_t sp = body.find_last_of(" \t");
      bool matched = false;
      if (sp != std::string::npos) {
        const std::string unit = trim(body.substr(sp + 1));
        for (const auto& u : dim.units) {
          if (unit == u.name) {
            factor = u.factor;
            body = body.substr(0, sp);
            matched = true;
            break;
          }
        }
      }
      if (!matched) {
        error(it->second.line, "'" + key + "' needs a trailing " +
                                   std::string(dim.label) + " unit");
        return {};
      }
    }
    std::vector<double> out;
    std::istringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        error(it->second.line, "bad number '" + tok + "' in '" + key + "'");
        return {};
      }
      out.push_back(v * factor);
    }
    if (out.empty()) error(it->second.line, "empty list for '" + key + "'");
    return out;
  }

  long integer(const std::string& key, long fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    char* end = nullptr;
    const long v = std::strtol(it->second.value.c_str(), &end, 10);
    if (end == it->second.value.c_str() || *end != '\0') {
      error(it->second.line, "'" + key + "' expects an integer, got '" +
                                 it->second.value + "'");
      return fallback;
    }
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    const std::string& v = it->second.value;
    if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
    if (v == "off" || v == "false" || v == "no" || v == "0") return false;
    error(it->second.line, "'" + key + "' expects on/off, got '" + v + "'");
    return fallback;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return it->second.value;
  }

  void report_unknown() {
    for (const auto& [key, entry] : entries_) {
      if (!entry.used) {
        error(entry.line, "unknown key '" + key + "'");
      }
    }
  }

  std::vector<std::string> errors;

 private:
  double parse_quantity(const std::string& value, const Dimension& dim,
                        const std::string& key, int line) {
    char* end = nullptr;
    const double num = std::strtod(value.c_str(), &end);
    if (end == value.c_str()) {
      error(line, "'" + key + "' expects a number, got '" + value + "'");
      return 0.0;
    }
    std::string unit = trim(std::string(end));
    if (dim.units.empty()) {
      if (!unit.empty()) {
        error(line, "'" + key + "' is dimensionless; unexpected unit '" +
                        unit + "'");
      }
      return num;
    }
    for (const auto& u : dim.units) {
      if (unit == u.name) return num * u.factor;
    }
    std::ostringstream os;
    os << "'" << key << "' expects a " << dim.label << " unit (";
    for (std::size_t i = 0; i < dim.units.size(); ++i) {
      os << (i ? ", " : "") << dim.units[i].name;
    }
    os << "), got '" << (unit.empty() ? "<none>" : unit) << "'";
    error(line, os.str());
    return 0.0;
  }

  std::map<std::string, RawEntry> entries_;
  std::set<std::string> sections_;
};

int axis_from_name(Parser& p, const std::string& key,
                   const std::string& value) {
  if (value == "x" || value == "a") return 0;
  if (value == "y" || value == "b") return 1;
  if (value == "z") return 2;
  p.error("'" + key + "' expects x|y|z, got '" + value + "'");
  return 0;
}

}  // namespace

const char* scenario_name(ScenarioType t) {
  switch (t) {
    case ScenarioType::free_run: return "free";
    case ScenarioType::closed_loop: return "loop";
    case ScenarioType::delay_sweep: return "delay-sweep";
    case ScenarioType::pressure_sweep: return "pressure-sweep";
    case ScenarioType::quantum: return "quantum";
    case ScenarioType::calibrate: return "calibrate";
    case ScenarioType::design: return "design";
  }
  return "?";
}

std::optional<ScenarioType> scenario_from_name(const std::string& name) {
  for (ScenarioType t :
       {ScenarioType::free_run, ScenarioType::closed_loop,
        ScenarioType::delay_sweep, ScenarioType::pressure_sweep,
        ScenarioType::quantum, ScenarioType::calibrate, ScenarioType::design}) {
    if (name == scenario_name(t)) return t;
  }
  return std::nullopt;
}

ParseResult parse_config_text(const std::string& text) {
  Parser p(text);
  ExperimentConfig cfg;

  // --- [system] ---
  auto& sys = cfg.system;
  sys.particle.radius = p.quantity("system.radius", dim_length(), 0.0);
  sys.particle.density = p.quantity("system.density", dim_density(), 2200.0);
  sys.particle.mass = p.quantity("system.mass", dim_mass(), 0.0);
  sys.particle.charge_count =
      static_cast<int>(p.integer("system.charge_count", 0));
  sys.gas.pressure = p.quantity("system.pressure", dim_pressure(), 0.0);
  sys.gas.temperature =
      p.quantity("system.temperature", dim_temperature(), 293.0);
  sys.gas.gas_molar_mass =
      p.quantity("system.gas_molar_mass", dim_molar_mass(), 28.97e-3);
  sys.gas.gas_viscosity =
      p.quantity("system.gas_viscosity", dim_viscosity(), 1.81e-5);
  const char* axes[3] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    const std::string a = axes[i];
    sys.trap.omega[i] =
        p.quantity("system.omega_" + a, dim_angular_frequency(), 0.0);
    sys.noise.measurement_sigma[i] =
        p.quantity("system.measurement_sigma_" + a, dim_asd(), 0.0);
    sys.noise.detection_efficiency[i] =
        p.quantity("system.eta_" + a, dim_number(), 0.0);
    sys.detector_cvm[i] =
        p.quantity("system.c_vm_" + a, dim_volt_per_meter(), 0.0);
    bool have_imp = false;
    const double s_imp = p.quantity("system.imprecision_psd_" + a,
                                    dim_disp_psd(), 0.0, &have_imp);
    if (have_imp) sys.noise.measurement_sigma[i] = std::sqrt(s_imp);
    sys.noise.backaction_force_psd[i] =
        p.quantity("system.backaction_psd_" + a, dim_force_psd(), 0.0);
  }
  sys.noise.quantum_enabled = p.boolean("system.quantum", false);
  sys.actuator.c_nv(0, 0) =
      p.quantity("system.c_nv_xx", dim_force_per_volt(), 0.0);
  sys.actuator.c_nv(0, 1) =
      p.quantity("system.c_nv_xy", dim_force_per_volt(), 0.0);
  sys.actuator.c_nv(1, 0) =
      p.quantity("system.c_nv_yx", dim_force_per_volt(), 0.0);
  sys.actuator.c_nv(1, 1) =
      p.quantity("system.c_nv_yy", dim_force_per_volt(), 0.0);
  bool have_cnvz = false;
  const double cnvz =
      p.quantity("system.c_nv_z", dim_force_per_volt(), 0.0, &have_cnvz);
  if (have_cnvz) sys.actuator.c_nv_z = cnvz;
  sys.actuator.b_z_fallback = p.quantity("system.b_z", dim_per_kg(), 0.0);

  if (sys.noise.quantum_enabled) {
    // derive missing backaction PSDs from the closure
    const Vec3 s_imp = sys.noise.measurement_sigma.cwiseProduct(
        sys.noise.measurement_sigma);
    const Vec3 derived = NoiseParams::backaction_from_imprecision(
        s_imp, sys.noise.detection_efficiency);
    for (int i = 0; i < 3; ++i) {
      if (sys.noise.backaction_force_psd[i] == 0.0) {
        sys.noise.backaction_force_psd[i] = derived[i];
      }
    }
  }

  // --- [controller] ---
  cfg.controller.effort_scale =
      p.quantity("controller.effort_scale", dim_number(), 100.0);
  {
    const std::string q = p.text("controller.q_form", "energy");
    if (q == "energy") cfg.controller.q_form = QForm::energy;
    else if (q == "position-only") cfg.controller.q_form = QForm::position_only;
    else p.error("controller.q_form expects energy|position-only");
    const std::string mask = p.text("controller.mask", "cold-damping-z");
    if (mask == "cold-damping-z") cfg.controller.cold_damping_z = true;
    else if (mask == "block") cfg.controller.cold_damping_z = false;
    else p.error("controller.mask expects block|cold-damping-z");
    const std::string rule = p.text("controller.input_rule", "rectangle");
    if (rule == "rectangle") cfg.controller.input_rule = InputRule::rectangle;
    else if (rule == "zoh") cfg.controller.input_rule = InputRule::zoh;
    else p.error("controller.input_rule expects rectangle|zoh");
  }
  {
    static const char* names[8] = {"kp_aa", "kp_ab", "kd_aa", "kd_ab",
                                   "kp_ba", "kp_bb", "kd_ba", "kd_bb"};
    int given = 0;
    Eigen::Matrix<double, 2, 4> g = Eigen::Matrix<double, 2, 4>::Zero();
    for (int i = 0; i < 8; ++i) {
      bool present = false;
      const double v = p.quantity(std::string("controller.") + names[i],
                                  dim_number(), 0.0, &present);
      if (present) ++given;
      g(i / 4, i % 4) = v;
    }
    if (given == 8) {
      cfg.controller.digital_xy = g;
    } else if (given != 0) {
      p.error("explicit digital gains need all 8 of kp_aa..kd_bb");
    }
    cfg.controller.k_p_z = p.quantity("controller.kp_z", dim_number(), 0.0);
    cfg.controller.k_d_z = p.quantity("controller.kd_z", dim_number(), 0.0);
  }

  // --- [chain] ---
  cfg.sim.T_s = p.quantity("chain.t_sample", dim_time(), 64e-9);
  cfg.sim.electronic_delay =
      p.quantity("chain.electronic_delay", dim_time(), 0.639e-6);
  cfg.sim.amplifier_gain = p.quantity("chain.amplifier_gain", dim_vv(), 5.0);
  cfg.sim.decimation = static_cast<int>(p.integer("chain.decimation", 8));
  cfg.sim.adc_bits = static_cast<int>(p.integer("chain.adc_bits", 0));
  cfg.sim.adc_range = p.quantity("chain.adc_range", dim_voltage(), 1.0);
  cfg.chain.notch_quality_xy =
      p.quantity("chain.notch_quality_xy", dim_number(), 4.0);
  cfg.chain.notch_quality_z =
      p.quantity("chain.notch_quality_z", dim_number(), 8.0);
  cfg.chain.dc_cutoff =
      p.quantity("chain.dc_cutoff", dim_plain_frequency(), 1e3);
  cfg.chain.delay_a = static_cast<int>(p.integer("chain.delay_a", -1));
  cfg.chain.delay_b = static_cast<int>(p.integer("chain.delay_b", -1));
  cfg.chain.delay_z = static_cast<int>(p.integer("chain.delay_z", -1));

  // --- [scenario] ---
  const std::string type = p.text("scenario.type", "");
  if (type.empty()) {
    p.error("missing scenario.type");
  } else if (auto t = scenario_from_name(type)) {
    cfg.scenario = *t;
  } else {
    p.error("unknown scenario.type '" + type + "'");
  }
  cfg.sim.duration = p.quantity("scenario.duration", dim_time(), 0.06);
  cfg.sim.trace_length = p.quantity("scenario.trace_length", dim_time(), 0.05);
  cfg.sim.n_traces = static_cast<int>(p.integer("scenario.n_traces", 1));
  cfg.sim.seed = static_cast<std::uint64_t>(p.integer("scenario.seed", 1));
  cfg.sim.substeps = static_cast<int>(p.integer("scenario.substeps", 8));
  cfg.sim.record_every =
      static_cast<int>(p.integer("scenario.record_every", 1));
  cfg.sim.threads = static_cast<int>(p.integer("scenario.threads", 1));
  cfg.delay_sweep.axis =
      axis_from_name(p, "scenario.axis", p.text("scenario.axis", "x"));
  cfg.delay_sweep.gain = p.quantity("scenario.gain", dim_stiffness(), 0.0);
  cfg.delay_sweep.phi_min = p.quantity("scenario.phi_min", dim_angle(), 0.0);
  cfg.delay_sweep.phi_max = p.quantity("scenario.phi_max", dim_angle(), 0.0);
  cfg.delay_sweep.points =
      static_cast<int>(p.integer("scenario.phi_points", 0));
  cfg.pressures_pa = p.quantity_list("scenario.pressures", dim_pressure());
  cfg.quantum_runs = static_cast<int>(p.integer("scenario.runs", 30));
  cfg.calibrate.drive_omega =
      p.quantity("scenario.drive_frequency", dim_angular_frequency(), 0.0);
  cfg.calibrate.drive_amplitudes_v =
      p.quantity_list("scenario.drive_amplitudes", dim_voltage());
  cfg.calibrate.drive_electrode = axis_from_name(
      p, "scenario.drive_electrode", p.text("scenario.drive_electrode", "a"));
  cfg.calibrate.traces_per_amplitude =
      static_cast<int>(p.integer("scenario.traces_per_amplitude", 8));
  cfg.calibrate.detector_traces =
      static_cast<int>(p.integer("scenario.detector_traces", 100));

  // --- [output] ---
  cfg.output.directory = p.text("output.directory", "out");
  {
    const std::string fmt = p.text("output.format", "csv,json");
    cfg.output.write_csv = fmt.find("csv") != std::string::npos;
    cfg.output.write_json = fmt.find("json") != std::string::npos;
    if (!cfg.output.write_csv && !cfg.output.write_json) {
      p.error("output.format expects csv, json or csv,json");
    }
  }

  p.report_unknown();

  // cross-field validation, collected rather than thrown
  if (p.errors.empty()) {
    try {
      cfg.system.validate();
      cfg.sim.validate();
    } catch (const std::exception& e) {
      p.error(e.what());
    }
    switch (cfg.scenario) {
      case ScenarioType::delay_sweep:
        if (!(cfg.delay_sweep.gain != 0.0)) p.error("delay-sweep needs scenario.gain");
        if (cfg.delay_sweep.points < 1) p.error("delay-sweep needs scenario.phi_points");
        if (!(cfg.delay_sweep.phi_max > cfg.delay_sweep.phi_min))
          p.error("delay-sweep needs phi_max > phi_min");
        break;
      case ScenarioType::pressure_sweep:
        if (cfg.pressures_pa.empty()) p.error("pressure-sweep needs scenario.pressures");
        break;
      case ScenarioType::quantum:
        if (!cfg.system.noise.quantum_enabled)
          p.error("quantum scenario needs system.quantum = on");
        if (cfg.quantum_runs < 2) p.error("quantum scenario needs runs >= 2");
        break;
      case ScenarioType::calibrate:
        if (!(cfg.calibrate.drive_omega > 0.0))
          p.error("calibrate needs scenario.drive_frequency");
        if (cfg.calibrate.drive_amplitudes_v.empty())
          p.error("calibrate needs scenario.drive_amplitudes");
        break;
      default:
        break;
    }
  }

  ParseResult result;
  result.errors = p.errors;
  if (result.errors.empty()) result.config = cfg;
  return result;
}

ParseResult parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult r;
    r.errors.push_back("cannot open config file '" + path + "'");
    return r;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  auto q = [](double v, const char* unit) {
    std::string s = format_double(v);
    return s + " " + unit;
  };
  const auto& sys = cfg.system;
  os << "[system]\n";
  os << "radius = " << q(sys.particle.radius, "m") << "\n";
  os << "density = " << q(sys.particle.density, "kg/m3") << "\n";
  if (sys.particle.mass > 0.0) {
    os << "mass = " << q(sys.particle.mass, "kg") << "\n";
  }
  if (sys.particle.charge_count != 0) {
    os << "charge_count = " << sys.particle.charge_count << "\n";
  }
  os << "pressure = " << q(sys.gas.pressure, "Pa") << "\n";
  os << "temperature = " << q(sys.gas.temperature, "K") << "\n";
  os << "gas_molar_mass = " << q(sys.gas.gas_molar_mass, "kg/mol") << "\n";
  os << "gas_viscosity = " << q(sys.gas.gas_viscosity, "Pa.s") << "\n";
  const char* axes[3] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    os << "omega_" << axes[i] << " = " << q(sys.trap.omega[i], "rad/s") << "\n";
  }
  for (int i = 0; i < 3; ++i) {
    os << "measurement_sigma_" << axes[i] << " = "
       << q(sys.noise.measurement_sigma[i], "m/rtHz") << "\n";
  }
  for (int i = 0; i < 3; ++i) {
    if (sys.noise.detection_efficiency[i] != 0.0) {
      os << "eta_" << axes[i] << " = "
         << format_double(sys.noise.detection_efficiency[i]) << "\n";
    }
  }
  if (sys.noise.quantum_enabled) {
    os << "quantum = on\n";
    for (int i = 0; i < 3; ++i) {
      if (sys.noise.backaction_force_psd[i] != 0.0) {
        os << "backaction_psd_" << axes[i] << " = "
           << q(sys.noise.backaction_force_psd[i], "N2/Hz") << "\n";
      }
    }
  }
  os << "c_nv_xx = " << q(sys.actuator.c_nv(0, 0), "N/V") << "\n";
  os << "c_nv_xy = " << q(sys.actuator.c_nv(0, 1), "N/V") << "\n";
  os << "c_nv_yx = " << q(sys.actuator.c_nv(1, 0), "N/V") << "\n";
  os << "c_nv_yy = " << q(sys.actuator.c_nv(1, 1), "N/V") << "\n";
  if (sys.actuator.c_nv_z) {
    os << "c_nv_z = " << q(*sys.actuator.c_nv_z, "N/V") << "\n";
  }
  if (sys.actuator.b_z_fallback != 0.0) {
    os << "b_z = " << q(sys.actuator.b_z_fallback, "1/kg") << "\n";
  }
  for (int i = 0; i < 3; ++i) {
    os << "c_vm_" << axes[i] << " = " << q(sys.detector_cvm[i], "V/m") << "\n";
  }

  os << "\n[controller]\n";
  os << "effort_scale = " << format_double(cfg.controller.effort_scale) << "\n";
  os << "q_form = "
     << (cfg.controller.q_form == QForm::energy ? "energy" : "position-only")
     << "\n";
  os << "mask = " << (cfg.controller.cold_damping_z ? "cold-damping-z" : "block")
     << "\n";
  os << "input_rule = "
     << (cfg.controller.input_rule == InputRule::rectangle ? "rectangle"
                                                           : "zoh")
     << "\n";
  if (cfg.controller.digital_xy) {
    static const char* names[8] = {"kp_aa", "kp_ab", "kd_aa", "kd_ab",
                                   "kp_ba", "kp_bb", "kd_ba", "kd_bb"};
    for (int i = 0; i < 8; ++i) {
      os << names[i] << " = "
         << format_double((*cfg.controller.digital_xy)(i / 4, i % 4)) << "\n";
    }
  }
  if (cfg.controller.k_p_z != 0.0) {
    os << "kp_z = " << format_double(cfg.controller.k_p_z) << "\n";
  }
  if (cfg.controller.k_d_z != 0.0) {
    os << "kd_z = " << format_double(cfg.controller.k_d_z) << "\n";
  }

  os << "\n[chain]\n";
  os << "t_sample = " << q(cfg.sim.T_s, "s") << "\n";
  os << "electronic_delay = " << q(cfg.sim.electronic_delay, "s") << "\n";
  os << "amplifier_gain = " << q(cfg.sim.amplifier_gain, "V/V") << "\n";
  os << "decimation = " << cfg.sim.decimation << "\n";
  os << "adc_bits = " << cfg.sim.adc_bits << "\n";
  os << "adc_range = " << q(cfg.sim.adc_range, "V") << "\n";
  os << "notch_quality_xy = " << format_double(cfg.chain.notch_quality_xy)
     << "\n";
  os << "notch_quality_z = " << format_double(cfg.chain.notch_quality_z)
     << "\n";
  os << "dc_cutoff = " << q(cfg.chain.dc_cutoff, "Hz") << "\n";
  os << "delay_a = " << cfg.chain.delay_a << "\n";
  os << "delay_b = " << cfg.chain.delay_b << "\n";
  os << "delay_z = " << cfg.chain.delay_z << "\n";

  os << "\n[scenario]\n";
  os << "type = " << scenario_name(cfg.scenario) << "\n";
  os << "duration = " << q(cfg.sim.duration, "s") << "\n";
  os << "trace_length = " << q(cfg.sim.trace_length, "s") << "\n";
  os << "n_traces = " << cfg.sim.n_traces << "\n";
  os << "seed = " << cfg.sim.seed << "\n";
  os << "substeps = " << cfg.sim.substeps << "\n";
  os << "record_every = " << cfg.sim.record_every << "\n";
  os << "threads = " << cfg.sim.threads << "\n";
  if (cfg.scenario == ScenarioType::delay_sweep) {
    os << "axis = " << axes[cfg.delay_sweep.axis] << "\n";
    os << "gain = " << q(cfg.delay_sweep.gain, "N/m") << "\n";
    os << "phi_min = " << q(cfg.delay_sweep.phi_min, "rad") << "\n";
    os << "phi_max = " << q(cfg.delay_sweep.phi_max, "rad") << "\n";
    os << "phi_points = " << cfg.delay_sweep.points << "\n";
  }
  if (cfg.scenario == ScenarioType::pressure_sweep) {
    os << "pressures = ";
    for (std::size_t i = 0; i < cfg.pressures_pa.size(); ++i) {
      os << (i ? ", " : "") << format_double(cfg.pressures_pa[i]);
    }
    os << " Pa\n";
  }
  if (cfg.scenario == ScenarioType::quantum) {
    os << "runs = " << cfg.quantum_runs << "\n";
  }
  if (cfg.scenario == ScenarioType::calibrate) {
    os << "drive_frequency = " << q(cfg.calibrate.drive_omega, "rad/s") << "\n";
    os << "drive_amplitudes = ";
    for (std::size_t i = 0; i < cfg.calibrate.drive_amplitudes_v.size(); ++i) {
      os << (i ? ", " : "")
         << format_double(cfg.calibrate.drive_amplitudes_v[i]);
    }
    os << " V\n";
    os << "drive_electrode = " << axes[cfg.calibrate.drive_electrode] << "\n";
    os << "traces_per_amplitude = " << cfg.calibrate.traces_per_amplitude
       << "\n";
    os << "detector_traces = " << cfg.calibrate.detector_traces << "\n";
  }

  os << "\n[output]\n";
  os << "directory = " << cfg.output.directory << "\n";
  os << "format = "
     << (cfg.output.write_csv && cfg.output.write_json
             ? "csv,json"
             : (cfg.output.write_csv ? "csv" : "json"))
     << "\n";
  return os.str();
}

}  // namespace levisim
