#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "levisim/config.hpp"
#include "levisim/constants.hpp"
#include "levisim/scenarios.hpp"

using namespace levisim;
namespace c = levisim::constants;
namespace fs = std::filesystem;

namespace {

// Minimal but complete system block with the published values.
const char* kSystemBlock = R"(
[system]
radius = 71.5 nm
mass = 3.37 fg
pressure = 1.2 mbar
temperature = 293 K
omega_x = 96.24 kHz
omega_y = 101.49 kHz
omega_z = 31.52 kHz
measurement_sigma_x = 13 pm/rtHz
measurement_sigma_y = 13 pm/rtHz
measurement_sigma_z = 160 pm/rtHz
c_nv_xx = 2.83e-16 N/V
c_nv_xy = 2.18e-16 N/V
c_nv_yx = 2.21e-16 N/V
c_nv_yy = 2.36e-16 N/V
c_vm_x = 6.87e5 V/m
c_vm_y = 7.08e5 V/m
c_vm_z = 1.07e6 V/m
)";

std::string free_config() {
  std::ostringstream os;
  os << kSystemBlock << R"(
[chain]
t_sample = 1 us

[scenario]
type = free
duration = 6 ms
trace_length = 5 ms
substeps = 1
n_traces = 2
seed = 11
)";
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal free config parses with defaults filled") {
  const auto result = parse_config_text(free_config());
  REQUIRE(result.ok());
  const auto& cfg = *result.config;
  CHECK(cfg.scenario == ScenarioType::free_run);
  CHECK(cfg.system.particle.mass == doctest::Approx(3.37e-18));
  CHECK(cfg.system.gas.pressure == doctest::Approx(120.0));
  CHECK(cfg.system.gas.temperature == 293.0);
  // defaults
  CHECK(cfg.sim.electronic_delay == doctest::Approx(0.639e-6));
  CHECK(cfg.sim.amplifier_gain == 5.0);
  CHECK(cfg.controller.effort_scale == 100.0);
  CHECK(cfg.controller.input_rule == InputRule::rectangle);
  CHECK(cfg.output.directory == "out");
  // explicit values
  CHECK(cfg.sim.T_s == doctest::Approx(1e-6));
  CHECK(cfg.sim.n_traces == 2);
  CHECK(cfg.sim.seed == 11);
}

TEST_CASE("frequencies in kHz land in rad/s") {
  const auto result = parse_config_text(free_config());
  REQUIRE(result.ok());
  CHECK(result.config->system.trap.omega[0] ==
        doctest::Approx(c::two_pi * 96.24e3).epsilon(1e-12));
  CHECK(result.config->system.trap.omega[2] ==
        doctest::Approx(c::two_pi * 31.52e3).epsilon(1e-12));
}

TEST_CASE("the delayed-force experiment config is accepted and echoed") {
  std::ostringstream os;
  os << kSystemBlock << R"(
[scenario]
type = delay-sweep
axis = x
gain = 9.17e-9 N/m
phi_min = 0.45 rad
phi_max = 6.2 rad
phi_points = 20
n_traces = 10
)";
  const auto result = parse_config_text(os.str());
  REQUIRE(result.ok());
  CHECK(result.config->delay_sweep.gain == doctest::Approx(9.17e-9));
  CHECK(result.config->delay_sweep.points == 20);
  // the rendered echo parses back to the same values
  const auto again = parse_config_text(render_config(*result.config));
  REQUIRE(again.ok());
  CHECK(again.config->delay_sweep.gain == result.config->delay_sweep.gain);
  CHECK(again.config->system.trap.omega[1] ==
        result.config->system.trap.omega[1]);
  CHECK(again.config->system.gas.pressure ==
        result.config->system.gas.pressure);
}

TEST_CASE("all config errors are reported, not just the first") {
  std::ostringstream os;
  os << kSystemBlock << R"(
[scenario]
type = frree
duration = 5 K
banana = 7

[chains]
t_sample = 64 ns
)";
  const auto result = parse_config_text(os.str());
  CHECK(!result.ok());
  CHECK(result.errors.size() >= 4);
  std::string joined;
  for (const auto& e : result.errors) joined += e + "\n";
  CHECK(joined.find("frree") != std::string::npos);      // unknown scenario
  CHECK(joined.find("duration") != std::string::npos);   // unit mismatch
  CHECK(joined.find("banana") != std::string::npos);     // unknown key
  CHECK(joined.find("chains.t_sample") != std::string::npos);  // bad section
}

TEST_CASE("dimensioned keys demand a unit") {
  std::string text = free_config();
  text += "\n[output]\ndirectory = out\n";
  // strip the unit from pressure
  const auto pos = text.find("pressure = 1.2 mbar");
  text.replace(pos, 19, "pressure = 1.2     ");
  const auto result = parse_config_text(text);
  CHECK(!result.ok());
  bool mentions_pressure = false;
  for (const auto& e : result.errors) {
    mentions_pressure |= e.find("pressure") != std::string::npos;
  }
  CHECK(mentions_pressure);
}

TEST_CASE("explicit digital gains need the full set") {
  std::ostringstream os;
  os << kSystemBlock << R"(
[controller]
kp_aa = -0.35

[scenario]
type = loop
)";
  const auto result = parse_config_text(os.str());
  CHECK(!result.ok());
}

TEST_CASE("free scenario writes manifest, trace, psd and summary") {
  const auto result = parse_config_text(free_config());
  REQUIRE(result.ok());
  const fs::path dir = fs::temp_directory_path() / "levisim_test_free";
  fs::remove_all(dir);
  RunOptions opt;
  opt.out_dir = dir.string();
  std::ostringstream log;
  const int code = execute_scenario(*result.config, opt, log);
  CHECK(code == exit_ok);
  CHECK(fs::exists(dir / "manifest.cfg"));
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "psd_x.csv"));
  CHECK(fs::exists(dir / "summary.json"));

  // header row and 12+ significant digits
  std::ifstream tr(dir / "trace.csv");
  std::string header, first;
  std::getline(tr, header);
  std::getline(tr, first);
  CHECK(header.find("time_s,x_m,y_m,z_m") == 0);
  const auto comma = first.find(',');
  const auto second_field = first.substr(comma + 1, first.find(',', comma + 1) - comma - 1);
  CHECK(second_field.size() >= 12);
}

TEST_CASE("re-running from the manifest reproduces results bit-exactly") {
  const auto result = parse_config_text(free_config());
  REQUIRE(result.ok());
  const fs::path dir_a = fs::temp_directory_path() / "levisim_manifest_a";
  const fs::path dir_b = fs::temp_directory_path() / "levisim_manifest_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  std::ostringstream log;

  RunOptions opt_a;
  opt_a.out_dir = dir_a.string();
  REQUIRE(execute_scenario(*result.config, opt_a, log) == exit_ok);

  const auto manifest = parse_config_file((dir_a / "manifest.cfg").string());
  REQUIRE(manifest.ok());
  RunOptions opt_b;
  opt_b.out_dir = dir_b.string();
  opt_b.threads = 2;  // determinism must not depend on the worker count
  REQUIRE(execute_scenario(*manifest.config, opt_b, log) == exit_ok);

  CHECK(slurp(dir_a / "trace.csv") == slurp(dir_b / "trace.csv"));
  CHECK(slurp(dir_a / "psd_x.csv") == slurp(dir_b / "psd_x.csv"));
  CHECK(slurp(dir_a / "psd_z.csv") == slurp(dir_b / "psd_z.csv"));
}

TEST_CASE("design scenario emits the gain table") {
  std::ostringstream os;
  os << kSystemBlock << R"(
[scenario]
type = design
)";
  const auto result = parse_config_text(os.str());
  REQUIRE(result.ok());
  const fs::path dir = fs::temp_directory_path() / "levisim_test_design";
  fs::remove_all(dir);
  RunOptions opt;
  opt.out_dir = dir.string();
  std::ostringstream log;
  CHECK(execute_scenario(*result.config, opt, log) == exit_ok);
  const std::string table = slurp(dir / "gain_table.csv");
  CHECK(table.find("gain,lqr_value,units,digital_value,fixed_point_value") == 0);
  CHECK(table.find("kp_xx") != std::string::npos);
  CHECK(table.find("kd_yy") != std::string::npos);
  CHECK(table.find("kd_z") != std::string::npos);
}

TEST_CASE("an unstable loop maps to the instability exit code") {
  std::ostringstream os;
  os << kSystemBlock << R"(
[controller]
kp_aa = -0.35
kp_ab = 0.80
kp_ba = 1.50
kp_bb = -1.15
kd_aa = -136.45
kd_ab = 119.14
kd_ba = 122.22
kd_bb = 148.23

[scenario]
type = loop
duration = 40 ms
trace_length = 10 ms
substeps = 1
record_every = 64
)";
  auto text = os.str();
  const auto pos = text.find("pressure = 1.2 mbar");
  text.replace(pos, 19, "pressure = 1e-4 mbar");
  const auto result = parse_config_text(text);
  REQUIRE(result.ok());
  const fs::path dir = fs::temp_directory_path() / "levisim_test_unstable";
  fs::remove_all(dir);
  RunOptions opt;
  opt.out_dir = dir.string();
  std::ostringstream log;
  CHECK(execute_scenario(*result.config, opt, log) == exit_instability);
  CHECK(log.str().find("instability") != std::string::npos);
  // partial results: the manifest stays behind
  CHECK(fs::exists(dir / "manifest.cfg"));
}
