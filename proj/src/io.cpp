#include "levisim/io.hpp"

#include <cstdio>
#include <ostream>

namespace levisim {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const TraceSet& set,
                     std::size_t trace_index) {
  os << "time_s,x_m,y_m,z_m,det_x_V,det_y_V,det_z_V,u_a_V,u_b_V,u_z_V\n";
  if (trace_index >= set.traces.size()) return;
  const Trace& tr = set.traces[trace_index];
  const double dt = 1.0 / set.meta.sample_rate;
  const std::size_t n = tr.position[0].size();
  auto col = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? v[i] : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    os << format_double(static_cast<double>(i) * dt);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(col(tr.position[a], i));
    for (int a = 0; a < 3; ++a) os << ',' << format_double(col(tr.detector[a], i));
    for (int a = 0; a < 3; ++a) os << ',' << format_double(col(tr.control[a], i));
    os << '\n';
  }
}

void write_psd_csv(std::ostream& os, const PsdEstimate& psd) {
  const char* units = psd.units == TraceUnits::displacement ? "m2"
                      : psd.units == TraceUnits::volts      ? "V2"
                                                            : "units2";
  const char* conv = psd.convention == PsdConvention::double_sided
                         ? "double_sided"
                         : "single_sided";
  os << "frequency_hz,psd_" << units << "_per_hz_" << conv << "\n";
  for (std::size_t k = 0; k < psd.frequency_hz.size(); ++k) {
    os << format_double(psd.frequency_hz[k]) << ','
       << format_double(psd.value[k]) << '\n';
  }
}

void write_delay_sweep_csv(std::ostream& os, const DelaySweepResult& result) {
  os << "phi_rad,phi_realized_rad,T_eff_x_K,T_eff_y_K,T_eff_z_K,"
        "stderr_x_K,stderr_y_K,stderr_z_K,T_oracle_K\n";
  for (const auto& p : result.points) {
    os << format_double(p.phi_requested) << ','
       << format_double(p.phi_realized);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(p.t_eff[a]);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(p.t_eff_stderr[a]);
    os << ',' << format_double(p.t_oracle) << '\n';
  }
}

void write_pressure_sweep_csv(std::ostream& os,
                              const PressureSweepResult& result) {
  os << "pressure_mbar,T_eff_x_K,T_eff_y_K,T_eff_z_K,"
        "stderr_x_K,stderr_y_K,stderr_z_K,unstable,T_oracle_z_K\n";
  for (const auto& p : result.points) {
    os << format_double(p.pressure / 100.0);  // Pa -> mbar
    for (int a = 0; a < 3; ++a) os << ',' << format_double(p.t_eff[a]);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(p.t_eff_stderr[a]);
    os << ',' << (p.unstable ? 1 : 0) << ','
       << format_double(p.t_oracle_z) << '\n';
  }
}

}  // namespace levisim
