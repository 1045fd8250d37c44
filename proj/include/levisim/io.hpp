#pragma once

#include <iosfwd>
#include <string>

#include "levisim/calib.hpp"
#include "levisim/dsp.hpp"
#include "levisim/sim.hpp"

namespace levisim {

// All CSVs carry a header row; numbers are written with 17 significant
// digits so files round-trip bit-exactly.
std::string format_double(double v);

void write_trace_csv(std::ostream& os, const TraceSet& set,
                     std::size_t trace_index = 0);
void write_psd_csv(std::ostream& os, const PsdEstimate& psd);
void write_delay_sweep_csv(std::ostream& os, const DelaySweepResult& result);
void write_pressure_sweep_csv(std::ostream& os,
                              const PressureSweepResult& result);

}  // namespace levisim
