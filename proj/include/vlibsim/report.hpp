#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vlibsim/simulator.hpp"

namespace vlibsim {

// CSV and summary writers. All output is deterministic: fixed column order,
// rows in the order the run produced them, doubles printed as %.9f, absent
// timestamps as empty cells.

void write_metrics_csv(std::ostream& os, const Platform& plat,
                       const std::vector<PeriodRow>& rows);
void write_calls_csv(std::ostream& os, const Platform& plat,
                     const std::vector<CallRecord>& calls);
void write_bus_csv(std::ostream& os, const std::vector<BusWindowRow>& rows);
void write_throttle_csv(std::ostream& os, const std::vector<ThrottleRow>& rows);
void write_hist_csv(std::ostream& os, const std::vector<JobSample>& samples, ThreadId thread);
void write_summary(std::ostream& os,
                   const std::vector<std::pair<std::string, std::string>>& kv);

// Writes the full bundle into `dir` (created if missing): metrics.csv,
// calls.csv, bus.csv, throttle.csv, summary.txt, and one hist_<thread>.csv
// per periodic thread that produced samples.
void write_outputs(const std::string& dir, const Platform& plat, const RunOutputs& out);

}  // namespace vlibsim
