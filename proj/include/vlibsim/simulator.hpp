#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/membus.hpp"
#include "vlibsim/platform.hpp"
#include "vlibsim/scenario.hpp"
#include "vlibsim/scheduler.hpp"
#include "vlibsim/throttle.hpp"
#include "vlibsim/vlibcall.hpp"

namespace vlibsim {

struct RunOptions {
  bool trace = false;
  // Service segments are one record per charge; long runs produce millions.
  // Tests that check execution geometry turn this on for short runs.
  bool collect_segments = false;
};

// Settled foreground interval of one VCPU, as seen by the call layer.
struct FgSpan {
  VcpuId vcpu = 0;
  Cycles start = 0;
  Cycles end = 0;
};

struct RunOutputs {
  std::vector<PeriodRow> period_rows;
  std::vector<CallRecord> calls;
  std::vector<BusWindowRow> bus_windows;
  std::vector<ThrottleRow> throttle_rows;
  std::vector<JobSample> job_samples;
  std::vector<ServiceSegment> segments;  // only with RunOptions::collect_segments
  std::vector<FgSpan> fg_spans;
  AdmissionVerdict admission;
  std::vector<std::pair<std::string, std::string>> summary;
  std::string digest;
  std::uint64_t events = 0;
};

// Owns one configured run: platform, engine, schedulers, bus, throttle, and
// the glue between them. Construct, run() once, read the outputs.
class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg, const RunOptions& opt = {});

  RunOutputs run();

  // Component access for tests that poke at a half-driven simulation.
  Engine& engine() { return eng_; }
  BusModel& bus() { return bus_; }
  MasterScheduler& scheduler() { return sched_; }
  CallEngine& calls() { return calls_; }
  TraceSink& trace() { return trace_; }
  const Platform& platform() const { return plat_; }

  // Runs the settle loop by hand; the engine calls this after every event.
  void flush();

 private:
  void wire();
  void script_calls();

  ScenarioConfig cfg_;
  RunOptions opt_;
  Platform plat_;
  TraceSink trace_;
  Engine eng_;
  BusModel bus_;
  MasterScheduler sched_;
  CallEngine calls_;
  ThrottleController throttle_;

  std::vector<PeriodRow> rows_;
  std::vector<JobSample> samples_;
  std::vector<ServiceSegment> segments_;
  std::vector<FgSpan> spans_;
  std::map<VcpuId, Cycles> open_spans_;
  bool ran_ = false;
};

}  // namespace vlibsim
