#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/membus.hpp"
#include "vlibsim/types.hpp"

namespace vlibsim {

// One monitor window; becomes bus.csv. Rows are emitted whether or not
// throttling is enabled, so a run always has the latency timeline.
struct BusWindowRow {
  Cycles window_start = 0;
  Cycles window_end = 0;
  std::uint64_t occupancy = 0;
  std::uint64_t requests = 0;
  std::optional<double> avg_latency;
  bool triggered = false;
};

// One eligible core at one trigger; becomes throttle.csv. duration can be
// zero (strength 0 still logs the trigger, it just doesn't bite).
struct ThrottleRow {
  Cycles at = 0;
  CoreId core = 0;
  std::uint64_t requests = 0;  // this core's arrivals in the window
  Cycles duration = 0;
  Cycles until = 0;
};

// Periodic bus monitor plus the proportional throttle driven by it.
//
// Every monitor period it reads the PMU counters for the window just ended.
// If the average latency reached the trigger threshold, every core currently
// running background-class work is paused for a slice of the next window
// proportional to its share of the measured traffic, scaled by strength_k.
// Cores holding foreground work are exempt; that question is delegated to
// the schedulers through the background_class hook.
class ThrottleController {
 public:
  struct Config {
    bool enabled = false;      // false = monitor only
    Cycles monitor_period = 0;
    double threshold = 0.0;    // average latency trigger; 0 = 1.5x base service
    double strength_k = 1.0;
  };

  ThrottleController(const Config& cfg, std::size_t num_cores, BusModel& bus, Engine& eng,
                     TraceSink& trace);

  // Hooks must be set before start() when throttling is enabled.
  void set_background_class(std::function<bool(CoreId)> fn) { background_class_ = std::move(fn); }
  void set_apply(std::function<void(CoreId, Cycles)> fn) { apply_ = std::move(fn); }

  void start(Cycles run_end);

  double effective_threshold() const;

  const std::vector<BusWindowRow>& windows() const { return windows_; }
  const std::vector<ThrottleRow>& decisions() const { return decisions_; }

 private:
  void tick();

  Config cfg_;
  std::size_t num_cores_;
  BusModel& bus_;
  Engine& eng_;
  TraceSink& trace_;
  Cycles run_end_ = 0;
  std::function<bool(CoreId)> background_class_;
  std::function<void(CoreId, Cycles)> apply_;
  std::vector<BusWindowRow> windows_;
  std::vector<ThrottleRow> decisions_;
};

}  // namespace vlibsim
