#include "vlibsim/throttle.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace vlibsim {

ThrottleController::ThrottleController(const Config& cfg, std::size_t num_cores, BusModel& bus,
                                       Engine& eng, TraceSink& trace)
    : cfg_(cfg), num_cores_(num_cores), bus_(bus), eng_(eng), trace_(trace) {}

double ThrottleController::effective_threshold() const {
  if (cfg_.threshold > 0.0) return cfg_.threshold;
  return 1.5 * static_cast<double>(bus_.base_service());
}

void ThrottleController::start(Cycles run_end) {
  run_end_ = run_end;
  if (cfg_.monitor_period == 0) return;
  if (cfg_.enabled && (!background_class_ || !apply_)) {
    throw std::logic_error("throttle enabled without scheduler hooks");
  }
  eng_.schedule(cfg_.monitor_period, EventKind::monitor_tick, [this] { tick(); });
}

void ThrottleController::tick() {
  Cycles now = eng_.now();
  Cycles t0 = now - cfg_.monitor_period;

  BusCounters c = bus_.counters_for(t0, now);
  BusWindowRow row;
  row.window_start = t0;
  row.window_end = now;
  row.occupancy = c.occupancy;
  row.requests = c.requests;
  row.avg_latency = BusModel::avg_latency(c);

  if (cfg_.enabled && row.avg_latency && *row.avg_latency >= effective_threshold()) {
    row.triggered = true;
    std::vector<std::uint64_t> arrivals(num_cores_, 0);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < num_cores_; ++i) {
      if (!background_class_(static_cast<CoreId>(i))) continue;
      arrivals[i] = bus_.requests_from(static_cast<CoreId>(i), t0, now);
      total += arrivals[i];
    }
    if (trace_.enabled()) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "avg=%.2f threshold=%.2f", *row.avg_latency,
                    effective_threshold());
      trace_.emit(now, -1, "throttle", "trigger", buf);
    }
    if (total > 0) {
      double period = static_cast<double>(cfg_.monitor_period);
      for (std::size_t i = 0; i < num_cores_; ++i) {
        if (!background_class_(static_cast<CoreId>(i))) continue;
        double share = static_cast<double>(arrivals[i]) / static_cast<double>(total);
        Cycles dur = static_cast<Cycles>(std::llround(period * share * cfg_.strength_k));
        ThrottleRow d;
        d.at = now;
        d.core = static_cast<CoreId>(i);
        d.requests = arrivals[i];
        d.duration = dur;
        d.until = now + dur;
        decisions_.push_back(d);
        if (dur > 0) apply_(static_cast<CoreId>(i), now + dur);
      }
    }
  }

  windows_.push_back(row);
  bus_.prune(t0);
  if (now + cfg_.monitor_period <= run_end_) {
    eng_.schedule(now + cfg_.monitor_period, EventKind::monitor_tick, [this] { tick(); });
  }
}

}  // namespace vlibsim
