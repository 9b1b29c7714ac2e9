#pragma once

#include <cstdio>
#include <functional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlibsim/types.hpp"

namespace vlibsim {

enum class EventKind : std::uint8_t {
  timer,
  period_boundary,
  request_complete,
  monitor_tick,
  ipi,
  vm_unblock,
  call_timeout,
  workload_step,
};

const char* event_kind_name(EventKind k);

// Discrete-event core. Events fire in (fire_at, insertion order); the clock
// only moves when an event is dispatched or run_until() finishes.
class Engine {
 public:
  using Handler = std::function<void()>;

  struct Stats {
    std::uint64_t scheduled = 0;
    std::uint64_t dispatched = 0;
    std::uint64_t cancelled = 0;
  };

  Cycles now() const { return now_; }

  // fire_at must not lie in the past; that would mean some component computed
  // a boundary from stale state, which is a bug worth failing loudly on.
  EventId schedule(Cycles fire_at, EventKind kind, Handler fn);

  // True if the event was still pending. Cancelling a dispatched or unknown
  // id is a no-op and returns false.
  bool cancel(EventId id);

  // Dispatches everything with fire_at <= t_end, then parks the clock at
  // t_end. Returns the number of events dispatched by this invocation.
  // A throwing handler aborts the run; the error names the offending event.
  std::uint64_t run_until(Cycles t_end);

  // Invoked after each dispatched handler returns. The simulation uses this
  // to settle scheduling decisions (dispatch dirty cores) between events.
  void set_post_dispatch(Handler hook) { post_dispatch_ = std::move(hook); }

  const Stats& stats() const { return stats_; }
  std::size_t pending() const { return live_.size(); }

 private:
  struct Entry {
    Cycles at;
    std::uint64_t seq;
    EventId id;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::unordered_map<EventId, std::pair<EventKind, Handler>> live_;
  Handler post_dispatch_;
  Cycles now_ = 0;
  std::uint64_t seq_ = 0;
  EventId next_id_ = 1;
  Stats stats_;
};

// Tab-separated run log: at <tab> core <tab> subject <tab> action <tab> detail.
// Lines are buffered in memory; a run writes them out at the end. Tests read
// them back directly.
class TraceSink {
 public:
  explicit TraceSink(bool enabled = false) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  void emit(Cycles at, int core, std::string_view subject,
            std::string_view action, const std::string& detail = {});

  const std::vector<std::string>& lines() const { return lines_; }
  void write(const std::string& path) const;
  void clear() { lines_.clear(); }

 private:
  bool enabled_;
  std::vector<std::string> lines_;
};

// Seeded pseudo-random source. The simulator core is deterministic and does
// not draw from it; it exists for scripted test-scenario generation and is
// recorded in run metadata so outputs can be reproduced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static constexpr std::string_view algorithm() { return "mt19937_64"; }

  std::uint64_t next() { return gen_(); }

  // Uniform in [lo, hi], inclusive.
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
    return lo + std::uniform_int_distribution<std::uint64_t>(0, hi - lo)(gen_);
  }

  double uniform_real() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace vlibsim
