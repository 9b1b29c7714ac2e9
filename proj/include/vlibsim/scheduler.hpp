#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/membus.hpp"
#include "vlibsim/platform.hpp"
#include "vlibsim/types.hpp"

namespace vlibsim {

inline constexpr VcpuId kNoVcpu = std::numeric_limits<VcpuId>::max();

// What a core is burning its cycles on. Uniform within a segment: every
// dispatch computes the time of the next internal transition, so an early
// interrupt can charge the elapsed span pro rata without replaying it.
enum class Activity : std::uint8_t {
  idle,      // nothing runnable (or the core is throttled)
  compute,   // retiring workload instructions, one per cycle
  stalled,   // blocked on an outstanding memory request
  overhead,  // charged protocol cycles (call issue, return path)
  spin,      // busy-wait: polling a completion flag, or an idle host thread
};

const char* activity_name(Activity a);

// One accounting row per VCPU per scheduling period, cut at the boundary.
struct PeriodRow {
  VcpuId vcpu = 0;
  std::uint64_t period = 0;     // index since run start
  Cycles period_start = 0;
  Cycles budget = 0;            // configured C
  Cycles fg_used = 0;           // budget actually consumed
  Cycles bg_used = 0;           // background (depleted-mode) cycles received
  Cycles overhead_cycles = 0;
  Cycles spin_cycles = 0;
  Cycles stall_cycles = 0;
  std::uint64_t instructions = 0;
  std::uint64_t fg_instructions = 0;
  std::uint64_t mem_requests = 0;
  Cycles remote_cpu = 0;            // guest-side cycles folded in this period
  std::uint64_t remote_requests = 0;
};

struct JobSample {
  ThreadId thread = 0;
  std::uint64_t job = 0;
  Cycles release = 0;
  Cycles complete = 0;
};

// Budget/period scheduler for the master cores. Each VCPU gets its full
// budget back at every period boundary (unused budget does not carry) and
// runs foreground while budget lasts; rate-monotonic priority arbitrates
// between foreground candidates. Once every resident VCPU is depleted the
// core falls back to background mode, which shares time by total background
// consumption in fixed quanta. Guest cores are not managed here.
class MasterScheduler {
 public:
  MasterScheduler(const Platform& plat, Engine& eng, BusModel& bus, TraceSink& trace,
                  Cycles bg_quantum);

  // Schedules period boundaries and job releases, arms the initial budgets.
  // Callers still need one settle pass at t=0 to place threads on cores.
  void start(Cycles run_end);

  void mark_core(CoreId c);
  void mark_thread(ThreadId t);
  bool any_dirty() const { return !dirty_.empty(); }

  // Charges and re-dispatches every dirty core. One pass; returns true if it
  // did anything. Transition callbacks may re-mark cores, so the caller
  // loops until the whole simulation is quiet.
  bool flush();

  // Emits deferred foreground transitions: compares the set of VCPUs
  // currently running foreground against the last settled set and fires
  // fg_stopped for leavers, then fg_started for arrivals. Deferring to
  // settle time keeps a replenish-and-continue at one instant from looking
  // like a stop/start pair.
  void settle_gates();
  void on_fg_started(std::function<void(VcpuId)> fn) { fg_started_.push_back(std::move(fn)); }
  void on_fg_stopped(std::function<void(VcpuId)> fn) { fg_stopped_.push_back(std::move(fn)); }

  // Settled view of the gate: true between the fg_started and fg_stopped
  // edges for this VCPU. The call layer keys remote execution off this.
  bool gate_open(VcpuId v) const { return gate_active_.count(v) != 0; }

  // Client-side protocol work, injected by the call layer. Overhead runs
  // whenever the thread next holds its core, foreground or background, and
  // `done` fires the moment the last cycle is charged. A spinning thread
  // burns cycles without retiring anything until the flag is cleared.
  void push_overhead(ThreadId t, Cycles n, std::function<void()> done);
  void set_spin(ThreadId t, bool on);
  bool spinning(ThreadId t) const;

  // Guest-side usage paid on behalf of this VCPU (entry/exit, demand,
  // desched), folded into the current period's row.
  void merge_remote_usage(VcpuId v, const ResourceUsage& u);

  std::optional<VcpuId> core_foreground(CoreId c) const;
  bool vcpu_foreground(VcpuId v) const;

  // A core is background class when no resident VCPU could run foreground
  // right now; such a core only carries best-effort work.
  bool core_background_class(CoreId c) const;
  void set_throttle(CoreId c, Cycles until);

  // Charges the running segment up to now. Handlers that read accounting
  // state mid-event (period rows, summaries) call this first.
  void charge_core(CoreId c);

  // End of run: charge every managed core and emit the in-progress period
  // rows, so a run that stops mid-period still accounts for the tail.
  void finalize();

  void on_period_row(std::function<void(const PeriodRow&)> fn) {
    row_sinks_.push_back(std::move(fn));
  }
  void on_job_sample(std::function<void(const JobSample&)> fn) {
    sample_sinks_.push_back(std::move(fn));
  }

  // Introspection for tests and summaries.
  Cycles budget_left(VcpuId v) const { return vcpus_[v].budget_left; }
  Cycles bgt_consumed(VcpuId v) const { return vcpus_[v].bgt; }
  const WorkloadCursor& cursor(ThreadId t) const { return threads_[t].cursor; }
  Activity core_activity(CoreId c) const { return cores_[c].act; }
  const PeriodRow& current_row(VcpuId v) const { return vcpus_[v].acc; }

 private:
  struct ThreadRun {
    bool managed = false;          // lives in the master domain
    bool has_workload = false;
    WorkloadSpec spec;
    WorkloadCursor cursor;
    Cycles overhead_left = 0;
    std::function<void()> overhead_done;
    bool spin = false;
    bool job_open = false;  // a periodic job is in flight (maybe stalled)
    std::uint64_t jobs_recorded = 0;
    std::uint64_t releases_made = 0;
  };

  struct VcpuRun {
    Cycles budget = 0;
    Cycles period_len = 0;
    Cycles budget_left = 0;
    Cycles bgt = 0;
    PeriodRow acc;
  };

  struct CoreRun {
    bool managed = false;
    std::vector<VcpuId> residents;  // rate-monotonic order: (period, id)
    VcpuId occupant = kNoVcpu;
    bool fg = false;
    Activity act = Activity::idle;
    Cycles seg_start = 0;
    Cycles quantum_end = 0;
    Cycles throttled_until = 0;
    EventId timer = 0;
  };

  void charge(CoreRun& core, Cycles now);
  void advance_thread(CoreId c, Cycles now);
  bool thread_active(const ThreadRun& t, Cycles now) const;
  void dispatch(CoreId c, Cycles now);
  void boundary(VcpuId v);
  void release(ThreadId t, Cycles at);
  void emit_row(VcpuId v, Cycles boundary_at);

  const Platform& plat_;
  Engine& eng_;
  BusModel& bus_;
  TraceSink& trace_;
  Cycles quantum_;
  Cycles run_end_ = 0;

  std::vector<ThreadRun> threads_;
  std::vector<VcpuRun> vcpus_;
  std::vector<CoreRun> cores_;
  std::set<CoreId> dirty_;
  std::set<VcpuId> gate_active_;

  std::vector<std::function<void(VcpuId)>> fg_started_;
  std::vector<std::function<void(VcpuId)>> fg_stopped_;
  std::vector<std::function<void(const PeriodRow&)>> row_sinks_;
  std::vector<std::function<void(const JobSample&)>> sample_sinks_;
};

}  // namespace vlibsim
