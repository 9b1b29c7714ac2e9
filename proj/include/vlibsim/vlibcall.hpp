#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/membus.hpp"
#include "vlibsim/platform.hpp"
#include "vlibsim/scenario.hpp"
#include "vlibsim/scheduler.hpp"
#include "vlibsim/types.hpp"

namespace vlibsim {

enum class CallStatus : std::uint8_t {
  scripted,   // not issued yet (client was busy with an earlier call)
  issuing,    // client is charging the issue overhead
  queued,     // sitting in the domain's FIFO, or in service
  done,
  timed_out,
  donated,    // establishment finished; the domain keeps the cores
};

const char* call_status_name(CallStatus s);

// One row per scripted call; becomes calls.csv.
struct CallRecord {
  CallId id = 0;
  CallKind kind = CallKind::sync;
  ThreadId client = 0;
  VcpuId funder = 0;  // whose foreground windows drive the guest-side work
  Port port = 0;
  DomainId domain = 0;
  std::uint64_t ops = 1;
  Cycles issued_at = kNever;         // client began the issue overhead
  Cycles enqueued_at = kNever;       // entered the domain queue
  Cycles first_service_at = kNever;  // guest core first ran for it
  Cycles flag_at = kNever;           // completion flag write (guest side)
  Cycles completed_at = kNever;      // client observed completion / gave up
  CallStatus status = CallStatus::scripted;
  std::uint32_t suspensions = 0;
  ResourceUsage charged;  // guest-side usage billed to the funder
};

// Guest-side execution span, reported as it is charged. Property tests use
// these to check that remote work only happens under an open gate.
struct ServiceSegment {
  CallId call = 0;
  CoreId core = 0;
  char phase = '?';  // E ntry, M apping, D emand, s talled, X exit, S ave (desched)
  Cycles start = 0;
  Cycles end = 0;
};

// Cross-VM call machinery plus the guest cores it runs on.
//
// A call from a master thread charges half the call cost on the client core,
// then queues at the target domain. The domain services calls one at a time
// in arrival order: world entry, a one-time channel mapping, the demand
// itself, world exit; the completion flag is written at the end of exit and
// the client spends the other half of the call cost picking up the result.
// Guest-side work only proceeds while the funding VCPU holds its master core
// foreground; losing the core costs a context save on the guest side and a
// fresh world entry when service resumes. Donated domains keep their cores
// and run their own threads during the donor's foreground windows, with the
// same save/entry cost at each window edge.
class CallEngine {
 public:
  struct Scripted {
    CallKind kind = CallKind::sync;
    ThreadId client = 0;
    VcpuId funder = 0;
    Port port = 0;
    DomainId domain = 0;
    Cycles timeout = 0;  // 0 = none
    bool unbounded = false;
    Cycles demand = 0;
    std::uint64_t ops = 1;
    std::uint64_t miss_interval = 0;
    std::uint64_t channel_bytes = 4096;
  };

  CallEngine(const Platform& plat, Engine& eng, BusModel& bus, MasterScheduler& sched,
             TraceSink& trace, const OverheadTable& costs, Cycles quantum);

  // Schedules releases for guest periodic threads.
  void start(Cycles run_end);

  // Registers a call to be issued at `at` (or queued behind the client's
  // earlier calls if it is still busy with one).
  void script(const Scripted& call, Cycles at);

  void mark_core(CoreId c);
  bool any_dirty() const { return !dirty_.empty(); }
  bool flush();

  // End of run: charge every guest core and fold still-running stream usage
  // into the funders, so accounting matches what was actually consumed.
  void finalize();

  // Scheduler gate edges; MasterScheduler::settle_gates feeds these.
  void fg_started(VcpuId v);
  void fg_stopped(VcpuId v);

  bool core_background_class(CoreId c) const;
  void set_throttle(CoreId c, Cycles until);

  const std::vector<CallRecord>& calls() const { return records_; }
  const ResourceUsage& thread_usage(ThreadId t) const { return threads_[t].usage; }
  std::uint64_t thread_instructions(ThreadId t) const { return threads_[t].cursor.instructions; }

  void on_job_sample(std::function<void(const JobSample&)> fn) {
    sample_sinks_.push_back(std::move(fn));
  }
  void on_service_segment(std::function<void(const ServiceSegment&)> fn) {
    segment_sinks_.push_back(std::move(fn));
  }

 private:
  enum class Phase : std::uint8_t { entry, mapping, demand, exit_, desched };
  enum class StreamState : std::uint8_t { waiting, running, suspended };
  enum class Mode : std::uint8_t { idle, gate, stream, thread };

  struct Stream {
    CallId call = 0;
    StreamState state = StreamState::waiting;
    Phase phase = Phase::entry;
    Cycles phase_left = 0;
    // A suspension saves the interrupted phase here; entry itself is never
    // saved because resuming always pays a fresh world entry anyway.
    Phase resume_to = Phase::entry;  // entry = nothing saved, follow the chain
    Cycles resume_left = 0;
    bool mapping_needed = false;
    bool unbounded = false;
    Cycles demand_left = 0;
    std::uint64_t miss_interval = 0;
    std::uint64_t to_next_miss = 0;
    Cycles stalled_until = 0;
    bool abandoned = false;
    ResourceUsage usage;  // accrued since the last merge into the funder
  };

  struct DomainRun {
    bool server = false;
    CoreId service_core = 0;
    std::vector<CallId> queue;  // head is the call in service
    std::optional<Stream> active;
    bool donated = false;
    VcpuId donor = kNoVcpu;
    CallId donation = 0;
  };

  struct GuestThreadRun {
    bool present = false;  // guest-domain thread with a workload
    DomainId home = 0;
    WorkloadSpec spec;
    WorkloadCursor cursor;
    bool job_open = false;
    std::uint64_t jobs_recorded = 0;
    std::uint64_t releases_made = 0;
    ResourceUsage usage;
  };

  struct GuestCoreRun {
    bool managed = false;  // guest core
    DomainId owner = 0;
    bool is_service_core = false;
    std::vector<ThreadId> residents;
    Mode mode = Mode::idle;
    ThreadId thread = 0;         // mode == thread
    bool running_stalled = false;  // the occupant (stream demand or thread) is in a stall
    Cycles gate_left = 0;       // mode == gate: window entry / save remaining
    bool gate_saving = false;
    bool window_open = false;   // donated domain: inside a donor window
    Cycles seg_start = 0;
    Cycles quantum_end = 0;
    std::size_t rr_next = 0;
    Cycles throttled_until = 0;
    EventId timer = 0;
  };

  void begin_issue(CallId id);
  void issue_done(CallId id);
  void enqueue(CallId id);
  void kick_domain(DomainId d);
  void client_finished(CallId id);
  void push_return(CallId id);
  void on_timeout(CallId id);
  void finish_timeout(CallId id);
  void abandon_finish(DomainId d);
  void flag_actions(DomainId d);
  void donate_finish(DomainId d);
  void merge_stream_usage(DomainId d);
  void erase_channel(ThreadId client, Port port);

  void charge(CoreId c, Cycles now);
  bool normalize(CoreId c, Cycles now);  // true if anything changed
  void dispatch(CoreId c, Cycles now);
  bool stream_has_demand(const Stream& s) const;
  bool thread_eligible(const GuestCoreRun& core, ThreadId t, Cycles now) const;
  void release(ThreadId t, Cycles at);
  void emit_segment(CallId call, CoreId core, char phase, Cycles start, Cycles end);

  const Platform& plat_;
  Engine& eng_;
  BusModel& bus_;
  MasterScheduler& sched_;
  TraceSink& trace_;
  OverheadTable costs_;
  Cycles quantum_;

  std::vector<CallRecord> records_;
  std::vector<Scripted> scripts_;          // parallel to records_
  std::vector<DomainRun> domains_;
  std::vector<GuestThreadRun> threads_;
  std::vector<GuestCoreRun> cores_;
  std::map<std::pair<ThreadId, Port>, bool> mapped_;
  std::map<ThreadId, CallId> busy_;              // client → call in flight
  std::map<ThreadId, std::deque<CallId>> backlog_;
  std::map<CallId, EventId> timeout_events_;
  std::set<CoreId> dirty_;

  std::vector<std::function<void(const JobSample&)>> sample_sinks_;
  std::vector<std::function<void(const ServiceSegment&)>> segment_sinks_;
};

}  // namespace vlibsim
