#pragma once

#include <optional>
#include <vector>

#include "vlibsim/types.hpp"

namespace vlibsim {

enum class WorkloadKind : std::uint8_t {
  mem_stride,  // strided store walk over a large array, one DRAM write per interval
  periodic,    // job released every period; compute plus optional buffer misses
  batch_mem,   // throughput batch job streaming through memory
  cpu_hog,     // register-resident spin, never touches DRAM
};

const char* workload_kind_name(WorkloadKind k);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::cpu_hog;

  // Instructions retired between DRAM requests. 0 means the working set
  // stays cache-resident and the thread never issues one.
  std::uint64_t miss_interval = 0;

  // mem_stride shape. The walk stores one word per cache line, hopping by
  // `jump` and wrapping through `array_bytes`, so consecutive misses land in
  // distinct lines and pages the way the microbenchmark intends.
  std::uint64_t array_bytes = 6u << 20;
  std::uint64_t stride = 64;
  std::uint64_t jump = 8192;

  // periodic shape. `work_cycles` is the job's instruction count; elapsed
  // job time adds any memory stalls on top. First release at `offset`.
  Cycles period = 0;
  Cycles offset = 0;
  std::uint64_t work_cycles = 0;
  std::uint64_t max_samples = 0;  // 0 = record every job
};

// Per-thread execution position. The scheduler advances it in whole-cycle
// grants; it never looks at wall time itself.
struct WorkloadCursor {
  std::uint64_t instructions = 0;
  std::uint64_t fg_instructions = 0;
  std::uint64_t to_next_miss = 0;  // instructions left before the next request
  std::uint64_t job_remaining = 0; // periodic: instructions left in the running job
  std::vector<Cycles> pending_releases;  // releases that arrived mid-job (overrun)
  Cycles job_release = 0;          // nominal release of the running job
  Cycles stalled_until = 0;        // completion edge of the outstanding request, 0 = none
  std::uint64_t line_j = 0;        // mem_stride walk position
  std::uint64_t line_i = 0;
  std::uint64_t seq_addr = 0;      // batch_mem walk position
};

void cursor_init(const WorkloadSpec& spec, WorkloadCursor& cur);

// True when the thread has instructions to run right now (an unbounded
// stream, or an active/pending periodic job, or an unresolved stall).
bool cursor_active(const WorkloadSpec& spec, const WorkloadCursor& cur, Cycles now);

// Instructions until the next internal boundary (request issue or job end);
// empty for an unbounded burst. Zero never escapes: a zero boundary is
// resolved by the caller (issue or job completion) before running again.
std::optional<std::uint64_t> instructions_to_boundary(const WorkloadSpec& spec,
                                                      const WorkloadCursor& cur);

// Retires `n` instructions. Must not cross the boundary reported above.
void cursor_retire(const WorkloadSpec& spec, WorkloadCursor& cur, std::uint64_t n,
                   bool foreground);

bool cursor_at_miss(const WorkloadSpec& spec, const WorkloadCursor& cur);

// Address for the request about to be issued; advances the walk and resets
// the miss countdown.
std::uint64_t cursor_take_miss(const WorkloadSpec& spec, WorkloadCursor& cur);

// Periodic bookkeeping.
void cursor_release_job(const WorkloadSpec& spec, WorkloadCursor& cur, Cycles release);
bool cursor_job_done(const WorkloadSpec& spec, const WorkloadCursor& cur);

}  // namespace vlibsim
