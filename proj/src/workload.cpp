#include "vlibsim/workload.hpp"

#include <algorithm>

namespace vlibsim {

const char* workload_kind_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::mem_stride: return "mem_stride";
    case WorkloadKind::periodic: return "periodic";
    case WorkloadKind::batch_mem: return "batch_mem";
    case WorkloadKind::cpu_hog: return "cpu_hog";
  }
  return "?";
}

void cursor_init(const WorkloadSpec& spec, WorkloadCursor& cur) {
  cur = WorkloadCursor{};
  // A fresh working set starts cold: the very first access goes to memory.
  cur.to_next_miss = 0;
  (void)spec;
}

bool cursor_active(const WorkloadSpec& spec, const WorkloadCursor& cur, Cycles now) {
  if (cur.stalled_until > now) return true;
  if (spec.kind == WorkloadKind::periodic) {
    return cur.job_remaining > 0 || !cur.pending_releases.empty() || cur.stalled_until > 0;
  }
  return true;  // unbounded streams always have work
}

std::optional<std::uint64_t> instructions_to_boundary(const WorkloadSpec& spec,
                                                      const WorkloadCursor& cur) {
  std::optional<std::uint64_t> b;
  if (spec.miss_interval > 0) b = cur.to_next_miss;
  if (spec.kind == WorkloadKind::periodic) {
    b = b ? std::min(*b, cur.job_remaining) : cur.job_remaining;
  }
  return b;
}

void cursor_retire(const WorkloadSpec& spec, WorkloadCursor& cur, std::uint64_t n,
                   bool foreground) {
  cur.instructions += n;
  if (foreground) cur.fg_instructions += n;
  if (spec.miss_interval > 0) {
    if (n > cur.to_next_miss) throw std::logic_error("retired past a request boundary");
    cur.to_next_miss -= n;
  }
  if (spec.kind == WorkloadKind::periodic) {
    if (n > cur.job_remaining) throw std::logic_error("retired past the job end");
    cur.job_remaining -= n;
  }
}

bool cursor_at_miss(const WorkloadSpec& spec, const WorkloadCursor& cur) {
  return spec.miss_interval > 0 && cur.to_next_miss == 0;
}

std::uint64_t cursor_take_miss(const WorkloadSpec& spec, WorkloadCursor& cur) {
  std::uint64_t addr = 0;
  switch (spec.kind) {
    case WorkloadKind::mem_stride: {
      addr = cur.line_i;
      cur.line_i += spec.jump;
      if (cur.line_i >= spec.array_bytes) {
        cur.line_j += spec.stride;
        if (cur.line_j >= spec.jump) cur.line_j = 0;
        cur.line_i = cur.line_j;
      }
      break;
    }
    case WorkloadKind::batch_mem:
    case WorkloadKind::periodic: {
      addr = cur.seq_addr;
      cur.seq_addr += spec.stride ? spec.stride : 64;
      if (spec.array_bytes && cur.seq_addr >= spec.array_bytes) cur.seq_addr = 0;
      break;
    }
    case WorkloadKind::cpu_hog:
      throw std::logic_error("cpu_hog issued a memory request");
  }
  cur.to_next_miss = spec.miss_interval;
  return addr;
}

void cursor_release_job(const WorkloadSpec& spec, WorkloadCursor& cur, Cycles release) {
  if (spec.kind != WorkloadKind::periodic) {
    throw std::logic_error("job release on a non-periodic workload");
  }
  if (cur.job_remaining > 0 || cur.stalled_until > 0) {
    cur.pending_releases.push_back(release);  // previous job overran; run back-to-back
    return;
  }
  cur.job_remaining = spec.work_cycles;
  cur.job_release = release;
}

bool cursor_job_done(const WorkloadSpec& spec, const WorkloadCursor& cur) {
  return spec.kind == WorkloadKind::periodic && cur.job_remaining == 0 &&
         cur.stalled_until == 0;
}

}  // namespace vlibsim
