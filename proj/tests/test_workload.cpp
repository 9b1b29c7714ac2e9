#include "doctest.h"

#include <set>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/workload.hpp"

using namespace vlibsim;

namespace {

WorkloadSpec stride_spec(std::uint64_t mi) {
  WorkloadSpec s;
  s.kind = WorkloadKind::mem_stride;
  s.miss_interval = mi;
  return s;
}

WorkloadSpec periodic_spec(Cycles period, Cycles offset, std::uint64_t work,
                           std::uint64_t mi) {
  WorkloadSpec s;
  s.kind = WorkloadKind::periodic;
  s.period = period;
  s.offset = offset;
  s.work_cycles = work;
  s.miss_interval = mi;
  return s;
}

}  // namespace

TEST_SUITE("workload") {

TEST_CASE("a fresh cursor starts cold: the first access misses immediately") {
  WorkloadSpec s = stride_spec(8);
  WorkloadCursor c;
  cursor_init(s, c);
  CHECK(cursor_at_miss(s, c));
  CHECK(instructions_to_boundary(s, c) == 0);
  cursor_take_miss(s, c);
  CHECK_FALSE(cursor_at_miss(s, c));
  CHECK(instructions_to_boundary(s, c) == 8);
}

TEST_CASE("retiring counts down to the next request; crossing it throws") {
  WorkloadSpec s = stride_spec(8);
  WorkloadCursor c;
  cursor_init(s, c);
  cursor_take_miss(s, c);
  cursor_retire(s, c, 5, true);
  CHECK(instructions_to_boundary(s, c) == 3);
  CHECK(c.instructions == 5);
  CHECK(c.fg_instructions == 5);
  cursor_retire(s, c, 3, false);
  CHECK(cursor_at_miss(s, c));
  CHECK(c.instructions == 8);
  CHECK(c.fg_instructions == 5);
  CHECK_THROWS_AS(cursor_retire(s, c, 1, true), std::logic_error);
}

TEST_CASE("a zero miss_interval never issues requests") {
  WorkloadSpec s;
  s.kind = WorkloadKind::cpu_hog;
  WorkloadCursor c;
  cursor_init(s, c);
  CHECK_FALSE(cursor_at_miss(s, c));
  CHECK_FALSE(instructions_to_boundary(s, c).has_value());
  cursor_retire(s, c, 100000, true);
  CHECK_FALSE(cursor_at_miss(s, c));
  CHECK_THROWS_AS(cursor_take_miss(s, c), std::logic_error);
}

TEST_CASE("the stride walk hops by jump, wraps, then shifts to the next line") {
  WorkloadSpec s = stride_spec(4);
  s.array_bytes = 3 * 8192;  // three jump-sized rows
  s.stride = 64;
  s.jump = 8192;
  WorkloadCursor c;
  cursor_init(s, c);

  std::vector<std::uint64_t> addrs;
  for (int i = 0; i < 7; ++i) {
    addrs.push_back(cursor_take_miss(s, c));
    c.to_next_miss = 0;  // fast-forward to the next request
  }
  // Walk 0, 8192, 16384, wrap to 64, 8256, 16448, wrap to 128 ...
  CHECK(addrs == std::vector<std::uint64_t>{0, 8192, 16384, 64, 8256, 16448, 128});
}

TEST_CASE("consecutive stride misses land in distinct lines until the array wraps") {
  WorkloadSpec s = stride_spec(1);
  s.array_bytes = 16 * 8192;
  WorkloadCursor c;
  cursor_init(s, c);
  std::set<std::uint64_t> seen;
  int walked = 16 * (8192 / 64);  // one full pass over the array
  for (int i = 0; i < walked; ++i) {
    CHECK(seen.insert(cursor_take_miss(s, c)).second);
    c.to_next_miss = 0;
  }
  CHECK(cursor_take_miss(s, c) == 0);  // second pass repeats the walk
}

TEST_CASE("periodic cursor is idle until a release and done after the work") {
  WorkloadSpec s = periodic_spec(1000, 200, 64, 0);
  WorkloadCursor c;
  cursor_init(s, c);
  CHECK_FALSE(cursor_active(s, c, 0));
  cursor_release_job(s, c, 200);
  CHECK(cursor_active(s, c, 200));
  CHECK(c.job_release == 200);
  CHECK(instructions_to_boundary(s, c) == 64);
  cursor_retire(s, c, 64, true);
  CHECK(cursor_job_done(s, c));
  CHECK_FALSE(cursor_active(s, c, 300));
  CHECK_THROWS_AS(cursor_retire(s, c, 1, true), std::logic_error);
}

TEST_CASE("a release landing mid-job queues and runs back-to-back") {
  WorkloadSpec s = periodic_spec(100, 0, 50, 0);
  WorkloadCursor c;
  cursor_init(s, c);
  cursor_release_job(s, c, 0);
  cursor_retire(s, c, 20, true);
  cursor_release_job(s, c, 100);  // previous job still has 30 to go
  CHECK(c.job_remaining == 30);
  REQUIRE(c.pending_releases.size() == 1);
  CHECK(c.pending_releases[0] == 100);
  CHECK(cursor_active(s, c, 120));
}

TEST_CASE("boundary is the nearer of miss runway and job end") {
  WorkloadSpec s = periodic_spec(1000, 0, 10, 4);
  WorkloadCursor c;
  cursor_init(s, c);
  cursor_release_job(s, c, 0);
  CHECK(instructions_to_boundary(s, c) == 0);  // cold first access
  cursor_take_miss(s, c);
  CHECK(instructions_to_boundary(s, c) == 4);   // miss runway below job end
  cursor_retire(s, c, 4, true);
  cursor_take_miss(s, c);
  cursor_retire(s, c, 4, true);
  cursor_take_miss(s, c);
  CHECK(instructions_to_boundary(s, c) == 2);   // job end is nearer now
  cursor_retire(s, c, 2, true);
  CHECK(cursor_job_done(s, c));
}

TEST_CASE("job work divisible by the miss interval ends every job at a request") {
  // This alignment is what makes equal-length jobs issue identical request
  // counts from the second job on, and with a cold start from the first.
  WorkloadSpec s = periodic_spec(40000, 0, 1092, 4);
  WorkloadCursor c;
  cursor_init(s, c);
  for (int job = 0; job < 3; ++job) {
    cursor_release_job(s, c, Cycles(job) * 40000);
    int misses = 0;
    while (!cursor_job_done(s, c)) {
      if (cursor_at_miss(s, c)) {
        cursor_take_miss(s, c);
        ++misses;
        continue;
      }
      std::uint64_t n = *instructions_to_boundary(s, c);
      cursor_retire(s, c, n, true);
    }
    CHECK(misses == 273);
  }
  CHECK(c.instructions == 3 * 1092);
}

TEST_CASE("an unresolved stall keeps the cursor active") {
  WorkloadSpec s = periodic_spec(100, 0, 10, 0);
  WorkloadCursor c;
  cursor_init(s, c);
  cursor_release_job(s, c, 0);
  cursor_retire(s, c, 10, true);
  c.stalled_until = 500;  // the last access is still in flight
  CHECK(cursor_active(s, c, 400));
}

TEST_CASE("batch walk strides sequentially and wraps") {
  WorkloadSpec s;
  s.kind = WorkloadKind::batch_mem;
  s.miss_interval = 2;
  s.array_bytes = 256;
  s.stride = 64;
  WorkloadCursor c;
  cursor_init(s, c);
  std::vector<std::uint64_t> addrs;
  for (int i = 0; i < 6; ++i) {
    addrs.push_back(cursor_take_miss(s, c));
    c.to_next_miss = 0;
  }
  CHECK(addrs == std::vector<std::uint64_t>{0, 64, 128, 192, 0, 64});
}

}  // TEST_SUITE("workload")
