#include "doctest.h"

#include <algorithm>
#include <deque>
#include <vector>

#include "vlibsim/engine.hpp"
#include "vlibsim/membus.hpp"

using namespace vlibsim;

namespace {

// The slow oracle: walk every cycle of the window and count pending
// requests one by one. The model must agree with this exactly.
BusCounters recount(const std::deque<MemRequest>& reqs, Cycles t0, Cycles t1) {
  BusCounters c{t0, t1, 0, 0};
  for (Cycles t = t0; t < t1; ++t) {
    for (const MemRequest& r : reqs) {
      if (r.arrive <= t && t < r.complete) ++c.occupancy;
    }
  }
  for (const MemRequest& r : reqs) {
    if (r.arrive >= t0 && r.arrive < t1) ++c.requests;
  }
  return c;
}

}  // namespace

TEST_SUITE("membus") {

TEST_CASE("a lone request completes after exactly base_service") {
  BusModel bus(40);
  CHECK(bus.issue(0, account_vcpu(0), 100) == 140);
}

TEST_CASE("queued arrivals (0,1,1) with base 2 complete at (2,4,6)") {
  BusModel bus(2);
  CHECK(bus.issue(0, account_vcpu(0), 0) == 2);
  CHECK(bus.issue(1, account_vcpu(1), 1) == 4);
  CHECK(bus.issue(2, account_vcpu(2), 1) == 6);
}

TEST_CASE("back-to-back requests from one core space exactly base_service apart") {
  BusModel bus(40);
  Cycles prev = 0;
  Cycles t = 0;
  for (int i = 0; i < 8; ++i) {
    Cycles done = bus.issue(0, account_vcpu(0), t);
    if (i > 0) CHECK(done - prev == 40);
    prev = done;
    t = done;  // blocking miss: the next one leaves when this one is home
  }
}

TEST_CASE("counter definition: intervals (0,2),(1,5),(1,5) over [0,5)") {
  // The uncore-PMU worked example: occupancy sums pending requests per
  // cycle, requests counts arrivals. These intervals are fed verbatim; they
  // are not FIFO and don't need to be.
  BusModel bus(40);
  bus.inject(0, account_vcpu(0), 0, 2);
  bus.inject(1, account_vcpu(1), 1, 5);
  bus.inject(2, account_vcpu(2), 1, 5);
  BusCounters c = bus.counters_for(0, 5);
  CHECK(c.occupancy == 10);
  CHECK(c.requests == 3);
  REQUIRE(BusModel::avg_latency(c).has_value());
  CHECK(*BusModel::avg_latency(c) == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(recount(bus.history(), 0, 5).occupancy == 10);
}

TEST_CASE("avg_latency is empty when a window saw no arrivals") {
  BusModel bus(40);
  CHECK_FALSE(BusModel::avg_latency(bus.counters_for(0, 1000)).has_value());
  bus.inject(0, account_vcpu(0), 2000, 2040);
  CHECK_FALSE(BusModel::avg_latency(bus.counters_for(0, 1000)).has_value());
}

TEST_CASE("an uncontended stream averages exactly base_service") {
  BusModel bus(40);
  for (int i = 0; i < 10; ++i) {
    bus.issue(0, account_vcpu(0), Cycles(i) * 1000);
  }
  auto avg = BusModel::avg_latency(bus.counters_for(0, 10000));
  REQUIRE(avg.has_value());
  CHECK(*avg == 40.0);
}

TEST_CASE("window edges: arrivals counted half-open, occupancy clipped") {
  BusModel bus(10);
  bus.inject(0, account_vcpu(0), 90, 110);   // straddles the left edge
  bus.inject(0, account_vcpu(0), 100, 120);  // arrival on the edge counts
  bus.inject(0, account_vcpu(0), 199, 230);  // arrival just inside
  bus.inject(0, account_vcpu(0), 200, 210);  // arrival on the right edge: out
  BusCounters c = bus.counters_for(100, 200);
  CHECK(c.requests == 2);
  // 10 cycles of the first, 20 of the second, 1 of the third, 0 of the last.
  CHECK(c.occupancy == 31);
  BusCounters slow = recount(bus.history(), 100, 200);
  CHECK(c.occupancy == slow.occupancy);
  CHECK(c.requests == slow.requests);
}

TEST_CASE("incremental counters equal the per-cycle recount on random traffic") {
  Rng rng(2026);
  for (int round = 0; round < 50; ++round) {
    BusModel bus(1 + rng.uniform(1, 60));
    Cycles t = 0;
    std::uint64_t n = rng.uniform(1, 80);
    for (std::uint64_t i = 0; i < n; ++i) {
      t += rng.uniform(0, 120);
      if (rng.uniform(0, 3) == 0) {
        Cycles dur = rng.uniform(1, 90);
        bus.inject(CoreId(rng.uniform(0, 3)), account_vcpu(0), t, t + dur);
      } else {
        bus.issue(CoreId(rng.uniform(0, 3)), account_vcpu(0), t);
      }
    }
    Cycles t0 = rng.uniform(0, t);
    Cycles t1 = t0 + rng.uniform(0, 2000);
    BusCounters fast = bus.counters_for(t0, t1);
    BusCounters slow = recount(bus.history(), t0, t1);
    CHECK(fast.occupancy == slow.occupancy);
    CHECK(fast.requests == slow.requests);
  }
}

TEST_CASE("adding a co-runner never speeds up anyone else's request") {
  Rng rng(99);
  for (int round = 0; round < 20; ++round) {
    std::vector<Cycles> mine;
    Cycles t = 0;
    for (int i = 0; i < 30; ++i) {
      t += rng.uniform(0, 100);
      mine.push_back(t);
    }
    std::vector<Cycles> theirs;
    t = rng.uniform(0, 50);
    for (int i = 0; i < 30; ++i) {
      t += rng.uniform(0, 100);
      theirs.push_back(t);
    }

    BusModel alone(40);
    std::vector<Cycles> base;
    for (Cycles a : mine) base.push_back(alone.issue(0, account_vcpu(0), a));

    BusModel shared(40);
    std::vector<Cycles> contended;
    std::size_t i = 0, j = 0;
    while (i < mine.size() || j < theirs.size()) {
      bool pick_mine = j == theirs.size() ||
                       (i < mine.size() && mine[i] <= theirs[j]);
      if (pick_mine) {
        contended.push_back(shared.issue(0, account_vcpu(0), mine[i++]));
      } else {
        shared.issue(1, account_vcpu(1), theirs[j++]);
      }
    }
    for (std::size_t k = 0; k < base.size(); ++k) {
      CHECK(contended[k] >= base[k]);
    }
  }
}

TEST_CASE("requests_from splits arrivals by issuing core") {
  BusModel bus(5);
  bus.issue(0, account_vcpu(0), 0);
  bus.issue(1, account_vcpu(1), 1);
  bus.issue(0, account_vcpu(0), 2);
  bus.issue(2, account_vcpu(2), 3);
  CHECK(bus.requests_from(0, 0, 10) == 2);
  CHECK(bus.requests_from(1, 0, 10) == 1);
  CHECK(bus.requests_from(2, 0, 10) == 1);
  CHECK(bus.requests_from(0, 0, 10) + bus.requests_from(1, 0, 10) +
            bus.requests_from(2, 0, 10) ==
        bus.counters_for(0, 10).requests);
  CHECK(bus.total_requests() == 4);
}

TEST_CASE("prune keeps later windows intact and forbids reaching below") {
  BusModel bus(40);
  for (int i = 0; i < 10; ++i) bus.issue(0, account_vcpu(0), Cycles(i) * 100);
  BusCounters before = bus.counters_for(500, 900);
  bus.prune(500);
  CHECK(bus.history().size() < 10);
  BusCounters after = bus.counters_for(500, 900);
  CHECK(after.occupancy == before.occupancy);
  CHECK(after.requests == before.requests);
  CHECK_THROWS_AS(bus.counters_for(499, 600), std::logic_error);
  CHECK_THROWS_AS(bus.requests_from(0, 0, 600), std::logic_error);
}

TEST_CASE("a zero-cycle bus is refused") {
  CHECK_THROWS_AS(BusModel(0), SimError);
}

}  // TEST_SUITE("membus")
