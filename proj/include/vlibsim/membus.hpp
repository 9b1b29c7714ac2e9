#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "vlibsim/types.hpp"

namespace vlibsim {

// One DRAM transaction. The issuing thread blocks from arrive to complete;
// with a single-server FIFO bus the completion time is fixed at issue time,
// so a request is fully described by its two edges.
struct MemRequest {
  CoreId core = 0;       // physical core the access was issued from
  AccountId account;     // entity billed for it
  Cycles arrive = 0;
  Cycles complete = 0;
};

// Windowed counters in the style of an uncore PMU: occupancy accumulates the
// number of in-flight requests once per cycle, requests counts arrivals.
struct BusCounters {
  Cycles window_start = 0;
  Cycles window_end = 0;
  std::uint64_t occupancy = 0;
  std::uint64_t requests = 0;
};

// Shared memory bus: one FIFO server, fixed service time per request.
// Requests never reorder, so completion = max(arrive, previous completion)
// + base_service.
class BusModel {
 public:
  explicit BusModel(Cycles base_service);

  Cycles base_service() const { return base_; }

  // Normal path: computes the completion edge, records the request, returns
  // when the issuing thread may proceed.
  Cycles issue(CoreId core, AccountId account, Cycles now);

  // Replay path: records a request with both edges supplied verbatim.
  // Counter queries treat it like any other request. Used to feed recorded
  // or hand-built intervals through the counter logic.
  void inject(CoreId core, AccountId account, Cycles arrive, Cycles complete);

  // Exact window counters over [t0, t1): occupancy is the sum over requests
  // of the overlap between [arrive, complete) and the window; requests is
  // the number of arrivals inside the window. The window must not reach
  // below the prune horizon.
  BusCounters counters_for(Cycles t0, Cycles t1) const;

  // occupancy / requests; empty when the window saw no arrivals.
  static std::optional<double> avg_latency(const BusCounters& c);

  // Arrivals in [t0, t1) issued from one core.
  std::uint64_t requests_from(CoreId core, Cycles t0, Cycles t1) const;

  std::uint64_t total_requests() const { return total_; }
  const std::deque<MemRequest>& history() const { return reqs_; }

  // Drops requests whose pending interval ends at or before `before`.
  // Long runs call this once per monitor window to keep memory flat.
  void prune(Cycles before);

 private:
  Cycles base_;
  Cycles server_free_ = 0;
  Cycles prune_horizon_ = 0;
  std::uint64_t total_ = 0;
  std::deque<MemRequest> reqs_;
};

}  // namespace vlibsim
