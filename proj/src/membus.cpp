#include "vlibsim/membus.hpp"

#include <algorithm>

namespace vlibsim {

BusModel::BusModel(Cycles base_service) : base_(base_service) {
  if (base_ == 0) throw SimError("bus base_service must be positive");
}

Cycles BusModel::issue(CoreId core, AccountId account, Cycles now) {
  Cycles start = std::max(now, server_free_);
  Cycles complete = start + base_;
  server_free_ = complete;
  reqs_.push_back(MemRequest{core, account, now, complete});
  ++total_;
  return complete;
}

void BusModel::inject(CoreId core, AccountId account, Cycles arrive, Cycles complete) {
  if (complete < arrive) throw SimError("injected request completes before it arrives");
  reqs_.push_back(MemRequest{core, account, arrive, complete});
  server_free_ = std::max(server_free_, complete);
  ++total_;
}

BusCounters BusModel::counters_for(Cycles t0, Cycles t1) const {
  if (t1 < t0) throw SimError("counter window ends before it starts");
  if (t0 < prune_horizon_) {
    throw std::logic_error("counter window reaches below the prune horizon");
  }
  BusCounters c{t0, t1, 0, 0};
  for (const auto& r : reqs_) {
    Cycles lo = std::max(r.arrive, t0);
    Cycles hi = std::min(r.complete, t1);
    if (hi > lo) c.occupancy += hi - lo;
    if (r.arrive >= t0 && r.arrive < t1) ++c.requests;
  }
  return c;
}

std::optional<double> BusModel::avg_latency(const BusCounters& c) {
  if (c.requests == 0) return std::nullopt;
  return static_cast<double>(c.occupancy) / static_cast<double>(c.requests);
}

std::uint64_t BusModel::requests_from(CoreId core, Cycles t0, Cycles t1) const {
  if (t0 < prune_horizon_) {
    throw std::logic_error("counter window reaches below the prune horizon");
  }
  std::uint64_t n = 0;
  for (const auto& r : reqs_) {
    if (r.core == core && r.arrive >= t0 && r.arrive < t1) ++n;
  }
  return n;
}

void BusModel::prune(Cycles before) {
  prune_horizon_ = std::max(prune_horizon_, before);
  while (!reqs_.empty() && reqs_.front().complete <= before) reqs_.pop_front();
  // Requests are appended in arrival order but completions are monotone too
  // (FIFO), so popping from the front is exact, not approximate.
}

}  // namespace vlibsim
