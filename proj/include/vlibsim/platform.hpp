#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlibsim/types.hpp"
#include "vlibsim/workload.hpp"

namespace vlibsim {

enum class DomainKind : std::uint8_t { master, vlib };
enum class GateState : std::uint8_t { running, blocked };
enum class ThreadState : std::uint8_t { ready, remote, blocked, done };

const char* thread_state_name(ThreadState s);

// Per-entity resource accounting. Server-side usage is folded into the
// calling thread's VCPU when the callee is descheduled or finishes, so the
// client pays for remote execution the same way it pays for its own.
struct ResourceUsage {
  Cycles cpu_cycles = 0;
  std::uint64_t mem_requests = 0;
  std::uint64_t cache_bytes = 0;

  ResourceUsage& operator+=(const ResourceUsage& o) {
    cpu_cycles += o.cpu_cycles;
    mem_requests += o.mem_requests;
    cache_bytes += o.cache_bytes;
    return *this;
  }
};

struct CoreInfo {
  CoreId id = 0;
  DomainId owner = 0;
  Cycles throttled_until = 0;
};

struct DomainInfo {
  DomainId id = 0;
  std::string name;
  DomainKind kind = DomainKind::master;
  std::optional<Port> port;   // vlib domains only
  std::vector<CoreId> cores;
  bool server = false;        // a guest without a server runs uncontrolled
};

struct ThreadInfo {
  ThreadId id = 0;
  std::string name;
  DomainId home = 0;
  std::optional<VcpuId> vcpu;           // master threads only
  std::optional<WorkloadSpec> workload;
  CoreId core = 0;                      // resolved placement
};

struct VcpuInfo {
  VcpuId id = 0;
  std::string name;
  Cycles budget = 0;  // C, replenished in full at every period boundary
  Cycles period = 0;  // T; RMS priority is ascending period
  CoreId core = 0;
  ThreadId thread = 0;
};

struct Platform {
  std::vector<CoreInfo> cores;
  std::vector<DomainInfo> domains;
  std::vector<ThreadInfo> threads;
  std::vector<VcpuInfo> vcpus;

  std::map<std::string, ThreadId> thread_by_name;
  std::map<std::string, VcpuId> vcpu_by_name;
  std::map<std::string, DomainId> domain_by_name;

  const DomainInfo* domain_of_port(Port p) const;
  bool is_master_core(CoreId c) const;
};

// Least upper utilization bound for rate-monotonic scheduling of n tasks.
double rms_bound(std::size_t n);

// True when every period divides every longer one.
bool harmonic_periods(std::vector<Cycles> periods);

Cycles hyperperiod(const std::vector<Cycles>& periods);

struct CoreAdmission {
  CoreId core = 0;
  double utilization = 0.0;
  double bound = 0.0;   // 1.0 for harmonic sets
  bool harmonic = false;
  bool accepted = true;
};

struct AdmissionVerdict {
  bool accepted = true;
  std::vector<CoreAdmission> cores;
  std::vector<std::string> reasons;  // one line per rejecting core
};

// Per-core schedulability check for the VCPU set. Harmonic period sets pass
// up to full utilization; everything else is held to the RMS bound.
AdmissionVerdict admit(const std::vector<VcpuInfo>& vcpus,
                       const std::vector<CoreInfo>& cores);

}  // namespace vlibsim
