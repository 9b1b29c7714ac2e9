#include "vlibsim/platform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace vlibsim {

const char* thread_state_name(ThreadState s) {
  switch (s) {
    case ThreadState::ready: return "ready";
    case ThreadState::remote: return "remote";
    case ThreadState::blocked: return "blocked";
    case ThreadState::done: return "done";
  }
  return "?";
}

const DomainInfo* Platform::domain_of_port(Port p) const {
  for (const auto& d : domains) {
    if (d.port && *d.port == p) return &d;
  }
  return nullptr;
}

bool Platform::is_master_core(CoreId c) const {
  return domains[cores.at(c).owner].kind == DomainKind::master;
}

double rms_bound(std::size_t n) {
  if (n == 0) return 1.0;
  // n * (2^(1/n) - 1); expm1 keeps the large-n tail accurate where pow(2,..)
  // would round the interesting digits away.
  double ln2_over_n = std::log(2.0) / static_cast<double>(n);
  return static_cast<double>(n) * std::expm1(ln2_over_n);
}

bool harmonic_periods(std::vector<Cycles> periods) {
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  for (std::size_t i = 1; i < periods.size(); ++i) {
    if (periods[i - 1] == 0 || periods[i] % periods[i - 1] != 0) return false;
  }
  return true;
}

Cycles hyperperiod(const std::vector<Cycles>& periods) {
  Cycles h = 1;
  for (Cycles p : periods) h = std::lcm(h, p);
  return h;
}

AdmissionVerdict admit(const std::vector<VcpuInfo>& vcpus,
                       const std::vector<CoreInfo>& cores) {
  AdmissionVerdict v;
  for (const auto& core : cores) {
    std::vector<const VcpuInfo*> on_core;
    for (const auto& vc : vcpus) {
      if (vc.core == core.id) on_core.push_back(&vc);
    }
    if (on_core.empty()) continue;

    CoreAdmission ca;
    ca.core = core.id;
    std::vector<Cycles> periods;
    long double u = 0.0L;
    for (const auto* vc : on_core) {
      if (vc->period == 0) throw SimError("vcpu " + vc->name + " has a zero period");
      u += static_cast<long double>(vc->budget) / static_cast<long double>(vc->period);
      periods.push_back(vc->period);
    }
    ca.utilization = static_cast<double>(u);
    ca.harmonic = harmonic_periods(periods);
    ca.bound = ca.harmonic ? 1.0 : rms_bound(on_core.size());
    // A hair of slack so sets built to sit exactly on the bound are not
    // rejected over the last float digit.
    ca.accepted = ca.utilization <= ca.bound + 1e-9;
    if (!ca.accepted) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "core %u: utilization %.6f exceeds %s bound %.6f (%zu vcpus)",
                    core.id, ca.utilization, ca.harmonic ? "harmonic" : "rms",
                    ca.bound, on_core.size());
      v.reasons.emplace_back(buf);
      v.accepted = false;
    }
    v.cores.push_back(ca);
  }
  return v;
}

}  // namespace vlibsim
