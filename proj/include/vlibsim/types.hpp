#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlibsim {

// All simulation time is kept in integer CPU cycles of the modeled machine.
// Millisecond-denominated scenario fields are converted once at build time.
using Cycles = std::uint64_t;

using EventId  = std::uint64_t;
using CoreId   = std::uint32_t;
using DomainId = std::uint32_t;
using ThreadId = std::uint32_t;
using VcpuId   = std::uint32_t;
using CallId   = std::uint64_t;
using Port     = std::uint32_t;

inline constexpr Cycles kNever = ~Cycles{0};

// Accounting entity for memory-bus traffic. Master-side traffic and
// client-funded server traffic are charged to a VCPU; traffic from an
// unmanaged guest domain (no server configured) has no VCPU to bill and is
// kept under the domain itself.
struct AccountId {
  enum class Kind : std::uint8_t { vcpu, domain };
  Kind kind = Kind::vcpu;
  std::uint32_t id = 0;
  auto operator<=>(const AccountId&) const = default;
};

inline AccountId account_vcpu(VcpuId id) { return {AccountId::Kind::vcpu, id}; }
inline AccountId account_domain(DomainId id) { return {AccountId::Kind::domain, id}; }

inline std::string to_string(const AccountId& a) {
  return (a.kind == AccountId::Kind::vcpu ? "vcpu/" : "vm/") + std::to_string(a.id);
}

// Scenario or protocol misuse (bad config, call on a destroyed channel, ...).
// Internal invariant violations use std::logic_error instead.
struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vlibsim
