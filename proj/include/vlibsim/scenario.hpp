#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlibsim/platform.hpp"
#include "vlibsim/types.hpp"

namespace vlibsim {

// Cross-VM call path constants, in cycles. Defaults match the calibration
// the models were fitted against; scenarios may override any of them.
struct OverheadTable {
  Cycles vm_entry = 531;         // unblocking a parked guest, per resume
  Cycles vm_exit = 481;          // guest parking itself after a service
  Cycles vlib_call = 4754;       // client-side kernel path, full round trip
  Cycles remote_desched = 1153;  // IPI through the completed exit on the callee core
  Cycles channel_mapping = 2377; // first server-side touch of a channel

  // The client path splits around the wait: issue half before the request is
  // visible to the callee, the rest after the completion flag is observed.
  Cycles call_issue() const { return vlib_call / 2; }
  Cycles call_return() const { return vlib_call - vlib_call / 2; }

  bool operator==(const OverheadTable&) const = default;
};

enum class CallKind : std::uint8_t { sync, async, donate, init, destroy };
const char* call_kind_name(CallKind k);

struct WorkloadConfig {
  WorkloadKind kind = WorkloadKind::cpu_hog;
  std::optional<std::uint64_t> miss_interval;  // defaulted per kind when absent
  std::uint64_t array_bytes = 6u << 20;
  std::uint64_t stride = 64;
  std::uint64_t jump = 8192;
  double period_ms = 0;
  double offset_ms = 0;
  std::uint64_t work_cycles = 0;
  std::uint64_t max_samples = 0;

  bool operator==(const WorkloadConfig&) const = default;
};

struct DomainConfig {
  std::string name;
  DomainKind kind = DomainKind::master;
  std::vector<CoreId> cores;
  std::optional<Port> port;
  bool server = false;

  bool operator==(const DomainConfig&) const = default;
};

struct ThreadConfig {
  std::string name;
  std::string domain;
  std::optional<WorkloadConfig> workload;
  std::optional<CoreId> core;  // required for vlib threads; master threads sit on their vcpu's core

  bool operator==(const ThreadConfig&) const = default;
};

struct VcpuConfig {
  std::string name;
  std::optional<double> budget_ms;
  std::optional<double> utilization_pct;  // alternative to budget_ms: C = pct/100 * T
  double period_ms = 0;
  CoreId core = 0;
  std::string thread;

  bool operator==(const VcpuConfig&) const = default;
};

struct ServiceConfig {
  std::optional<Cycles> demand;        // compute cycles; absent = runs forever
  std::uint64_t miss_interval = 0;     // DRAM request pattern while serving
  std::vector<Cycles> session;         // async stream: per-request demands, one entry/exit pair

  bool operator==(const ServiceConfig&) const = default;
};

struct CallConfig {
  double at_ms = 0;
  CallKind kind = CallKind::sync;
  std::string client;                  // issuing thread
  Port port = 0;
  std::optional<double> timeout_ms;    // absent = wait forever
  ServiceConfig service;
  std::optional<std::string> proxy_vcpu;  // async: vcpu that hosts the callee
  std::uint64_t channel_bytes = 4096;

  bool operator==(const CallConfig&) const = default;
};

struct BusConfig {
  Cycles base_service = 40;
  bool operator==(const BusConfig&) const = default;
};

struct ThrottleConfig {
  bool enabled = false;
  double monitor_period_ms = 1.0;
  double latency_threshold = 0;  // cycles per request; 0 = 1.5 * base_service
  double strength_k = 1.0;

  bool operator==(const ThrottleConfig&) const = default;
};

// Optional cross-run comparison block: names the measured vcpu and two
// sibling scenarios to rerun as baselines, so a sweep can emit slowdown and
// recovery columns next to the raw counters.
struct ExperimentConfig {
  std::string victim_vcpu;
  std::string baseline_alone;         // path, relative to this scenario file
  std::string baseline_uncontrolled;  // path, relative to this scenario file

  bool operator==(const ExperimentConfig&) const = default;
};

struct ScenarioConfig {
  std::string name;
  double cycles_per_ms = 3'300'000.0;
  std::uint32_t cores = 1;
  double duration_ms = 0;
  std::uint64_t seed = 1;
  bool async_enabled = false;
  bool strict_admission = false;
  double bg_quantum_ms = 1.0;

  std::vector<DomainConfig> domains;
  std::vector<ThreadConfig> threads;
  std::vector<VcpuConfig> vcpus;
  std::vector<CallConfig> calls;
  BusConfig bus;
  ThrottleConfig throttle;
  OverheadTable overheads;
  std::optional<ExperimentConfig> experiment;

  bool operator==(const ScenarioConfig&) const = default;

  Cycles to_cycles(double ms) const;
  Cycles duration_cycles() const { return to_cycles(duration_ms); }
};

struct ParseResult {
  std::optional<ScenarioConfig> config;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty() && config.has_value(); }
};

ParseResult parse_scenario(const std::string& text);
ParseResult load_scenario(const std::string& path);

// Canonical form: fixed key order, two-space indent, trailing newline.
// parse(serialize(c)) == c is relied on by tooling.
std::string serialize_scenario(const ScenarioConfig& cfg);

// Structural checks beyond JSON shape. Returns errors; benign oddities
// (a donated port that later receives another call, throttling without any
// possible background traffic) land in warnings.
void validate_scenario(const ScenarioConfig& cfg, std::vector<std::string>& errors,
                       std::vector<std::string>& warnings);

// FNV-1a over the canonical serialization; recorded in run metadata.
std::string scenario_digest(const ScenarioConfig& cfg);

// Dotted-path substitution on raw scenario JSON, for parameter sweeps.
// "vcpus.*.utilization_pct" fans out over every array element; a numeric
// segment indexes an array; the last segment may create a missing object
// key. The value literal is parsed as JSON and falls back to a string.
// Throws SimError when the path matches nothing.
std::string apply_json_path(const std::string& json_text, const std::string& path,
                            const std::string& value_literal);

// Derived workload spec with per-kind defaults applied and ms fields scaled.
WorkloadSpec workload_spec(const WorkloadConfig& w, double cycles_per_ms);

// Budget in ms, from whichever of budget_ms / utilization_pct is present.
double vcpu_budget_ms(const VcpuConfig& v);

// Instantiate the static machine described by a validated config: cores,
// domains, threads, vcpus, with names resolved to ids and ms scaled to cycles.
Platform build_platform(const ScenarioConfig& cfg);

}  // namespace vlibsim
