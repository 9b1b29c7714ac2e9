#include "vlibsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace vlibsim {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

const char* call_kind_name(CallKind k) {
  switch (k) {
    case CallKind::sync: return "sync";
    case CallKind::async: return "async";
    case CallKind::donate: return "donate";
    case CallKind::init: return "init";
    case CallKind::destroy: return "destroy";
  }
  return "?";
}

Cycles ScenarioConfig::to_cycles(double ms) const {
  if (!(ms >= 0) || !(cycles_per_ms > 0)) {
    throw SimError("cannot convert " + std::to_string(ms) + " ms to cycles");
  }
  return static_cast<Cycles>(std::llround(ms * cycles_per_ms));
}

double vcpu_budget_ms(const VcpuConfig& v) {
  if (v.budget_ms) return *v.budget_ms;
  if (v.utilization_pct) return *v.utilization_pct / 100.0 * v.period_ms;
  return 0;
}

WorkloadSpec workload_spec(const WorkloadConfig& w, double cycles_per_ms) {
  WorkloadSpec s;
  s.kind = w.kind;
  if (w.miss_interval) {
    s.miss_interval = *w.miss_interval;
  } else {
    switch (w.kind) {
      case WorkloadKind::mem_stride: s.miss_interval = 8; break;
      case WorkloadKind::batch_mem: s.miss_interval = 8; break;
      case WorkloadKind::periodic: s.miss_interval = 0; break;
      case WorkloadKind::cpu_hog: s.miss_interval = 0; break;
    }
  }
  s.array_bytes = w.array_bytes;
  s.stride = w.stride;
  s.jump = w.jump;
  s.period = static_cast<Cycles>(std::llround(w.period_ms * cycles_per_ms));
  s.offset = static_cast<Cycles>(std::llround(w.offset_ms * cycles_per_ms));
  s.work_cycles = w.work_cycles;
  s.max_samples = w.max_samples;
  return s;
}

namespace {

// Field access with error accumulation: wrong types and unknown keys are
// reported with their location, parsing carries on so one pass surfaces
// every problem in the file.
class Reader {
 public:
  Reader(const json& j, std::string where, std::vector<std::string>& errs)
      : j_(j), where_(std::move(where)), errs_(errs) {}

  void allow(std::initializer_list<const char*> keys) {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) {
        if (it.key() == k) { known = true; break; }
      }
      if (!known) errs_.push_back(where_ + ": unknown key '" + it.key() + "'");
    }
  }

  bool has(const char* k) const { return j_.contains(k) && !j_[k].is_null(); }

  std::optional<double> num(const char* k) {
    if (!has(k)) return std::nullopt;
    if (!j_[k].is_number()) { bad(k, "a number"); return std::nullopt; }
    return j_[k].get<double>();
  }

  std::optional<std::uint64_t> uint(const char* k) {
    if (!has(k)) return std::nullopt;
    const json& v = j_[k];
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    bad(k, "a non-negative integer");
    return std::nullopt;
  }

  std::optional<bool> boolean(const char* k) {
    if (!has(k)) return std::nullopt;
    if (!j_[k].is_boolean()) { bad(k, "a boolean"); return std::nullopt; }
    return j_[k].get<bool>();
  }

  std::optional<std::string> str(const char* k) {
    if (!has(k)) return std::nullopt;
    if (!j_[k].is_string()) { bad(k, "a string"); return std::nullopt; }
    return j_[k].get<std::string>();
  }

  const json* arr(const char* k) {
    if (!has(k)) return nullptr;
    if (!j_[k].is_array()) { bad(k, "an array"); return nullptr; }
    return &j_[k];
  }

  const json* obj(const char* k) {
    if (!has(k)) return nullptr;
    if (!j_[k].is_object()) { bad(k, "an object"); return nullptr; }
    return &j_[k];
  }

  const std::string& where() const { return where_; }
  std::vector<std::string>& errs() { return errs_; }

 private:
  void bad(const char* k, const char* want) {
    errs_.push_back(where_ + "." + k + ": expected " + want);
  }

  const json& j_;
  std::string where_;
  std::vector<std::string>& errs_;
};

std::optional<WorkloadKind> workload_kind_from(const std::string& s) {
  if (s == "mem_stride") return WorkloadKind::mem_stride;
  if (s == "periodic") return WorkloadKind::periodic;
  if (s == "batch_mem") return WorkloadKind::batch_mem;
  if (s == "cpu_hog") return WorkloadKind::cpu_hog;
  return std::nullopt;
}

std::optional<CallKind> call_kind_from(const std::string& s) {
  if (s == "sync") return CallKind::sync;
  if (s == "async") return CallKind::async;
  if (s == "donate") return CallKind::donate;
  if (s == "init") return CallKind::init;
  if (s == "destroy") return CallKind::destroy;
  return std::nullopt;
}

WorkloadConfig parse_workload(const json& j, const std::string& where,
                              std::vector<std::string>& errs) {
  WorkloadConfig w;
  Reader r(j, where, errs);
  r.allow({"kind", "miss_interval", "array_bytes", "stride", "jump", "period_ms",
           "offset_ms", "work_cycles", "max_samples"});
  if (auto k = r.str("kind")) {
    if (auto kk = workload_kind_from(*k)) w.kind = *kk;
    else errs.push_back(where + ".kind: unknown workload kind '" + *k + "'");
  } else {
    errs.push_back(where + ": missing workload kind");
  }
  if (auto v = r.uint("miss_interval")) w.miss_interval = *v;
  if (auto v = r.uint("array_bytes")) w.array_bytes = *v;
  if (auto v = r.uint("stride")) w.stride = *v;
  if (auto v = r.uint("jump")) w.jump = *v;
  if (auto v = r.num("period_ms")) w.period_ms = *v;
  if (auto v = r.num("offset_ms")) w.offset_ms = *v;
  if (auto v = r.uint("work_cycles")) w.work_cycles = *v;
  if (auto v = r.uint("max_samples")) w.max_samples = *v;
  return w;
}

}  // namespace

ParseResult parse_scenario(const std::string& text) {
  ParseResult res;
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) {
    res.errors.push_back("not valid JSON");
    return res;
  }
  if (!root.is_object()) {
    res.errors.push_back("top level must be an object");
    return res;
  }

  ScenarioConfig cfg;
  auto& errs = res.errors;
  Reader r(root, "scenario", errs);
  r.allow({"name", "cycles_per_ms", "cores", "duration_ms", "seed", "async_enabled",
           "strict_admission", "bg_quantum_ms", "domains", "threads", "vcpus", "calls",
           "bus", "throttle", "overheads", "experiment"});

  if (auto v = r.str("name")) cfg.name = *v;
  if (auto v = r.num("cycles_per_ms")) cfg.cycles_per_ms = *v;
  if (auto v = r.uint("cores")) cfg.cores = static_cast<std::uint32_t>(*v);
  if (auto v = r.num("duration_ms")) cfg.duration_ms = *v;
  if (auto v = r.uint("seed")) cfg.seed = *v;
  if (auto v = r.boolean("async_enabled")) cfg.async_enabled = *v;
  if (auto v = r.boolean("strict_admission")) cfg.strict_admission = *v;
  if (auto v = r.num("bg_quantum_ms")) cfg.bg_quantum_ms = *v;

  if (const json* arr = r.arr("domains")) {
    int i = 0;
    for (const auto& dj : *arr) {
      std::string where = "domains[" + std::to_string(i++) + "]";
      DomainConfig d;
      Reader dr(dj, where, errs);
      dr.allow({"name", "kind", "cores", "port", "server"});
      if (auto v = dr.str("name")) d.name = *v;
      else errs.push_back(where + ": missing name");
      if (auto v = dr.str("kind")) {
        if (*v == "master") d.kind = DomainKind::master;
        else if (*v == "vlib") d.kind = DomainKind::vlib;
        else errs.push_back(where + ".kind: expected 'master' or 'vlib'");
      } else {
        errs.push_back(where + ": missing kind");
      }
      if (const json* cj = dr.arr("cores")) {
        for (const auto& c : *cj) {
          if (c.is_number_unsigned()) d.cores.push_back(c.get<CoreId>());
          else errs.push_back(where + ".cores: expected core ids");
        }
      }
      if (auto v = dr.uint("port")) d.port = static_cast<Port>(*v);
      if (auto v = dr.boolean("server")) d.server = *v;
      cfg.domains.push_back(std::move(d));
    }
  }

  if (const json* arr = r.arr("threads")) {
    int i = 0;
    for (const auto& tj : *arr) {
      std::string where = "threads[" + std::to_string(i++) + "]";
      ThreadConfig t;
      Reader tr(tj, where, errs);
      tr.allow({"name", "domain", "core", "workload"});
      if (auto v = tr.str("name")) t.name = *v;
      else errs.push_back(where + ": missing name");
      if (auto v = tr.str("domain")) t.domain = *v;
      else errs.push_back(where + ": missing domain");
      if (auto v = tr.uint("core")) t.core = static_cast<CoreId>(*v);
      if (const json* wj = tr.obj("workload")) {
        t.workload = parse_workload(*wj, where + ".workload", errs);
      }
      cfg.threads.push_back(std::move(t));
    }
  }

  if (const json* arr = r.arr("vcpus")) {
    int i = 0;
    for (const auto& vj : *arr) {
      std::string where = "vcpus[" + std::to_string(i++) + "]";
      VcpuConfig v;
      Reader vr(vj, where, errs);
      vr.allow({"name", "budget_ms", "utilization_pct", "period_ms", "core", "thread"});
      if (auto x = vr.str("name")) v.name = *x;
      else errs.push_back(where + ": missing name");
      if (auto x = vr.num("budget_ms")) v.budget_ms = *x;
      if (auto x = vr.num("utilization_pct")) v.utilization_pct = *x;
      if (auto x = vr.num("period_ms")) v.period_ms = *x;
      else errs.push_back(where + ": missing period_ms");
      if (auto x = vr.uint("core")) v.core = static_cast<CoreId>(*x);
      else errs.push_back(where + ": missing core");
      if (auto x = vr.str("thread")) v.thread = *x;
      else errs.push_back(where + ": missing thread");
      cfg.vcpus.push_back(std::move(v));
    }
  }

  if (const json* arr = r.arr("calls")) {
    int i = 0;
    for (const auto& cj : *arr) {
      std::string where = "calls[" + std::to_string(i++) + "]";
      CallConfig c;
      Reader cr(cj, where, errs);
      cr.allow({"at_ms", "kind", "client", "port", "timeout_ms", "service", "proxy_vcpu",
                "channel_bytes"});
      if (auto x = cr.num("at_ms")) c.at_ms = *x;
      if (auto x = cr.str("kind")) {
        if (auto kk = call_kind_from(*x)) c.kind = *kk;
        else errs.push_back(where + ".kind: unknown call kind '" + *x + "'");
      } else {
        errs.push_back(where + ": missing kind");
      }
      if (auto x = cr.str("client")) c.client = *x;
      else errs.push_back(where + ": missing client");
      if (auto x = cr.uint("port")) c.port = static_cast<Port>(*x);
      else errs.push_back(where + ": missing port");
      if (auto x = cr.num("timeout_ms")) c.timeout_ms = *x;
      if (const json* sj = cr.obj("service")) {
        Reader sr(*sj, where + ".service", errs);
        sr.allow({"demand", "miss_interval", "session"});
        if (auto x = sr.uint("demand")) c.service.demand = *x;
        if (auto x = sr.uint("miss_interval")) c.service.miss_interval = *x;
        if (const json* ses = sr.arr("session")) {
          for (const auto& d : *ses) {
            if (d.is_number_unsigned()) c.service.session.push_back(d.get<Cycles>());
            else errs.push_back(where + ".service.session: expected cycle counts");
          }
        }
      }
      if (auto x = cr.str("proxy_vcpu")) c.proxy_vcpu = *x;
      if (auto x = cr.uint("channel_bytes")) c.channel_bytes = *x;
      cfg.calls.push_back(std::move(c));
    }
  }

  if (const json* bj = r.obj("bus")) {
    Reader br(*bj, "bus", errs);
    br.allow({"base_service"});
    if (auto x = br.uint("base_service")) cfg.bus.base_service = *x;
  }

  if (const json* tj = r.obj("throttle")) {
    Reader tr(*tj, "throttle", errs);
    tr.allow({"enabled", "monitor_period_ms", "latency_threshold", "strength_k"});
    if (auto x = tr.boolean("enabled")) cfg.throttle.enabled = *x;
    if (auto x = tr.num("monitor_period_ms")) cfg.throttle.monitor_period_ms = *x;
    if (auto x = tr.num("latency_threshold")) cfg.throttle.latency_threshold = *x;
    if (auto x = tr.num("strength_k")) cfg.throttle.strength_k = *x;
  }

  if (const json* oj = r.obj("overheads")) {
    Reader orr(*oj, "overheads", errs);
    orr.allow({"vm_entry", "vm_exit", "vlib_call", "remote_desched", "channel_mapping"});
    if (auto x = orr.uint("vm_entry")) cfg.overheads.vm_entry = *x;
    if (auto x = orr.uint("vm_exit")) cfg.overheads.vm_exit = *x;
    if (auto x = orr.uint("vlib_call")) cfg.overheads.vlib_call = *x;
    if (auto x = orr.uint("remote_desched")) cfg.overheads.remote_desched = *x;
    if (auto x = orr.uint("channel_mapping")) cfg.overheads.channel_mapping = *x;
  }

  if (const json* ej = r.obj("experiment")) {
    Reader er(*ej, "experiment", errs);
    er.allow({"victim_vcpu", "baseline_alone", "baseline_uncontrolled"});
    ExperimentConfig e;
    if (auto x = er.str("victim_vcpu")) e.victim_vcpu = *x;
    if (auto x = er.str("baseline_alone")) e.baseline_alone = *x;
    if (auto x = er.str("baseline_uncontrolled")) e.baseline_uncontrolled = *x;
    cfg.experiment = std::move(e);
  }

  if (errs.empty()) {
    validate_scenario(cfg, res.errors, res.warnings);
  }
  if (res.errors.empty()) res.config = std::move(cfg);
  return res;
}

ParseResult load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ParseResult res;
    res.errors.push_back("cannot open scenario file: " + path);
    return res;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

namespace {

ordered workload_json(const WorkloadConfig& w) {
  ordered j;
  j["kind"] = workload_kind_name(w.kind);
  if (w.miss_interval) j["miss_interval"] = *w.miss_interval;
  j["array_bytes"] = w.array_bytes;
  j["stride"] = w.stride;
  j["jump"] = w.jump;
  j["period_ms"] = w.period_ms;
  j["offset_ms"] = w.offset_ms;
  j["work_cycles"] = w.work_cycles;
  j["max_samples"] = w.max_samples;
  return j;
}

}  // namespace

std::string serialize_scenario(const ScenarioConfig& cfg) {
  ordered j;
  j["name"] = cfg.name;
  j["cycles_per_ms"] = cfg.cycles_per_ms;
  j["cores"] = cfg.cores;
  j["duration_ms"] = cfg.duration_ms;
  j["seed"] = cfg.seed;
  j["async_enabled"] = cfg.async_enabled;
  j["strict_admission"] = cfg.strict_admission;
  j["bg_quantum_ms"] = cfg.bg_quantum_ms;

  j["domains"] = ordered::array();
  for (const auto& d : cfg.domains) {
    ordered dj;
    dj["name"] = d.name;
    dj["kind"] = d.kind == DomainKind::master ? "master" : "vlib";
    dj["cores"] = d.cores;
    if (d.port) dj["port"] = *d.port;
    dj["server"] = d.server;
    j["domains"].push_back(std::move(dj));
  }

  j["threads"] = ordered::array();
  for (const auto& t : cfg.threads) {
    ordered tj;
    tj["name"] = t.name;
    tj["domain"] = t.domain;
    if (t.core) tj["core"] = *t.core;
    if (t.workload) tj["workload"] = workload_json(*t.workload);
    j["threads"].push_back(std::move(tj));
  }

  j["vcpus"] = ordered::array();
  for (const auto& v : cfg.vcpus) {
    ordered vj;
    vj["name"] = v.name;
    if (v.budget_ms) vj["budget_ms"] = *v.budget_ms;
    if (v.utilization_pct) vj["utilization_pct"] = *v.utilization_pct;
    vj["period_ms"] = v.period_ms;
    vj["core"] = v.core;
    vj["thread"] = v.thread;
    j["vcpus"].push_back(std::move(vj));
  }

  j["calls"] = ordered::array();
  for (const auto& c : cfg.calls) {
    ordered cj;
    cj["at_ms"] = c.at_ms;
    cj["kind"] = call_kind_name(c.kind);
    cj["client"] = c.client;
    cj["port"] = c.port;
    if (c.timeout_ms) cj["timeout_ms"] = *c.timeout_ms;
    ordered sj;
    if (c.service.demand) sj["demand"] = *c.service.demand;
    sj["miss_interval"] = c.service.miss_interval;
    if (!c.service.session.empty()) sj["session"] = c.service.session;
    cj["service"] = std::move(sj);
    if (c.proxy_vcpu) cj["proxy_vcpu"] = *c.proxy_vcpu;
    cj["channel_bytes"] = c.channel_bytes;
    j["calls"].push_back(std::move(cj));
  }

  j["bus"] = ordered{{"base_service", cfg.bus.base_service}};
  j["throttle"] = ordered{{"enabled", cfg.throttle.enabled},
                          {"monitor_period_ms", cfg.throttle.monitor_period_ms},
                          {"latency_threshold", cfg.throttle.latency_threshold},
                          {"strength_k", cfg.throttle.strength_k}};
  j["overheads"] = ordered{{"vm_entry", cfg.overheads.vm_entry},
                           {"vm_exit", cfg.overheads.vm_exit},
                           {"vlib_call", cfg.overheads.vlib_call},
                           {"remote_desched", cfg.overheads.remote_desched},
                           {"channel_mapping", cfg.overheads.channel_mapping}};
  if (cfg.experiment) {
    j["experiment"] = ordered{{"victim_vcpu", cfg.experiment->victim_vcpu},
                              {"baseline_alone", cfg.experiment->baseline_alone},
                              {"baseline_uncontrolled", cfg.experiment->baseline_uncontrolled}};
  }
  return j.dump(2) + "\n";
}

std::string scenario_digest(const ScenarioConfig& cfg) {
  std::string text = serialize_scenario(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_scenario(const ScenarioConfig& cfg, std::vector<std::string>& errors,
                       std::vector<std::string>& warnings) {
  auto err = [&](const std::string& m) { errors.push_back(m); };
  auto warn = [&](const std::string& m) { warnings.push_back(m); };

  if (!(cfg.cycles_per_ms > 0)) err("cycles_per_ms must be positive");
  if (cfg.cores == 0) err("at least one core is required");
  if (!(cfg.duration_ms > 0)) err("duration_ms must be positive");
  if (!(cfg.bg_quantum_ms > 0)) err("bg_quantum_ms must be positive");

  // Domains and static core partitioning.
  int masters = 0;
  std::set<Port> ports;
  std::vector<int> core_owner(cfg.cores, -1);
  std::set<std::string> domain_names;
  for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
    const auto& d = cfg.domains[i];
    if (!domain_names.insert(d.name).second) err("duplicate domain name '" + d.name + "'");
    if (d.kind == DomainKind::master) {
      ++masters;
      if (d.port) err("domain '" + d.name + "': the master does not take a port");
    } else {
      if (!d.port) err("domain '" + d.name + "': vlib domains need a port");
      else if (!ports.insert(*d.port).second) {
        err("domain '" + d.name + "': port " + std::to_string(*d.port) + " already taken");
      }
    }
    if (d.cores.empty()) err("domain '" + d.name + "' owns no cores");
    for (CoreId c : d.cores) {
      if (c >= cfg.cores) {
        err("domain '" + d.name + "': core " + std::to_string(c) + " out of range");
      } else if (core_owner[c] != -1) {
        err("core " + std::to_string(c) + " assigned to more than one domain");
      } else {
        core_owner[c] = static_cast<int>(i);
      }
    }
  }
  if (masters != 1) err("exactly one master domain is required");
  for (CoreId c = 0; c < cfg.cores; ++c) {
    if (core_owner[c] == -1) err("core " + std::to_string(c) + " belongs to no domain");
  }

  auto domain_idx = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
      if (cfg.domains[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };

  // Threads.
  std::set<std::string> thread_names;
  for (const auto& t : cfg.threads) {
    if (!thread_names.insert(t.name).second) err("duplicate thread name '" + t.name + "'");
    int di = domain_idx(t.domain);
    if (di < 0) {
      err("thread '" + t.name + "': unknown domain '" + t.domain + "'");
      continue;
    }
    const auto& d = cfg.domains[di];
    if (d.kind == DomainKind::vlib) {
      if (!t.core) {
        err("thread '" + t.name + "': guest threads need an explicit core");
      } else if (std::find(d.cores.begin(), d.cores.end(), *t.core) == d.cores.end()) {
        err("thread '" + t.name + "': core " + std::to_string(*t.core) +
            " is not owned by domain '" + d.name + "'");
      }
      if (!t.workload) warn("thread '" + t.name + "': guest thread without a workload");
    } else if (t.core) {
      err("thread '" + t.name + "': master threads are placed by their vcpu");
    }
    if (t.workload && t.workload->kind == WorkloadKind::periodic) {
      const auto& w = *t.workload;
      if (!(w.period_ms > 0)) err("thread '" + t.name + "': periodic period must be positive");
      if (w.work_cycles == 0) err("thread '" + t.name + "': periodic work_cycles must be positive");
      Cycles period_cycles = static_cast<Cycles>(std::llround(w.period_ms * cfg.cycles_per_ms));
      if (w.work_cycles > period_cycles) {
        err("thread '" + t.name + "': work_cycles exceeds the job period");
      }
      if (w.offset_ms < 0 || w.offset_ms >= w.period_ms) {
        warn("thread '" + t.name + "': job offset outside [0, period)");
      }
    }
  }

  auto thread_idx = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cfg.threads.size(); ++i) {
      if (cfg.threads[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };

  // VCPUs.
  std::set<std::string> vcpu_names;
  std::set<std::string> vcpu_threads;
  for (const auto& v : cfg.vcpus) {
    if (!vcpu_names.insert(v.name).second) err("duplicate vcpu name '" + v.name + "'");
    if (!(v.period_ms > 0)) err("vcpu '" + v.name + "': period must be positive");
    if (!v.budget_ms && !v.utilization_pct) {
      err("vcpu '" + v.name + "': needs budget_ms or utilization_pct");
    }
    if (v.budget_ms && v.utilization_pct) {
      double from_pct = *v.utilization_pct / 100.0 * v.period_ms;
      if (std::abs(from_pct - *v.budget_ms) > 1e-9 * std::max(1.0, *v.budget_ms)) {
        err("vcpu '" + v.name + "': budget_ms and utilization_pct disagree");
      }
    }
    double budget = vcpu_budget_ms(v);
    if (!(budget > 0)) err("vcpu '" + v.name + "': budget must be positive");
    if (budget > v.period_ms + 1e-12) err("vcpu '" + v.name + "': budget exceeds period");
    if (v.core >= cfg.cores) {
      err("vcpu '" + v.name + "': core " + std::to_string(v.core) + " out of range");
    } else if (core_owner[v.core] >= 0 &&
               cfg.domains[core_owner[v.core]].kind != DomainKind::master) {
      err("vcpu '" + v.name + "': core " + std::to_string(v.core) + " is not a master core");
    }
    int ti = thread_idx(v.thread);
    if (ti < 0) {
      err("vcpu '" + v.name + "': unknown thread '" + v.thread + "'");
    } else {
      int di = domain_idx(cfg.threads[ti].domain);
      if (di >= 0 && cfg.domains[di].kind != DomainKind::master) {
        err("vcpu '" + v.name + "': thread '" + v.thread + "' lives in a guest domain");
      }
      if (!vcpu_threads.insert(v.thread).second) {
        err("thread '" + v.thread + "' is bound to more than one vcpu");
      }
    }
  }

  auto vcpu_idx = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cfg.vcpus.size(); ++i) {
      if (cfg.vcpus[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };

  // Master threads that can never run are almost certainly a mistake.
  for (const auto& t : cfg.threads) {
    int di = domain_idx(t.domain);
    if (di < 0 || cfg.domains[di].kind != DomainKind::master) continue;
    if (vcpu_threads.count(t.name) == 0) {
      err("thread '" + t.name + "': master thread without a vcpu can never run");
    }
  }

  // Calls.
  std::set<Port> donated_ports;
  for (std::size_t i = 0; i < cfg.calls.size(); ++i) {
    const auto& c = cfg.calls[i];
    std::string where = "calls[" + std::to_string(i) + "]";
    if (c.at_ms < 0) err(where + ": at_ms must be non-negative");
    if (c.at_ms >= cfg.duration_ms) warn(where + ": issued at or after the run ends");
    int ti = thread_idx(c.client);
    if (ti < 0) {
      err(where + ": unknown client thread '" + c.client + "'");
    } else {
      int di = domain_idx(cfg.threads[ti].domain);
      if (di < 0 || cfg.domains[di].kind != DomainKind::master) {
        err(where + ": client must be a master thread");
      } else if (vcpu_threads.count(c.client) == 0) {
        err(where + ": client thread has no vcpu");
      }
    }
    const DomainConfig* target = nullptr;
    for (const auto& d : cfg.domains) {
      if (d.port && *d.port == c.port) target = &d;
    }
    if (!target) {
      err(where + ": no domain listens on port " + std::to_string(c.port));
    } else if (!target->server && c.kind != CallKind::init && c.kind != CallKind::destroy) {
      err(where + ": domain '" + target->name + "' has no server configured");
    }
    if (c.kind == CallKind::async) {
      if (!cfg.async_enabled) err(where + ": async calls are disabled in this scenario");
      if (!c.proxy_vcpu) {
        err(where + ": async calls need a proxy_vcpu");
      } else if (int vi = vcpu_idx(*c.proxy_vcpu); vi < 0) {
        err(where + ": unknown proxy_vcpu '" + *c.proxy_vcpu + "'");
      } else {
        const auto& proxy = cfg.vcpus[vi];
        int pti = thread_idx(proxy.thread);
        if (pti >= 0 && cfg.threads[pti].workload) {
          err(where + ": proxy vcpu's thread must not carry a workload");
        }
      }
    } else {
      if (c.proxy_vcpu) err(where + ": proxy_vcpu is only meaningful for async calls");
      if (!c.service.session.empty()) err(where + ": session streams are async-only");
    }
    if (c.kind == CallKind::donate && c.timeout_ms) {
      err(where + ": a donation never completes; timeout makes no sense");
    }
    if (c.timeout_ms && !(*c.timeout_ms > 0)) err(where + ": timeout must be positive");
    if (c.service.demand && !c.service.session.empty()) {
      err(where + ": demand and session are mutually exclusive");
    }
    if (c.channel_bytes == 0) err(where + ": channel_bytes must be positive");

    if (c.kind == CallKind::donate) donated_ports.insert(c.port);
    else if ((c.kind == CallKind::sync || c.kind == CallKind::async) &&
             donated_ports.count(c.port)) {
      warn(where + ": port " + std::to_string(c.port) +
           " was handed to a donation; this call will wait forever");
    }
  }

  if (cfg.throttle.enabled) {
    if (!(cfg.throttle.monitor_period_ms > 0)) err("throttle.monitor_period_ms must be positive");
    if (cfg.throttle.strength_k < 0 || cfg.throttle.strength_k > 1) {
      err("throttle.strength_k must lie in [0, 1]");
    }
    if (cfg.throttle.latency_threshold < 0) err("throttle.latency_threshold must be >= 0");
  }
  if (cfg.experiment) {
    if (vcpu_idx(cfg.experiment->victim_vcpu) < 0) {
      err("experiment.victim_vcpu '" + cfg.experiment->victim_vcpu + "' does not exist");
    }
  }
}

Platform build_platform(const ScenarioConfig& cfg) {
  Platform p;
  p.cores.resize(cfg.cores);
  for (CoreId c = 0; c < cfg.cores; ++c) p.cores[c].id = c;

  for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
    const auto& dc = cfg.domains[i];
    DomainInfo d;
    d.id = static_cast<DomainId>(i);
    d.name = dc.name;
    d.kind = dc.kind;
    d.port = dc.port;
    d.cores = dc.cores;
    d.server = dc.server;
    for (CoreId c : d.cores) p.cores.at(c).owner = d.id;
    p.domain_by_name[d.name] = d.id;
    p.domains.push_back(std::move(d));
  }

  for (std::size_t i = 0; i < cfg.threads.size(); ++i) {
    const auto& tc = cfg.threads[i];
    ThreadInfo t;
    t.id = static_cast<ThreadId>(i);
    t.name = tc.name;
    t.home = p.domain_by_name.at(tc.domain);
    if (tc.workload) t.workload = workload_spec(*tc.workload, cfg.cycles_per_ms);
    if (tc.core) t.core = *tc.core;  // guests; master threads get theirs below
    p.thread_by_name[t.name] = t.id;
    p.threads.push_back(std::move(t));
  }

  for (std::size_t i = 0; i < cfg.vcpus.size(); ++i) {
    const auto& vc = cfg.vcpus[i];
    VcpuInfo v;
    v.id = static_cast<VcpuId>(i);
    v.name = vc.name;
    v.budget = cfg.to_cycles(vcpu_budget_ms(vc));
    v.period = cfg.to_cycles(vc.period_ms);
    v.core = vc.core;
    v.thread = p.thread_by_name.at(vc.thread);
    p.threads[v.thread].vcpu = v.id;
    p.threads[v.thread].core = v.core;
    p.vcpu_by_name[v.name] = v.id;
    p.vcpus.push_back(std::move(v));
  }
  return p;
}

namespace {

void apply_segments(ordered& node, const std::vector<std::string>& segs, std::size_t i,
                    const ordered& value, const std::string& path) {
  const std::string& seg = segs[i];
  bool last = i + 1 == segs.size();
  if (seg == "*") {
    if (node.is_array()) {
      if (node.empty()) throw SimError("'" + path + "': wildcard over an empty array");
      for (auto& e : node) {
        if (last) e = value; else apply_segments(e, segs, i + 1, value, path);
      }
    } else if (node.is_object()) {
      if (node.empty()) throw SimError("'" + path + "': wildcard over an empty object");
      for (auto& [k, e] : node.items()) {
        if (last) e = value; else apply_segments(e, segs, i + 1, value, path);
      }
    } else {
      throw SimError("'" + path + "': wildcard needs an array or object");
    }
    return;
  }
  if (node.is_array()) {
    std::size_t idx = 0;
    try {
      idx = std::stoul(seg);
    } catch (const std::exception&) {
      throw SimError("'" + path + "': '" + seg + "' is not an array index");
    }
    if (idx >= node.size()) throw SimError("'" + path + "': index " + seg + " out of range");
    if (last) node[idx] = value; else apply_segments(node[idx], segs, i + 1, value, path);
    return;
  }
  if (node.is_object()) {
    if (!node.contains(seg)) {
      if (!last) throw SimError("'" + path + "': no key '" + seg + "'");
      node[seg] = value;  // sweeping a field the file left at its default
      return;
    }
    if (last) node[seg] = value; else apply_segments(node[seg], segs, i + 1, value, path);
    return;
  }
  throw SimError("'" + path + "': '" + seg + "' descends into a scalar");
}

}  // namespace

std::string apply_json_path(const std::string& json_text, const std::string& path,
                            const std::string& value_literal) {
  ordered root;
  try {
    root = ordered::parse(json_text);
  } catch (const json::exception& e) {
    throw SimError(std::string("scenario JSON: ") + e.what());
  }
  ordered value;
  try {
    value = ordered::parse(value_literal);
  } catch (const json::exception&) {
    value = value_literal;  // not a JSON literal, treat as a string
  }
  std::vector<std::string> segs;
  std::stringstream ss(path);
  std::string seg;
  while (std::getline(ss, seg, '.')) segs.push_back(seg);
  if (segs.empty()) throw SimError("empty substitution path");
  apply_segments(root, segs, 0, value, path);
  return root.dump(2) + "\n";
}

}  // namespace vlibsim
