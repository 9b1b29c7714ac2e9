#include "vlibsim/simulator.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace vlibsim {

namespace {

ThrottleController::Config throttle_config(const ScenarioConfig& cfg) {
  ThrottleController::Config tc;
  tc.enabled = cfg.throttle.enabled;
  tc.monitor_period = cfg.to_cycles(cfg.throttle.monitor_period_ms);
  tc.threshold = cfg.throttle.latency_threshold;
  tc.strength_k = cfg.throttle.strength_k;
  return tc;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

}  // namespace

Simulation::Simulation(const ScenarioConfig& cfg, const RunOptions& opt)
    : cfg_(cfg),
      opt_(opt),
      plat_(build_platform(cfg)),
      trace_(opt.trace),
      eng_(),
      bus_(cfg.bus.base_service),
      sched_(plat_, eng_, bus_, trace_, cfg.to_cycles(cfg.bg_quantum_ms)),
      calls_(plat_, eng_, bus_, sched_, trace_, cfg.overheads, cfg.to_cycles(cfg.bg_quantum_ms)),
      throttle_(throttle_config(cfg), plat_.cores.size(), bus_, eng_, trace_) {
  wire();
}

void Simulation::wire() {
  eng_.set_post_dispatch([this] { flush(); });

  sched_.on_fg_started([this](VcpuId v) {
    open_spans_[v] = eng_.now();
    calls_.fg_started(v);
  });
  sched_.on_fg_stopped([this](VcpuId v) {
    auto it = open_spans_.find(v);
    if (it != open_spans_.end()) {
      spans_.push_back(FgSpan{v, it->second, eng_.now()});
      open_spans_.erase(it);
    }
    calls_.fg_stopped(v);
  });

  sched_.on_period_row([this](const PeriodRow& r) { rows_.push_back(r); });
  sched_.on_job_sample([this](const JobSample& s) { samples_.push_back(s); });
  calls_.on_job_sample([this](const JobSample& s) { samples_.push_back(s); });
  if (opt_.collect_segments) {
    calls_.on_service_segment([this](const ServiceSegment& s) { segments_.push_back(s); });
  }

  throttle_.set_background_class([this](CoreId c) {
    return plat_.is_master_core(c) ? sched_.core_background_class(c)
                                   : calls_.core_background_class(c);
  });
  throttle_.set_apply([this](CoreId c, Cycles until) {
    if (plat_.is_master_core(c)) {
      sched_.set_throttle(c, until);
    } else {
      calls_.set_throttle(c, until);
    }
  });
}

void Simulation::flush() {
  for (int pass = 0; sched_.any_dirty() || calls_.any_dirty(); ++pass) {
    if (pass >= 1000) throw std::logic_error("simulation state failed to settle");
    sched_.flush();
    sched_.settle_gates();
    calls_.flush();
  }
}

void Simulation::script_calls() {
  for (const CallConfig& cc : cfg_.calls) {
    CallEngine::Scripted s;
    s.kind = cc.kind;
    s.client = plat_.thread_by_name.at(cc.client);
    s.port = cc.port;
    const DomainInfo* target = plat_.domain_of_port(cc.port);
    s.domain = target->id;
    if (cc.kind == CallKind::async) {
      s.funder = plat_.vcpu_by_name.at(*cc.proxy_vcpu);
    } else {
      s.funder = *plat_.threads[s.client].vcpu;
    }
    s.timeout = cc.timeout_ms ? cfg_.to_cycles(*cc.timeout_ms) : 0;
    if (cc.kind == CallKind::donate || cc.kind == CallKind::init ||
        cc.kind == CallKind::destroy) {
      // Handshake only; any service block is ignored for these kinds.
      s.unbounded = false;
      s.demand = 0;
      s.ops = 1;
    } else if (!cc.service.session.empty()) {
      // One stream serving the whole batch: a single entry/exit pair around
      // the summed demand. Only the op count remembers the batch size.
      s.unbounded = false;
      s.demand = std::accumulate(cc.service.session.begin(), cc.service.session.end(), Cycles{0});
      s.ops = cc.service.session.size();
    } else if (cc.service.demand) {
      s.unbounded = false;
      s.demand = *cc.service.demand;
      s.ops = 1;
    } else {
      s.unbounded = true;
      s.demand = 0;
      s.ops = 1;
    }
    s.miss_interval = cc.service.miss_interval;
    s.channel_bytes = cc.channel_bytes;
    calls_.script(s, cfg_.to_cycles(cc.at_ms));
  }
}

RunOutputs Simulation::run() {
  if (ran_) throw std::logic_error("a Simulation object runs once");
  ran_ = true;

  RunOutputs out;
  out.admission = admit(plat_.vcpus, plat_.cores);
  if (!out.admission.accepted) {
    std::string all;
    for (const auto& r : out.admission.reasons) {
      if (!all.empty()) all += "; ";
      all += r;
    }
    if (cfg_.strict_admission) throw SimError("admission failed: " + all);
    if (trace_.enabled()) trace_.emit(0, -1, "admission", "warn", all);
  }

  Cycles dur = cfg_.duration_cycles();
  sched_.start(dur);
  calls_.start(dur);
  throttle_.start(dur);
  script_calls();
  flush();
  eng_.run_until(dur);

  calls_.finalize();
  sched_.finalize();
  for (const auto& [v, start] : open_spans_) spans_.push_back(FgSpan{v, start, dur});
  open_spans_.clear();

  out.period_rows = std::move(rows_);
  out.calls = calls_.calls();
  out.bus_windows = throttle_.windows();
  out.throttle_rows = throttle_.decisions();
  out.job_samples = std::move(samples_);
  out.segments = std::move(segments_);
  out.fg_spans = std::move(spans_);
  out.digest = scenario_digest(cfg_);
  out.events = eng_.stats().dispatched;

  auto& kv = out.summary;
  auto put = [&kv](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
  put("scenario", cfg_.name);
  put("digest", out.digest);
  put("rng", std::string(Rng::algorithm()));
  put("seed", std::to_string(cfg_.seed));
  put("cycles_per_ms", fmt_double(cfg_.cycles_per_ms));
  put("duration_cycles", std::to_string(dur));
  put("cores", std::to_string(plat_.cores.size()));
  put("events", std::to_string(out.events));
  put("bus_requests", std::to_string(bus_.total_requests()));

  std::uint64_t done = 0, timed_out = 0, donated = 0;
  for (const auto& r : out.calls) {
    done += r.status == CallStatus::done;
    timed_out += r.status == CallStatus::timed_out;
    donated += r.status == CallStatus::donated;
  }
  put("calls", std::to_string(out.calls.size()));
  put("calls_done", std::to_string(done));
  put("calls_timed_out", std::to_string(timed_out));
  put("calls_donated", std::to_string(donated));

  put("admission_accepted", out.admission.accepted ? "1" : "0");
  for (const auto& ca : out.admission.cores) {
    std::string base = "admission.core" + std::to_string(ca.core);
    put(base + ".utilization", fmt_double(ca.utilization));
    put(base + ".bound", fmt_double(ca.bound));
    put(base + ".harmonic", ca.harmonic ? "1" : "0");
    put(base + ".accepted", ca.accepted ? "1" : "0");
  }

  struct Totals {
    Cycles fg_used = 0, bg_used = 0, remote_cpu = 0;
    std::uint64_t instructions = 0, fg_instructions = 0, mem_requests = 0, remote_requests = 0;
  };
  std::vector<Totals> totals(plat_.vcpus.size());
  for (const auto& r : out.period_rows) {
    Totals& t = totals[r.vcpu];
    t.fg_used += r.fg_used;
    t.bg_used += r.bg_used;
    t.remote_cpu += r.remote_cpu;
    t.instructions += r.instructions;
    t.fg_instructions += r.fg_instructions;
    t.mem_requests += r.mem_requests;
    t.remote_requests += r.remote_requests;
  }
  for (std::size_t v = 0; v < plat_.vcpus.size(); ++v) {
    std::string base = "vcpu." + plat_.vcpus[v].name;
    const Totals& t = totals[v];
    put(base + ".fg_used", std::to_string(t.fg_used));
    put(base + ".bg_used", std::to_string(t.bg_used));
    put(base + ".instructions", std::to_string(t.instructions));
    put(base + ".fg_instructions", std::to_string(t.fg_instructions));
    put(base + ".mem_requests", std::to_string(t.mem_requests));
    put(base + ".remote_cpu", std::to_string(t.remote_cpu));
    put(base + ".remote_requests", std::to_string(t.remote_requests));
  }
  for (std::size_t t = 0; t < plat_.threads.size(); ++t) {
    if (!plat_.threads[t].workload) continue;
    ThreadId tid = static_cast<ThreadId>(t);
    std::uint64_t instr = plat_.domains[plat_.threads[t].home].kind == DomainKind::master
                              ? sched_.cursor(tid).instructions
                              : calls_.thread_instructions(tid);
    put("thread." + plat_.threads[t].name + ".instructions", std::to_string(instr));
  }
  return out;
}

}  // namespace vlibsim
