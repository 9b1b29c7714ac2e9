#include "vlibsim/vlibcall.hpp"

#include <algorithm>

namespace vlibsim {

const char* call_status_name(CallStatus s) {
  switch (s) {
    case CallStatus::scripted: return "scripted";
    case CallStatus::issuing: return "issuing";
    case CallStatus::queued: return "queued";
    case CallStatus::done: return "done";
    case CallStatus::timed_out: return "timed_out";
    case CallStatus::donated: return "donated";
  }
  return "?";
}

namespace {

char phase_char(bool stalled, int phase) {
  if (stalled) return 's';
  switch (phase) {
    case 0: return 'E';
    case 1: return 'M';
    case 2: return 'D';
    case 3: return 'X';
    case 4: return 'S';
  }
  return '?';
}

}  // namespace

CallEngine::CallEngine(const Platform& plat, Engine& eng, BusModel& bus,
                       MasterScheduler& sched, TraceSink& trace, const OverheadTable& costs,
                       Cycles quantum)
    : plat_(plat), eng_(eng), bus_(bus), sched_(sched), trace_(trace), costs_(costs),
      quantum_(quantum) {
  domains_.resize(plat.domains.size());
  threads_.resize(plat.threads.size());
  cores_.resize(plat.cores.size());

  for (std::size_t i = 0; i < plat.cores.size(); ++i) {
    cores_[i].managed = !plat.is_master_core(static_cast<CoreId>(i));
    cores_[i].owner = plat.cores[i].owner;
  }
  for (std::size_t i = 0; i < plat.domains.size(); ++i) {
    const DomainInfo& d = plat.domains[i];
    domains_[i].server = d.server;
    // Streams always run on the domain's first core. Serverless domains only
    // ever see channel handshakes, but those still need somewhere to run.
    if (d.kind == DomainKind::vlib && !d.cores.empty()) {
      domains_[i].service_core = d.cores.front();
      cores_[d.cores.front()].is_service_core = true;
    }
  }
  for (std::size_t i = 0; i < plat.threads.size(); ++i) {
    const ThreadInfo& t = plat.threads[i];
    if (plat.domains[t.home].kind != DomainKind::vlib || !t.workload) continue;
    GuestThreadRun& g = threads_[i];
    g.present = true;
    g.home = t.home;
    g.spec = *t.workload;
    cursor_init(g.spec, g.cursor);
    cores_[t.core].residents.push_back(static_cast<ThreadId>(i));
  }
  for (std::size_t i = 0; i < plat.domains.size(); ++i) {
    const DomainInfo& d = plat.domains[i];
    if (d.kind == DomainKind::vlib && d.server && !d.cores.empty()) {
      cores_[d.cores.front()].is_service_core = true;
    }
  }
}

void CallEngine::start(Cycles) {
  for (std::size_t i = 0; i < threads_.size(); ++i) {
    GuestThreadRun& g = threads_[i];
    if (!g.present || g.spec.kind != WorkloadKind::periodic) continue;
    ThreadId tid = static_cast<ThreadId>(i);
    eng_.schedule(g.spec.offset, EventKind::workload_step,
                  [this, tid] { release(tid, eng_.now()); });
  }
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    if (cores_[i].managed) dirty_.insert(static_cast<CoreId>(i));
  }
}

void CallEngine::script(const Scripted& call, Cycles at) {
  CallId id = static_cast<CallId>(records_.size());
  CallRecord rec;
  rec.id = id;
  rec.kind = call.kind;
  rec.client = call.client;
  rec.funder = call.funder;
  rec.port = call.port;
  rec.domain = call.domain;
  rec.ops = call.ops;
  records_.push_back(rec);
  scripts_.push_back(call);
  eng_.schedule(at, EventKind::ipi, [this, id] {
    ThreadId client = records_[id].client;
    if (busy_.count(client)) {
      backlog_[client].push_back(id);
    } else {
      begin_issue(id);
    }
  });
}

void CallEngine::begin_issue(CallId id) {
  Cycles now = eng_.now();
  CallRecord& rec = records_[id];
  const Scripted& s = scripts_[id];
  rec.issued_at = now;
  rec.status = CallStatus::issuing;
  busy_[rec.client] = id;
  if (s.timeout > 0) {
    timeout_events_[id] = eng_.schedule(now + s.timeout, EventKind::call_timeout,
                                        [this, id] { on_timeout(id); });
  }
  Cycles cost = s.kind == CallKind::async ? costs_.vlib_call : costs_.call_issue();
  if (trace_.enabled()) {
    trace_.emit(now, -1, plat_.threads[rec.client].name, "call_issue",
                std::string(call_kind_name(s.kind)) + " port=" + std::to_string(s.port));
  }
  sched_.push_overhead(rec.client, cost, [this, id] { issue_done(id); });
}

void CallEngine::issue_done(CallId id) {
  Cycles now = eng_.now();
  CallRecord& rec = records_[id];
  const Scripted& s = scripts_[id];
  if (rec.status == CallStatus::timed_out) {
    // The deadline passed while the issue path was still being charged; the
    // call never reaches the domain.
    if (s.kind == CallKind::async) {
      rec.completed_at = now;
      busy_.erase(rec.client);
      if (!backlog_[rec.client].empty()) {
        CallId next = backlog_[rec.client].front();
        backlog_[rec.client].pop_front();
        begin_issue(next);
      }
    } else {
      push_return(id);
    }
    return;
  }
  enqueue(id);
}

void CallEngine::enqueue(CallId id) {
  CallRecord& rec = records_[id];
  rec.enqueued_at = eng_.now();
  rec.status = CallStatus::queued;
  domains_[rec.domain].queue.push_back(id);
  if (rec.kind == CallKind::async) {
    // Fire and forget: the client moves on, the proxy VCPU funds the rest.
    busy_.erase(rec.client);
    if (!backlog_[rec.client].empty()) {
      CallId next = backlog_[rec.client].front();
      backlog_[rec.client].pop_front();
      begin_issue(next);
    }
  } else {
    sched_.set_spin(rec.client, true);
  }
  kick_domain(rec.domain);
}

void CallEngine::kick_domain(DomainId did) {
  DomainRun& d = domains_[did];
  if (d.donated || d.active || d.queue.empty()) return;
  CallId id = d.queue.front();
  const Scripted& sc = scripts_[id];
  Stream s;
  s.call = id;
  s.phase = Phase::entry;
  s.phase_left = costs_.vm_entry;
  s.mapping_needed = !mapped_.count({sc.client, sc.port});
  s.unbounded = sc.unbounded;
  s.demand_left = sc.demand;
  s.miss_interval = sc.miss_interval;
  s.to_next_miss = 0;  // request data is cold on first touch
  d.active = std::move(s);
  mark_core(d.service_core);
}

void CallEngine::client_finished(CallId id) {
  Cycles now = eng_.now();
  CallRecord& rec = records_[id];
  rec.completed_at = now;
  if (rec.status != CallStatus::timed_out) rec.status = CallStatus::done;
  busy_.erase(rec.client);
  if (!backlog_[rec.client].empty()) {
    CallId next = backlog_[rec.client].front();
    backlog_[rec.client].pop_front();
    begin_issue(next);
  }
}

void CallEngine::push_return(CallId id) {
  sched_.push_overhead(records_[id].client, costs_.call_return(),
                       [this, id] { client_finished(id); });
}

void CallEngine::on_timeout(CallId id) {
  timeout_events_.erase(id);
  CallRecord& rec = records_[id];
  DomainRun& d = domains_[rec.domain];
  if (trace_.enabled()) {
    trace_.emit(eng_.now(), -1, plat_.threads[rec.client].name, "call_timeout",
                "call=" + std::to_string(id));
  }
  switch (rec.status) {
    case CallStatus::issuing:
      rec.status = CallStatus::timed_out;  // issue_done routes to the return path
      return;
    case CallStatus::queued:
      break;
    default:
      return;  // completed in the same cycle; nothing to unwind
  }
  bool is_head = d.active && d.active->call == id;
  if (!is_head) {
    auto it = std::find(d.queue.begin(), d.queue.end(), id);
    if (it != d.queue.end()) d.queue.erase(it);
    erase_channel(rec.client, rec.port);
    rec.status = CallStatus::timed_out;
    finish_timeout(id);
    kick_domain(rec.domain);
    return;
  }
  Stream& s = *d.active;
  switch (s.state) {
    case StreamState::waiting:
      d.active.reset();
      d.queue.erase(d.queue.begin());
      erase_channel(rec.client, rec.port);
      rec.status = CallStatus::timed_out;
      finish_timeout(id);
      kick_domain(rec.domain);
      mark_core(d.service_core);
      break;
    case StreamState::running:
      s.abandoned = true;  // the settle pass runs the context save, then unwinds
      mark_core(d.service_core);
      break;
    case StreamState::suspended:
      abandon_finish(rec.domain);
      break;
  }
}

void CallEngine::finish_timeout(CallId id) {
  CallRecord& rec = records_[id];
  if (scripts_[id].kind == CallKind::async) {
    rec.completed_at = eng_.now();
  } else {
    sched_.set_spin(rec.client, false);
    push_return(id);
  }
}

void CallEngine::abandon_finish(DomainId did) {
  DomainRun& d = domains_[did];
  Stream& s = *d.active;
  CallId id = s.call;
  CallRecord& rec = records_[id];
  merge_stream_usage(did);
  erase_channel(rec.client, rec.port);
  d.queue.erase(d.queue.begin());
  d.active.reset();
  rec.status = CallStatus::timed_out;
  finish_timeout(id);
  kick_domain(did);
  mark_core(d.service_core);
}

void CallEngine::flag_actions(DomainId did) {
  Cycles now = eng_.now();
  DomainRun& d = domains_[did];
  Stream& s = *d.active;
  CallId id = s.call;
  CallRecord& rec = records_[id];
  rec.flag_at = now;
  merge_stream_usage(did);
  auto te = timeout_events_.find(id);
  if (te != timeout_events_.end()) {
    eng_.cancel(te->second);
    timeout_events_.erase(te);
  }
  if (rec.kind == CallKind::destroy) erase_channel(rec.client, rec.port);
  d.queue.erase(d.queue.begin());
  d.active.reset();
  if (trace_.enabled()) {
    trace_.emit(now, static_cast<int>(d.service_core), plat_.domains[did].name, "call_flag",
                "call=" + std::to_string(id));
  }
  if (rec.kind == CallKind::async) {
    rec.completed_at = now;
    rec.status = CallStatus::done;
  } else {
    sched_.set_spin(rec.client, false);
    push_return(id);
  }
  kick_domain(did);
  mark_core(d.service_core);
}

void CallEngine::donate_finish(DomainId did) {
  Cycles now = eng_.now();
  DomainRun& d = domains_[did];
  Stream& s = *d.active;
  CallId id = s.call;
  CallRecord& rec = records_[id];
  rec.flag_at = now;
  rec.status = CallStatus::donated;
  merge_stream_usage(did);
  d.queue.erase(d.queue.begin());
  d.active.reset();
  d.donated = true;
  d.donor = rec.funder;
  d.donation = id;
  bool open = sched_.gate_open(d.donor);
  for (const CoreId c : plat_.domains[did].cores) {
    if (open) cores_[c].window_open = true;  // the establishment entry covers this window
    mark_core(c);
  }
  if (trace_.enabled()) {
    trace_.emit(now, static_cast<int>(d.service_core), plat_.domains[did].name, "donated",
                "call=" + std::to_string(id));
  }
}

void CallEngine::merge_stream_usage(DomainId did) {
  DomainRun& d = domains_[did];
  Stream& s = *d.active;
  CallRecord& rec = records_[s.call];
  sched_.merge_remote_usage(rec.funder, s.usage);
  rec.charged += s.usage;
  s.usage = ResourceUsage{};
}

void CallEngine::erase_channel(ThreadId client, Port port) {
  mapped_.erase({client, port});
}

void CallEngine::fg_started(VcpuId) {
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    if (cores_[i].managed) dirty_.insert(static_cast<CoreId>(i));
  }
}

void CallEngine::fg_stopped(VcpuId) {
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    if (cores_[i].managed) dirty_.insert(static_cast<CoreId>(i));
  }
}

bool CallEngine::core_background_class(CoreId c) const {
  const GuestCoreRun& core = cores_[c];
  if (!core.managed) throw std::logic_error("master core classified by the call engine");
  // A served (or donated) domain is controlled machinery and may be paused;
  // a guest without a server runs outside the master's reach.
  return plat_.domains[core.owner].server;
}

void CallEngine::set_throttle(CoreId c, Cycles until) {
  GuestCoreRun& core = cores_[c];
  if (!core.managed) throw std::logic_error("master core throttled via the call engine");
  core.throttled_until = std::max(core.throttled_until, until);
  mark_core(c);
}

void CallEngine::mark_core(CoreId c) {
  if (!cores_[c].managed) throw std::logic_error("master core handed to the call engine");
  dirty_.insert(c);
}

void CallEngine::release(ThreadId tid, Cycles at) {
  GuestThreadRun& g = threads_[tid];
  cursor_release_job(g.spec, g.cursor, at);
  g.job_open = true;
  ++g.releases_made;
  if (g.spec.max_samples == 0 || g.releases_made < g.spec.max_samples) {
    eng_.schedule(at + g.spec.period, EventKind::workload_step,
                  [this, tid] { release(tid, eng_.now()); });
  }
  mark_core(plat_.threads[tid].core);
}

void CallEngine::emit_segment(CallId call, CoreId core, char phase, Cycles start, Cycles end) {
  for (auto& sink : segment_sinks_) sink(ServiceSegment{call, core, phase, start, end});
}

bool CallEngine::stream_has_demand(const Stream& s) const {
  return s.unbounded || s.demand_left > 0;
}

bool CallEngine::thread_eligible(const GuestCoreRun& core, ThreadId tid, Cycles now) const {
  const GuestThreadRun& g = threads_[tid];
  if (!g.present || !cursor_active(g.spec, g.cursor, now)) return false;
  const DomainRun& d = domains_[g.home];
  if (d.donated) return core.window_open;
  // A domain with a server parks in vlib_listen between requests, so its own
  // workloads only ever run under a donated budget. A serverless guest is a
  // plain OS outside the master's reach and runs whenever it likes.
  return !plat_.domains[g.home].server;
}

void CallEngine::charge(CoreId c, Cycles now) {
  GuestCoreRun& core = cores_[c];
  Cycles begin = core.seg_start;
  Cycles elapsed = now - begin;
  core.seg_start = now;
  if (elapsed == 0 || core.mode == Mode::idle) return;
  DomainRun& d = domains_[core.owner];
  switch (core.mode) {
    case Mode::gate: {
      if (elapsed > core.gate_left) throw std::logic_error("overcharged a window edge");
      core.gate_left -= elapsed;
      ResourceUsage u;
      u.cpu_cycles = elapsed;
      sched_.merge_remote_usage(d.donor, u);
      records_[d.donation].charged += u;
      emit_segment(d.donation, c, core.gate_saving ? 'S' : 'E', begin, now);
      break;
    }
    case Mode::stream: {
      Stream& s = *d.active;
      if (s.phase == Phase::demand) {
        if (core.running_stalled) {
          s.usage.cpu_cycles += elapsed;
          emit_segment(s.call, c, 's', begin, now);
        } else {
          if (!s.unbounded) {
            if (elapsed > s.demand_left) throw std::logic_error("overran the demand");
            s.demand_left -= elapsed;
          }
          if (s.miss_interval > 0) {
            if (elapsed > s.to_next_miss) throw std::logic_error("demand ran past a request");
            s.to_next_miss -= elapsed;
          }
          s.usage.cpu_cycles += elapsed;
          emit_segment(s.call, c, 'D', begin, now);
        }
      } else {
        if (elapsed > s.phase_left) throw std::logic_error("overcharged a stream phase");
        s.phase_left -= elapsed;
        s.usage.cpu_cycles += elapsed;
        emit_segment(s.call, c, phase_char(false, static_cast<int>(s.phase)), begin, now);
      }
      break;
    }
    case Mode::thread: {
      GuestThreadRun& g = threads_[core.thread];
      g.usage.cpu_cycles += elapsed;
      if (!core.running_stalled) {
        cursor_retire(g.spec, g.cursor, elapsed, false);
      }
      break;
    }
    case Mode::idle:
      break;
  }
}

bool CallEngine::normalize(CoreId c, Cycles now) {
  GuestCoreRun& core = cores_[c];
  DomainRun& d = domains_[core.owner];
  bool changed = false;
  for (int guard = 0; guard < 64; ++guard) {
    // Window edge completion.
    if (core.mode == Mode::gate && core.gate_left == 0) {
      core.window_open = !core.gate_saving;
      core.mode = Mode::idle;
      changed = true;
      continue;
    }
    // Stream progress (service core only).
    if (core.is_service_core && d.active) {
      Stream& s = *d.active;
      const Scripted& sc = scripts_[s.call];
      if (s.state == StreamState::running) {
        if (s.stalled_until != 0 && s.stalled_until <= now) {
          s.stalled_until = 0;
          core.running_stalled = false;
          changed = true;
          continue;
        }
        if (s.abandoned && s.phase != Phase::desched) {
          // Deadline passed while in service: pay the context save, then
          // unwind. Finishing the phase first would let a flag race the
          // timeout that already fired.
          s.phase = Phase::desched;
          s.phase_left = costs_.remote_desched;
          changed = true;
          continue;
        }
        if (s.phase == Phase::entry && s.phase_left == 0) {
          if (s.resume_to != Phase::entry) {
            s.phase = s.resume_to;
            s.phase_left = s.resume_left;
            s.resume_to = Phase::entry;
            s.resume_left = 0;
          } else if (s.mapping_needed) {
            s.phase = Phase::mapping;
            s.phase_left = costs_.channel_mapping;
          } else if (sc.kind == CallKind::donate) {
            donate_finish(core.owner);
            changed = true;
            continue;
          } else if (stream_has_demand(s)) {
            s.phase = Phase::demand;
          } else {
            s.phase = Phase::exit_;
            s.phase_left = costs_.vm_exit;
          }
          changed = true;
          continue;
        }
        if (s.phase == Phase::mapping && s.phase_left == 0) {
          mapped_[{sc.client, sc.port}] = true;
          s.mapping_needed = false;
          s.usage.cache_bytes += sc.channel_bytes;
          if (sc.kind == CallKind::donate) {
            donate_finish(core.owner);
          } else if (stream_has_demand(s)) {
            s.phase = Phase::demand;
          } else {
            s.phase = Phase::exit_;
            s.phase_left = costs_.vm_exit;
          }
          changed = true;
          continue;
        }
        if (s.phase == Phase::demand && !s.unbounded && s.demand_left == 0 &&
            s.stalled_until == 0) {
          s.phase = Phase::exit_;
          s.phase_left = costs_.vm_exit;
          changed = true;
          continue;
        }
        if (s.phase == Phase::exit_ && s.phase_left == 0) {
          flag_actions(core.owner);
          changed = true;
          continue;
        }
        if (s.phase == Phase::desched && s.phase_left == 0) {
          merge_stream_usage(core.owner);
          if (s.abandoned) {
            abandon_finish(core.owner);
          } else {
            s.state = StreamState::suspended;
            if (core.mode == Mode::stream) core.mode = Mode::idle;
          }
          changed = true;
          continue;
        }
        if (s.phase != Phase::desched && !sched_.gate_open(records_[s.call].funder)) {
          // The funder lost its core. Save whatever phase was interrupted;
          // a resume pays a fresh world entry, so entry itself is not saved.
          if (s.phase != Phase::entry) {
            s.resume_to = s.phase;
            s.resume_left = s.phase == Phase::demand ? 0 : s.phase_left;
          }
          s.phase = Phase::desched;
          s.phase_left = costs_.remote_desched;
          records_[s.call].suspensions += 1;
          if (trace_.enabled()) {
            trace_.emit(now, static_cast<int>(c), plat_.domains[core.owner].name,
                        "remote_desched", "call=" + std::to_string(s.call));
          }
          changed = true;
          continue;
        }
      } else if (s.state == StreamState::waiting) {
        if (sched_.gate_open(records_[s.call].funder) && now >= core.throttled_until) {
          s.state = StreamState::running;
          CallRecord& rec = records_[s.call];
          if (rec.first_service_at == kNever) rec.first_service_at = now;
          changed = true;
          continue;
        }
      } else if (s.state == StreamState::suspended) {
        if (s.abandoned) {
          abandon_finish(core.owner);
          changed = true;
          continue;
        }
        if (sched_.gate_open(records_[s.call].funder) && now >= core.throttled_until) {
          s.state = StreamState::running;
          s.phase = Phase::entry;
          s.phase_left = costs_.vm_entry;
          changed = true;
          continue;
        }
      }
    }
    // Donor window edges for a donated domain.
    if (d.donated) {
      bool open = sched_.gate_open(d.donor);
      if (core.gate_left > 0 && !core.gate_saving && !open) {
        // The window closed before the entry finished; whatever was charged
        // so far is sunk cost and the window never opens.
        core.gate_left = 0;
        core.mode = Mode::idle;
        changed = true;
        continue;
      }
      if (!core.window_open && open && core.gate_left == 0 && now >= core.throttled_until) {
        core.gate_left = costs_.vm_entry;
        core.gate_saving = false;
        changed = true;
        continue;
      }
      if (core.window_open && !open && core.gate_left == 0) {
        core.gate_left = costs_.remote_desched;
        core.gate_saving = true;
        changed = true;
        continue;
      }
    }
    // Occupant thread stall and job edges.
    if (core.mode == Mode::thread) {
      GuestThreadRun& g = threads_[core.thread];
      if (core.running_stalled && g.cursor.stalled_until <= now) {
        g.cursor.stalled_until = 0;
        core.running_stalled = false;
        changed = true;
        continue;
      }
      if (g.job_open && g.cursor.job_remaining == 0 && g.cursor.stalled_until == 0) {
        JobSample sample{core.thread, g.jobs_recorded, g.cursor.job_release, now};
        ++g.jobs_recorded;
        g.job_open = false;
        if (g.spec.max_samples == 0 || sample.job < g.spec.max_samples) {
          for (auto& sink : sample_sinks_) sink(sample);
        }
        if (!g.cursor.pending_releases.empty()) {
          Cycles rel = g.cursor.pending_releases.front();
          g.cursor.pending_releases.erase(g.cursor.pending_releases.begin());
          cursor_release_job(g.spec, g.cursor, rel);
          g.job_open = true;
        }
        changed = true;
        continue;
      }
    }
    return changed;
  }
  throw std::logic_error("guest core state did not settle");
}

void CallEngine::dispatch(CoreId c, Cycles now) {
  GuestCoreRun& core = cores_[c];
  DomainRun& d = domains_[core.owner];

  Mode mode = Mode::idle;
  ThreadId pick = 0;
  Cycles transition = kNever;
  bool stalled = false;

  if (core.gate_left > 0 && (core.gate_saving || now >= core.throttled_until)) {
    mode = Mode::gate;
    transition = now + core.gate_left;
  } else if (core.is_service_core && d.active && d.active->state == StreamState::running &&
             (d.active->phase == Phase::desched || now >= core.throttled_until)) {
    Stream& s = *d.active;
    mode = Mode::stream;
    if (s.phase == Phase::demand) {
      if (s.stalled_until > now) {
        stalled = true;
        transition = s.stalled_until;
      } else if (s.miss_interval > 0 && s.to_next_miss == 0 && stream_has_demand(s)) {
        Cycles done = bus_.issue(c, account_vcpu(records_[s.call].funder), now);
        s.to_next_miss = s.miss_interval;
        s.stalled_until = done;
        s.usage.mem_requests += 1;
        stalled = true;
        transition = done;
      } else {
        Cycles span = kNever;
        if (!s.unbounded) span = s.demand_left;
        if (s.miss_interval > 0) span = std::min(span, Cycles{s.to_next_miss});
        transition = span == kNever ? kNever : now + span;
      }
    } else {
      transition = now + s.phase_left;
    }
  } else if (now >= core.throttled_until && !core.residents.empty()) {
    std::size_t n = core.residents.size();
    bool keep = core.mode == Mode::thread && now < core.quantum_end &&
                thread_eligible(core, core.thread, now);
    if (keep) {
      pick = core.thread;
      mode = Mode::thread;
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t idx = (core.rr_next + k) % n;
        ThreadId t = core.residents[idx];
        if (thread_eligible(core, t, now)) {
          pick = t;
          mode = Mode::thread;
          core.rr_next = (idx + 1) % n;
          core.quantum_end = now + quantum_;
          break;
        }
      }
    }
    if (mode == Mode::thread) {
      GuestThreadRun& g = threads_[pick];
      if (g.cursor.stalled_until != 0 && g.cursor.stalled_until <= now) {
        g.cursor.stalled_until = 0;
      }
      bool has_instr = g.spec.kind != WorkloadKind::periodic || g.cursor.job_remaining > 0;
      if (g.cursor.stalled_until > now) {
        stalled = true;
        transition = g.cursor.stalled_until;
      } else if (cursor_at_miss(g.spec, g.cursor) && has_instr) {
        Cycles done = bus_.issue(c, account_domain(core.owner), now);
        (void)cursor_take_miss(g.spec, g.cursor);
        g.cursor.stalled_until = done;
        g.usage.mem_requests += 1;
        stalled = true;
        transition = done;
      } else {
        if (auto b = instructions_to_boundary(g.spec, g.cursor)) transition = now + *b;
      }
      transition = std::min(transition, core.quantum_end);
    }
  }

  if (trace_.enabled() && (mode != core.mode || pick != core.thread || stalled != core.running_stalled)) {
    switch (mode) {
      case Mode::idle:
        trace_.emit(now, static_cast<int>(c), "core", "idle",
                    core.throttled_until > now ? "throttled" : "");
        break;
      case Mode::gate:
        trace_.emit(now, static_cast<int>(c), plat_.domains[core.owner].name,
                    core.gate_saving ? "window_save" : "window_entry", "");
        break;
      case Mode::stream:
        trace_.emit(now, static_cast<int>(c), plat_.domains[core.owner].name, "serve",
                    "call=" + std::to_string(d.active->call));
        break;
      case Mode::thread:
        trace_.emit(now, static_cast<int>(c), plat_.threads[pick].name, "run",
                    stalled ? "stalled" : "compute");
        break;
    }
  }

  core.mode = mode;
  core.thread = pick;
  core.running_stalled = stalled;
  core.seg_start = now;

  Cycles wake = transition;
  if (core.throttled_until > now) wake = std::min(wake, core.throttled_until);
  if (core.timer) {
    eng_.cancel(core.timer);
    core.timer = 0;
  }
  if (wake != kNever) {
    core.timer = eng_.schedule(wake, EventKind::timer, [this, c] {
      cores_[c].timer = 0;
      mark_core(c);
    });
  }
}

void CallEngine::finalize() {
  Cycles now = eng_.now();
  for (std::size_t c = 0; c < cores_.size(); ++c) {
    if (cores_[c].managed) charge(static_cast<CoreId>(c), now);
  }
  for (std::size_t d = 0; d < domains_.size(); ++d) {
    if (domains_[d].active) merge_stream_usage(static_cast<DomainId>(d));
  }
}

bool CallEngine::flush() {
  if (dirty_.empty()) return false;
  Cycles now = eng_.now();
  while (!dirty_.empty()) {
    CoreId c = *dirty_.begin();
    dirty_.erase(dirty_.begin());
    charge(c, now);
    normalize(c, now);
    dispatch(c, now);
  }
  return true;
}

}  // namespace vlibsim
