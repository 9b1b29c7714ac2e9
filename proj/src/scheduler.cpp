#include "vlibsim/scheduler.hpp"

#include <algorithm>

namespace vlibsim {

const char* activity_name(Activity a) {
  switch (a) {
    case Activity::idle: return "idle";
    case Activity::compute: return "compute";
    case Activity::stalled: return "stalled";
    case Activity::overhead: return "overhead";
    case Activity::spin: return "spin";
  }
  return "?";
}

MasterScheduler::MasterScheduler(const Platform& plat, Engine& eng, BusModel& bus,
                                 TraceSink& trace, Cycles bg_quantum)
    : plat_(plat), eng_(eng), bus_(bus), trace_(trace), quantum_(bg_quantum) {
  if (quantum_ == 0) throw SimError("background quantum must be positive");
  threads_.resize(plat.threads.size());
  vcpus_.resize(plat.vcpus.size());
  cores_.resize(plat.cores.size());

  for (std::size_t i = 0; i < plat.cores.size(); ++i) {
    cores_[i].managed = plat.is_master_core(static_cast<CoreId>(i));
  }
  for (std::size_t i = 0; i < plat.threads.size(); ++i) {
    const ThreadInfo& info = plat.threads[i];
    ThreadRun& t = threads_[i];
    t.managed = plat.domains[info.home].kind == DomainKind::master;
    if (info.workload) {
      t.has_workload = true;
      t.spec = *info.workload;
      cursor_init(t.spec, t.cursor);
    } else if (t.managed) {
      t.spin = true;  // host thread: spins until given protocol work
    }
  }
  for (std::size_t i = 0; i < plat.vcpus.size(); ++i) {
    const VcpuInfo& info = plat.vcpus[i];
    VcpuRun& v = vcpus_[i];
    v.budget = info.budget;
    v.period_len = info.period;
    cores_[info.core].residents.push_back(static_cast<VcpuId>(i));
  }
  for (CoreRun& core : cores_) {
    std::sort(core.residents.begin(), core.residents.end(), [&](VcpuId a, VcpuId b) {
      const VcpuInfo& va = plat_.vcpus[a];
      const VcpuInfo& vb = plat_.vcpus[b];
      return va.period != vb.period ? va.period < vb.period : a < b;
    });
  }
}

void MasterScheduler::start(Cycles run_end) {
  run_end_ = run_end;
  for (std::size_t i = 0; i < vcpus_.size(); ++i) {
    VcpuId v = static_cast<VcpuId>(i);
    VcpuRun& vr = vcpus_[i];
    vr.budget_left = vr.budget;
    vr.acc = PeriodRow{};
    vr.acc.vcpu = v;
    vr.acc.budget = vr.budget;
    eng_.schedule(vr.period_len, EventKind::period_boundary, [this, v] { boundary(v); });
  }
  for (std::size_t i = 0; i < threads_.size(); ++i) {
    ThreadRun& t = threads_[i];
    if (!t.managed || !t.has_workload || t.spec.kind != WorkloadKind::periodic) continue;
    ThreadId tid = static_cast<ThreadId>(i);
    eng_.schedule(t.spec.offset, EventKind::workload_step,
                  [this, tid] { release(tid, eng_.now()); });
  }
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    if (cores_[i].managed) dirty_.insert(static_cast<CoreId>(i));
  }
}

void MasterScheduler::mark_core(CoreId c) {
  if (!cores_[c].managed) throw std::logic_error("guest core handed to the master scheduler");
  dirty_.insert(c);
}

void MasterScheduler::mark_thread(ThreadId t) {
  mark_core(plat_.threads[t].core);
}

void MasterScheduler::charge(CoreRun& core, Cycles now) {
  Cycles elapsed = now - core.seg_start;
  core.seg_start = now;
  if (core.occupant == kNoVcpu || elapsed == 0) return;
  VcpuRun& v = vcpus_[core.occupant];
  ThreadRun& t = threads_[plat_.vcpus[core.occupant].thread];
  if (core.fg) {
    if (elapsed > v.budget_left) throw std::logic_error("foreground charge exceeds budget");
    v.budget_left -= elapsed;
    v.acc.fg_used += elapsed;
  } else {
    v.bgt += elapsed;
    v.acc.bg_used += elapsed;
  }
  switch (core.act) {
    case Activity::compute:
      cursor_retire(t.spec, t.cursor, elapsed, core.fg);
      v.acc.instructions += elapsed;
      if (core.fg) v.acc.fg_instructions += elapsed;
      break;
    case Activity::stalled:
      v.acc.stall_cycles += elapsed;
      break;
    case Activity::overhead:
      if (elapsed > t.overhead_left) throw std::logic_error("overcharged a protocol segment");
      t.overhead_left -= elapsed;
      v.acc.overhead_cycles += elapsed;
      break;
    case Activity::spin:
      v.acc.spin_cycles += elapsed;
      break;
    case Activity::idle:
      throw std::logic_error("charged an idle core");
  }
}

void MasterScheduler::advance_thread(CoreId c, Cycles now) {
  CoreRun& core = cores_[c];
  if (core.occupant == kNoVcpu) return;
  ThreadId tid = plat_.vcpus[core.occupant].thread;
  ThreadRun& t = threads_[tid];
  for (;;) {
    if (t.overhead_left == 0 && t.overhead_done) {
      auto done = std::move(t.overhead_done);
      t.overhead_done = nullptr;
      done();
      continue;
    }
    if (t.has_workload) {
      WorkloadCursor& cur = t.cursor;
      if (cur.stalled_until != 0 && cur.stalled_until <= now) {
        cur.stalled_until = 0;
        continue;
      }
      if (t.job_open && cur.job_remaining == 0 && cur.stalled_until == 0) {
        JobSample s{tid, t.jobs_recorded, cur.job_release, now};
        ++t.jobs_recorded;
        t.job_open = false;
        if (t.spec.max_samples == 0 || s.job < t.spec.max_samples) {
          for (auto& sink : sample_sinks_) sink(s);
        }
        if (!cur.pending_releases.empty()) {
          Cycles rel = cur.pending_releases.front();
          cur.pending_releases.erase(cur.pending_releases.begin());
          cursor_release_job(t.spec, cur, rel);
          t.job_open = true;
        }
        continue;
      }
    }
    break;
  }
}

bool MasterScheduler::thread_active(const ThreadRun& t, Cycles now) const {
  if (t.overhead_left > 0 || t.overhead_done) return true;
  if (t.spin) return true;
  if (!t.has_workload) return false;
  return cursor_active(t.spec, t.cursor, now);
}

void MasterScheduler::dispatch(CoreId c, Cycles now) {
  CoreRun& core = cores_[c];

  VcpuId pick = kNoVcpu;
  bool fg = false;
  for (VcpuId v : core.residents) {
    if (vcpus_[v].budget_left > 0 &&
        thread_active(threads_[plat_.vcpus[v].thread], now)) {
      pick = v;
      fg = true;
      break;
    }
  }
  if (pick == kNoVcpu && now >= core.throttled_until) {
    for (VcpuId v : core.residents) {
      if (!thread_active(threads_[plat_.vcpus[v].thread], now)) continue;
      if (pick == kNoVcpu || vcpus_[v].bgt < vcpus_[pick].bgt ||
          (vcpus_[v].bgt == vcpus_[pick].bgt && v < pick)) {
        pick = v;
      }
    }
    if (pick != kNoVcpu &&
        (core.occupant != pick || core.fg || now >= core.quantum_end)) {
      core.quantum_end = now + quantum_;
    }
  }

  Activity act = Activity::idle;
  Cycles transition = kNever;
  if (pick != kNoVcpu) {
    ThreadId tid = plat_.vcpus[pick].thread;
    ThreadRun& t = threads_[tid];
    if (t.has_workload && t.cursor.stalled_until != 0 && t.cursor.stalled_until <= now) {
      t.cursor.stalled_until = 0;  // the request landed while this thread was off core
    }
    if (t.overhead_left > 0) {
      act = Activity::overhead;
      transition = now + t.overhead_left;
    } else if (t.spin) {
      act = Activity::spin;
    } else {
      WorkloadCursor& cur = t.cursor;
      bool has_instr =
          t.spec.kind != WorkloadKind::periodic || cur.job_remaining > 0;
      if (cur.stalled_until > now) {
        act = Activity::stalled;
        transition = cur.stalled_until;
      } else if (cursor_at_miss(t.spec, cur) && has_instr) {
        Cycles done = bus_.issue(c, account_vcpu(pick), now);
        (void)cursor_take_miss(t.spec, cur);
        cur.stalled_until = done;
        vcpus_[pick].acc.mem_requests += 1;
        act = Activity::stalled;
        transition = done;
      } else {
        act = Activity::compute;
        if (auto b = instructions_to_boundary(t.spec, cur)) transition = now + *b;
      }
    }
  }

  Cycles wake = transition;
  if (pick != kNoVcpu) {
    if (fg) {
      wake = std::min(wake, now + vcpus_[pick].budget_left);
    } else {
      wake = std::min(wake, core.quantum_end);
    }
  } else if (core.throttled_until > now) {
    wake = core.throttled_until;
  }

  if ((core.occupant != pick || core.fg != fg || core.act != act) && trace_.enabled()) {
    if (pick == kNoVcpu) {
      trace_.emit(now, static_cast<int>(c), "core", "idle",
                  core.throttled_until > now ? "throttled" : "");
    } else {
      trace_.emit(now, static_cast<int>(c), plat_.threads[plat_.vcpus[pick].thread].name,
                  "run", std::string(fg ? "fg" : "bg") + " " + activity_name(act) +
                             " vcpu=" + plat_.vcpus[pick].name);
    }
  }
  core.occupant = pick;
  core.fg = fg;
  core.act = act;
  core.seg_start = now;

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

bool MasterScheduler::flush() {
  if (dirty_.empty()) return false;
  Cycles now = eng_.now();
  while (!dirty_.empty()) {
    CoreId c = *dirty_.begin();
    dirty_.erase(dirty_.begin());
    charge(cores_[c], now);
    advance_thread(c, now);
    dispatch(c, now);
  }
  return true;
}

void MasterScheduler::settle_gates() {
  std::set<VcpuId> current;
  for (const CoreRun& core : cores_) {
    if (core.managed && core.fg && core.occupant != kNoVcpu) current.insert(core.occupant);
  }
  std::vector<VcpuId> stopped;
  std::vector<VcpuId> started;
  for (VcpuId v : gate_active_) {
    if (!current.count(v)) stopped.push_back(v);
  }
  for (VcpuId v : current) {
    if (!gate_active_.count(v)) started.push_back(v);
  }
  gate_active_ = std::move(current);
  for (VcpuId v : stopped) {
    for (auto& fn : fg_stopped_) fn(v);
  }
  for (VcpuId v : started) {
    for (auto& fn : fg_started_) fn(v);
  }
}

void MasterScheduler::push_overhead(ThreadId t, Cycles n, std::function<void()> done) {
  ThreadRun& tr = threads_[t];
  if (!tr.managed) throw std::logic_error("protocol overhead on a guest thread");
  if (tr.overhead_left > 0 || tr.overhead_done) {
    throw std::logic_error("overlapping protocol segments on one thread");
  }
  tr.overhead_left = n;
  tr.overhead_done = std::move(done);
  mark_thread(t);
}

void MasterScheduler::set_spin(ThreadId t, bool on) {
  ThreadRun& tr = threads_[t];
  if (!tr.managed) throw std::logic_error("spin flag on a guest thread");
  // Workloadless threads model a program whose only simulated activity is
  // calling out; between calls they are still runnable, so clearing the
  // wait flag falls back to the always-spinning baseline.
  bool next = on || !tr.has_workload;
  if (tr.spin == next) return;
  tr.spin = next;
  mark_thread(t);
}

bool MasterScheduler::spinning(ThreadId t) const { return threads_[t].spin; }

void MasterScheduler::merge_remote_usage(VcpuId v, const ResourceUsage& u) {
  vcpus_[v].acc.remote_cpu += u.cpu_cycles;
  vcpus_[v].acc.remote_requests += u.mem_requests;
}

std::optional<VcpuId> MasterScheduler::core_foreground(CoreId c) const {
  const CoreRun& core = cores_[c];
  if (core.fg && core.occupant != kNoVcpu) return core.occupant;
  return std::nullopt;
}

bool MasterScheduler::vcpu_foreground(VcpuId v) const {
  return core_foreground(plat_.vcpus[v].core) == v;
}

bool MasterScheduler::core_background_class(CoreId c) const {
  const CoreRun& core = cores_[c];
  if (!core.managed) throw std::logic_error("guest core classified by the master scheduler");
  Cycles now = eng_.now();
  for (VcpuId v : core.residents) {
    if (vcpus_[v].budget_left > 0 &&
        thread_active(threads_[plat_.vcpus[v].thread], now)) {
      return false;
    }
  }
  return true;
}

void MasterScheduler::set_throttle(CoreId c, Cycles until) {
  CoreRun& core = cores_[c];
  if (!core.managed) throw std::logic_error("guest core throttled via the master scheduler");
  core.throttled_until = std::max(core.throttled_until, until);
  mark_core(c);
}

void MasterScheduler::charge_core(CoreId c) {
  charge(cores_[c], eng_.now());
}

void MasterScheduler::finalize() {
  Cycles now = eng_.now();
  for (std::size_t c = 0; c < cores_.size(); ++c) {
    if (cores_[c].managed) charge_core(static_cast<CoreId>(c));
  }
  for (std::size_t v = 0; v < vcpus_.size(); ++v) {
    // A boundary that fired exactly at the end already cut its row and left
    // a fresh accumulator; skip those.
    if (vcpus_[v].acc.period_start < now) emit_row(static_cast<VcpuId>(v), now);
  }
}

void MasterScheduler::boundary(VcpuId v) {
  Cycles now = eng_.now();
  CoreId c = plat_.vcpus[v].core;
  charge_core(c);
  emit_row(v, now);
  VcpuRun& vr = vcpus_[v];
  std::uint64_t next_period = vr.acc.period + 1;
  vr.budget_left = vr.budget;
  vr.acc = PeriodRow{};
  vr.acc.vcpu = v;
  vr.acc.period = next_period;
  vr.acc.period_start = now;
  vr.acc.budget = vr.budget;
  eng_.schedule(now + vr.period_len, EventKind::period_boundary, [this, v] { boundary(v); });
  mark_core(c);
}

void MasterScheduler::release(ThreadId tid, Cycles at) {
  ThreadRun& t = threads_[tid];
  cursor_release_job(t.spec, t.cursor, at);
  if (!t.job_open && t.cursor.job_remaining > 0) t.job_open = true;
  ++t.releases_made;
  if (t.spec.max_samples == 0 || t.releases_made < t.spec.max_samples) {
    eng_.schedule(at + t.spec.period, EventKind::workload_step,
                  [this, tid] { release(tid, eng_.now()); });
  }
  mark_thread(tid);
}

void MasterScheduler::emit_row(VcpuId v, Cycles) {
  for (auto& sink : row_sinks_) sink(vcpus_[v].acc);
}

}  // namespace vlibsim
