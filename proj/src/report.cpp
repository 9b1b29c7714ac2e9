#include "vlibsim/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace vlibsim {

namespace {

// kNever means "this never happened"; the cell stays empty.
std::string cell(Cycles t) {
  return t == kNever ? std::string() : std::to_string(t);
}

std::string cell(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

std::ofstream open_file(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw SimError("cannot write " + p.string());
  return f;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const Platform& plat,
                       const std::vector<PeriodRow>& rows) {
  os << "vcpu,period,period_start,budget,fg_used,bg_used,overhead_cycles,spin_cycles,"
        "stall_cycles,instructions,fg_instructions,mem_requests,remote_cpu,remote_requests\n";
  for (const PeriodRow& r : rows) {
    os << plat.vcpus[r.vcpu].name << ',' << r.period << ',' << r.period_start << ','
       << r.budget << ',' << r.fg_used << ',' << r.bg_used << ',' << r.overhead_cycles << ','
       << r.spin_cycles << ',' << r.stall_cycles << ',' << r.instructions << ','
       << r.fg_instructions << ',' << r.mem_requests << ',' << r.remote_cpu << ','
       << r.remote_requests << '\n';
  }
}

void write_calls_csv(std::ostream& os, const Platform& plat,
                     const std::vector<CallRecord>& calls) {
  os << "id,kind,client,port,ops,issued_at,enqueued_at,first_service_at,flag_at,"
        "completed_at,status,suspensions,charged_cpu,charged_requests,charged_cache_bytes\n";
  for (const CallRecord& c : calls) {
    os << c.id << ',' << call_kind_name(c.kind) << ',' << plat.threads[c.client].name << ','
       << c.port << ',' << c.ops << ',' << cell(c.issued_at) << ',' << cell(c.enqueued_at)
       << ',' << cell(c.first_service_at) << ',' << cell(c.flag_at) << ','
       << cell(c.completed_at) << ',' << call_status_name(c.status) << ',' << c.suspensions
       << ',' << c.charged.cpu_cycles << ',' << c.charged.mem_requests << ','
       << c.charged.cache_bytes << '\n';
  }
}

void write_bus_csv(std::ostream& os, const std::vector<BusWindowRow>& rows) {
  os << "window_start,window_end,occupancy,requests,avg_latency,triggered\n";
  for (const BusWindowRow& r : rows) {
    os << r.window_start << ',' << r.window_end << ',' << r.occupancy << ',' << r.requests
       << ',' << (r.avg_latency ? cell(*r.avg_latency) : std::string()) << ','
       << (r.triggered ? 1 : 0) << '\n';
  }
}

void write_throttle_csv(std::ostream& os, const std::vector<ThrottleRow>& rows) {
  os << "at,core,requests,duration,until\n";
  for (const ThrottleRow& r : rows) {
    os << r.at << ',' << r.core << ',' << r.requests << ',' << r.duration << ',' << r.until
       << '\n';
  }
}

void write_hist_csv(std::ostream& os, const std::vector<JobSample>& samples, ThreadId thread) {
  os << "job,release,complete,latency\n";
  for (const JobSample& s : samples) {
    if (s.thread != thread) continue;
    os << s.job << ',' << s.release << ',' << s.complete << ',' << s.complete - s.release
       << '\n';
  }
}

void write_summary(std::ostream& os,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

void write_outputs(const std::string& dir, const Platform& plat, const RunOutputs& out) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  fs::create_directories(root);

  { auto f = open_file(root / "metrics.csv"); write_metrics_csv(f, plat, out.period_rows); }
  { auto f = open_file(root / "calls.csv"); write_calls_csv(f, plat, out.calls); }
  { auto f = open_file(root / "bus.csv"); write_bus_csv(f, out.bus_windows); }
  { auto f = open_file(root / "throttle.csv"); write_throttle_csv(f, out.throttle_rows); }
  { auto f = open_file(root / "summary.txt"); write_summary(f, out.summary); }

  std::map<ThreadId, bool> seen;
  for (const JobSample& s : out.job_samples) seen[s.thread] = true;
  for (const auto& [tid, _] : seen) {
    auto f = open_file(root / ("hist_" + plat.threads[tid].name + ".csv"));
    write_hist_csv(f, out.job_samples, tid);
  }
}

}  // namespace vlibsim
