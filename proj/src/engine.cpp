#include "vlibsim/engine.hpp"

#include <cinttypes>

namespace vlibsim {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::timer: return "timer";
    case EventKind::period_boundary: return "period_boundary";
    case EventKind::request_complete: return "request_complete";
    case EventKind::monitor_tick: return "monitor_tick";
    case EventKind::ipi: return "ipi";
    case EventKind::vm_unblock: return "vm_unblock";
    case EventKind::call_timeout: return "call_timeout";
    case EventKind::workload_step: return "workload_step";
  }
  return "?";
}

EventId Engine::schedule(Cycles fire_at, EventKind kind, Handler fn) {
  if (fire_at < now_) {
    throw std::logic_error(std::string("event scheduled in the past: ") +
                           event_kind_name(kind) + " at " + std::to_string(fire_at) +
                           ", now " + std::to_string(now_));
  }
  EventId id = next_id_++;
  heap_.push(Entry{fire_at, seq_++, id});
  live_.emplace(id, std::make_pair(kind, std::move(fn)));
  ++stats_.scheduled;
  return id;
}

bool Engine::cancel(EventId id) {
  auto it = live_.find(id);
  if (it == live_.end()) return false;
  live_.erase(it);
  ++stats_.cancelled;
  return true;
}

std::uint64_t Engine::run_until(Cycles t_end) {
  std::uint64_t dispatched = 0;
  while (!heap_.empty() && heap_.top().at <= t_end) {
    Entry e = heap_.top();
    heap_.pop();
    auto it = live_.find(e.id);
    if (it == live_.end()) continue;  // cancelled; heap entry is stale
    now_ = e.at;
    EventKind kind = it->second.first;
    Handler fn = std::move(it->second.second);
    live_.erase(it);
    try {
      fn();
      if (post_dispatch_) post_dispatch_();
    } catch (const std::exception& ex) {
      throw SimError(std::string("event handler failed: kind=") + event_kind_name(kind) +
                     " at=" + std::to_string(e.at) + ": " + ex.what());
    }
    ++stats_.dispatched;
    ++dispatched;
  }
  now_ = t_end;
  return dispatched;
}

void TraceSink::emit(Cycles at, int core, std::string_view subject,
                     std::string_view action, const std::string& detail) {
  if (!enabled_) return;
  char head[64];
  if (core < 0) {
    std::snprintf(head, sizeof head, "%" PRIu64 "\t-\t", at);
  } else {
    std::snprintf(head, sizeof head, "%" PRIu64 "\t%d\t", at, core);
  }
  std::string line(head);
  line.append(subject);
  line.push_back('\t');
  line.append(action);
  line.push_back('\t');
  line.append(detail);
  lines_.push_back(std::move(line));
}

void TraceSink::write(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw SimError("cannot open trace file: " + path);
  for (const auto& l : lines_) {
    std::fwrite(l.data(), 1, l.size(), f);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

}  // namespace vlibsim
