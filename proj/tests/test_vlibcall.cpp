#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "vlibsim/scenario.hpp"
#include "vlibsim/simulator.hpp"

using namespace vlibsim;

namespace {

ScenarioConfig load_ok(const std::string& file) {
  ParseResult r = load_scenario(std::string(SCENARIO_DIR) + "/" + file);
  REQUIRE(r.ok());
  return *r.config;
}

ScenarioConfig parse_ok(const std::string& text) {
  ParseResult r = parse_scenario(text);
  REQUIRE_MESSAGE(r.ok(), (r.errors.empty() ? "" : r.errors.front()));
  return *r.config;
}

// Server-side cycles a completed call must have been billed: one world entry
// per window it ran in, the channel mapping if this call paid it, the
// demand itself, one exit, and a context save per suspension.
Cycles expected_charge(const OverheadTable& t, const CallRecord& r, Cycles demand) {
  Cycles mapping = r.charged.cache_bytes > 0 ? t.channel_mapping : 0;
  return (1 + r.suspensions) * t.vm_entry + mapping + demand + t.vm_exit +
         r.suspensions * t.remote_desched;
}

}  // namespace

TEST_SUITE("vlibcall") {

TEST_CASE("calibration scenario: warm and cold round trips") {
  ScenarioConfig cfg = load_ok("overhead_calibration.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  REQUIRE(out.calls.size() == 4);
  const OverheadTable& t = cfg.overheads;

  // init maps the channel: full path plus the one-time mapping cost.
  const CallRecord& init = out.calls[0];
  CHECK(init.kind == CallKind::init);
  CHECK(init.issued_at == 0);
  CHECK(init.enqueued_at == 2377);
  CHECK(init.first_service_at == 2377);
  CHECK(init.flag_at == 5766);
  CHECK(init.completed_at == 8143);
  CHECK(init.status == CallStatus::done);
  CHECK(init.suspensions == 0);
  CHECK(init.charged.cpu_cycles == 3389);
  CHECK(init.charged.cache_bytes == 4096);
  CHECK(init.charged.cpu_cycles == expected_charge(t, init, 0));

  // A warm zero-work call is the round-trip floor.
  const CallRecord& warm = out.calls[1];
  CHECK(warm.kind == CallKind::sync);
  CHECK(warm.issued_at == 10000);
  CHECK(warm.flag_at == 13389);
  CHECK(warm.completed_at == 15766);
  CHECK(warm.completed_at - warm.issued_at == 5766);
  CHECK(warm.charged.cpu_cycles == 1012);
  CHECK(warm.charged.cache_bytes == 0);

  // destroy tears the channel down; it costs the same as a warm call.
  const CallRecord& destroy = out.calls[2];
  CHECK(destroy.kind == CallKind::destroy);
  CHECK(destroy.completed_at - destroy.issued_at == 5766);
  CHECK(destroy.charged.cpu_cycles == 1012);

  // The next call pays the mapping again: the cold path.
  const CallRecord& cold = out.calls[3];
  CHECK(cold.issued_at == 30000);
  CHECK(cold.flag_at == 35766);
  CHECK(cold.completed_at == 38143);
  CHECK(cold.completed_at - cold.issued_at == 8143);
  CHECK(cold.charged.cpu_cycles == 3389);
  CHECK(cold.charged.cache_bytes == 4096);
  CHECK(cold.completed_at - cold.issued_at ==
        (warm.completed_at - warm.issued_at) + t.channel_mapping);
}

TEST_CASE("a long request streams across budget windows and is charged for each") {
  ScenarioConfig cfg = load_ok("calls_per_request.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  REQUIRE(out.calls.size() == 2);
  const CallRecord& big = out.calls[1];
  CHECK(big.issued_at == 100000);
  CHECK(big.enqueued_at == 102377);
  CHECK(big.first_service_at == 102377);
  CHECK(big.flag_at == 309451);
  CHECK(big.completed_at == 311828);
  CHECK(big.status == CallStatus::done);
  CHECK(big.suspensions == 2);
  // 25000 demand plus three entries, one exit, two context saves.
  CHECK(big.charged.cpu_cycles == 29380);
  CHECK(big.charged.cpu_cycles == expected_charge(cfg.overheads, big, 25000));
  CHECK(big.charged.cache_bytes == 0);  // init already mapped the channel

  // Client periods: the issue halves land as overhead, the guest-side bill
  // as remote_cpu, and the wait burns the rest of the period spinning.
  VcpuId client = sim.platform().vcpu_by_name.at("client");
  std::vector<PeriodRow> rows;
  for (const PeriodRow& r : out.period_rows) {
    if (r.vcpu == client) rows.push_back(r);
  }
  REQUIRE(rows.size() == 4);
  const Cycles want_overhead[] = {4754, 2377, 0, 2377};
  const Cycles want_spin[] = {95246, 97623, 100000, 97623};
  const Cycles want_remote[] = {3389, 8776, 11153, 9451};
  for (std::size_t i = 0; i < 4; ++i) {
    CAPTURE(i);
    CHECK(rows[i].fg_used == 10000);
    CHECK(rows[i].bg_used == 90000);
    CHECK(rows[i].overhead_cycles == want_overhead[i]);
    CHECK(rows[i].spin_cycles == want_spin[i]);
    CHECK(rows[i].remote_cpu == want_remote[i]);
  }
  Cycles remote_total = 0;
  for (const PeriodRow& r : rows) remote_total += r.remote_cpu;
  CHECK(remote_total == out.calls[0].charged.cpu_cycles + big.charged.cpu_cycles);
}

TEST_CASE("async batches run on the proxy vcpu's windows") {
  ScenarioConfig cfg = load_ok("calls_batch_async.json");
  RunOptions opt;
  opt.collect_segments = true;
  Simulation sim(cfg, opt);
  RunOutputs out = sim.run();

  REQUIRE(out.calls.size() == 2);
  const CallRecord& batch = out.calls[1];
  CHECK(batch.kind == CallKind::async);
  CHECK(batch.ops == 3);
  CHECK(batch.issued_at == 10000);
  CHECK(batch.enqueued_at == 14754);  // async issue charges the whole client path
  CHECK(batch.first_service_at == 20000);  // the proxy's next foreground window
  CHECK(batch.flag_at == 24012);
  CHECK(batch.completed_at == batch.flag_at);  // nobody waits on an async flag
  CHECK(batch.suspensions == 0);
  CHECK(batch.charged.cpu_cycles == 4012);
  CHECK(batch.charged.cpu_cycles == expected_charge(cfg.overheads, batch, 3000));

  const Platform& plat = sim.platform();
  VcpuId submitter = plat.vcpu_by_name.at("submitter");
  VcpuId proxy = plat.vcpu_by_name.at("proxy");
  CHECK(batch.funder == proxy);

  Cycles remote_submitter = 0;
  Cycles remote_proxy = 0;
  Cycles fg_submitter = 0;
  Cycles fg_proxy = 0;
  for (const PeriodRow& r : out.period_rows) {
    if (r.vcpu == submitter) {
      remote_submitter += r.remote_cpu;
      fg_submitter += r.fg_used;
    } else if (r.vcpu == proxy) {
      remote_proxy += r.remote_cpu;
      fg_proxy += r.fg_used;
    }
  }
  CHECK(remote_submitter == 3389);  // the init call it waited on
  CHECK(remote_proxy == 4012);      // the batch it funded
  CHECK(fg_submitter == 20000);
  CHECK(fg_proxy == 25000);

  // The batch must execute strictly inside the proxy's foreground.
  for (const ServiceSegment& s : out.segments) {
    if (s.call != batch.id || s.phase == 'S') continue;
    bool inside = false;
    for (const FgSpan& span : out.fg_spans) {
      if (span.vcpu == proxy && span.start <= s.start && s.end <= span.end) {
        inside = true;
        break;
      }
    }
    CHECK_MESSAGE(inside, "segment at ", s.start, " escaped the proxy windows");
  }
}

TEST_CASE("a donation never returns and keeps billing its funder") {
  ScenarioConfig cfg = load_ok("lidar_darknet_donated.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  REQUIRE(out.calls.size() == 1);
  const CallRecord& don = out.calls[0];
  CHECK(don.kind == CallKind::donate);
  CHECK(don.status == CallStatus::donated);
  CHECK(don.issued_at == 0);
  CHECK(don.enqueued_at == 2377);
  CHECK(don.first_service_at == 2377);
  CHECK(don.flag_at == 5285);  // establishment done: entry plus mapping
  CHECK(don.completed_at == kNever);
  CHECK(don.charged.cache_bytes == 4096);
  CHECK(don.charged.cpu_cycles == 142149);  // window machinery for the whole run
}

TEST_CASE("timeouts unwind the call and cool the channel") {
  const char* base = R"({
    "name": "t", "cycles_per_ms": 1000.0, "cores": 2, "duration_ms": 40.0,
    "domains": [ { "name": "m", "kind": "master", "cores": [0] },
                 { "name": "g", "kind": "vlib", "cores": [1], "port": 7, "server": true } ],
    "threads": [ { "name": "c", "domain": "m" } ],
    "vcpus": [ { "name": "c", "budget_ms": 18.0, "period_ms": 20.0, "core": 0, "thread": "c" } ],
    "calls": [
      { "at_ms": 0.0, "kind": "init", "client": "c", "port": 7 },
      { "at_ms": 10.0, "kind": "sync", "client": "c", "port": 7,
        "service": { "demand": 50000 }, "timeout_ms": TIMEOUT },
      { "at_ms": 25.0, "kind": "sync", "client": "c", "port": 7,
        "service": { "demand": 500 } }
    ]
  })";
  auto with_timeout = [&](const char* t) {
    std::string s = base;
    return s.replace(s.find("TIMEOUT"), 7, t);
  };

  SUBCASE("mid-service: pay the context save, return, and remap next time") {
    ScenarioConfig cfg = parse_ok(with_timeout("5.0"));
    Simulation sim(cfg);
    RunOutputs out = sim.run();
    REQUIRE(out.calls.size() == 3);

    const CallRecord& dead = out.calls[1];
    CHECK(dead.status == CallStatus::timed_out);
    CHECK(dead.first_service_at == 12377);
    CHECK(dead.flag_at == kNever);
    // Entry at 12377, demand from 12908, deadline at 15000, save until
    // 16153, then the client charges its return half.
    CHECK(dead.completed_at == 18530);
    CHECK(dead.suspensions == 0);
    CHECK(dead.charged.cpu_cycles == 531 + 2092 + 1153);
    CHECK(dead.charged.cache_bytes == 0);

    // The abandoned conversation invalidated the channel: the follow-up
    // call pays the mapping again.
    const CallRecord& next = out.calls[2];
    CHECK(next.status == CallStatus::done);
    CHECK(next.flag_at == 31266);
    CHECK(next.completed_at == 33643);
    CHECK(next.charged.cache_bytes == 4096);
    CHECK(next.charged.cpu_cycles == 531 + 2377 + 500 + 481);
  }

  SUBCASE("during issue: the call never reaches the domain") {
    ScenarioConfig cfg = parse_ok(with_timeout("1.0"));
    Simulation sim(cfg);
    RunOutputs out = sim.run();
    REQUIRE(out.calls.size() == 3);

    const CallRecord& dead = out.calls[1];
    CHECK(dead.status == CallStatus::timed_out);
    CHECK(dead.enqueued_at == kNever);
    CHECK(dead.first_service_at == kNever);
    CHECK(dead.completed_at == 14754);  // issue half plus the return half
    CHECK(dead.charged.cpu_cycles == 0);

    // Nothing reached the server, so the channel mapping stayed warm.
    const CallRecord& next = out.calls[2];
    CHECK(next.charged.cache_bytes == 0);
    CHECK(next.charged.cpu_cycles == 531 + 500 + 481);
  }
}

TEST_CASE("one domain serves its queue strictly in arrival order") {
  ScenarioConfig cfg = parse_ok(R"({
    "name": "t", "cycles_per_ms": 1000.0, "cores": 3, "duration_ms": 30.0,
    "domains": [ { "name": "m", "kind": "master", "cores": [0, 1] },
                 { "name": "g", "kind": "vlib", "cores": [2], "port": 4, "server": true } ],
    "threads": [ { "name": "ca", "domain": "m" }, { "name": "cb", "domain": "m" } ],
    "vcpus": [
      { "name": "ca", "budget_ms": 20.0, "period_ms": 20.0, "core": 0, "thread": "ca" },
      { "name": "cb", "budget_ms": 20.0, "period_ms": 20.0, "core": 1, "thread": "cb" }
    ],
    "calls": [
      { "at_ms": 1.0, "kind": "sync", "client": "ca", "port": 4,
        "service": { "demand": 2000 } },
      { "at_ms": 1.2, "kind": "sync", "client": "cb", "port": 4,
        "service": { "demand": 500 } }
    ]
  })");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  REQUIRE(out.calls.size() == 2);
  const CallRecord& a = out.calls[0];
  const CallRecord& b = out.calls[1];
  CHECK(a.enqueued_at == 3377);
  CHECK(b.enqueued_at == 3577);

  // a runs to completion before b sees the core at all.
  CHECK(a.first_service_at == 3377);
  CHECK(a.flag_at == 3377 + 531 + 2377 + 2000 + 481);
  CHECK(a.completed_at == a.flag_at + 2377);
  CHECK(b.first_service_at == a.flag_at);
  CHECK(b.flag_at == b.first_service_at + 531 + 2377 + 500 + 481);
  CHECK(b.completed_at == b.flag_at + 2377);

  // Separate clients map separate channels, so both paid the mapping.
  CHECK(a.charged.cache_bytes == 4096);
  CHECK(b.charged.cache_bytes == 4096);
}

TEST_CASE("guest-side work happens only while the funder holds its core") {
  ScenarioConfig cfg = load_ok("calls_per_request.json");
  RunOptions opt;
  opt.collect_segments = true;
  Simulation sim(cfg, opt);
  RunOutputs out = sim.run();
  REQUIRE_FALSE(out.segments.empty());
  REQUIRE_FALSE(out.fg_spans.empty());

  VcpuId client = sim.platform().vcpu_by_name.at("client");

  // Every productive segment sits inside a foreground span of its funder;
  // context saves start exactly where a span ends.
  for (const ServiceSegment& s : out.segments) {
    CAPTURE(s.start);
    CAPTURE(s.phase);
    if (s.phase == 'S') {
      bool at_edge = std::any_of(out.fg_spans.begin(), out.fg_spans.end(),
                                 [&](const FgSpan& f) {
                                   return f.vcpu == client && f.end == s.start;
                                 });
      CHECK(at_edge);
    } else {
      bool inside = std::any_of(out.fg_spans.begin(), out.fg_spans.end(),
                                [&](const FgSpan& f) {
                                  return f.vcpu == client && f.start <= s.start &&
                                         s.end <= f.end;
                                });
      CHECK(inside);
    }
  }

  // Per call, the segments add up to exactly what was billed.
  for (const CallRecord& rec : out.calls) {
    Cycles total = 0;
    for (const ServiceSegment& s : out.segments) {
      if (s.call == rec.id) total += s.end - s.start;
    }
    CHECK(total == rec.charged.cpu_cycles);
  }

  // The service core never runs two things at once.
  std::vector<ServiceSegment> ordered = out.segments;
  std::sort(ordered.begin(), ordered.end(),
            [](const ServiceSegment& x, const ServiceSegment& y) {
              return x.start < y.start;
            });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i].core != ordered[i - 1].core) continue;
    CHECK(ordered[i - 1].end <= ordered[i].start);
  }

  // The streamed call shows the expected window anatomy: a fresh entry for
  // each of the three windows, one exit, two saves.
  const CallRecord& big = out.calls[1];
  int entries = 0;
  int exits = 0;
  int saves = 0;
  for (const ServiceSegment& s : out.segments) {
    if (s.call != big.id) continue;
    entries += s.phase == 'E';
    exits += s.phase == 'X';
    saves += s.phase == 'S';
  }
  CHECK(entries == 3);
  CHECK(exits == 1);
  CHECK(saves == 2);
}

}  // TEST_SUITE("vlibcall")
