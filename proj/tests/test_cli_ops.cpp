#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vlibsim/report.hpp"
#include "vlibsim/scenario.hpp"
#include "vlibsim/simulator.hpp"

using namespace vlibsim;
namespace fs = std::filesystem;

namespace {

ScenarioConfig load_ok(const std::string& file) {
  ParseResult r = load_scenario(std::string(SCENARIO_DIR) + "/" + file);
  REQUIRE(r.ok());
  return *r.config;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE_MESSAGE(bool(f), p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / leaf;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("metrics rows are one line per vcpu period in run order") {
  ScenarioConfig cfg = load_ok("overhead_calibration.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  std::ostringstream os;
  write_metrics_csv(os, sim.platform(), out.period_rows);
  auto lines = lines_of(os.str());

  REQUIRE(lines.size() == out.period_rows.size() + 1);
  CHECK(lines[0] ==
        "vcpu,period,period_start,budget,fg_used,bg_used,overhead_cycles,spin_cycles,"
        "stall_cycles,instructions,fg_instructions,mem_requests,remote_cpu,remote_requests");
  // Every data line names the vcpu and has exactly 14 columns.
  for (std::size_t i = 1; i < lines.size(); ++i) {
    CAPTURE(lines[i]);
    CHECK(lines[i].rfind("client,", 0) == 0);
    CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 13);
  }
}

TEST_CASE("call rows freeze the whole protocol timeline") {
  ScenarioConfig cfg = load_ok("overhead_calibration.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  std::ostringstream os;
  write_calls_csv(os, sim.platform(), out.calls);
  auto lines = lines_of(os.str());

  REQUIRE(lines.size() == 5);
  CHECK(lines[0] ==
        "id,kind,client,port,ops,issued_at,enqueued_at,first_service_at,flag_at,"
        "completed_at,status,suspensions,charged_cpu,charged_requests,charged_cache_bytes");
  CHECK(lines[1] == "0,init,client,7,1,0,2377,2377,5766,8143,done,0,3389,0,4096");
  CHECK(lines[2] == "1,sync,client,7,1,10000,12377,12377,13389,15766,done,0,1012,0,0");
  CHECK(lines[3] == "2,destroy,client,7,1,20000,22377,22377,23389,25766,done,0,1012,0,0");
  CHECK(lines[4] == "3,sync,client,7,1,30000,32377,32377,35766,38143,done,0,3389,0,4096");
}

TEST_CASE("timestamps that never happened print as empty cells") {
  ScenarioConfig cfg = load_ok("lidar_darknet_donated.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  std::ostringstream os;
  write_calls_csv(os, sim.platform(), out.calls);
  auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 2);
  // A donation has no completion time: the cell between flag_at and status
  // stays empty.
  CHECK(lines[1] == "0,donate,donor,9,1,0,2377,2377,5285,,donated,0,142149,0,4096");
}

TEST_CASE("bus and throttle rows print nine-digit latencies and flags") {
  std::vector<BusWindowRow> windows(2);
  windows[0].window_start = 0;
  windows[0].window_end = 1000;
  windows[0].occupancy = 10;
  windows[0].requests = 3;
  windows[0].avg_latency = 10.0 / 3.0;
  windows[0].triggered = true;
  windows[1].window_start = 1000;
  windows[1].window_end = 2000;

  std::ostringstream os;
  write_bus_csv(os, windows);
  auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "window_start,window_end,occupancy,requests,avg_latency,triggered");
  CHECK(lines[1] == "0,1000,10,3,3.333333333,1");
  CHECK(lines[2] == "1000,2000,0,0,,0");

  std::vector<ThrottleRow> rows(1);
  rows[0].at = 1000;
  rows[0].core = 2;
  rows[0].requests = 5;
  rows[0].duration = 750;
  rows[0].until = 1750;
  std::ostringstream ts;
  write_throttle_csv(ts, rows);
  auto tlines = lines_of(ts.str());
  REQUIRE(tlines.size() == 2);
  CHECK(tlines[0] == "at,core,requests,duration,until");
  CHECK(tlines[1] == "1000,2,5,750,1750");
}

TEST_CASE("job histograms keep one thread per file and derive the latency") {
  std::vector<JobSample> samples(3);
  samples[0] = JobSample{0, 0, 0, 1200};
  samples[1] = JobSample{1, 0, 500, 900};  // different thread, filtered out
  samples[2] = JobSample{0, 1, 5000, 6100};

  std::ostringstream os;
  write_hist_csv(os, samples, 0);
  auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "job,release,complete,latency");
  CHECK(lines[1] == "0,0,1200,1200");
  CHECK(lines[2] == "1,5000,6100,1100");
}

TEST_CASE("write_outputs lays down the complete bundle") {
  ScenarioConfig cfg = load_ok("lidar_alone.json");
  Simulation sim(cfg);
  RunOutputs out = sim.run();

  fs::path dir = fresh_dir("vlibsim_bundle_test");
  write_outputs(dir.string(), sim.platform(), out);

  for (const char* f :
       {"metrics.csv", "calls.csv", "bus.csv", "throttle.csv", "summary.txt",
        "hist_lidar.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }

  // 82 jobs and a header.
  CHECK(lines_of(slurp(dir / "hist_lidar.csv")).size() == 83);

  std::string summary = slurp(dir / "summary.txt");
  CHECK(summary.find("scenario=lidar_alone\n") != std::string::npos);
  CHECK(summary.find("digest=f6414d174d8b8224\n") != std::string::npos);
  CHECK(summary.find("rng=mt19937_64\n") != std::string::npos);
  CHECK(summary.find("calls=0\n") != std::string::npos);
  CHECK(summary.find("admission_accepted=1\n") != std::string::npos);
  CHECK(summary.find("vcpu.lidar.fg_instructions=") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("the same scenario writes the same bytes twice") {
  ScenarioConfig cfg = load_ok("lidar_darknet_donated.json");

  fs::path a = fresh_dir("vlibsim_rerun_a");
  fs::path b = fresh_dir("vlibsim_rerun_b");
  std::string digest_a, digest_b;
  {
    Simulation sim(cfg);
    RunOutputs out = sim.run();
    digest_a = out.digest;
    write_outputs(a.string(), sim.platform(), out);
  }
  {
    Simulation sim(cfg);
    RunOutputs out = sim.run();
    digest_b = out.digest;
    write_outputs(b.string(), sim.platform(), out);
  }
  CHECK(digest_a == digest_b);

  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    fs::path name = entry.path().filename();
    CAPTURE(name.string());
    REQUIRE(fs::exists(b / name));
    CHECK(slurp(entry.path()) == slurp(b / name));
    ++compared;
  }
  CHECK(compared >= 5);
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // TEST_SUITE("cli")
