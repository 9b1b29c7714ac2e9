#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlibsim/report.hpp"
#include "vlibsim/simulator.hpp"

namespace fs = std::filesystem;
using namespace vlibsim;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw SimError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ScenarioConfig parse_or_throw(const std::string& text, const std::string& what) {
  ParseResult pr = parse_scenario(text);
  if (!pr.ok()) {
    std::string all;
    for (const auto& e : pr.errors) all += "\n  " + e;
    throw SimError(what + " is not a valid scenario:" + all);
  }
  for (const auto& w : pr.warnings) std::cerr << "warning: " << what << ": " << w << "\n";
  return *pr.config;
}

RunOutputs run_and_write(const ScenarioConfig& cfg, const fs::path& dir, bool trace) {
  Simulation sim(cfg, RunOptions{trace, false});
  RunOutputs out = sim.run();
  write_outputs(dir.string(), sim.platform(), out);
  if (trace) sim.trace().write((dir / "trace.log").string());
  return out;
}

std::string summary_value(const RunOutputs& out, const std::string& key) {
  for (const auto& [k, v] : out.summary) {
    if (k == key) return v;
  }
  throw SimError("run summary has no key '" + key + "'");
}

std::string sanitize(const std::string& s) {
  std::string r = s;
  for (char& c : r) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-' || c == '=';
    if (!ok) c = '_';
  }
  return r;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

int cmd_validate(const std::string& path) {
  ParseResult pr = load_scenario(path);
  for (const auto& e : pr.errors) std::cerr << "error: " << e << "\n";
  for (const auto& w : pr.warnings) std::cerr << "warning: " << w << "\n";
  if (!pr.ok()) return 1;
  const ScenarioConfig& cfg = *pr.config;
  Platform plat = build_platform(cfg);
  AdmissionVerdict verdict = admit(plat.vcpus, plat.cores);
  for (const auto& ca : verdict.cores) {
    std::printf("core %u: utilization %.6f, %s bound %.6f, %s\n", ca.core, ca.utilization,
                ca.harmonic ? "harmonic" : "rms", ca.bound,
                ca.accepted ? "admitted" : "REJECTED");
  }
  if (!verdict.accepted && cfg.strict_admission) {
    std::cerr << "error: vcpu set not schedulable and strict_admission is set\n";
    return 1;
  }
  std::printf("ok: %s digest=%s\n", cfg.name.c_str(), scenario_digest(cfg).c_str());
  return 0;
}

int cmd_run(const std::string& path, const std::string& outdir, bool trace) {
  ParseResult pr = load_scenario(path);
  for (const auto& e : pr.errors) std::cerr << "error: " << e << "\n";
  for (const auto& w : pr.warnings) std::cerr << "warning: " << w << "\n";
  if (!pr.ok()) return 1;
  RunOutputs out = run_and_write(*pr.config, outdir, trace);
  std::printf("wrote %s: %llu events, %zu calls (%s done, %s timed out)\n", outdir.c_str(),
              static_cast<unsigned long long>(out.events), out.calls.size(),
              summary_value(out, "calls_done").c_str(),
              summary_value(out, "calls_timed_out").c_str());
  return 0;
}

int cmd_sweep(const std::string& path, const std::string& dotted,
              const std::vector<std::string>& values, const std::string& outdir, bool trace) {
  std::string text = slurp(path);
  ScenarioConfig base = parse_or_throw(text, path);

  std::string alone_text, unc_text, victim;
  if (base.experiment) {
    fs::path dir = fs::path(path).parent_path();
    alone_text = slurp(dir / base.experiment->baseline_alone);
    unc_text = slurp(dir / base.experiment->baseline_uncontrolled);
    victim = base.experiment->victim_vcpu;
  }

  fs::create_directories(outdir);
  std::ofstream cmp(fs::path(outdir) / "comparison.csv");
  if (!cmp) throw SimError("cannot write " + outdir + "/comparison.csv");

  bool header_done = false;
  for (const std::string& value : values) {
    auto configure = [&](const std::string& t, const std::string& what) {
      return parse_or_throw(apply_json_path(t, dotted, value), what);
    };
    std::string tag = sanitize(dotted + "=" + value);
    fs::path vdir = fs::path(outdir) / tag;

    ScenarioConfig cfg = configure(text, path);
    RunOutputs out = run_and_write(cfg, vdir / "run", trace);

    if (base.experiment) {
      RunOutputs alone = run_and_write(configure(alone_text, "baseline_alone"),
                                       vdir / "alone", trace);
      RunOutputs unc = run_and_write(configure(unc_text, "baseline_uncontrolled"),
                                     vdir / "uncontrolled", trace);
      std::string key = "vcpu." + victim + ".fg_instructions";
      double a = std::stod(summary_value(alone, key));
      double u = std::stod(summary_value(unc, key));
      double m = std::stod(summary_value(out, key));
      if (u <= 0 || m <= 0) throw SimError("victim made no foreground progress");
      double slow_unc = a / u;
      double slow_mit = a / m;
      if (!header_done) {
        cmp << "value,alone_fg_instructions,uncontrolled_fg_instructions,"
               "mitigated_fg_instructions,slowdown_uncontrolled,slowdown_mitigated,"
               "reduction\n";
        header_done = true;
      }
      cmp << value << ',' << fmt(a) << ',' << fmt(u) << ',' << fmt(m) << ','
          << fmt(slow_unc) << ',' << fmt(slow_mit) << ',';
      // How much of the contention-induced slowdown the mitigation clawed
      // back; undefined when there was no slowdown to begin with.
      if (slow_unc > 1.0) cmp << fmt((slow_unc - slow_mit) / (slow_unc - 1.0));
      cmp << '\n';
    } else {
      if (!header_done) {
        cmp << "value";
        for (const auto& [k, v] : out.summary) {
          if (k.rfind("vcpu.", 0) == 0 && k.size() > 16 &&
              k.compare(k.size() - 16, 16, ".fg_instructions") == 0) {
            cmp << ',' << k;
          }
        }
        cmp << "\n";
        header_done = true;
      }
      cmp << value;
      for (const auto& [k, v] : out.summary) {
        if (k.rfind("vcpu.", 0) == 0 && k.size() > 16 &&
            k.compare(k.size() - 16, 16, ".fg_instructions") == 0) {
          cmp << ',' << v;
        }
      }
      cmp << "\n";
    }
    std::printf("swept %s\n", tag.c_str());
  }
  std::printf("wrote %s/comparison.csv\n", outdir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of a master/guest real-time OS split"};
  app.require_subcommand(1);

  std::string scenario, outdir, dotted;
  std::vector<std::string> values;
  bool trace = false;

  CLI::App* validate = app.add_subcommand("validate", "Parse and check a scenario file");
  validate->add_option("scenario", scenario, "Scenario JSON")->required();

  CLI::App* run = app.add_subcommand("run", "Run one scenario and write its reports");
  run->add_option("scenario", scenario, "Scenario JSON")->required();
  run->add_option("-o,--out", outdir, "Output directory")->required();
  run->add_flag("--trace", trace, "Also write an event trace");

  CLI::App* sweep = app.add_subcommand("sweep", "Run a scenario across parameter values");
  sweep->add_option("scenario", scenario, "Scenario JSON")->required();
  sweep->add_option("--path", dotted, "Dotted JSON path, * fans out over arrays")->required();
  sweep->add_option("--values", values, "Values to substitute")->required()->delimiter(',');
  sweep->add_option("-o,--out", outdir, "Output directory")->required();
  sweep->add_flag("--trace", trace, "Also write event traces");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(validate)) return cmd_validate(scenario);
    if (app.got_subcommand(run)) return cmd_run(scenario, outdir, trace);
    if (app.got_subcommand(sweep)) return cmd_sweep(scenario, dotted, values, outdir, trace);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
