// trailscan command-line driver.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trailscan/trailscan.hpp"

namespace {

using nlohmann::json;
using namespace trailscan;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;

// Flags shared by simulate, risk and scan; each overrides the matching key of
// the JSON config when given.
struct ExperimentFlags {
  std::string config_file;
  int n = 0;
  std::string a;
  std::string detector;
  std::vector<double> mu;
  int trials = 0;
  std::uint64_t seed = 0;
  std::string family;
  int count = 0;
  std::string threshold_mode;
  double alpha = 0.0;
  int calibration_trials = 0;
  int K = -1;
  double noise_sd = 1.0;
  std::string out;
  std::string format;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON experiment config");
    app->add_option("--n", n, "number of hyperplanes");
    app->add_option("--a", a, "region slope, decimal or fraction");
    app->add_option("--detector", detector, "simple_quad | multiscale | oracle");
    app->add_option("--mu", mu, "signal mean(s)");
    app->add_option("--trials", trials, "Monte Carlo trials");
    app->add_option("--seed", seed, "base seed");
    app->add_option("--family", family, "zigzag | max_drift | uniform_reflected | exhaustive");
    app->add_option("--count", count, "paths in a uniform_reflected family");
    app->add_option("--threshold", threshold_mode, "calibrated | analytic");
    app->add_option("--alpha", alpha, "calibration level");
    app->add_option("--calibration-trials", calibration_trials, "calibration trials");
    app->add_option("--K", K, "force the multiscale depth");
    app->add_option("--noise-sd", noise_sd, "noise standard deviation");
    app->add_option("--out", out, "output file");
    app->add_option("--format", format, "json | csv (default from --out extension)");
  }

  ExperimentConfig resolve(const CLI::App& app) const {
    json j = json::object();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot open config " + config_file);
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
      }
    }
    auto given_flag = [&](const char* name) { return app.count(name) > 0; };
    if (given_flag("--n")) j["n"] = n;
    if (given_flag("--a")) j["a"] = a;
    if (given_flag("--mu")) {
      j.erase("mu");
      j["mu_grid"] = mu;
    }
    if (given_flag("--trials")) j["trials"] = trials;
    if (given_flag("--seed")) j["base_seed"] = seed;
    if (given_flag("--noise-sd")) j["noise_sd"] = noise_sd;
    if (given_flag("--family")) j["path_family"] = {{"kind", family}, {"count", given_flag("--count") ? count : 1}};
    else if (given_flag("--count") && j.contains("path_family") && j["path_family"].is_object())
      j["path_family"]["count"] = count;
    json& det = j["detector"];
    if (!det.is_object()) det = json::object();
    if (given_flag("--detector")) det["kind"] = detector;
    if (given_flag("--threshold") || given_flag("--alpha") || given_flag("--calibration-trials")) {
      json& t = det["threshold"];
      if (!t.is_object()) t = json::object();
      if (given_flag("--threshold")) t["mode"] = threshold_mode;
      if (given_flag("--alpha")) t["alpha"] = alpha;
      if (given_flag("--calibration-trials")) t["trials"] = calibration_trials;
    }
    if (given_flag("--K")) det["schedule"] = {{"K", K}};
    std::string fmt = format;
    if (given_flag("--out") || !out.empty()) {
      j["output"]["path"] = out;
      if (fmt.empty()) fmt = out.size() >= 4 && out.compare(out.size() - 4, 4, ".csv") == 0 ? "csv" : "json";
    }
    if (!fmt.empty()) j["output"]["format"] = fmt;
    if (!j.contains("n")) throw ConfigError("--n or a config with \"n\" is required");
    return config_from_json(j);
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int run_simulate(const ExperimentFlags& f, const CLI::App& app, const std::string& path_kind) {
  const ExperimentConfig c = f.resolve(app);
  const SiteSet sites = build_site_set(c.spec);
  Hypothesis h = Hypothesis::null();
  std::optional<DirectedPath> path;
  if (path_kind != "none") {
    Rng rng = make_rng(derive_seed(c.base_seed, streams::paths, 0));
    path = sample_path(c.spec, path_kind_from_string(path_kind), rng, 0);
    h = Hypothesis::signal(*path, c.mu_grid.front());
  }
  const Scenery x = generate_scenery(sites, h, derive_seed(c.base_seed, streams::noise, 0), c.noise_sd);
  if (c.output.format == "csv") {
    std::string text = "x1,x2,value\n";
    for (std::size_t i = 0; i < sites.size(); ++i)
      text += std::to_string(sites[i].x1) + "," + std::to_string(sites[i].x2) + "," + format_real(x[i]) + "\n";
    write_text(c.output.path, text);
    return kExitOk;
  }
  json j = {{"n", c.spec.n}, {"a", c.spec.a_text()}, {"seed", c.base_seed}, {"noise_sd", c.noise_sd},
            {"sites", site_set_to_json(sites)}, {"values", x.values}};
  if (path) {
    j["mu"] = c.mu_grid.front();
    j["path"] = path->heights;
  }
  write_text(c.output.path, dump(j));
  return kExitOk;
}

int run_risk(const ExperimentFlags& f, const CLI::App& app) {
  const ExperimentConfig c = f.resolve(app);
  RiskEngine engine(c);
  const auto reports = engine.evaluate_grid();
  double runtime = 0.0;
  for (const auto& r : reports) runtime += r.runtime_s;
  std::fprintf(stderr, "risk: %zu mu values in %.2f s\n", reports.size(), runtime);
  if (c.output.format == "csv") {
    write_text(c.output.path, reports_to_csv(reports));
    return kExitOk;
  }
  json results = json::array();
  for (const auto& r : reports) results.push_back(report_to_json(r));
  json j = {{"config", config_to_json(c)}, {"results", results}};
  if (reports.size() == 1) {
    j["gamma"] = reports.front().gamma;
    j["type1"] = reports.front().type1;
  }
  write_text(c.output.path, dump(j));
  return kExitOk;
}

int run_scan(const ExperimentFlags& f, const CLI::App& app, double target, double lo, double hi) {
  ExperimentConfig c = f.resolve(app);
  c.mu_grid = {lo};
  RiskEngine engine(c);
  const ScanResult s = threshold_scan(engine, target, lo, hi);
  json j = {{"config", config_to_json(c)}, {"target", target}, {"scan", scan_to_json(s)}};
  write_text(c.output.path, dump(j));
  return kExitOk;
}

int run_schedule(int n, double mu, double c, double C1, int K, const std::string& out) {
  ScaleSchedule s = K >= 0 ? forced_schedule(n, K) : schedule(n, mu, {c, C1});
  json j = {{"K", s.K}, {"eps", s.eps}, {"block_sides", s.block_sides}};
  write_text(out, dump(j));
  return kExitOk;
}

int run_verify(const std::string& suite, const std::string& out, bool quick, std::uint64_t seed) {
  std::vector<std::string> names;
  if (suite == "all") {
    names = suite_names();
  } else {
    names = {suite};
  }
  json reports = json::array();
  bool ok = true;
  for (const auto& name : names) {
    const SuiteReport r = run_suite(name, quick, seed);
    ok = ok && r.passed();
    for (const auto& a : r.assertions)
      std::fprintf(stderr, "%s %s: %s %s %s\n", a.passed ? "PASS" : "FAIL", name.c_str(), format_real(a.observed).c_str(),
                   a.relation.c_str(), format_real(a.bound).c_str());
    reports.push_back(r.to_json());
  }
  const json j = names.size() == 1 ? reports.front() : json{{"passed", ok}, {"suites", reports}};
  write_text(out, dump(j));
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trailscan: anomalous-path detection on 2D lattices"};
  app.require_subcommand(1);

  ExperimentFlags sim_flags, risk_flags, scan_flags;
  std::string sim_path = "none";
  auto* sim = app.add_subcommand("simulate", "draw one scenery under the null or a planted path");
  sim_flags.attach(sim);
  sim->add_option("--path", sim_path, "none | zigzag | max_drift | uniform_reflected");

  auto* risk = app.add_subcommand("risk", "estimate type I/II errors and minimax risk");
  risk_flags.attach(risk);

  double target = 0.2, mu_lo = 0.0, mu_hi = 0.0;
  auto* scan = app.add_subcommand("scan", "bisection for the detection threshold");
  scan_flags.attach(scan);
  scan->add_option("--target", target, "target minimax risk");
  scan->add_option("--mu-lo", mu_lo, "lower bracket end")->required();
  scan->add_option("--mu-hi", mu_hi, "upper bracket end")->required();

  int sched_n = 0, sched_K = -1;
  double sched_mu = 1.0, sched_c = 1.0, sched_C1 = 0.0;
  std::string sched_out;
  auto* sched = app.add_subcommand("schedule", "print the multiscale schedule");
  sched->add_option("--n", sched_n, "number of hyperplanes")->required();
  sched->add_option("--mu", sched_mu, "signal mean");
  sched->add_option("--c", sched_c, "schedule constant c");
  sched->add_option("--C1", sched_C1, "schedule constant C1");
  sched->add_option("--K", sched_K, "force the depth");
  sched->add_option("--out", sched_out, "output file");

  std::string suite, verify_out;
  bool quick = false;
  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "run a numerical verification suite");
  verify->add_option("--suite", suite, "kernel | lemmaA | bruteforce | ks | moments | decomposition | nu | all")
      ->required();
  verify->add_option("--out", verify_out, "JSON report file");
  verify->add_flag("--quick", quick, "reduced sizes and trial counts");
  verify->add_option("--seed", verify_seed, "seed");

  int brute_n = 0;
  auto* brute = app.add_subcommand("brute-min", "exhaustive subset minimum");
  brute->add_option("--n", brute_n, "set size")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_flags, *sim, sim_path);
    if (risk->parsed()) return run_risk(risk_flags, *risk);
    if (scan->parsed()) return run_scan(scan_flags, *scan, target, mu_lo, mu_hi);
    if (sched->parsed()) return run_schedule(sched_n, sched_mu, sched_c, sched_C1, sched_K, sched_out);
    if (verify->parsed()) return run_verify(suite, verify_out, quick, verify_seed);
    if (brute->parsed()) {
      std::cout << format_real(brute_force_min_subset(brute_n)) << "\n";
      return kExitOk;
    }
  } catch (const trailscan::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
