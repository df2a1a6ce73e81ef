#pragma once

// Monte Carlo engine: sceneries under the null and planted-path hypotheses,
// minimax-risk estimation over a path family, threshold scans and reports.
//
// Trial t of every experiment draws its noise from
// derive_seed(base_seed, streams::noise, t). The same noise is reused for the
// null run, for every path of the family and for every mu of the grid, so
// risk curves are comparable across mu (common random numbers).

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detect.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "multiscale.hpp"
#include "util.hpp"

namespace trailscan {

struct PathFamily {
  enum class Kind { zigzag, max_drift, uniform_reflected, exhaustive };
  Kind kind = Kind::zigzag;
  int count = 1;
};

inline std::string to_string(PathFamily::Kind k) {
  switch (k) {
    case PathFamily::Kind::zigzag: return "zigzag";
    case PathFamily::Kind::max_drift: return "max_drift";
    case PathFamily::Kind::uniform_reflected: return "uniform_reflected";
    case PathFamily::Kind::exhaustive: return "exhaustive";
  }
  return "?";
}

inline PathFamily::Kind family_kind_from_string(std::string_view s) {
  if (s == "zigzag") return PathFamily::Kind::zigzag;
  if (s == "max_drift") return PathFamily::Kind::max_drift;
  if (s == "uniform_reflected") return PathFamily::Kind::uniform_reflected;
  if (s == "exhaustive") return PathFamily::Kind::exhaustive;
  throw ConfigError("unknown path family '" + std::string(s) + "'");
}

inline constexpr int kMaxExhaustiveN = 14;

struct OutputSpec {
  std::string path;
  std::string format = "json";
};

struct ExperimentConfig {
  LatticeSpec spec{16};
  DetectorConfig detector;
  std::vector<double> mu_grid{1.0};
  PathFamily family;
  int trials = 200;
  std::uint64_t base_seed = 1;
  OutputSpec output;
  double noise_sd = 1.0;

  void validate() const {
    if (spec.n < 1) throw ConfigError("n must be >= 1");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (mu_grid.empty()) throw ConfigError("mu grid is empty");
    for (double mu : mu_grid)
      if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu grid must be strictly positive");
    if (family.count < 1) throw ConfigError("path family count must be >= 1");
    if (family.kind == PathFamily::Kind::exhaustive && spec.n > kMaxExhaustiveN)
      throw ConfigError("exhaustive family needs n <= " + std::to_string(kMaxExhaustiveN));
    if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be nonnegative");
    if (output.format != "json" && output.format != "csv") throw ConfigError("output format must be json or csv");
    detector.validate();
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json threshold = {{"mode", c.detector.threshold.calibrated ? "calibrated" : "analytic"}};
  if (c.detector.threshold.calibrated) {
    threshold["alpha"] = c.detector.threshold.alpha;
    threshold["trials"] = c.detector.threshold.trials;
    threshold["seed"] = c.detector.threshold.seed;
  }
  nlohmann::json det = {{"kind", to_string(c.detector.kind)}, {"threshold", threshold}};
  if (c.detector.schedule) det["schedule"] = c.detector.schedule->to_json();
  return {{"n", c.spec.n},
          {"a", c.spec.a_text()},
          {"detector", det},
          {"mu_grid", c.mu_grid},
          {"path_family", {{"kind", to_string(c.family.kind)}, {"count", c.family.count}}},
          {"trials", c.trials},
          {"base_seed", c.base_seed},
          {"noise_sd", c.noise_sd},
          {"output", {{"path", c.output.path}, {"format", c.output.format}}}};
}

/// Reads the experiment schema written by config_to_json. Missing keys keep
/// their defaults; "a" may be a number or a decimal/fraction string.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    const int n = j.at("n").get<int>();
    if (j.contains("a")) {
      const auto& a = j.at("a");
      c.spec = a.is_string() ? LatticeSpec::parse(n, a.get<std::string>()) : LatticeSpec::from_double(n, a.get<double>());
    } else {
      c.spec = LatticeSpec(n);
    }
    if (j.contains("mu_grid")) c.mu_grid = j.at("mu_grid").get<std::vector<double>>();
    if (j.contains("mu")) c.mu_grid = {j.at("mu").get<double>()};
    c.trials = j.value("trials", c.trials);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    if (j.contains("path_family")) {
      const auto& f = j.at("path_family");
      if (f.is_string()) {
        c.family.kind = family_kind_from_string(f.get<std::string>());
      } else {
        c.family.kind = family_kind_from_string(f.at("kind").get<std::string>());
        c.family.count = f.value("count", 1);
      }
    }
    if (j.contains("output")) {
      c.output.path = j.at("output").value("path", std::string());
      c.output.format = j.at("output").value("format", std::string("json"));
    }
    c.detector.mu = c.mu_grid.empty() ? 1.0 : c.mu_grid.front();
    c.detector.threshold.seed = c.base_seed;
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      c.detector.kind = detector_kind_from_string(d.value("kind", std::string("simple_quad")));
      c.detector.threshold.calibrated = default_calibrated(c.detector.kind);
      if (d.contains("threshold")) {
        const auto& t = d.at("threshold");
        const std::string mode =
            t.value("mode", std::string(c.detector.threshold.calibrated ? "calibrated" : "analytic"));
        if (mode != "calibrated" && mode != "analytic") throw ConfigError("threshold mode must be calibrated or analytic");
        c.detector.threshold.calibrated = mode == "calibrated";
        c.detector.threshold.alpha = t.value("alpha", c.detector.threshold.alpha);
        c.detector.threshold.trials = t.value("trials", c.detector.threshold.trials);
        c.detector.threshold.seed = t.value("seed", c.detector.threshold.seed);
      }
      if (d.contains("schedule")) c.detector.schedule = schedule_from_json(d.at("schedule"), n, c.detector.mu);
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return config_from_json(j);
}

struct NamedPath {
  std::string id;
  DirectedPath path;
};

inline std::vector<NamedPath> build_family(const LatticeSpec& spec, const PathFamily& family,
                                           std::uint64_t base_seed) {
  std::vector<NamedPath> out;
  switch (family.kind) {
    case PathFamily::Kind::zigzag:
      out.push_back({"zigzag", reference_path(spec)});
      break;
    case PathFamily::Kind::max_drift: {
      Rng unused(0);
      out.push_back({"max_drift", sample_path(spec, PathKind::max_drift, unused, 0)});
      break;
    }
    case PathFamily::Kind::uniform_reflected:
      for (int j = 0; j < family.count; ++j) {
        Rng rng = make_rng(derive_seed(base_seed, streams::paths, static_cast<std::uint64_t>(j)));
        out.push_back({"uniform_reflected_" + std::to_string(j), sample_path(spec, PathKind::uniform_reflected, rng)});
      }
      break;
    case PathFamily::Kind::exhaustive: {
      if (spec.n > kMaxExhaustiveN) throw ConfigError("exhaustive family needs n <= 14");
      auto paths = enumerate_paths(spec);
      for (std::size_t j = 0; j < paths.size(); ++j) out.push_back({"path_" + std::to_string(j), std::move(paths[j])});
      break;
    }
  }
  return out;
}

struct Hypothesis {
  std::optional<DirectedPath> path;
  double mu = 0.0;

  static Hypothesis null() { return {}; }
  static Hypothesis signal(DirectedPath p, double mu) { return {std::move(p), mu}; }
};

/// Noise from `seed` plus mu on the path sites under a signal hypothesis.
/// noise_sd = 0 gives the noiseless scenery mu * 1_path.
inline Scenery generate_scenery(const SiteSet& sites, const Hypothesis& h, std::uint64_t seed, double noise_sd = 1.0) {
  Scenery s = normal_scenery(sites.size(), seed, noise_sd);
  if (h.path)
    for (std::size_t i : path_indices(*h.path, sites)) s[i] += h.mu;
  return s;
}

struct RiskReport {
  std::string detector;
  int n = 0;
  std::string a;
  double mu = 0.0;
  double threshold = 0.0;
  double type1 = 0.0;
  std::vector<std::pair<std::string, double>> type2_by_path;
  double gamma = 0.0;
  double ci_halfwidth = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
  double runtime_s = 0.0;

  double max_type2() const {
    double m = 0.0;
    for (const auto& [id, v] : type2_by_path) m = std::max(m, v);
    return m;
  }
};

/// Runtime is left out so that repeated runs serialize identically.
inline nlohmann::json report_to_json(const RiskReport& r) {
  nlohmann::json by_path = nlohmann::json::object();
  for (const auto& [id, v] : r.type2_by_path) by_path[id] = v;
  return {{"detector", r.detector}, {"n", r.n},         {"a", r.a},
          {"mu", r.mu},             {"threshold", r.threshold}, {"type1", r.type1},
          {"type2_by_path", by_path}, {"gamma", r.gamma}, {"ci_halfwidth", r.ci_halfwidth},
          {"trials", r.trials},     {"seed", r.seed}};
}

inline std::string reports_to_csv(const std::vector<RiskReport>& reports) {
  std::ostringstream out;
  out << "detector,n,a,mu,path_id,type1,type2,gamma,ci,trials,seed\n";
  for (const auto& r : reports)
    for (const auto& [id, t2] : r.type2_by_path)
      out << r.detector << ',' << r.n << ',' << r.a << ',' << format_real(r.mu) << ',' << id << ','
          << format_real(r.type1) << ',' << format_real(t2) << ',' << format_real(r.gamma) << ','
          << format_real(r.ci_halfwidth) << ',' << r.trials << ',' << r.seed << '\n';
  return out.str();
}

/// Runs risk estimates for one configuration. Null statistics and, for the
/// simple quadratic and oracle detectors, the exact affine expansion
///   stat(Z + mu 1_path) = base(Z) + mu slope(Z) + mu^2 curvature
/// are cached on first use, so additional mu values cost O(trials * paths).
class RiskEngine {
 public:
  explicit RiskEngine(const ExperimentConfig& config)
      : config_(config),
        sites_(std::make_shared<const SiteSet>(build_site_set(config.spec))),
        detector_(config.spec, config.detector, sites_),
        family_(build_family(config.spec, config.family, config.base_seed)) {
    config_.validate();
  }

  RiskEngine(const ExperimentConfig& config, Detector detector)
      : config_(config),
        sites_(detector.shared_sites()),
        detector_(std::move(detector)),
        family_(build_family(config.spec, config.family, config.base_seed)) {
    if (config.trials < 1) throw ConfigError("trials must be >= 1");
  }

  const ExperimentConfig& config() const { return config_; }
  const Detector& detector() const { return detector_; }
  const std::vector<NamedPath>& family() const { return family_; }
  const SiteSet& sites() const { return *sites_; }

  /// Whether signal statistics come from the cached affine expansion.
  bool affine() const {
    return !detector_.is_custom() &&
           (detector_.kind() == DetectorKind::simple_quad || detector_.kind() == DetectorKind::oracle_path);
  }

  Scenery noise(std::size_t trial) const {
    return normal_scenery(sites_->size(), derive_seed(config_.base_seed, streams::noise, trial), config_.noise_sd);
  }

  RiskReport evaluate(double mu) {
    const auto start = std::chrono::steady_clock::now();
    prepare();
    const auto T = static_cast<std::size_t>(config_.trials);
    const double thr = detector_.threshold(mu);

    RiskReport r;
    r.detector = detector_.name();
    r.n = config_.spec.n;
    r.a = config_.spec.a_text();
    r.mu = mu;
    r.threshold = thr;
    r.trials = config_.trials;
    r.seed = config_.base_seed;

    std::size_t rejections = 0;
    for (double s : null_) rejections += s > thr;
    r.type1 = static_cast<double>(rejections) / static_cast<double>(T);

    std::vector<std::size_t> accepts(family_.size(), 0);
    if (affine()) {
      for (std::size_t p = 0; p < family_.size(); ++p) {
        for (std::size_t t = 0; t < T; ++t) {
          const double stat = base(p, t) + mu * slope_[p * T + t] + mu * mu * curvature_;
          accepts[p] += !(stat > thr);
        }
      }
    } else {
      std::vector<unsigned char> accepted(T * family_.size(), 0);
      parallel_for(T, [&](std::size_t t) {
        const Scenery z = noise(t);
        Scenery x = z;
        for (std::size_t p = 0; p < family_.size(); ++p) {
          for (std::size_t i : indices_[p]) x[i] += mu;
          accepted[p * T + t] = !(detector_.statistic(x, &family_[p].path) > thr);
          for (std::size_t i : indices_[p]) x[i] = z[i];
        }
      });
      for (std::size_t p = 0; p < family_.size(); ++p)
        for (std::size_t t = 0; t < T; ++t) accepts[p] += accepted[p * T + t];
    }
    for (std::size_t p = 0; p < family_.size(); ++p)
      r.type2_by_path.emplace_back(family_[p].id, static_cast<double>(accepts[p]) / static_cast<double>(T));

    const double t2 = r.max_type2();
    r.gamma = r.type1 + t2;
    const double var = (r.type1 * (1.0 - r.type1) + t2 * (1.0 - t2)) / static_cast<double>(T);
    r.ci_halfwidth = 1.96 * std::sqrt(var);
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }

  std::vector<RiskReport> evaluate_grid() {
    std::vector<RiskReport> out;
    for (double mu : config_.mu_grid) out.push_back(evaluate(mu));
    return out;
  }

 private:
  double base(std::size_t p, std::size_t t) const {
    if (detector_.kind() == DetectorKind::oracle_path) return path_base_[p * static_cast<std::size_t>(config_.trials) + t];
    return null_[t];
  }

  void prepare() {
    if (prepared_) return;
    prepared_ = true;
    const auto T = static_cast<std::size_t>(config_.trials);
    for (const auto& np : family_) indices_.push_back(path_indices(np.path, *sites_));
    const DirectedPath* null_path = &family_.front().path;
    null_.assign(T, 0.0);

    if (!affine()) {
      parallel_for(T, [&](std::size_t t) { null_[t] = detector_.statistic(noise(t), null_path); });
      return;
    }
    slope_.assign(T * family_.size(), 0.0);
    if (detector_.kind() == DetectorKind::oracle_path) {
      curvature_ = 0.0;
      path_base_.assign(T * family_.size(), 0.0);
      parallel_for(T, [&](std::size_t t) {
        const Scenery z = noise(t);
        for (std::size_t p = 0; p < family_.size(); ++p) {
          path_base_[p * T + t] = oracle_path_statistic(z, indices_[p]);
          slope_[p * T + t] = static_cast<double>(indices_[p].size());
        }
        null_[t] = path_base_[t];
      });
      return;
    }
    // Simple quadratic: slope = 2 <A 1_path, Z>, curvature = 1_path^T A 1_path.
    const KernelView& view = *detector_.view();
    std::vector<Scenery> kernel_paths;
    for (const auto& idx : indices_) kernel_paths.push_back(matvec(view, indicator(sites_->size(), idx)));
    curvature_ = path_energy(config_.spec.n);
    parallel_for(T, [&](std::size_t t) {
      const Scenery z = noise(t);
      null_[t] = quadratic_form(view, z);
      for (std::size_t p = 0; p < family_.size(); ++p) {
        CompensatedSum dot;
        for (std::size_t i = 0; i < z.size(); ++i) dot += kernel_paths[p][i] * z[i];
        slope_[p * T + t] = 2.0 * dot.value();
      }
    });
  }

  ExperimentConfig config_;
  std::shared_ptr<const SiteSet> sites_;
  Detector detector_;
  std::vector<NamedPath> family_;
  bool prepared_ = false;
  std::vector<std::vector<std::size_t>> indices_;
  std::vector<double> null_;
  std::vector<double> path_base_;
  std::vector<double> slope_;
  double curvature_ = 0.0;
};

inline RiskReport estimate_risk(const ExperimentConfig& config, double mu) {
  RiskEngine engine(config);
  return engine.evaluate(mu);
}

inline std::vector<RiskReport> estimate_risk(const ExperimentConfig& config) {
  RiskEngine engine(config);
  return engine.evaluate_grid();
}

struct ScanResult {
  double mu_star = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double gamma_lo = 0.0;
  double gamma_hi = 0.0;
  double gamma_star = 0.0;
  std::vector<std::pair<double, double>> steps;  // (mu, gamma) in evaluation order
};

inline nlohmann::json scan_to_json(const ScanResult& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& [mu, g] : s.steps) steps.push_back({{"mu", mu}, {"gamma", g}});
  return {{"mu_star", s.mu_star}, {"bracket", {s.lo, s.hi}}, {"gamma_lo", s.gamma_lo},
          {"gamma_hi", s.gamma_hi}, {"gamma_star", s.gamma_star}, {"steps", steps}};
}

inline constexpr int kScanIterations = 12;

/// Bisection for the smallest mu with gamma(mu) <= target. Requires
/// gamma(lo) > target >= gamma(hi); returns the upper end of the final
/// bracket.
inline ScanResult threshold_scan(RiskEngine& engine, double target, double mu_lo, double mu_hi,
                                 int iterations = kScanIterations) {
  if (!(mu_lo > 0.0 && mu_hi > mu_lo)) throw ConfigError("scan needs 0 < mu_lo < mu_hi");
  ScanResult s;
  s.gamma_lo = engine.evaluate(mu_lo).gamma;
  s.gamma_hi = engine.evaluate(mu_hi).gamma;
  s.steps = {{mu_lo, s.gamma_lo}, {mu_hi, s.gamma_hi}};
  if (!(s.gamma_lo > target && target >= s.gamma_hi))
    throw BracketError("no bracket: gamma(" + format_real(mu_lo) + ") = " + format_real(s.gamma_lo) + ", gamma(" +
                       format_real(mu_hi) + ") = " + format_real(s.gamma_hi) + ", target " + format_real(target));
  double lo = mu_lo, hi = mu_hi, g_hi = s.gamma_hi;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = engine.evaluate(mid).gamma;
    s.steps.emplace_back(mid, g);
    if (g > target) {
      lo = mid;
    } else {
      hi = mid;
      g_hi = g;
    }
  }
  s.lo = lo;
  s.hi = hi;
  s.mu_star = hi;
  s.gamma_star = g_hi;
  return s;
}

inline ScanResult threshold_scan(const ExperimentConfig& config, double target, double mu_lo, double mu_hi) {
  ExperimentConfig c = config;
  c.mu_grid = {mu_lo};
  RiskEngine engine(c);
  return threshold_scan(engine, target, mu_lo, mu_hi);
}

}  // namespace trailscan
