#pragma once

// Detectors: the simple quadratic test, the multi-scale test, a known-path
// baseline, and empirical threshold calibration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "lattice.hpp"
#include "multiscale.hpp"
#include "util.hpp"

namespace trailscan {

enum class DetectorKind { simple_quad, multiscale, oracle_path };

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::simple_quad: return "simple_quad";
    case DetectorKind::multiscale: return "multiscale";
    case DetectorKind::oracle_path: return "oracle_path";
  }
  return "?";
}

inline DetectorKind detector_kind_from_string(std::string_view s) {
  if (s == "simple_quad") return DetectorKind::simple_quad;
  if (s == "multiscale") return DetectorKind::multiscale;
  if (s == "oracle_path" || s == "oracle") return DetectorKind::oracle_path;
  throw ConfigError("unknown detector '" + std::string(s) + "'");
}

struct ThresholdMode {
  bool calibrated = true;
  double alpha = 0.05;
  int trials = 1000;
  std::uint64_t seed = 1;
};

/// Calibrated for the quadratic and multiscale statistics; the known-path
/// baseline's threshold mu n / 2 needs no tuning, so it defaults to analytic.
inline bool default_calibrated(DetectorKind k) { return k != DetectorKind::oracle_path; }

struct DetectorConfig {
  DetectorKind kind = DetectorKind::simple_quad;
  double mu = 1.0;
  ThresholdMode threshold;
  std::optional<ScaleSchedule> schedule;

  void validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be positive");
    if (threshold.calibrated) {
      if (!(threshold.alpha > 0.0 && threshold.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
      if (threshold.trials < 100) throw ConfigError("calibration needs at least 100 trials");
    }
  }
};

struct TestOutcome {
  double statistic = 0.0;
  double threshold = 0.0;
  bool reject = false;
  bool degenerate = false;
};

inline TestOutcome decide(double statistic, double threshold, bool degenerate = false) {
  return {statistic, threshold, statistic > threshold, degenerate};
}

/// I.i.d. N(0, sd^2) values from the stream seeded with `seed`.
inline Scenery normal_scenery(std::size_t size, std::uint64_t seed, double sd = 1.0) {
  Scenery s(size);
  if (sd == 0.0) return s;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  for (double& v : s.values) v = normal(rng);
  return s;
}

/// Zigzag path starting at height 0; the reference path for analytic
/// thresholds and path-free calibration.
inline DirectedPath reference_path(const LatticeSpec& spec) {
  Rng unused(0);
  return sample_path(spec, PathKind::zigzag, unused, 0);
}

// ---- simple quadratic -----------------------------------------------------

/// mu^2 n ln(n) / 2; zero and flagged degenerate at n = 1.
inline std::pair<double, bool> simple_quadratic_threshold(int n, double mu) {
  if (n <= 1) return {0.0, true};
  return {mu * mu * n * std::log(static_cast<double>(n)) / 2.0, false};
}

inline TestOutcome simple_quadratic_test(std::span<const double> x, const KernelView& view, int n, double mu) {
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  const auto [thr, degenerate] = simple_quadratic_threshold(n, mu);
  return decide(quadratic_form(view, x), thr, degenerate);
}

inline TestOutcome simple_quadratic_test(const Scenery& x, const LatticeSpec& spec, double mu) {
  return simple_quadratic_test(x, KernelView(build_site_set(spec)), spec.n, mu);
}

// ---- oracle path ----------------------------------------------------------

inline double oracle_path_statistic(std::span<const double> x, const std::vector<std::size_t>& indices) {
  CompensatedSum acc;
  for (std::size_t i : indices) acc += x[i];
  return acc.value();
}

inline TestOutcome oracle_path_test(std::span<const double> x, const SiteSet& sites, const DirectedPath& path,
                                    double mu) {
  if (x.size() != sites.size()) throw AlignmentError("scenery does not match the site set");
  return decide(oracle_path_statistic(x, path_indices(path, sites)), mu * static_cast<double>(path.size()) / 2.0);
}

inline TestOutcome oracle_path_test(const Scenery& x, const LatticeSpec& spec, const DirectedPath& path, double mu) {
  if (!is_valid_path(path, spec)) throw ConfigError("invalid path");
  return oracle_path_test(x, build_site_set(spec), path, mu);
}

// ---- multiscale -----------------------------------------------------------

/// nu^(0) of the reference path, halved.
inline double multiscale_analytic_threshold(const PartitionTree& tree, double mu) {
  return signal_recursion(reference_path(tree.spec()), tree, mu).root().nu / 2.0;
}

inline TestOutcome multiscale_test(std::span<const double> x, const PartitionTree& tree, double threshold) {
  return decide(recursive_statistic(x, tree), threshold);
}

// ---- calibration ----------------------------------------------------------

using NullStatistic = std::function<double(std::span<const double>)>;

/// The ceil((1 - alpha) T)-th order statistic of `statistic` over T null
/// sceneries; trial t draws from derive_seed(seed, calibration, t).
inline double calibrate_threshold(const NullStatistic& statistic, std::size_t site_count, double alpha, int trials,
                                  std::uint64_t seed, double noise_sd = 1.0) {
  if (trials < 100) throw ConfigError("calibration needs at least 100 trials");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  std::vector<double> values(static_cast<std::size_t>(trials));
  parallel_for(values.size(), [&](std::size_t t) {
    const Scenery z = normal_scenery(site_count, derive_seed(seed, streams::calibration, t), noise_sd);
    values[t] = statistic(z);
  });
  std::sort(values.begin(), values.end());
  // The small guard keeps ceil from stepping past an integral product.
  auto rank = static_cast<std::int64_t>(std::ceil((1.0 - alpha) * trials - 1e-9));
  rank = std::clamp<std::int64_t>(rank, 1, trials);
  return values[static_cast<std::size_t>(rank - 1)];
}

// ---- configured detector --------------------------------------------------

/// A detector bound to a lattice: the statistic, its threshold (calibrated
/// once, or analytic per mu) and the shared kernel or partition.
class Detector {
 public:
  using Statistic = std::function<double(std::span<const double>, const DirectedPath*)>;

  Detector(const LatticeSpec& spec, DetectorConfig config, std::shared_ptr<const SiteSet> sites = nullptr)
      : spec_(spec), config_(std::move(config)), name_(to_string(config_.kind)) {
    config_.validate();
    sites_ = sites ? std::move(sites) : std::make_shared<const SiteSet>(build_site_set(spec_));
    reference_ = reference_path(spec_);
    switch (config_.kind) {
      case DetectorKind::simple_quad:
        view_ = std::make_shared<const KernelView>(sites_);
        break;
      case DetectorKind::multiscale: {
        if (!config_.schedule) config_.schedule = schedule(spec_.n, config_.mu);
        tree_ = std::make_shared<const PartitionTree>(build_partition(spec_, *config_.schedule, sites_));
        break;
      }
      case DetectorKind::oracle_path:
        break;
    }
    if (config_.threshold.calibrated) {
      const auto& t = config_.threshold;
      calibrated_threshold_ = calibrate_threshold(
          [this](std::span<const double> x) { return statistic(x, &reference_); }, sites_->size(), t.alpha,
          t.trials, t.seed);
    }
  }

  /// A detector with an arbitrary statistic and a fixed threshold.
  static Detector custom(std::string name, std::shared_ptr<const SiteSet> sites, Statistic statistic,
                         double threshold) {
    Detector d;
    d.name_ = std::move(name);
    d.sites_ = std::move(sites);
    d.custom_ = std::move(statistic);
    d.calibrated_threshold_ = threshold;
    d.config_.threshold.calibrated = true;
    return d;
  }

  const std::string& name() const { return name_; }
  bool is_custom() const { return static_cast<bool>(custom_); }
  DetectorKind kind() const { return config_.kind; }
  const DetectorConfig& config() const { return config_; }
  const SiteSet& sites() const { return *sites_; }
  std::shared_ptr<const SiteSet> shared_sites() const { return sites_; }
  const KernelView* view() const { return view_.get(); }
  const PartitionTree* tree() const { return tree_.get(); }
  const DirectedPath& reference() const { return reference_; }

  double statistic(std::span<const double> x, const DirectedPath* path = nullptr) const {
    if (x.size() != sites_->size()) throw AlignmentError("scenery does not match the detector's lattice");
    if (custom_) return custom_(x, path);
    switch (config_.kind) {
      case DetectorKind::simple_quad: return quadratic_form(*view_, x);
      case DetectorKind::multiscale: return recursive_statistic(x, *tree_);
      case DetectorKind::oracle_path:
        if (!path) throw ConfigError("the oracle statistic needs a path");
        return oracle_path_statistic(x, path_indices(*path, *sites_));
    }
    return 0.0;
  }

  bool calibrated() const { return config_.threshold.calibrated; }

  double threshold(double mu) const {
    if (calibrated()) return calibrated_threshold_;
    switch (config_.kind) {
      case DetectorKind::simple_quad: return simple_quadratic_threshold(spec_.n, mu).first;
      case DetectorKind::multiscale: return multiscale_analytic_threshold(*tree_, mu);
      case DetectorKind::oracle_path: return mu * spec_.n / 2.0;
    }
    return 0.0;
  }

  bool degenerate() const { return !custom_ && config_.kind == DetectorKind::simple_quad && spec_.n <= 1; }

  TestOutcome test(std::span<const double> x, const DirectedPath* path, double mu) const {
    return decide(statistic(x, path), threshold(mu), degenerate());
  }
  TestOutcome test(std::span<const double> x, const DirectedPath* path = nullptr) const {
    return test(x, path, config_.mu);
  }

 private:
  Detector() = default;

  LatticeSpec spec_{1};
  DetectorConfig config_;
  std::string name_;
  std::shared_ptr<const SiteSet> sites_;
  std::shared_ptr<const KernelView> view_;
  std::shared_ptr<const PartitionTree> tree_;
  DirectedPath reference_;
  Statistic custom_;
  double calibrated_threshold_ = 0.0;
};

}  // namespace trailscan
