#pragma once

// Geometry of the detection problem: the cone-shaped lattice region, its
// hyperplanes (columns), the light-cone relation between sites, and directed
// and generalized paths.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "util.hpp"

namespace trailscan {

/// Number of hyperplanes n and aperture a of the region V_n^(a), with a kept
/// as an exact rational.
struct LatticeSpec {
  int n = 1;
  std::int64_t a_num = 0;
  std::int64_t a_den = 1;

  LatticeSpec() = default;
  LatticeSpec(int n_, std::int64_t num = 0, std::int64_t den = 1) : n(n_), a_num(num), a_den(den) {
    validate();
  }

  /// Parses "0", "0.5", "1/2" or "3/4".
  static LatticeSpec parse(int n, std::string_view a_text) {
    std::string s(a_text);
    if (auto slash = s.find('/'); slash != std::string::npos) {
      return LatticeSpec(n, std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    }
    std::int64_t num = 0, den = 1;
    bool seen_point = false, any_digit = false;
    for (char ch : s) {
      if (ch == '.') {
        if (seen_point) throw ConfigError("malformed aperture '" + s + "'");
        seen_point = true;
      } else if (ch >= '0' && ch <= '9') {
        any_digit = true;
        num = num * 10 + (ch - '0');
        if (seen_point) den *= 10;
        if (den > 1'000'000'000'000LL || num > 1'000'000'000'000LL)
          throw ConfigError("aperture '" + s + "' has too many digits");
      } else {
        throw ConfigError("malformed aperture '" + s + "'");
      }
    }
    if (!any_digit) throw ConfigError("malformed aperture '" + s + "'");
    return LatticeSpec(n, num, den);
  }

  static LatticeSpec from_double(int n, double a) {
    if (!(a >= 0.0)) throw ConfigError("aperture must be nonnegative");
    return parse(n, format_real(a));
  }

  void validate() {
    if (n < 1) throw ConfigError("n must be >= 1");
    if (a_den <= 0 || a_num < 0) throw ConfigError("aperture must be a nonnegative rational");
    const std::int64_t g = std::gcd(a_num, a_den);
    if (g > 1) {
      a_num /= g;
      a_den /= g;
    }
  }

  double a() const { return static_cast<double>(a_num) / static_cast<double>(a_den); }

  /// floor(a * n): the extra half-width added to every column.
  std::int64_t slack() const { return floor_div(a_num * n, a_den); }

  /// Largest admissible height in column i (parity of i respected).
  std::int64_t column_bound(std::int64_t i) const {
    std::int64_t b = i + slack();
    if ((b - i) % 2 != 0) --b;
    return b;
  }

  std::string a_text() const {
    return a_den == 1 ? std::to_string(a_num) : std::to_string(a_num) + "/" + std::to_string(a_den);
  }

  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;
};

/// A lattice or coarse-grid coordinate. The defaulted ordering is the
/// column-major order (x1, then x2) used to lay out every vector.
struct Site {
  int x1 = 0;
  int x2 = 0;
  friend auto operator<=>(const Site&, const Site&) = default;
};

/// x and y are in each other's light cone: distinct columns and a height gap
/// no larger than the column gap. Irreflexive.
inline bool equivalent(Site x, Site y) {
  return x.x1 != y.x1 && std::abs(x.x2 - y.x2) <= std::abs(x.x1 - y.x1);
}

/// Sorted, duplicate-free set of sites grouped by column. Lattice regions are
/// parity constrained (x1 - x2 even, heights step by 2); coarse block grids
/// are not (heights step by 1).
class SiteSet {
 public:
  struct Column {
    int x1 = 0;
    std::size_t offset = 0;
    std::size_t count = 0;
    int min_height = 0;
    // Heights form min_height + step * t for t in [0, count).
    bool progression = true;
  };

  SiteSet() = default;

  SiteSet(std::vector<Site> sites, bool parity_constrained)
      : sites_(std::move(sites)), parity_(parity_constrained) {
    std::sort(sites_.begin(), sites_.end());
    if (std::adjacent_find(sites_.begin(), sites_.end()) != sites_.end())
      throw ConfigError("site set contains duplicate sites");
    if (parity_) {
      for (const Site& s : sites_)
        if ((s.x1 - s.x2) % 2 != 0) throw ConfigError("site violates lattice parity");
    }
    index_columns();
  }

  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  const std::vector<Site>& sites() const { return sites_; }
  const Site& operator[](std::size_t i) const { return sites_[i]; }
  bool parity_constrained() const { return parity_; }
  int step() const { return parity_ ? 2 : 1; }
  const std::vector<Column>& columns() const { return columns_; }
  bool all_progressions() const { return all_progressions_; }

  std::optional<std::size_t> find(Site s) const {
    auto col = std::lower_bound(columns_.begin(), columns_.end(), s.x1,
                                [](const Column& c, int x) { return c.x1 < x; });
    if (col == columns_.end() || col->x1 != s.x1) return std::nullopt;
    if (col->progression) {
      const int rel = s.x2 - col->min_height;
      if (rel < 0 || rel % step() != 0) return std::nullopt;
      const auto t = static_cast<std::size_t>(rel / step());
      if (t >= col->count) return std::nullopt;
      return col->offset + t;
    }
    auto first = sites_.begin() + static_cast<std::ptrdiff_t>(col->offset);
    auto last = first + static_cast<std::ptrdiff_t>(col->count);
    auto it = std::lower_bound(first, last, s);
    if (it == last || *it != s) return std::nullopt;
    return static_cast<std::size_t>(it - sites_.begin());
  }

  bool contains(Site s) const { return find(s).has_value(); }

  friend bool operator==(const SiteSet& a, const SiteSet& b) {
    return a.parity_ == b.parity_ && a.sites_ == b.sites_;
  }

 private:
  void index_columns() {
    columns_.clear();
    all_progressions_ = true;
    for (std::size_t i = 0; i < sites_.size();) {
      Column c;
      c.x1 = sites_[i].x1;
      c.offset = i;
      c.min_height = sites_[i].x2;
      std::size_t j = i + 1;
      while (j < sites_.size() && sites_[j].x1 == c.x1) {
        if (sites_[j].x2 - sites_[j - 1].x2 != step()) c.progression = false;
        ++j;
      }
      c.count = j - i;
      all_progressions_ = all_progressions_ && c.progression;
      columns_.push_back(c);
      i = j;
    }
  }

  std::vector<Site> sites_;
  bool parity_ = true;
  std::vector<Column> columns_;
  bool all_progressions_ = true;
};

/// |V_n^(a)| from the column bounds, without enumerating.
inline std::int64_t site_count(const LatticeSpec& spec) {
  std::int64_t total = 0;
  for (std::int64_t i = 0; i < spec.n; ++i) total += spec.column_bound(i) + 1;
  return total;
}

inline constexpr std::int64_t kDefaultSiteBudget = 50'000'000;

/// All sites of V_n^(a) in column-major order.
inline SiteSet build_site_set(const LatticeSpec& spec, std::int64_t site_budget = kDefaultSiteBudget) {
  const std::int64_t count = site_count(spec);
  if (count > site_budget)
    throw CapacityError("region has " + std::to_string(count) + " sites, budget is " +
                        std::to_string(site_budget));
  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < spec.n; ++i) {
    const auto b = static_cast<int>(spec.column_bound(i));
    for (int h = -b; h <= b; h += 2) sites.push_back({i, h});
  }
  return SiteSet(std::move(sites), true);
}

inline nlohmann::json site_set_to_json(const SiteSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Site& s : set.sites()) arr.push_back({s.x1, s.x2});
  return arr;
}

inline SiteSet site_set_from_json(const nlohmann::json& arr, bool parity_constrained = true) {
  std::vector<Site> sites;
  for (const auto& p : arr) sites.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  return SiteSet(std::move(sites), parity_constrained);
}

/// One height per hyperplane: site i of the path is (i, heights[i]).
struct DirectedPath {
  std::vector<int> heights;

  std::size_t size() const { return heights.size(); }
  Site site(std::size_t i) const { return {static_cast<int>(i), heights[i]}; }
  friend bool operator==(const DirectedPath&, const DirectedPath&) = default;
};

inline bool is_valid_path(const DirectedPath& path, const LatticeSpec& spec) {
  if (path.heights.size() != static_cast<std::size_t>(spec.n)) return false;
  for (std::size_t i = 0; i < path.heights.size(); ++i) {
    const std::int64_t h = path.heights[i];
    if (((static_cast<std::int64_t>(i) - h) % 2) != 0) return false;
    if (std::abs(h) > spec.column_bound(static_cast<std::int64_t>(i))) return false;
    if (i > 0 && std::abs(path.heights[i] - path.heights[i - 1]) != 1) return false;
  }
  return true;
}

/// Site ordinals of the path inside `sites`; throws if a point is missing.
inline std::vector<std::size_t> path_indices(const DirectedPath& path, const SiteSet& sites) {
  std::vector<std::size_t> out;
  out.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    auto idx = sites.find(path.site(i));
    if (!idx) throw ConfigError("path leaves the site set at column " + std::to_string(i));
    out.push_back(*idx);
  }
  return out;
}

/// Per-column cells of 0, 1 or 2 heights.
struct GeneralizedPath {
  std::vector<std::vector<int>> cells;

  /// Cells hold at most two vertically adjacent heights (gap `step`), and
  /// consecutive nonempty cells contain a diagonal or straight neighbor pair
  /// (height difference at most 1 on coarse grids, exactly 1 on the lattice).
  bool is_valid(int step) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.size() > 2) return false;
      if (c.size() == 2 && std::abs(c[1] - c[0]) != step) return false;
      if (i == 0 || c.empty() || cells[i - 1].empty()) continue;
      bool linked = false;
      for (int a : cells[i - 1])
        for (int b : c) {
          const int gap = std::abs(a - b);
          if (step == 2 ? gap == 1 : gap <= 1) linked = true;
        }
      if (!linked) return false;
    }
    return true;
  }
};

enum class PathKind { zigzag, max_drift, uniform_reflected };

inline std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::zigzag: return "zigzag";
    case PathKind::max_drift: return "max_drift";
    case PathKind::uniform_reflected: return "uniform_reflected";
  }
  return "?";
}

inline PathKind path_kind_from_string(std::string_view s) {
  if (s == "zigzag") return PathKind::zigzag;
  if (s == "max_drift") return PathKind::max_drift;
  if (s == "uniform_reflected") return PathKind::uniform_reflected;
  throw ConfigError("unknown path kind '" + std::string(s) + "'");
}

/// Legal starting heights on the first hyperplane.
inline std::vector<int> start_heights(const LatticeSpec& spec) {
  std::vector<int> out;
  const auto b = static_cast<int>(spec.column_bound(0));
  for (int h = -b; h <= b; h += 2) out.push_back(h);
  return out;
}

/// Draws a path of the given kind. The start is uniform over legal starts
/// unless `start` is given; with a = 0 it is forced to 0.
inline DirectedPath sample_path(const LatticeSpec& spec, PathKind kind, Rng& rng,
                                std::optional<int> start = std::nullopt) {
  const auto starts = start_heights(spec);
  int h0 = 0;
  if (start) {
    h0 = *start;
    if (std::find(starts.begin(), starts.end(), h0) == starts.end())
      throw ConfigError("illegal start height " + std::to_string(h0));
  } else if (starts.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    h0 = starts[pick(rng)];
  }

  DirectedPath path;
  path.heights.reserve(static_cast<std::size_t>(spec.n));
  path.heights.push_back(h0);
  int direction = 1;
  std::bernoulli_distribution coin(0.5);
  for (int i = 1; i < spec.n; ++i) {
    const int prev = path.heights.back();
    const auto bound = static_cast<int>(spec.column_bound(i));
    int step = 1;
    switch (kind) {
      case PathKind::zigzag:
        step = (i % 2 == 1) ? 1 : -1;
        break;
      case PathKind::max_drift:
        step = direction;
        break;
      case PathKind::uniform_reflected:
        step = coin(rng) ? 1 : -1;
        break;
    }
    if (std::abs(prev + step) > bound) {
      step = -step;
      if (kind == PathKind::max_drift) direction = -direction;
    }
    path.heights.push_back(prev + step);
  }
  return path;
}

inline constexpr std::int64_t kDefaultPathBudget = 1 << 22;

/// Every directed path of the region, each once, in lexicographic order of
/// heights.
inline std::vector<DirectedPath> enumerate_paths(const LatticeSpec& spec,
                                                 std::int64_t path_budget = kDefaultPathBudget) {
  const auto starts = start_heights(spec);
  if (spec.n > 62) throw CapacityError("path enumeration is limited to n <= 62");
  // Upper bound (every step free); the region never forces a step at a >= 0
  // because column bounds grow by one per hyperplane.
  const long double bound = static_cast<long double>(starts.size()) * std::ldexp(1.0L, spec.n - 1);
  if (bound > static_cast<long double>(path_budget))
    throw CapacityError("path count exceeds budget " + std::to_string(path_budget));

  std::vector<DirectedPath> out;
  DirectedPath cur;
  cur.heights.resize(static_cast<std::size_t>(spec.n));
  auto recurse = [&](auto&& self, int i) -> void {
    if (i == spec.n) {
      out.push_back(cur);
      return;
    }
    const auto b = static_cast<int>(spec.column_bound(i));
    for (int step : {-1, 1}) {
      const int h = cur.heights[static_cast<std::size_t>(i - 1)] + step;
      if (std::abs(h) > b) continue;
      cur.heights[static_cast<std::size_t>(i)] = h;
      self(self, i + 1);
    }
  };
  for (int h0 : starts) {
    cur.heights[0] = h0;
    recurse(recurse, 1);
  }
  return out;
}

}  // namespace trailscan
