#pragma once

// Renormalization machinery: the scale schedule, the hierarchical block
// partition, the nested statistic Q^(0), path projection onto coarse grids,
// good-block labeling and the exact signal recursion.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "kernel.hpp"
#include "lattice.hpp"
#include "util.hpp"

namespace trailscan {

struct ScheduleConstants {
  double c = 1.0;
  double C1 = 0.0;
};

/// K coarse levels with exponents eps_1..eps_K and block sides
/// n_0 = n > n_1 > ... > n_K.
struct ScaleSchedule {
  int n = 1;
  int K = 0;
  std::vector<double> eps;
  std::vector<int> block_sides;
  ScheduleConstants constants;
  bool manual = false;

  int side(int k) const { return block_sides.at(static_cast<std::size_t>(k)); }

  nlohmann::json to_json() const {
    return {{"n", n},
            {"K", K},
            {"eps", eps},
            {"block_sides", block_sides},
            {"c", constants.c},
            {"C1", constants.C1},
            {"manual", manual}};
  }
};

inline constexpr int kMinBlockSide = 8;

/// 1 - eps_s = 1 / (2^{K-s+2} - 1), s = 1..K.
inline std::vector<double> optimal_eps(int K) {
  std::vector<double> eps;
  for (int s = 1; s <= K; ++s) eps.push_back(1.0 - 1.0 / (std::ldexp(1.0, K - s + 2) - 1.0));
  return eps;
}

/// n_k = round-half-up(n_{k-1}^{eps_k}).
inline std::vector<int> sides_from_eps(int n, const std::vector<double>& eps) {
  std::vector<int> sides{n};
  for (double e : eps) {
    const double v = std::pow(static_cast<double>(sides.back()), e);
    sides.push_back(static_cast<int>(std::floor(v + 0.5)));
  }
  return sides;
}

namespace detail {
inline void check_sides(const ScaleSchedule& s) {
  if (s.block_sides.size() != static_cast<std::size_t>(s.K) + 1 || s.block_sides.front() != s.n)
    throw ConfigError("block sides do not match n and K");
  for (std::size_t k = 1; k < s.block_sides.size(); ++k) {
    if (s.block_sides[k] < 2) throw ConfigError("block side below 2 at level " + std::to_string(k));
    if (s.block_sides[k] >= s.block_sides[k - 1])
      throw ConfigError("block sides must strictly decrease");
  }
}
}  // namespace detail

/// Unrounded K from the depth equation
/// 2^{K+1} [ln(c mu sqrt(ln n)) - C1] = ln ln n.
inline double depth_from_logs(double log_log_n, double gain) {
  if (gain <= 0.0 || log_log_n <= 0.0) return 0.0;
  return std::log2(log_log_n / gain) - 1.0;
}

inline double depth_equation_solution(int n, double mu, ScheduleConstants k) {
  const double ln_n = std::log(static_cast<double>(n));
  return depth_from_logs(std::log(ln_n), std::log(k.c * mu * std::sqrt(ln_n)) - k.C1);
}

/// Automatic schedule: K from the depth equation, optimal exponents, then K
/// reduced until the finest block side is at least kMinBlockSide.
inline ScaleSchedule schedule(int n, double mu, ScheduleConstants constants = {}) {
  if (!(constants.c > 0.0)) throw ConfigError("schedule constant c must be positive");
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  if (n < kMinBlockSide) throw ConfigError("schedule needs n >= 8");
  int K = std::max(0, static_cast<int>(std::floor(depth_equation_solution(n, mu, constants) + 0.5)));
  ScaleSchedule s;
  s.n = n;
  s.constants = constants;
  for (;; --K) {
    s.K = K;
    s.eps = optimal_eps(K);
    s.block_sides = sides_from_eps(n, s.eps);
    if (K == 0 || s.block_sides.back() >= kMinBlockSide) break;
  }
  return s;
}

/// K levels with the optimal exponents, no truncation.
inline ScaleSchedule forced_schedule(int n, int K) {
  ScaleSchedule s;
  s.n = n;
  s.K = K;
  s.eps = optimal_eps(K);
  s.block_sides = sides_from_eps(n, s.eps);
  s.manual = true;
  detail::check_sides(s);
  return s;
}

inline ScaleSchedule manual_schedule(int n, std::vector<double> eps) {
  ScaleSchedule s;
  s.n = n;
  s.K = static_cast<int>(eps.size());
  for (double e : eps)
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("exponents must lie in (0, 1)");
  s.eps = std::move(eps);
  s.block_sides = sides_from_eps(n, s.eps);
  s.manual = true;
  detail::check_sides(s);
  return s;
}

/// Schedule with explicit block sides; the exponents are recorded as
/// ln n_k / ln n_{k-1}.
inline ScaleSchedule schedule_from_sides(std::vector<int> sides) {
  if (sides.empty()) throw ConfigError("block sides must be nonempty");
  ScaleSchedule s;
  s.n = sides.front();
  s.K = static_cast<int>(sides.size()) - 1;
  s.block_sides = std::move(sides);
  s.manual = true;
  detail::check_sides(s);
  for (int k = 1; k <= s.K; ++k)
    s.eps.push_back(std::log(static_cast<double>(s.side(k))) / std::log(static_cast<double>(s.side(k - 1))));
  return s;
}

inline ScaleSchedule schedule_from_json(const nlohmann::json& j, int n, double mu) {
  ScheduleConstants k;
  k.c = j.value("c", 1.0);
  k.C1 = j.value("C1", 0.0);
  if (j.contains("block_sides")) {
    ScaleSchedule s = schedule_from_sides(j.at("block_sides").get<std::vector<int>>());
    if (j.contains("eps")) {
      auto eps = j.at("eps").get<std::vector<double>>();
      if (eps.size() != s.eps.size()) throw ConfigError("eps and block_sides disagree in length");
      s.eps = std::move(eps);
    }
    s.constants = k;
    return s;
  }
  if (j.contains("eps")) return manual_schedule(n, j.at("eps").get<std::vector<double>>());
  if (j.contains("K")) return forced_schedule(n, j.at("K").get<int>());
  return schedule(n, mu, k);
}

enum class BlockGeometry { square, clipped, truncated };

inline const char* to_string(BlockGeometry g) {
  switch (g) {
    case BlockGeometry::square: return "square";
    case BlockGeometry::clipped: return "clipped";
    case BlockGeometry::truncated: return "boundary-truncated";
  }
  return "?";
}

/// A block of the hierarchy. Its lattice footprint is the rectangle
/// [x0, x0 + width) x [y0, y0 + height) intersected with the region.
struct Block {
  int parent = -1;
  // Grid coordinate on the parent's coarse grid (column, row).
  Site coord;
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  BlockGeometry geometry = BlockGeometry::square;
  std::vector<int> children;
  // Finest level only: lattice ordinals in column-major order.
  std::vector<std::size_t> sites;
  // Finest level: restricted lattice kernel. Coarser levels: kernel on the
  // children's grid coordinates.
  KernelView view;
};

class PartitionTree {
 public:
  PartitionTree(LatticeSpec spec, ScaleSchedule sched, std::shared_ptr<const SiteSet> lattice)
      : spec_(spec), sched_(std::move(sched)), lattice_(std::move(lattice)) {}

  const LatticeSpec& spec() const { return spec_; }
  const ScaleSchedule& schedule() const { return sched_; }
  const SiteSet& lattice() const { return *lattice_; }
  std::shared_ptr<const SiteSet> shared_lattice() const { return lattice_; }
  int depth() const { return sched_.K; }
  const std::vector<Block>& level(int k) const { return levels_.at(static_cast<std::size_t>(k)); }
  const Block& block(int k, int b) const { return level(k).at(static_cast<std::size_t>(b)); }
  std::size_t block_count(int k) const { return level(k).size(); }

  /// Child of block (k, b) with grid coordinate `coord`, or -1.
  int child_with_coord(int k, int b, Site coord) const {
    const auto& kids = block(k, b).children;
    const auto& next = level(k + 1);
    auto it = std::lower_bound(kids.begin(), kids.end(), coord, [&](int idx, const Site& c) {
      return next[static_cast<std::size_t>(idx)].coord < c;
    });
    if (it == kids.end() || next[static_cast<std::size_t>(*it)].coord != coord) return -1;
    return *it;
  }

  /// Block index containing `s` at every level 0..K (-1 past a miss).
  std::vector<int> locate(Site s) const {
    std::vector<int> chain(static_cast<std::size_t>(depth()) + 1, -1);
    chain[0] = 0;
    for (int k = 0; k < depth(); ++k) {
      const Block& parent = block(k, chain[static_cast<std::size_t>(k)]);
      const int side = sched_.side(k + 1);
      Site coord;
      if (k == 0) {
        coord = {s.x1 / side, static_cast<int>(floor_div(s.x2, side))};
      } else {
        coord = {(s.x1 - parent.x0) / side, (s.x2 - parent.y0) / side};
      }
      const int child = child_with_coord(k, chain[static_cast<std::size_t>(k)], coord);
      if (child < 0) break;
      chain[static_cast<std::size_t>(k) + 1] = child;
    }
    return chain;
  }

  /// Number of coarse columns of the grid under block (k, b).
  int coarse_columns(int k, int b) const {
    const int side = sched_.side(k + 1);
    return static_cast<int>(ceil_div(block(k, b).width, side));
  }

 private:
  friend PartitionTree build_partition(const LatticeSpec&, const ScaleSchedule&,
                                       std::shared_ptr<const SiteSet>);
  LatticeSpec spec_;
  ScaleSchedule sched_;
  std::shared_ptr<const SiteSet> lattice_;
  std::vector<std::vector<Block>> levels_;
};

namespace detail {

// Lattice heights of column x inside [y0, y0 + height), as [lo, hi] with
// the column's parity; empty when lo > hi.
inline std::pair<int, int> column_span(const LatticeSpec& spec, int x, int y0, int height) {
  const auto b = static_cast<int>(spec.column_bound(x));
  int lo = std::max(-b, y0);
  const int hi = std::min(b, y0 + height - 1);
  if (((lo - x) % 2 + 2) % 2 != 0) ++lo;
  return {lo, hi};
}

inline bool rect_nonempty(const LatticeSpec& spec, int x0, int width, int y0, int height) {
  for (int x = x0; x < x0 + width; ++x) {
    auto [lo, hi] = column_span(spec, x, y0, height);
    if (lo <= hi) return true;
  }
  return false;
}

inline bool rect_full(const LatticeSpec& spec, int x0, int width, int y0, int height) {
  for (int x = x0; x < x0 + width; ++x) {
    const auto b = static_cast<int>(spec.column_bound(x));
    if (y0 < -b - 1 || y0 + height - 1 > b + 1) return false;
  }
  return true;
}

}  // namespace detail

/// Nested blocks of side n_k. Level-1 block (u1, u2) covers columns
/// [u1 n_1, u1 n_1 + n_1) and heights [u2 n_1, u2 n_1 + n_1); deeper blocks
/// tile their parent from its corner, truncating the last row and column
/// when n_{k+1} does not divide the parent's extent. Empty blocks are
/// omitted.
inline PartitionTree build_partition(const LatticeSpec& spec, const ScaleSchedule& sched,
                                     std::shared_ptr<const SiteSet> lattice) {
  if (sched.n != spec.n) throw ConfigError("schedule was built for n = " + std::to_string(sched.n));
  detail::check_sides(sched);
  PartitionTree tree(spec, sched, lattice);
  const int K = sched.K;
  tree.levels_.resize(static_cast<std::size_t>(K) + 1);

  const auto bmax = static_cast<int>(spec.column_bound(spec.n - 1));
  Block root;
  root.x0 = 0;
  root.width = spec.n;
  root.y0 = -bmax;
  root.height = 2 * bmax + 1;
  root.geometry = BlockGeometry::clipped;
  tree.levels_[0].push_back(std::move(root));

  for (int k = 0; k < K; ++k) {
    const int side = sched.side(k + 1);
    auto& parents = tree.levels_[static_cast<std::size_t>(k)];
    auto& kids = tree.levels_[static_cast<std::size_t>(k) + 1];
    for (std::size_t p = 0; p < parents.size(); ++p) {
      Block& parent = parents[p];
      const int cols = static_cast<int>(ceil_div(parent.width, side));
      int row_begin = 0, row_end = 0;
      if (k == 0) {
        row_begin = static_cast<int>(floor_div(-bmax, side));
        row_end = static_cast<int>(floor_div(bmax, side)) + 1;
      } else {
        row_end = static_cast<int>(ceil_div(parent.height, side));
      }
      for (int u1 = 0; u1 < cols; ++u1) {
        for (int u2 = row_begin; u2 < row_end; ++u2) {
          Block b;
          b.parent = static_cast<int>(p);
          b.coord = {u1, u2};
          b.x0 = parent.x0 + u1 * side;
          b.width = std::min(side, parent.x0 + parent.width - b.x0);
          if (k == 0) {
            b.y0 = u2 * side;
            b.height = side;
          } else {
            b.y0 = parent.y0 + u2 * side;
            b.height = std::min(side, parent.y0 + parent.height - b.y0);
          }
          if (!detail::rect_nonempty(spec, b.x0, b.width, b.y0, b.height)) continue;
          if (b.width < side || b.height < side) {
            b.geometry = BlockGeometry::truncated;
          } else if (!detail::rect_full(spec, b.x0, b.width, b.y0, b.height)) {
            b.geometry = BlockGeometry::clipped;
          }
          parent.children.push_back(static_cast<int>(kids.size()));
          kids.push_back(std::move(b));
        }
      }
    }
  }

  // Kernels: lattice sites at the finest level, child coordinates above.
  for (auto& b : tree.levels_[static_cast<std::size_t>(K)]) {
    if (K == 0) {
      b.sites.resize(lattice->size());
      for (std::size_t i = 0; i < lattice->size(); ++i) b.sites[i] = i;
      b.view = KernelView(lattice);
      continue;
    }
    std::vector<Site> local;
    for (int x = b.x0; x < b.x0 + b.width; ++x) {
      auto [lo, hi] = detail::column_span(spec, x, b.y0, b.height);
      for (int h = lo; h <= hi; h += 2) {
        local.push_back({x, h});
        auto idx = lattice->find({x, h});
        if (!idx) throw Error("partition block refers to a site outside the lattice");
        b.sites.push_back(*idx);
      }
    }
    b.view = KernelView(SiteSet(std::move(local), true));
  }
  for (int k = K - 1; k >= 0; --k) {
    const auto& next = tree.levels_[static_cast<std::size_t>(k) + 1];
    for (auto& b : tree.levels_[static_cast<std::size_t>(k)]) {
      std::vector<Site> coords;
      for (int c : b.children) coords.push_back(next[static_cast<std::size_t>(c)].coord);
      b.view = KernelView(SiteSet(std::move(coords), false));
    }
  }
  return tree;
}

inline PartitionTree build_partition(const LatticeSpec& spec, const ScaleSchedule& sched) {
  return build_partition(spec, sched, std::make_shared<const SiteSet>(build_site_set(spec)));
}

/// Bottom-up nested statistic: normalized kernel forms of the restricted
/// scenery at the finest level, then of the children's statistics on each
/// coarse grid, up to the root. Also returns every level when `levels` is
/// given.
inline double recursive_statistic(std::span<const double> scenery, const PartitionTree& tree,
                                  std::vector<std::vector<double>>* levels = nullptr) {
  tree.lattice();
  if (tree.block_count(0) == 0) throw ConfigError("empty partition tree");
  if (scenery.size() != tree.lattice().size())
    throw AlignmentError("scenery does not match the partition's lattice");
  const int K = tree.depth();
  std::vector<std::vector<double>> q(static_cast<std::size_t>(K) + 1);
  std::vector<double> buffer;
  {
    const auto& finest = tree.level(K);
    auto& out = q[static_cast<std::size_t>(K)];
    out.resize(finest.size());
    for (std::size_t b = 0; b < finest.size(); ++b) {
      const Block& blk = finest[b];
      if (K == 0) {
        out[b] = quadratic_form(blk.view, scenery, true);
        continue;
      }
      buffer.resize(blk.sites.size());
      for (std::size_t i = 0; i < blk.sites.size(); ++i) buffer[i] = scenery[blk.sites[i]];
      out[b] = quadratic_form(blk.view, buffer, true);
    }
  }
  for (int k = K - 1; k >= 0; --k) {
    const auto& blocks = tree.level(k);
    const auto& below = q[static_cast<std::size_t>(k) + 1];
    auto& out = q[static_cast<std::size_t>(k)];
    out.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      buffer.clear();
      for (int c : blocks[b].children) buffer.push_back(below[static_cast<std::size_t>(c)]);
      out[b] = quadratic_form(blocks[b].view, buffer, true);
    }
  }
  const double root = q[0][0];
  if (levels) *levels = std::move(q);
  return root;
}

/// Per-block signal, good flag and touched flag.
struct SignalNode {
  double nu = 0.0;
  bool good = false;
  bool touched = false;
};

struct SignalTree {
  std::vector<std::vector<SignalNode>> levels;
  const SignalNode& root() const { return levels.at(0).at(0); }
};

namespace detail {

struct PathPlacement {
  // chains[i] = block index per level for path point i.
  std::vector<std::vector<int>> chains;
};

inline PathPlacement place_path(const DirectedPath& path, const PartitionTree& tree) {
  PathPlacement out;
  out.chains.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    auto chain = tree.locate(path.site(i));
    if (chain.back() < 0) throw ConfigError("path point outside the partition at column " + std::to_string(i));
    out.chains.push_back(std::move(chain));
  }
  return out;
}

}  // namespace detail

/// Touched and good flags for every block (nu left at zero).
///
/// A finest-level block is good when the path visits it in at least half of
/// n_K columns; a coarser block is good when at least n_k / (2 n_{k+1}) of
/// its child columns contain a good child.
inline SignalTree label_good(const DirectedPath& path, const PartitionTree& tree) {
  const int K = tree.depth();
  const auto placement = detail::place_path(path, tree);
  SignalTree st;
  st.levels.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) st.levels[static_cast<std::size_t>(k)].resize(tree.block_count(k));

  std::vector<int> visits(tree.block_count(K), 0);
  for (const auto& chain : placement.chains) {
    for (int k = 0; k <= K; ++k) st.levels[static_cast<std::size_t>(k)][static_cast<std::size_t>(chain[static_cast<std::size_t>(k)])].touched = true;
    ++visits[static_cast<std::size_t>(chain.back())];
  }
  const int finest_side = tree.schedule().side(K);
  for (std::size_t b = 0; b < visits.size(); ++b)
    st.levels[static_cast<std::size_t>(K)][b].good = 2 * visits[b] >= finest_side;

  for (int k = K - 1; k >= 0; --k) {
    const double ratio = static_cast<double>(tree.schedule().side(k)) / tree.schedule().side(k + 1);
    for (std::size_t b = 0; b < tree.block_count(k); ++b) {
      std::vector<int> good_columns;
      for (int c : tree.block(k, static_cast<int>(b)).children) {
        if (st.levels[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(c)].good)
          good_columns.push_back(tree.block(k + 1, c).coord.x1);
      }
      std::sort(good_columns.begin(), good_columns.end());
      good_columns.erase(std::unique(good_columns.begin(), good_columns.end()), good_columns.end());
      st.levels[static_cast<std::size_t>(k)][b].good = 2.0 * static_cast<double>(good_columns.size()) >= ratio;
    }
  }
  return st;
}

/// Exact signals under the noiseless scenery mu * 1_path, computed from the
/// path's own points: at the finest level mu^2 times the normalized kernel
/// sum over pairs of path points in the block; above, the normalized kernel
/// form of the touched children's signals.
inline SignalTree signal_recursion(const DirectedPath& path, const PartitionTree& tree, double mu) {
  SignalTree st = label_good(path, tree);
  const int K = tree.depth();
  const auto placement = detail::place_path(path, tree);

  std::vector<std::vector<Site>> points(tree.block_count(K));
  for (std::size_t i = 0; i < placement.chains.size(); ++i)
    points[static_cast<std::size_t>(placement.chains[i].back())].push_back(path.site(i));
  for (std::size_t b = 0; b < points.size(); ++b) {
    const auto& pts = points[b];
    CompensatedSum acc;
    for (std::size_t p = 0; p < pts.size(); ++p)
      for (std::size_t q = p + 1; q < pts.size(); ++q) acc += 2.0 * entry(pts[p], pts[q]);
    st.levels[static_cast<std::size_t>(K)][b].nu =
        mu * mu * acc.value() * tree.block(K, static_cast<int>(b)).view.scale(true);
  }
  for (int k = K - 1; k >= 0; --k) {
    for (std::size_t b = 0; b < tree.block_count(k); ++b) {
      const Block& blk = tree.block(k, static_cast<int>(b));
      std::vector<std::pair<Site, double>> active;
      for (int c : blk.children) {
        const auto& node = st.levels[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(c)];
        if (node.touched) active.emplace_back(tree.block(k + 1, c).coord, node.nu);
      }
      CompensatedSum acc;
      for (std::size_t p = 0; p < active.size(); ++p)
        for (std::size_t q = p + 1; q < active.size(); ++q)
          acc += 2.0 * active[p].second * active[q].second * entry(active[p].first, active[q].first);
      st.levels[static_cast<std::size_t>(k)][b].nu = acc.value() * blk.view.scale(true);
    }
  }
  return st;
}

/// The path's image on the coarse grid under block (k-1, parent): for each
/// coarse column, the rows of the level-k blocks it visits.
inline GeneralizedPath project_path(const DirectedPath& path, const PartitionTree& tree, int k, int parent = 0) {
  if (k < 1 || k > tree.depth()) throw ConfigError("projection level must lie in [1, K]");
  GeneralizedPath gp;
  gp.cells.resize(static_cast<std::size_t>(tree.coarse_columns(k - 1, parent)));
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto chain = tree.locate(path.site(i));
    if (chain[static_cast<std::size_t>(k) - 1] != parent || chain[static_cast<std::size_t>(k)] < 0) continue;
    const Site coord = tree.block(k, chain[static_cast<std::size_t>(k)]).coord;
    auto& cell = gp.cells.at(static_cast<std::size_t>(coord.x1));
    if (std::find(cell.begin(), cell.end(), coord.x2) == cell.end()) cell.push_back(coord.x2);
  }
  for (auto& cell : gp.cells) std::sort(cell.begin(), cell.end());
  return gp;
}

/// Per-slab counts at level k: slabs are the column bands [x0, x0 + n_k)
/// shared by level-k blocks.
struct SlabFacts {
  int slabs = 0;
  int min_good = 0;
  int max_touched = 0;
  bool holds() const { return min_good >= 1 && max_touched <= 2; }
};

inline SlabFacts slab_facts(const PartitionTree& tree, const SignalTree& st, int k) {
  std::map<int, std::pair<int, int>> per_slab;  // x0 -> (good, touched)
  for (std::size_t b = 0; b < tree.block_count(k); ++b) {
    const auto& blk = tree.block(k, static_cast<int>(b));
    auto& entry_ = per_slab[blk.x0];
    const auto& node = st.levels.at(static_cast<std::size_t>(k))[b];
    if (node.good) ++entry_.first;
    if (node.touched) ++entry_.second;
  }
  SlabFacts f;
  f.slabs = static_cast<int>(per_slab.size());
  f.min_good = per_slab.empty() ? 0 : std::numeric_limits<int>::max();
  for (const auto& [x0, gt] : per_slab) {
    f.min_good = std::min(f.min_good, gt.first);
    f.max_touched = std::max(f.max_touched, gt.second);
  }
  return f;
}

/// Lower signal form for a good level-k block with constant c:
/// (1/c) exp[2^{K-k+1} ln(c mu)] prod_{l=k}^{K} ln(n_l / n_{l+1})^{2^{l-k-1}},
/// with n_{K+1} = 1.
inline double lower_signal_form(const ScaleSchedule& sched, double mu, double c, int k = 0) {
  const int K = sched.K;
  double log_value = -std::log(c) + std::ldexp(1.0, K - k + 1) * std::log(c * mu);
  for (int l = k; l <= K; ++l) {
    const double next = (l == K) ? 1.0 : static_cast<double>(sched.side(l + 1));
    const double ratio = std::log(static_cast<double>(sched.side(l)) / next);
    if (ratio <= 0.0) return 0.0;
    log_value += std::ldexp(1.0, l - k - 1) * std::log(ratio);
  }
  return std::exp(log_value);
}

}  // namespace trailscan
