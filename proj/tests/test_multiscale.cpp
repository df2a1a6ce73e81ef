#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "trailscan/multiscale.hpp"

using namespace trailscan;

namespace {

Scenery noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Scenery s(n);
  for (double& v : s.values) v = g(rng);
  return s;
}

PartitionTree tree_with_sides(int n, std::vector<int> sides, std::int64_t a_num = 0, std::int64_t a_den = 1) {
  return build_partition(LatticeSpec(n, a_num, a_den), schedule_from_sides(std::move(sides)));
}

}  // namespace

TEST(Schedule, OptimalExponents) {
  EXPECT_TRUE(optimal_eps(0).empty());
  ASSERT_EQ(optimal_eps(1).size(), 1u);
  EXPECT_NEAR(optimal_eps(1)[0], 2.0 / 3.0, 1e-15);
  const auto e2 = optimal_eps(2);
  EXPECT_NEAR(e2[0], 6.0 / 7.0, 1e-15);
  EXPECT_NEAR(e2[1], 2.0 / 3.0, 1e-15);
  for (int K = 1; K <= 5; ++K) {
    const auto e = optimal_eps(K);
    for (int s = 1; s <= K; ++s) EXPECT_NEAR(1.0 - e[static_cast<std::size_t>(s - 1)], 1.0 / (std::pow(2.0, K - s + 2) - 1.0), 1e-15);
  }
}

TEST(Schedule, DepthEquation) {
  // ln ln n = 4, gain 1: 2^{K+1} = 4.
  EXPECT_NEAR(depth_from_logs(4.0, 1.0), 1.0, 1e-15);
  EXPECT_EQ(depth_from_logs(4.0, -0.5), 0.0);
}

TEST(Schedule, AutomaticAndTruncated) {
  const auto s = schedule(100000, 0.5);
  EXPECT_EQ(s.K, 1);
  EXPECT_EQ(s.block_sides, (std::vector<int>{100000, 2154}));
  // Small n: the finest block must keep side >= 8.
  for (int n : {8, 16, 64, 300}) {
    for (double mu : {0.05, 0.3, 1.0, 5.0}) {
      const auto t = schedule(n, mu);
      EXPECT_TRUE(t.K == 0 || t.block_sides.back() >= kMinBlockSide);
      EXPECT_EQ(t.block_sides.size(), static_cast<std::size_t>(t.K) + 1);
    }
  }
  EXPECT_THROW(schedule(100, 1.0, {0.0, 0.0}), ConfigError);
  EXPECT_THROW(schedule(4, 1.0), ConfigError);
}

TEST(Schedule, ManualForms) {
  EXPECT_EQ(manual_schedule(16, {0.5}).block_sides, (std::vector<int>{16, 4}));
  EXPECT_EQ(forced_schedule(64, 1).block_sides, (std::vector<int>{64, 16}));
  EXPECT_EQ(schedule_from_sides({16, 4}).K, 1);
  EXPECT_NEAR(schedule_from_sides({16, 4}).eps[0], 0.5, 1e-15);
  EXPECT_THROW(schedule_from_sides({16, 16}), ConfigError);
  EXPECT_THROW(manual_schedule(16, {1.5}), ConfigError);
  const auto j = schedule_from_json(nlohmann::json{{"block_sides", {16, 4}}}, 16, 1.0);
  EXPECT_EQ(j.block_sides, (std::vector<int>{16, 4}));
}

TEST(Partition, TriangleCounts) {
  const auto tree = tree_with_sides(16, {16, 4});
  ASSERT_EQ(tree.block_count(1), 20u);
  std::map<int, int> per_column;
  for (const auto& b : tree.level(1)) ++per_column[b.coord.x1];
  EXPECT_EQ(per_column, (std::map<int, int>{{0, 2}, {1, 4}, {2, 6}, {3, 8}}));
}

TEST(Partition, TotalAndDisjoint) {
  for (auto [n, sides, num, den] :
       {std::tuple{16, std::vector<int>{16, 4}, 0, 1}, {64, {64, 16}, 0, 1}, {64, {64, 35, 11}, 0, 1},
        {40, {40, 9, 3}, 1, 4}, {64, {64, 20, 6}, 1, 2}}) {
    const auto tree = tree_with_sides(n, sides, num, den);
    const int K = tree.depth();
    std::vector<int> owner(tree.lattice().size(), -1);
    for (std::size_t b = 0; b < tree.block_count(K); ++b)
      for (std::size_t s : tree.block(K, static_cast<int>(b)).sites) {
        EXPECT_EQ(owner[s], -1) << "site owned twice";
        owner[s] = static_cast<int>(b);
      }
    for (std::size_t s = 0; s < owner.size(); ++s) {
      ASSERT_GE(owner[s], 0);
      const auto chain = tree.locate(tree.lattice()[s]);
      EXPECT_EQ(chain.back(), owner[s]);
    }
    for (int k = 1; k <= K; ++k) {
      std::vector<int> parents(tree.block_count(k), 0);
      for (std::size_t p = 0; p < tree.block_count(k - 1); ++p)
        for (int c : tree.block(k - 1, static_cast<int>(p)).children) {
          ++parents[static_cast<std::size_t>(c)];
          EXPECT_EQ(tree.block(k, c).parent, static_cast<int>(p));
        }
      for (int count : parents) EXPECT_EQ(count, 1);
    }
  }
}

TEST(Partition, SingleBlockAndMismatch) {
  const auto tree = build_partition(LatticeSpec(8), forced_schedule(8, 0));
  EXPECT_EQ(tree.block_count(0), 1u);
  EXPECT_EQ(tree.block(0, 0).sites.size(), tree.lattice().size());
  EXPECT_THROW(build_partition(LatticeSpec(16), forced_schedule(8, 0)), ConfigError);
}

TEST(RecursiveStatistic, DepthZeroIsNormalizedForm) {
  const auto spec = LatticeSpec(20, 1, 4);
  const auto tree = build_partition(spec, forced_schedule(20, 0));
  const auto x = noise(tree.lattice().size(), 3);
  const KernelView view(build_site_set(spec));
  EXPECT_NEAR(recursive_statistic(x, tree), quadratic_form(view, x, true), 1e-12);
  EXPECT_EQ(recursive_statistic(Scenery(tree.lattice().size()), tree), 0.0);
  EXPECT_THROW(recursive_statistic(Scenery(3), tree), AlignmentError);
}

TEST(RecursiveStatistic, DepthOneByHand) {
  const auto tree = tree_with_sides(16, {16, 4});
  const auto x = noise(tree.lattice().size(), 5);
  // Independent two-level evaluation from lattice coordinates.
  std::map<std::pair<int, int>, std::vector<std::size_t>> blocks;
  for (std::size_t i = 0; i < tree.lattice().size(); ++i) {
    const Site s = tree.lattice()[i];
    blocks[{s.x1 / 4, static_cast<int>(floor_div(s.x2, 4))}].push_back(i);
  }
  std::vector<Site> coords;
  std::vector<double> q;
  for (const auto& [key, idx] : blocks) {
    std::vector<Site> local;
    std::vector<double> vals;
    for (std::size_t i : idx) {
      local.push_back(tree.lattice()[i]);
      vals.push_back(x[i]);
    }
    const KernelView v(SiteSet(local, true));
    coords.push_back({key.first, key.second});
    q.push_back(quadratic_form(v, vals, true));
  }
  const KernelView top(SiteSet(coords, false));
  EXPECT_NEAR(recursive_statistic(x, tree), quadratic_form(top, q, true), 1e-12);
}

TEST(RecursiveStatistic, Homogeneity) {
  for (auto [n, K] : {std::pair{16, 1}, {64, 1}, {64, 2}, {256, 2}}) {
    const auto tree = K == 1 && n == 16 ? tree_with_sides(16, {16, 4}) : build_partition(LatticeSpec(n), forced_schedule(n, K));
    auto x = noise(tree.lattice().size(), 9);
    const double q = recursive_statistic(x, tree);
    for (double lambda : {2.0, 0.7}) {
      Scenery y = x;
      y *= lambda;
      const double expected = std::pow(lambda, std::pow(2.0, K + 1)) * q;
      EXPECT_NEAR(recursive_statistic(y, tree), expected, 1e-9 * std::abs(expected)) << n << " " << K;
    }
  }
}

TEST(ProjectPath, Examples) {
  const auto spec = LatticeSpec(16);
  const auto tree = tree_with_sides(16, {16, 4});
  Rng rng(0);
  const auto zig = project_path(sample_path(spec, PathKind::zigzag, rng), tree, 1);
  ASSERT_EQ(zig.cells.size(), 4u);
  for (const auto& c : zig.cells) EXPECT_EQ(c, (std::vector<int>{0}));
  const auto drift = project_path(sample_path(spec, PathKind::max_drift, rng), tree, 1);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(drift.cells[static_cast<std::size_t>(c)], (std::vector<int>{c}));
  // 0,-1,0,-1 then climbing across the row boundary at height 4 inside slab 1.
  DirectedPath cross{{0, -1, 0, 1, 2, 3, 4, 5, 6, 5, 4, 3, 2, 1, 0, -1}};
  ASSERT_TRUE(is_valid_path(cross, spec));
  const auto g = project_path(cross, tree, 1);
  EXPECT_EQ(g.cells[0], (std::vector<int>{-1, 0}));
  EXPECT_EQ(g.cells[1], (std::vector<int>{0, 1}));
  EXPECT_TRUE(g.is_valid(1));
}

TEST(ProjectPath, WidthAndCoverage) {
  const auto spec = LatticeSpec(64);
  const auto tree = build_partition(spec, forced_schedule(64, 2));
  Rng rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = sample_path(spec, PathKind::uniform_reflected, rng);
    const auto g = project_path(p, tree, 1);
    for (const auto& c : g.cells) {
      EXPECT_GE(c.size(), 1u);
      EXPECT_LE(c.size(), 2u);
    }
    EXPECT_TRUE(g.is_valid(1));
  }
}

TEST(LabelGood, Examples) {
  const auto spec = LatticeSpec(16);
  const auto tree = tree_with_sides(16, {16, 4});
  Rng rng(0);
  const auto drift = sample_path(spec, PathKind::max_drift, rng);
  const auto st = label_good(drift, tree);
  for (int c = 0; c < 4; ++c) {
    const int b = tree.child_with_coord(0, 0, {c, c});
    ASSERT_GE(b, 0);
    EXPECT_TRUE(st.levels[1][static_cast<std::size_t>(b)].good);
  }
  EXPECT_TRUE(st.root().good);
  for (std::size_t b = 0; b < tree.block_count(1); ++b) {
    const auto& node = st.levels[1][b];
    if (!node.touched) {
      EXPECT_FALSE(node.good);
    }
    if (tree.block(1, static_cast<int>(b)).coord.x2 < 0) {
      EXPECT_FALSE(node.touched);
    }
  }
  const auto zig = label_good(sample_path(spec, PathKind::zigzag, rng), tree);
  for (int c = 0; c < 4; ++c) EXPECT_TRUE(zig.levels[1][static_cast<std::size_t>(tree.child_with_coord(0, 0, {c, 0}))].good);
}

TEST(SignalRecursion, DepthZeroClosedForm) {
  const auto spec = LatticeSpec(24, 1, 3);
  const auto tree = build_partition(spec, forced_schedule(24, 0));
  Rng rng(2);
  const KernelView view(build_site_set(spec));
  for (int rep = 0; rep < 5; ++rep) {
    const auto p = sample_path(spec, PathKind::uniform_reflected, rng);
    EXPECT_NEAR(signal_recursion(p, tree, 1.5).root().nu, 2.25 * path_energy(24) / view.normalization(), 1e-12);
  }
  EXPECT_EQ(signal_recursion(sample_path(spec, PathKind::zigzag, rng, 0), tree, 0.0).root().nu, 0.0);
}

TEST(SignalRecursion, NoiselessConsistencyAndHomogeneity) {
  const auto spec = LatticeSpec(64);
  for (int K : {1, 2}) {
    const auto tree = build_partition(spec, forced_schedule(64, K));
    Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
      const auto p = sample_path(spec, PathKind::uniform_reflected, rng);
      const auto st = signal_recursion(p, tree, 0.8);
      const auto x = indicator(tree.lattice().size(), path_indices(p, tree.lattice()), 0.8);
      EXPECT_NEAR(recursive_statistic(x, tree), st.root().nu, 1e-12 * std::max(1.0, st.root().nu));
      const double doubled = signal_recursion(p, tree, 1.6).root().nu;
      EXPECT_NEAR(doubled / st.root().nu, std::pow(2.0, std::pow(2.0, K + 1)), 1e-9);
      for (std::size_t k = 0; k < st.levels.size(); ++k)
        for (const auto& node : st.levels[k]) {
          if (!node.touched) {
            EXPECT_EQ(node.nu, 0.0);
          }
          if (node.good) {
            EXPECT_TRUE(node.touched);
          }
          EXPECT_GE(node.nu, 0.0);
        }
    }
  }
}

TEST(SignalRecursion, SlabFactsAtDepthOne) {
  const auto spec = LatticeSpec(64);
  const auto tree = build_partition(spec, forced_schedule(64, 1));
  Rng rng(77);
  for (int rep = 0; rep < 300; ++rep) {
    const auto st = label_good(sample_path(spec, PathKind::uniform_reflected, rng), tree);
    const auto f = slab_facts(tree, st, 1);
    EXPECT_EQ(f.slabs, 4);
    EXPECT_TRUE(f.holds());
  }
}

TEST(SignalRecursion, MonotoneInMu) {
  const auto spec = LatticeSpec(64);
  const auto tree = build_partition(spec, forced_schedule(64, 1));
  Rng rng(0);
  const auto p = sample_path(spec, PathKind::zigzag, rng);
  double previous = 0.0;
  for (double mu : {0.1, 0.5, 1.0, 2.0}) {
    const auto st = signal_recursion(p, tree, mu);
    EXPECT_GT(st.root().nu, previous);
    previous = st.root().nu;
  }
}

TEST(LowerSignalForm, DepthZero) {
  // K = 0: (1/c) (c mu)^2 ln(n)^{1/2}.
  const auto s = forced_schedule(64, 0);
  EXPECT_NEAR(lower_signal_form(s, 1.3, 0.5), (1 / 0.5) * std::pow(0.65, 2) * std::sqrt(std::log(64.0)), 1e-12);
}
