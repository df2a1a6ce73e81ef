#include <gtest/gtest.h>

#include <cmath>

#include "trailscan/kernel.hpp"

using namespace trailscan;

namespace {

// Dense kernel built straight from the definition.
std::vector<std::vector<double>> dense(const SiteSet& s) {
  std::vector<std::vector<double>> m(s.size(), std::vector<double>(s.size(), 0.0));
  for (std::size_t u = 0; u < s.size(); ++u)
    for (std::size_t v = 0; v < s.size(); ++v) {
      const auto& x = s[u];
      const auto& y = s[v];
      if (x.x1 != y.x1 && std::abs(x.x2 - y.x2) <= std::abs(x.x1 - y.x1)) m[u][v] = 1.0 / std::abs(x.x1 - y.x1);
    }
  return m;
}

double dense_quad(const std::vector<std::vector<double>>& m, const std::vector<double>& x) {
  long double acc = 0;
  for (std::size_t u = 0; u < x.size(); ++u)
    for (std::size_t v = 0; v < x.size(); ++v) acc += static_cast<long double>(m[u][v]) * x[u] * x[v];
  return static_cast<double>(acc);
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// Random coarse grid with gaps, so some columns are not progressions.
SiteSet random_grid(Rng& rng, int cols, int rows) {
  std::bernoulli_distribution keep(0.6);
  std::vector<Site> sites;
  for (int c = 0; c < cols; ++c)
    for (int r = -rows; r <= rows; ++r)
      if (keep(rng)) sites.push_back({c * 2 + (c > 2 ? 1 : 0), r});
  return SiteSet(std::move(sites), false);
}

}  // namespace

TEST(Entry, Examples) {
  EXPECT_EQ(entry({0, 0}, {2, 0}), 0.5);
  EXPECT_EQ(entry({0, 0}, {1, 2}), 0.0);
  EXPECT_EQ(entry({5, 3}, {5, 3}), 0.0);
}

TEST(Frobenius, SmallRegions) {
  EXPECT_EQ(frobenius_norm_sq(KernelView(build_site_set(LatticeSpec(2)))), 4.0);
  EXPECT_EQ(frobenius_norm_sq(KernelView(build_site_set(LatticeSpec(1)))), 0.0);
  EXPECT_EQ(frobenius_norm_sq(KernelView(build_site_set(LatticeSpec(2, 1, 1)))), 12.0);
}

TEST(Frobenius, MatchesDense) {
  for (auto [num, den] : {std::pair{0, 1}, {1, 2}, {1, 3}, {2, 1}}) {
    for (int n = 1; n <= 14; ++n) {
      const KernelView view(build_site_set(LatticeSpec(n, num, den)));
      const auto m = dense(view.sites());
      double f = 0.0;
      for (const auto& row : m)
        for (double e : row) f += e * e;
      EXPECT_NEAR(view.frob_sq(), f, 1e-12 * std::max(1.0, f)) << n;
      if (f > 0) {
        EXPECT_NEAR(f / (view.normalization() * view.normalization()), 0.5, 1e-12);
      }
    }
  }
  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const KernelView view(random_grid(rng, 6, 4));
    const auto m = dense(view.sites());
    double f = 0.0;
    for (const auto& row : m)
      for (double e : row) f += e * e;
    EXPECT_NEAR(view.frob_sq(), f, 1e-12 * std::max(1.0, f));
  }
}

TEST(QuadraticForm, Examples) {
  const KernelView view(build_site_set(LatticeSpec(2)));
  EXPECT_EQ(quadratic_form(view, std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_EQ(quadratic_form(view, std::vector<double>{1, 1, 1}), 4.0);
  EXPECT_EQ(quadratic_form(view, std::vector<double>{1, 0, 1}), 2.0);
  EXPECT_THROW(quadratic_form(view, std::vector<double>{1, 1}), AlignmentError);
}

TEST(QuadraticForm, MatchesDenseOnLatticesAndGrids) {
  Rng rng(11);
  for (auto [num, den] : {std::pair{0, 1}, {1, 2}, {1, 5}}) {
    for (int n = 1; n <= 12; ++n) {
      const KernelView view(build_site_set(LatticeSpec(n, num, den)));
      const auto m = dense(view.sites());
      for (int rep = 0; rep < 10; ++rep) {
        const auto x = random_vector(view.size(), rng);
        const double d = dense_quad(m, x);
        EXPECT_NEAR(quadratic_form(view, x), d, 1e-11 * std::max(1.0, std::abs(d)));
        EXPECT_NEAR(bilinear(view, x, x), d, 1e-11 * std::max(1.0, std::abs(d)));
      }
    }
  }
  for (int rep = 0; rep < 20; ++rep) {
    const KernelView view(random_grid(rng, 7, 5));
    const auto m = dense(view.sites());
    const auto x = random_vector(view.size(), rng);
    const double d = dense_quad(m, x);
    EXPECT_NEAR(quadratic_form(view, x), d, 1e-11 * std::max(1.0, std::abs(d)));
  }
}

TEST(QuadraticForm, NormalizedIsScaled) {
  Rng rng(2);
  const KernelView view(build_site_set(LatticeSpec(20, 1, 4)));
  const auto x = random_vector(view.size(), rng);
  EXPECT_NEAR(quadratic_form(view, x, true), quadratic_form(view, x) / (std::sqrt(2.0) * std::sqrt(view.frob_sq())),
              1e-12);
  const KernelView empty(build_site_set(LatticeSpec(1)));
  EXPECT_EQ(quadratic_form(empty, std::vector<double>{3.0}, true), 0.0);
}

TEST(Bilinear, SymmetryAndEntries) {
  Rng rng(7);
  const KernelView view(build_site_set(LatticeSpec(9, 1, 3)));
  const auto x = random_vector(view.size(), rng);
  const auto y = random_vector(view.size(), rng);
  EXPECT_NEAR(bilinear(view, x, y), bilinear(view, y, x), 1e-11);
  EXPECT_EQ(bilinear(view, x, std::vector<double>(view.size(), 0.0)), 0.0);

  const KernelView small(build_site_set(LatticeSpec(3)));
  for (std::size_t u = 0; u < small.size(); ++u)
    for (std::size_t v = 0; v < small.size(); ++v) {
      std::vector<double> eu(small.size()), ev(small.size());
      eu[u] = 1;
      ev[v] = 1;
      EXPECT_EQ(bilinear(small, eu, ev), entry(small.sites()[u], small.sites()[v]));
    }
}

TEST(Matvec, BasisColumnAndDense) {
  const KernelView view(build_site_set(LatticeSpec(2)));
  const auto y = matvec(view, std::vector<double>{1, 0, 0});
  EXPECT_EQ(y.values, (std::vector<double>{0, 1, 1}));

  Rng rng(8);
  for (int n : {5, 11}) {
    const KernelView v(build_site_set(LatticeSpec(n, 1, 2)));
    const auto m = dense(v.sites());
    const auto x = random_vector(v.size(), rng);
    const auto fast = matvec(v, x, true);
    for (std::size_t u = 0; u < v.size(); ++u) {
      double d = 0;
      for (std::size_t w = 0; w < v.size(); ++w) d += m[u][w] * x[w];
      EXPECT_NEAR(fast[u], d / v.normalization(), 1e-12);
    }
  }
}

TEST(PathEnergy, ClosedFormAndEveryPath) {
  EXPECT_EQ(path_energy(1), 0.0);
  EXPECT_EQ(path_energy(2), 2.0);
  EXPECT_EQ(path_energy(3), 5.0);
  for (int n = 1; n <= 8; ++n) {
    const auto spec = LatticeSpec(n, 1, 4);
    const KernelView view(build_site_set(spec));
    for (const auto& p : enumerate_paths(spec)) {
      const auto x = indicator(view.size(), path_indices(p, view.sites()));
      EXPECT_NEAR(quadratic_form(view, x), path_energy(n), 1e-12);
    }
  }
}

TEST(SpectralNorm, SmallCasesAndMonotone) {
  Rng rng(1);
  EXPECT_EQ(spectral_norm_estimate(KernelView(build_site_set(LatticeSpec(1))), 10, rng), 0.0);
  EXPECT_NEAR(spectral_norm_estimate(KernelView(build_site_set(LatticeSpec(2))), 100, rng, 1e-12), std::sqrt(2.0),
              1e-9);
  const KernelView view(build_site_set(LatticeSpec(16)));
  double previous = 0.0;
  for (int it = 1; it <= 30; ++it) {
    Rng r(9);
    const double e = spectral_norm_estimate(view, it, r, 0.0);
    EXPECT_GE(e, previous - 1e-12);
    previous = e;
  }
  EXPECT_THROW(spectral_norm_estimate(view, 0, rng), ConfigError);
}

TEST(SquaredKernel, MatchesDense) {
  auto check = [](const SiteSet& s) {
    const KernelView view(s);
    const auto m = dense(s);
    const std::size_t N = s.size();
    double f = 0.0;
    for (std::size_t u = 0; u < N; ++u)
      for (std::size_t v = 0; v < N; ++v) {
        double e = 0.0;
        for (std::size_t w = 0; w < N; ++w) e += m[u][w] * m[w][v];
        f += e * e;
      }
    EXPECT_NEAR(squared_kernel_frobenius_sq(view), f, 1e-10 * std::max(1.0, f)) << N;
  };
  for (auto [num, den] : {std::pair{0, 1}, {1, 2}, {1, 3}})
    for (int n = 1; n <= 10; ++n) check(build_site_set(LatticeSpec(n, num, den)));
  // Asymmetric progression grid with step 1.
  std::vector<Site> grid;
  for (int c = 0; c < 6; ++c)
    for (int r = -1; r <= c; ++r) grid.push_back({c, r});
  check(SiteSet(grid, false));
  EXPECT_FALSE(reflection_symmetric(SiteSet(grid, false)));
}
