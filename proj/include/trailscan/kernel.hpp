#pragma once

// The inverse column-distance kernel A(V):
//
//   A[x, y] = 1 / |x1 - y1|   if x and y are light-cone equivalent,
//             0               otherwise (in particular on the diagonal),
//
// and its normalization A / (sqrt(2) * ||A||_F). Nothing here materializes
// A. Every product reduces, per ordered column pair (i, j) with gap d, to
// windowed sums of column j over heights within d of each height of
// column i, served from prefix sums.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lattice.hpp"
#include "util.hpp"

namespace trailscan {

inline double entry(Site x, Site y) {
  return equivalent(x, y) ? 1.0 / std::abs(x.x1 - y.x1) : 0.0;
}

/// Observations aligned with a SiteSet's order.
struct Scenery {
  std::vector<double> values;

  Scenery() = default;
  explicit Scenery(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit Scenery(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  operator std::span<const double>() const { return values; }

  Scenery& operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
  }
};

/// Indicator of the sites at `indices`, scaled by `value`.
inline Scenery indicator(std::size_t size, const std::vector<std::size_t>& indices, double value = 1.0) {
  Scenery s(size);
  for (std::size_t i : indices) s[i] = value;
  return s;
}

namespace detail {

// Sum over t in [0, m_src) of clamp(t + beta, 0, m_dst).
inline std::int64_t sum_clamped(std::int64_t beta, std::int64_t m_src, std::int64_t m_dst) {
  auto cumulative = [m_dst](std::int64_t y) -> std::int64_t {
    if (y < 0) return 0;
    if (y <= m_dst) return y * (y + 1) / 2;
    return m_dst * (m_dst + 1) / 2 + (y - m_dst) * m_dst;
  };
  return cumulative(beta + m_src - 1) - cumulative(beta - 1);
}

// Offsets such that, for source index t, the window column's index range of
// heights within `gap` of the source height is
//   [clamp(t + lo, 0, m), clamp(t + hi, 0, m)).
// Valid when both columns are arithmetic progressions with the set's step.
struct WindowShift {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

inline WindowShift window_shift(const SiteSet::Column& src, const SiteSet::Column& dst, std::int64_t gap,
                                int step) {
  return {floor_div(src.min_height - gap - 1 - dst.min_height, step) + 1,
          floor_div(src.min_height + gap - dst.min_height, step) + 1};
}

inline std::int64_t clamp_index(std::int64_t v, std::int64_t m) { return v < 0 ? 0 : (v > m ? m : v); }

// Calls f(t, lo, hi) for every source index t, where [lo, hi) indexes the
// heights of column `dst` within `gap` of the t-th height of column `src`.
template <class F>
void for_each_window(const SiteSet& set, std::size_t src, std::size_t dst, F&& f) {
  const auto& cs = set.columns()[src];
  const auto& cd = set.columns()[dst];
  const std::int64_t gap = std::abs(cd.x1 - cs.x1);
  const auto ms = static_cast<std::int64_t>(cs.count);
  const auto md = static_cast<std::int64_t>(cd.count);
  if (cs.progression && cd.progression) {
    const WindowShift w = window_shift(cs, cd, gap, set.step());
    for (std::int64_t t = 0; t < ms; ++t) f(t, clamp_index(t + w.lo, md), clamp_index(t + w.hi, md));
    return;
  }
  const auto& sites = set.sites();
  std::int64_t lo = 0, hi = 0;
  for (std::int64_t t = 0; t < ms; ++t) {
    const std::int64_t u = sites[cs.offset + static_cast<std::size_t>(t)].x2;
    while (lo < md && sites[cd.offset + static_cast<std::size_t>(lo)].x2 < u - gap) ++lo;
    if (hi < lo) hi = lo;
    while (hi < md && sites[cd.offset + static_cast<std::size_t>(hi)].x2 <= u + gap) ++hi;
    f(t, lo, hi);
  }
}

// Number of equivalent (source, window) pairs between two columns.
inline std::int64_t pair_count(const SiteSet& set, std::size_t src, std::size_t dst) {
  const auto& cs = set.columns()[src];
  const auto& cd = set.columns()[dst];
  if (cs.progression && cd.progression) {
    const WindowShift w = window_shift(cs, cd, std::abs(cd.x1 - cs.x1), set.step());
    const auto ms = static_cast<std::int64_t>(cs.count);
    const auto md = static_cast<std::int64_t>(cd.count);
    return sum_clamped(w.hi, ms, md) - sum_clamped(w.lo, ms, md);
  }
  std::int64_t total = 0;
  for_each_window(set, src, dst, [&](std::int64_t, std::int64_t lo, std::int64_t hi) { total += hi - lo; });
  return total;
}

// Per-column prefix sums; column c occupies [offset_c + c, offset_c + c + count_c].
inline void column_prefix(const SiteSet& set, std::span<const double> x, std::vector<double>& out) {
  out.resize(set.size() + set.columns().size());
  for (std::size_t c = 0; c < set.columns().size(); ++c) {
    const auto& col = set.columns()[c];
    double* p = out.data() + col.offset + c;
    p[0] = 0.0;
    for (std::size_t t = 0; t < col.count; ++t) p[t + 1] = p[t] + x[col.offset + t];
  }
}

}  // namespace detail

/// Immutable kernel over a site set, with ||A||_F^2 and the normalization
/// divisor sqrt(2) * ||A||_F computed at construction.
class KernelView {
 public:
  KernelView() : KernelView(SiteSet{}) {}
  explicit KernelView(SiteSet sites) : KernelView(std::make_shared<const SiteSet>(std::move(sites))) {}
  explicit KernelView(std::shared_ptr<const SiteSet> sites) : sites_(std::move(sites)) {
    const auto& cols = sites_->columns();
    CompensatedSum acc;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      for (std::size_t j = i + 1; j < cols.size(); ++j) {
        const std::int64_t pairs = detail::pair_count(*sites_, i, j);
        if (pairs == 0) continue;
        const double d = cols[j].x1 - cols[i].x1;
        acc += 2.0 * static_cast<double>(pairs) / (d * d);
      }
    }
    frob_sq_ = acc.value();
    normalization_ = std::sqrt(2.0 * frob_sq_);
  }

  const SiteSet& sites() const { return *sites_; }
  std::shared_ptr<const SiteSet> shared_sites() const { return sites_; }
  std::size_t size() const { return sites_->size(); }
  double frob_sq() const { return frob_sq_; }
  /// sqrt(2) * ||A||_F; zero when no equivalent pair exists.
  double normalization() const { return normalization_; }

  /// Divisor applied for normalized forms. A kernel without equivalent
  /// pairs is the zero matrix, so its normalized forms are defined as zero.
  double scale(bool normalized) const {
    if (!normalized) return 1.0;
    return normalization_ > 0.0 ? 1.0 / normalization_ : 0.0;
  }

  void check_aligned(std::size_t n) const {
    if (n != sites_->size())
      throw AlignmentError("scenery has " + std::to_string(n) + " values for " +
                           std::to_string(sites_->size()) + " sites");
  }

 private:
  std::shared_ptr<const SiteSet> sites_;
  double frob_sq_ = 0.0;
  double normalization_ = 0.0;
};

inline double frobenius_norm_sq(const KernelView& view) { return view.frob_sq(); }

/// x^T A y (or x^T Abar y). Both orders of every column pair are visited.
inline double bilinear(const KernelView& view, std::span<const double> x, std::span<const double> y,
                       bool normalized = false) {
  view.check_aligned(x.size());
  view.check_aligned(y.size());
  const SiteSet& set = view.sites();
  const auto& cols = set.columns();
  std::vector<double> prefix;
  detail::column_prefix(set, y, prefix);
  CompensatedSum acc;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double* xi = x.data() + cols[i].offset;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j == i) continue;
      const double* pj = prefix.data() + cols[j].offset + j;
      double inner = 0.0;
      detail::for_each_window(set, i, j, [&](std::int64_t t, std::int64_t lo, std::int64_t hi) {
        inner += xi[t] * (pj[hi] - pj[lo]);
      });
      acc += inner / std::abs(cols[j].x1 - cols[i].x1);
    }
  }
  return acc.value() * view.scale(normalized);
}

/// x^T A x via the sliding-window sums, each unordered column pair once
/// with weight 2/d.
inline double quadratic_form(const KernelView& view, std::span<const double> x, bool normalized = false) {
  view.check_aligned(x.size());
  const SiteSet& set = view.sites();
  const auto& cols = set.columns();
  std::vector<double> prefix;
  detail::column_prefix(set, x, prefix);
  CompensatedSum acc;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto& ci = cols[i];
    const double* xi = x.data() + ci.offset;
    const auto mi = static_cast<std::int64_t>(ci.count);
    for (std::size_t j = i + 1; j < cols.size(); ++j) {
      const auto& cj = cols[j];
      const double* pj = prefix.data() + cj.offset + j;
      const std::int64_t d = cj.x1 - ci.x1;
      double inner = 0.0;
      if (ci.progression && cj.progression) {
        const auto w = detail::window_shift(ci, cj, d, set.step());
        const auto mj = static_cast<std::int64_t>(cj.count);
        // Indices where neither end of the window is clamped form one run;
        // handle it without the clamps.
        const std::int64_t t_begin = std::clamp<std::int64_t>(-w.lo, 0, mi);
        const std::int64_t t_end = std::clamp<std::int64_t>(mj - w.hi + 1, t_begin, mi);
        for (std::int64_t t = 0; t < t_begin; ++t)
          inner += xi[t] * (pj[detail::clamp_index(t + w.hi, mj)] - pj[detail::clamp_index(t + w.lo, mj)]);
        const double* hi_ptr = pj + w.hi;
        const double* lo_ptr = pj + w.lo;
        for (std::int64_t t = t_begin; t < t_end; ++t) inner += xi[t] * (hi_ptr[t] - lo_ptr[t]);
        for (std::int64_t t = t_end; t < mi; ++t)
          inner += xi[t] * (pj[detail::clamp_index(t + w.hi, mj)] - pj[detail::clamp_index(t + w.lo, mj)]);
      } else {
        detail::for_each_window(set, i, j, [&](std::int64_t t, std::int64_t lo, std::int64_t hi) {
          inner += xi[t] * (pj[hi] - pj[lo]);
        });
      }
      acc += 2.0 * inner / static_cast<double>(d);
    }
  }
  return acc.value() * view.scale(normalized);
}

/// A x (or Abar x).
inline Scenery matvec(const KernelView& view, std::span<const double> x, bool normalized = false) {
  view.check_aligned(x.size());
  const SiteSet& set = view.sites();
  const auto& cols = set.columns();
  std::vector<double> prefix;
  detail::column_prefix(set, x, prefix);
  Scenery y(set.size());
  const double s = view.scale(normalized);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    double* yi = y.values.data() + cols[i].offset;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j == i) continue;
      const double* pj = prefix.data() + cols[j].offset + j;
      const double w = s / std::abs(cols[j].x1 - cols[i].x1);
      detail::for_each_window(set, i, j, [&](std::int64_t t, std::int64_t lo, std::int64_t hi) {
        yi[t] += w * (pj[hi] - pj[lo]);
      });
    }
  }
  return y;
}

/// 1_pi^T A 1_pi, identical for every directed path of length n:
/// 2 * sum_{d=1}^{n-1} (n - d) / d.
inline double path_energy(int n) {
  CompensatedSum acc;
  for (int d = n - 1; d >= 1; --d) acc += 2.0 * static_cast<double>(n - d) / d;
  return acc.value();
}

/// Power-iteration lower bound on the spectral norm. The returned value
/// ||A^{k+1} x|| / ||A^k x|| is nondecreasing in k for symmetric A. Stops
/// when the relative change drops below `tolerance` or after `iterations`
/// products.
inline double spectral_norm_estimate(const KernelView& view, int iterations, Rng& rng,
                                     double tolerance = 1e-6) {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  const std::size_t n = view.size();
  if (n == 0) return 0.0;
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  for (double& v : x) v = std::abs(normal(rng)) + 1e-3;
  auto normalize = [](std::vector<double>& v) {
    double ss = 0.0;
    for (double e : v) ss += e * e;
    const double norm = std::sqrt(ss);
    if (norm > 0.0)
      for (double& e : v) e /= norm;
    return norm;
  };
  normalize(x);
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Scenery y = matvec(view, x);
    const double norm = normalize(y.values);
    if (norm == 0.0) return 0.0;
    const double previous = estimate;
    estimate = std::max(estimate, norm);
    x = std::move(y.values);
    if (it > 0 && std::abs(estimate - previous) <= tolerance * estimate) break;
  }
  return estimate;
}

/// True when (x1, x2) -> (x1, -x2) maps the set onto itself.
inline bool reflection_symmetric(const SiteSet& set) {
  for (const Site& s : set.sites())
    if (!set.contains({s.x1, -s.x2})) return false;
  return true;
}

/// ||A^2||_F^2 = Trace(A^4), streamed one row of A^2 at a time.
///
/// For a source site u and a target column j, the row entry at height v is
/// sum_k w_k * |cone_k(u) intersect cone_k(v)| with w_k = 1/(d(u,k) d(k,j)).
/// As a function of v each term is a trapezoid, i.e. four ramps, so the
/// whole column of the row comes from second differences in O(C + m_j).
/// Requires progression columns.
inline double squared_kernel_frobenius_sq(const KernelView& view) {
  const SiteSet& set = view.sites();
  if (!set.all_progressions()) throw ConfigError("squared_kernel_frobenius_sq needs progression columns");
  const auto& cols = set.columns();
  const std::size_t ncols = cols.size();
  const bool symmetric = reflection_symmetric(set);
  const int step = set.step();

  std::vector<std::size_t> sources;
  for (std::size_t s = 0; s < set.size(); ++s)
    if (!symmetric || set[s].x2 >= 0) sources.push_back(s);

  std::vector<double> per_source(sources.size(), 0.0);
  parallel_for(sources.size(), [&](std::size_t si) {
    const std::size_t src = sources[si];
    const Site u = set[src];
    std::size_t ci = 0;
    while (cols[ci].x1 != u.x1) ++ci;
    const auto tu = static_cast<std::int64_t>(src - cols[ci].offset);
    std::vector<double> second;
    CompensatedSum row_sq;
    for (std::size_t cj = 0; cj < ncols; ++cj) {
      const auto mj = static_cast<std::int64_t>(cols[cj].count);
      second.assign(static_cast<std::size_t>(mj) + 1, 0.0);
      double c0 = 0.0, c1 = 0.0;
      auto ramp = [&](std::int64_t p, double w) {
        const std::int64_t q = p + 1;
        if (q >= mj) return;
        if (q >= 0) {
          second[static_cast<std::size_t>(q)] += w;
        } else {
          c0 += w * static_cast<double>(-p);
          c1 += w;
        }
      };
      for (std::size_t ck = 0; ck < ncols; ++ck) {
        if (ck == ci || ck == cj) continue;
        const std::int64_t d1 = std::abs(cols[ck].x1 - cols[ci].x1);
        const std::int64_t d2 = std::abs(cols[ck].x1 - cols[cj].x1);
        const auto mk = static_cast<std::int64_t>(cols[ck].count);
        const auto wu = detail::window_shift(cols[ci], cols[ck], d1, step);
        const std::int64_t lo1 = detail::clamp_index(tu + wu.lo, mk);
        const std::int64_t hi1 = detail::clamp_index(tu + wu.hi, mk);
        if (hi1 <= lo1) continue;
        const auto wv = detail::window_shift(cols[cj], cols[ck], d2, step);
        const double w = 1.0 / static_cast<double>(d1 * d2);
        ramp(lo1 - wv.hi, w);
        ramp(hi1 - wv.hi, -w);
        ramp(lo1 - wv.lo, -w);
        ramp(hi1 - wv.lo, w);
      }
      double slope = 0.0, level = 0.0;
      for (std::int64_t t = 0; t < mj; ++t) {
        slope += second[static_cast<std::size_t>(t)];
        level += slope;
        const double value = c0 + c1 * static_cast<double>(t) + level;
        row_sq += value * value;
      }
    }
    const double weight = (symmetric && u.x2 > 0) ? 2.0 : 1.0;
    per_source[si] = weight * row_sq.value();
  });
  CompensatedSum total;
  for (double v : per_source) total += v;
  return total.value();
}

}  // namespace trailscan
