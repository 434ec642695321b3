#pragma once

// Binary segmentation metrics in pixel units: Dice, Jaccard, and the 95th
// percentile / mean of the symmetrized boundary-to-boundary distance
// multiset (95HD, ASD).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sgrs/error.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

struct Overlap {
  double dice = 0.0;
  double jaccard = 0.0;
};

struct MetricsReport {
  double dice = 0.0;
  double jaccard = 0.0;
  double hd95 = 0.0;
  double asd = 0.0;
  std::string note;  // empty, or which mask was empty
};

// Both 1 when both masks are empty.
inline Overlap overlap_metrics(const Mask& pred, const Mask& gt) {
  require_dims(pred.dims(), gt.dims(), "overlap_metrics");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return {1.0, 1.0};
  const double inter = static_cast<double>(both);
  return {2.0 * inter / static_cast<double>(p + g), inter / static_cast<double>(p + g - both)};
}

// Foreground pixels with at least one 4-neighbour outside the foreground;
// the image border counts as background. `mask` is [H,W].
inline std::vector<std::uint8_t> boundary(const Mask& mask) {
  require_rank(mask.dims(), 2, "boundary");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  std::vector<std::uint8_t> out(h * w, 0);
  auto fg = [&](std::size_t y, std::size_t x) { return mask[y * w + x] != 0; };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w;
      out[y * w + x] = edge || !fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1);
    }
  }
  return out;
}

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Exact squared Euclidean distance to the nearest set pixel (Meijster et al.
// two-phase transform, integer arithmetic throughout).
inline std::vector<std::int64_t> squared_distance_transform(const std::vector<std::uint8_t>& sites, std::size_t h,
                                                            std::size_t w) {
  const std::int64_t inf = static_cast<std::int64_t>(h + w);
  std::vector<std::int64_t> g(h * w);
  for (std::size_t x = 0; x < w; ++x) {
    g[x] = sites[x] ? 0 : inf;
    for (std::size_t y = 1; y < h; ++y) g[y * w + x] = sites[y * w + x] ? 0 : 1 + g[(y - 1) * w + x];
    for (std::size_t y = h - 1; y-- > 0;) {
      if (g[(y + 1) * w + x] < g[y * w + x]) g[y * w + x] = 1 + g[(y + 1) * w + x];
    }
  }
  std::vector<std::int64_t> dt(h * w);
  std::vector<std::int64_t> s(w), t(w);
  for (std::size_t y = 0; y < h; ++y) {
    const std::int64_t* gr = g.data() + y * w;
    auto f = [&](std::int64_t x, std::int64_t i) { return (x - i) * (x - i) + gr[i] * gr[i]; };
    auto sep = [&](std::int64_t i, std::int64_t u) {
      return floor_div(u * u - i * i + gr[u] * gr[u] - gr[i] * gr[i], 2 * (u - i));
    };
    std::int64_t q = 0;
    s[0] = 0;
    t[0] = 0;
    const auto m = static_cast<std::int64_t>(w);
    for (std::int64_t u = 1; u < m; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
      } else {
        const std::int64_t next = 1 + sep(s[q], u);
        if (next < m) {
          ++q;
          s[q] = u;
          t[q] = next;
        }
      }
    }
    for (std::int64_t u = m - 1; u >= 0; --u) {
      dt[y * w + static_cast<std::size_t>(u)] = f(u, s[q]);
      if (u == t[q]) --q;
    }
  }
  return dt;
}

inline void require_nonempty(const Mask& pred, const Mask& gt) {
  if (count(pred) == 0) throw EmptyMaskError("prediction mask is empty");
  if (count(gt) == 0) throw EmptyMaskError("ground-truth mask is empty");
}

}  // namespace detail

// O(|A| * |B|) reference: both directed nearest-boundary distance lists,
// concatenated and sorted.
inline std::vector<double> surface_distances_bruteforce(const Mask& pred, const Mask& gt) {
  require_dims(pred.dims(), gt.dims(), "surface_distances");
  require_rank(pred.dims(), 2, "surface_distances");
  detail::require_nonempty(pred, gt);
  const std::size_t w = pred.dim(1);
  auto points = [w](const std::vector<std::uint8_t>& b) {
    std::vector<std::pair<std::int64_t, std::int64_t>> pts;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b[i]) pts.emplace_back(static_cast<std::int64_t>(i / w), static_cast<std::int64_t>(i % w));
    }
    return pts;
  };
  const auto bp = points(boundary(pred));
  const auto bg = points(boundary(gt));
  std::vector<double> out;
  auto directed = [&](const auto& from, const auto& to) {
    for (const auto& [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [v, u] : to) {
        best = std::min(best, std::sqrt(static_cast<double>((y - v) * (y - v) + (x - u) * (x - u))));
      }
      out.push_back(best);
    }
  };
  directed(bp, bg);
  directed(bg, bp);
  std::sort(out.begin(), out.end());
  return out;
}

// Same multiset as the brute-force reference, via distance transforms of
// each boundary set.
inline std::vector<double> surface_distances(const Mask& pred, const Mask& gt) {
  require_dims(pred.dims(), gt.dims(), "surface_distances");
  require_rank(pred.dims(), 2, "surface_distances");
  detail::require_nonempty(pred, gt);
  const std::size_t h = pred.dim(0), w = pred.dim(1);
  const auto bp = boundary(pred);
  const auto bg = boundary(gt);
  const auto to_gt = detail::squared_distance_transform(bg, h, w);
  const auto to_pred = detail::squared_distance_transform(bp, h, w);
  std::vector<double> out;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (bp[i]) out.push_back(std::sqrt(static_cast<double>(to_gt[i])));
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    if (bg[i]) out.push_back(std::sqrt(static_cast<double>(to_pred[i])));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Linear interpolation between closest ranks on a sorted sample:
// position p/100 * (n - 1).
inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ContractError("percentile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1) / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double hd95(const Mask& pred, const Mask& gt) { return percentile(surface_distances(pred, gt), 95.0); }

inline double asd(const Mask& pred, const Mask& gt) {
  const auto d = surface_distances(pred, gt);
  double total = 0.0;
  for (double v : d) total += v;
  return total / static_cast<double>(d.size());
}

// Full report for one [H,W] pair. An empty mask on one side maps the
// distances to the image diagonal; both empty counts as perfect agreement.
inline MetricsReport evaluate_pair(const Mask& pred, const Mask& gt) {
  const auto ov = overlap_metrics(pred, gt);
  MetricsReport r{ov.dice, ov.jaccard, 0.0, 0.0, {}};
  const bool pe = count(pred) == 0, ge = count(gt) == 0;
  if (pe || ge) {
    const double h = static_cast<double>(pred.dim(0)), w = static_cast<double>(pred.dim(1));
    const double diag = std::sqrt(h * h + w * w);
    r.note = pe && ge ? "empty_both" : (pe ? "empty_pred" : "empty_gt");
    if (!(pe && ge)) r.hd95 = r.asd = diag;
    return r;
  }
  const auto d = surface_distances(pred, gt);
  r.hd95 = percentile(d, 95.0);
  double total = 0.0;
  for (double v : d) total += v;
  r.asd = total / static_cast<double>(d.size());
  return r;
}

}  // namespace sgrs
