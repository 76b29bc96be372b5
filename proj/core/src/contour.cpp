#include "insulopt/contour.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>

namespace insulopt {

double ContourChain::length() const {
  double s = 0.0;
  for (size_t k = 0; k + 1 < pts.size(); ++k) s += dist(pts[k], pts[k + 1]);
  if (closed && pts.size() > 2) s += dist(pts.back(), pts.front());
  return s;
}

namespace {

Vec2 edge_cross(Vec2 pa, double va, Vec2 pb, double vb, double iso) {
  double t = (iso - va) / (vb - va);
  t = std::clamp(t, 0.0, 1.0);
  return pa + t * (pb - pa);
}

}  // namespace

std::vector<ContourSegment> extract_isoline(const Field& f, double h,
                                            Vec2 origin, double iso) {
  std::vector<ContourSegment> out;
  const double min_len = 1e-12 * h;
  auto center = [&](int i, int j) -> Vec2 {
    return {origin.x + (i + 0.5) * h, origin.y + (j + 0.5) * h};
  };
  for (int j = 0; j + 1 < f.ny; ++j) {
    for (int i = 0; i + 1 < f.nx; ++i) {
      // Corners counterclockwise from bottom-left.
      Vec2 p[4] = {center(i, j), center(i + 1, j), center(i + 1, j + 1),
                   center(i, j + 1)};
      double v[4] = {f.at(i, j), f.at(i + 1, j), f.at(i + 1, j + 1),
                     f.at(i, j + 1)};
      int code = 0;
      for (int k = 0; k < 4; ++k)
        if (v[k] >= iso) code |= 1 << k;
      if (code == 0 || code == 15) continue;

      // Crossing point on edge k (between corner k and corner (k+1)%4),
      // computed lazily.
      auto cross = [&](int k) {
        int k2 = (k + 1) % 4;
        return edge_cross(p[k], v[k], p[k2], v[k2], iso);
      };
      auto emit = [&](int e1, int e2) {
        ContourSegment s{cross(e1), cross(e2)};
        if (dist(s.a, s.b) > min_len) out.push_back(s);
      };

      switch (code) {
        case 1: case 14: emit(3, 0); break;
        case 2: case 13: emit(0, 1); break;
        case 4: case 11: emit(1, 2); break;
        case 8: case 7:  emit(2, 3); break;
        case 3: case 12: emit(3, 1); break;
        case 6: case 9:  emit(0, 2); break;
        case 5: case 10: {
          // Saddle: split by the square's mean value.
          double mean = 0.25 * (v[0] + v[1] + v[2] + v[3]);
          bool center_in = mean >= iso;
          if ((code == 5) == center_in) {
            emit(3, 2);
            emit(0, 1);
          } else {
            emit(3, 0);
            emit(1, 2);
          }
          break;
        }
        default: break;
      }
    }
  }
  return out;
}

std::vector<ContourChain> stitch_chains(const std::vector<ContourSegment>& segs,
                                        double tol) {
  std::vector<ContourChain> chains;
  if (segs.empty()) return chains;

  auto key = [tol](Vec2 p) {
    return std::pair<std::int64_t, std::int64_t>{
        static_cast<std::int64_t>(std::llround(p.x / tol)),
        static_cast<std::int64_t>(std::llround(p.y / tol))};
  };
  // endpoint key -> list of (segment index, which endpoint)
  std::map<std::pair<std::int64_t, std::int64_t>,
           std::vector<std::pair<int, int>>>
      ends;
  for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
    ends[key(segs[s].a)].push_back({s, 0});
    ends[key(segs[s].b)].push_back({s, 1});
  }

  std::vector<char> used(segs.size(), 0);
  for (int s0 = 0; s0 < static_cast<int>(segs.size()); ++s0) {
    if (used[s0]) continue;
    used[s0] = 1;
    std::vector<Vec2> pts = {segs[s0].a, segs[s0].b};

    // Extend in both directions until stuck.
    for (int dir = 0; dir < 2; ++dir) {
      while (true) {
        Vec2 tip = dir == 0 ? pts.back() : pts.front();
        auto it = ends.find(key(tip));
        int next = -1, end = -1;
        if (it != ends.end()) {
          for (auto [si, ei] : it->second) {
            if (!used[si]) {
              next = si;
              end = ei;
              break;
            }
          }
        }
        if (next < 0) break;
        used[next] = 1;
        Vec2 far = end == 0 ? segs[next].b : segs[next].a;
        if (dir == 0)
          pts.push_back(far);
        else
          pts.insert(pts.begin(), far);
      }
    }

    bool closed = pts.size() > 2 && dist(pts.front(), pts.back()) <= tol;
    if (closed) pts.pop_back();
    chains.push_back({std::move(pts), closed});
  }
  return chains;
}

double distance_to_chains(const std::vector<ContourChain>& chains, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  auto seg_dist = [&](Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double den = norm2(ab);
    double t = den > 0 ? std::clamp(dot(p - a, ab) / den, 0.0, 1.0) : 0.0;
    return dist(p, a + t * ab);
  };
  for (const auto& c : chains) {
    for (size_t k = 0; k + 1 < c.pts.size(); ++k)
      best = std::min(best, seg_dist(c.pts[k], c.pts[k + 1]));
    if (c.closed && c.pts.size() > 2)
      best = std::min(best, seg_dist(c.pts.back(), c.pts.front()));
  }
  return best;
}

}  // namespace insulopt
