#include "insulopt/configuration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace insulopt {

void enforce_body(const GridDomain& g, Configuration& c) {
  if (c.occupancy.size() != g.body_mask.size())
    throw std::invalid_argument("configuration: occupancy size mismatch");
  for (size_t k = 0; k < c.occupancy.size(); ++k)
    if (g.body_mask[k]) c.occupancy[k] = 1;
}

int repair_connectivity(const GridDomain& g, Configuration& c) {
  std::vector<char> keep(c.occupancy.size(), 0);
  std::queue<int> q;
  for (int k = 0; k < g.nx * g.ny; ++k)
    if (g.body_mask[k]) {
      keep[k] = 1;
      q.push(k);
    }
  while (!q.empty()) {
    int k = q.front();
    q.pop();
    int i = k % g.nx, j = k / g.nx;
    const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (int t = 0; t < 4; ++t) {
      int ii = i + di[t], jj = j + dj[t];
      if (!g.in_grid(ii, jj)) continue;
      int kk = g.idx(ii, jj);
      if (c.occupancy[kk] && !keep[kk]) {
        keep[kk] = 1;
        q.push(kk);
      }
    }
  }
  int dropped = 0;
  for (size_t k = 0; k < c.occupancy.size(); ++k)
    if (c.occupancy[k] && !keep[k]) {
      c.occupancy[k] = 0;
      ++dropped;
    }
  if (dropped > 0) c.level_set.reset();  // level set no longer describes Ω
  return dropped;
}

Configuration config_from_level_set(const GridDomain& g, Field level_set) {
  if (level_set.nx != g.nx || level_set.ny != g.ny)
    throw std::invalid_argument("configuration: level set size mismatch");
  Configuration c;
  c.occupancy.assign(level_set.v.size(), 0);
  for (size_t k = 0; k < level_set.v.size(); ++k)
    c.occupancy[k] = level_set.v[k] >= 0.0 ? 1 : 0;
  c.level_set = std::move(level_set);
  enforce_body(g, c);
  return c;
}

Configuration config_from_disk(const GridDomain& g, Vec2 center,
                               double radius) {
  if (radius <= 0) throw std::invalid_argument("configuration: radius <= 0");
  Field ls(g.nx, g.ny);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      ls.at(i, j) = radius - dist(g.cell_center(i, j), center);
  return config_from_level_set(g, std::move(ls));
}

Configuration config_from_occupancy(const GridDomain& g, CellMask occupancy) {
  Configuration c;
  c.occupancy = std::move(occupancy);
  enforce_body(g, c);
  repair_connectivity(g, c);
  return c;
}

Configuration config_star(const GridDomain& g, Vec2 center,
                          const std::vector<double>& sector_radii) {
  if (sector_radii.empty())
    throw std::invalid_argument("configuration: star needs sectors");
  int s = static_cast<int>(sector_radii.size());
  CellMask occ(static_cast<size_t>(g.nx) * g.ny, 0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      Vec2 d = g.cell_center(i, j) - center;
      double th = std::atan2(d.y, d.x);
      if (th < 0) th += 2 * std::numbers::pi;
      int sec = std::min(
          s - 1, static_cast<int>(th / (2 * std::numbers::pi) * s));
      if (norm(d) <= sector_radii[sec]) occ[g.idx(i, j)] = 1;
    }
  return config_from_occupancy(g, std::move(occ));
}

Configuration config_halfplane(const GridDomain& g, Vec2 n, double offset) {
  Vec2 nn = normalized(n);
  Field ls(g.nx, g.ny);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      ls.at(i, j) = offset - dot(g.cell_center(i, j), nn);
  return config_from_level_set(g, std::move(ls));
}

double volume_excess(const GridDomain& g, const Configuration& c) {
  int occ = occupied_count(c);
  return g.cell_area() * (occ - g.body_cells);
}

int occupied_count(const Configuration& c) {
  int n = 0;
  for (auto o : c.occupancy) n += o;
  return n;
}

std::pair<Field, double> contour_field(const GridDomain& g,
                                       const Configuration& c) {
  if (c.level_set) return {*c.level_set, 0.0};
  Field f(g.nx, g.ny);
  for (int k = 0; k < g.nx * g.ny; ++k) f[k] = c.occupancy[k] ? 1.0 : 0.0;
  return {tent_smooth(f, 2), 0.5};
}

namespace {

bool touches_rim(const GridDomain& g, const Configuration& c) {
  for (int i = 0; i < g.nx; ++i)
    if (c.occupancy[g.idx(i, 0)] || c.occupancy[g.idx(i, g.ny - 1)])
      return true;
  for (int j = 0; j < g.ny; ++j)
    if (c.occupancy[g.idx(0, j)] || c.occupancy[g.idx(g.nx - 1, j)])
      return true;
  return false;
}

}  // namespace

PerimeterEstimate perimeter_estimate(const GridDomain& g,
                                     const Configuration& c,
                                     double irregular_threshold) {
  PerimeterEstimate pe;
  pe.clipped = touches_rim(g, c);
  auto [f, iso] = contour_field(g, c);
  auto segs = extract_isoline(f, g.h, g.origin, iso);
  for (const auto& s : segs) pe.length += dist(s.a, s.b);
  double area = occupied_count(c) * g.cell_area();
  pe.ratio = area > 0 ? pe.length / std::sqrt(area) : 0.0;
  pe.irregular = pe.ratio > irregular_threshold;
  return pe;
}

FreeBoundary free_boundary_samples(const GridDomain& g,
                                   const Configuration& c) {
  if (occupied_count(c) <= g.body_cells)
    throw std::runtime_error(
        "free_boundary_samples: occupancy equals the body, no free boundary");
  auto [f, iso] = contour_field(g, c);
  auto segs = extract_isoline(f, g.h, g.origin, iso);
  if (segs.empty()) {
    if (touches_rim(g, c))
      throw std::runtime_error(
          "free_boundary_samples: occupancy fills the box (boundary clipped)");
    throw std::runtime_error("free_boundary_samples: empty isoline");
  }
  FreeBoundary fb;
  fb.clipped = touches_rim(g, c);
  fb.chains = stitch_chains(segs, 1e-9 * g.h);
  for (int ci = 0; ci < static_cast<int>(fb.chains.size()); ++ci) {
    const auto& ch = fb.chains[ci];
    size_t n = ch.pts.size();
    size_t m = ch.closed ? n : n - 1;
    for (size_t k = 0; k < m; ++k) {
      Vec2 a = ch.pts[k], b = ch.pts[(k + 1) % n];
      Vec2 mid = 0.5 * (a + b);
      // Outward means decreasing contour field.
      Vec2 grad = gradient_bilinear(f, g.h, g.origin, mid);
      Vec2 nrm = norm(grad) > 1e-14 ? -1.0 * normalized(grad)
                                    : normalized(perp(b - a));
      fb.samples.push_back(
          {mid, nrm, dist(a, b), BoundarySide::FreeBoundary});
      fb.chain_of.push_back(ci);
      fb.length += dist(a, b);
    }
  }
  return fb;
}

}  // namespace insulopt
