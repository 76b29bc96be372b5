#include "insulopt/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace insulopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Large finite stand-in for "no seed" in the distance transform; keeps the
// parabola intersection arithmetic finite.
constexpr double kFar = 1e12;

// 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  int n = static_cast<int>(f.size());
  d.assign(n, 0.0);
  std::vector<int> v(n, 0);
  std::vector<double> z(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    int p = v[k];
    d[q] = (q - p) * (q - p) + f[p];
  }
}

// Squared Euclidean distance (cell units) to the nearest seed cell.
std::vector<double> edt_2d(int nx, int ny, const CellMask& seed) {
  std::vector<double> g(static_cast<size_t>(nx) * ny);
  std::vector<double> col(ny), dcol(ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) col[j] = seed[j * nx + i] ? 0.0 : kFar;
    edt_1d(col, dcol);
    for (int j = 0; j < ny; ++j) g[j * nx + i] = dcol[j];
  }
  std::vector<double> row(nx), drow(nx), out(g.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) row[i] = g[j * nx + i];
    edt_1d(row, drow);
    for (int i = 0; i < nx; ++i) out[j * nx + i] = drow[i];
  }
  return out;
}

double polygon_signed_area(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (size_t k = 0; k < v.size(); ++k) {
    Vec2 p = v[k], q = v[(k + 1) % v.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool point_in_polygon(const std::vector<Vec2>& v, Vec2 p) {
  bool in = false;
  for (size_t k = 0, m = v.size() - 1; k < v.size(); m = k++) {
    bool crosses = (v[k].y > p.y) != (v[m].y > p.y);
    if (crosses) {
      double xint =
          v[m].x + (p.y - v[m].y) / (v[k].y - v[m].y) * (v[k].x - v[m].x);
      if (p.x < xint) in = !in;
    }
  }
  return in;
}

Vec2 closest_on_segment(Vec2 a, Vec2 b, Vec2 p) {
  Vec2 ab = b - a;
  double den = norm2(ab);
  double t = den > 0 ? std::clamp(dot(p - a, ab) / den, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

}  // namespace

BodyProjection GridDomain::project_to_body(Vec2 p) const {
  BodyProjection out;
  if (const auto* disk = std::get_if<DiskBody>(&body)) {
    Vec2 d = p - disk->center;
    double r = norm(d);
    Vec2 dir = r > 1e-14 ? d / r : Vec2{1.0, 0.0};
    out.point = disk->center + disk->radius * dir;
    out.outward = dir;
    out.sdist = r - disk->radius;
    return out;
  }
  if (const auto* poly = std::get_if<PolygonBody>(&body)) {
    const auto& v = poly->vertices;
    double best = kInf;
    Vec2 bp{}, ea{}, eb{};
    for (size_t k = 0; k < v.size(); ++k) {
      Vec2 a = v[k], b = v[(k + 1) % v.size()];
      Vec2 c = closest_on_segment(a, b, p);
      double d = dist(p, c);
      if (d < best) {
        best = d;
        bp = c;
        ea = a;
        eb = b;
      }
    }
    bool inside = point_in_polygon(v, p);
    out.point = bp;
    out.sdist = inside ? -best : best;
    if (best > 1e-12) {
      out.outward = normalized(p - bp);
      if (inside) out.outward = -1.0 * out.outward;
    } else {
      bool ccw = polygon_signed_area(v) > 0;
      Vec2 inw = perp(normalized(eb - ea));  // interior is left of a CCW edge
      out.outward = ccw ? -1.0 * inw : inw;
    }
    return out;
  }
  // Mask body: project onto the contoured boundary polyline.
  double best = kInf;
  Vec2 bp{};
  for (const auto& c : mask_chains_) {
    size_t n = c.pts.size();
    size_t m = c.closed ? n : n - 1;
    for (size_t k = 0; k < m; ++k) {
      Vec2 q = closest_on_segment(c.pts[k], c.pts[(k + 1) % n], p);
      double d = dist(p, q);
      if (d < best) {
        best = d;
        bp = q;
      }
    }
  }
  int i = std::clamp(static_cast<int>((p.x - origin.x) / h), 0, nx - 1);
  int j = std::clamp(static_cast<int>((p.y - origin.y) / h), 0, ny - 1);
  bool inside = body_mask[idx(i, j)] != 0;
  out.point = bp;
  out.sdist = inside ? -best : best;
  out.outward = best > 1e-12 ? (inside ? -1.0 : 1.0) * normalized(p - bp)
                             : Vec2{1.0, 0.0};
  return out;
}

GridDomain build_grid(const Box& box, int nx, int ny, const BodySpec& body) {
  if (nx < 8 || ny < 8) throw std::invalid_argument("grid: need at least 8 cells per axis");
  double wx = box.hi.x - box.lo.x, wy = box.hi.y - box.lo.y;
  if (wx <= 0 || wy <= 0) throw std::invalid_argument("grid: empty box");
  double hx = wx / nx, hy = wy / ny;
  if (std::abs(hx - hy) > 1e-9 * hx)
    throw std::invalid_argument("grid: cells must be square (adjust nx/ny)");

  GridDomain g;
  g.nx = nx;
  g.ny = ny;
  g.h = hx;
  g.origin = box.lo;
  g.box = box;
  g.body = body;
  g.body_mask.assign(static_cast<size_t>(nx) * ny, 0);

  // Rasterize by cell-center membership.
  if (const auto* disk = std::get_if<DiskBody>(&body)) {
    if (disk->radius <= 0)
      throw std::invalid_argument("grid: degenerate body (radius <= 0)");
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (dist(g.cell_center(i, j), disk->center) <= disk->radius)
          g.body_mask[g.idx(i, j)] = 1;
  } else if (const auto* poly = std::get_if<PolygonBody>(&body)) {
    if (poly->vertices.size() < 3)
      throw std::invalid_argument("grid: polygon needs at least 3 vertices");
    if (std::abs(polygon_signed_area(poly->vertices)) < 1e-14)
      throw std::invalid_argument("grid: degenerate polygon");
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (point_in_polygon(poly->vertices, g.cell_center(i, j)))
          g.body_mask[g.idx(i, j)] = 1;
  } else {
    const auto& mb = std::get<MaskBody>(body);
    if (mb.mask.size() != g.body_mask.size())
      throw std::invalid_argument("grid: mask size does not match the grid");
    g.body_mask = mb.mask;
  }

  g.body_cells = 0;
  for (auto m : g.body_mask) g.body_cells += m;
  if (g.body_cells == 0) throw std::invalid_argument("grid: empty body");

  // The body must be 4-connected.
  {
    std::vector<char> seen(g.body_mask.size(), 0);
    std::queue<int> q;
    int start = -1;
    for (int k = 0; k < nx * ny; ++k)
      if (g.body_mask[k]) {
        start = k;
        break;
      }
    q.push(start);
    seen[start] = 1;
    int cnt = 0;
    while (!q.empty()) {
      int k = q.front();
      q.pop();
      ++cnt;
      int i = k % nx, j = k / nx;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int t = 0; t < 4; ++t) {
        int ii = i + di[t], jj = j + dj[t];
        if (!g.in_grid(ii, jj)) continue;
        int kk = g.idx(ii, jj);
        if (g.body_mask[kk] && !seen[kk]) {
          seen[kk] = 1;
          q.push(kk);
        }
      }
    }
    if (cnt != g.body_cells)
      throw std::invalid_argument("grid: body is not 4-connected");
  }

  // Clearance of body cell centers to the box boundary.
  g.clearance = kInf;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (g.body_mask[g.idx(i, j)]) {
        Vec2 c = g.cell_center(i, j);
        g.clearance = std::min({g.clearance, c.x - box.lo.x, box.hi.x - c.x,
                                c.y - box.lo.y, box.hi.y - c.y});
      }
  if (g.clearance < 4 * g.h)
    throw std::invalid_argument(
        "grid: body clearance to the box must be at least 4h");

  // Distance transform (center-to-center, in length units).
  g.edt_ = edt_2d(nx, ny, g.body_mask);
  for (auto& d : g.edt_) d = g.h * std::sqrt(d);

  // Boundary quadrature samples with inward normals.
  if (const auto* disk = std::get_if<DiskBody>(&body)) {
    int m = std::max(96, static_cast<int>(std::ceil(
                             4.0 * std::numbers::pi * disk->radius / g.h)));
    double w = 2.0 * std::numbers::pi * disk->radius / m;
    for (int k = 0; k < m; ++k) {
      double th = (k + 0.5) * 2.0 * std::numbers::pi / m;
      Vec2 dir{std::cos(th), std::sin(th)};
      g.body_samples.push_back(
          {disk->center + disk->radius * dir, -1.0 * dir, w,
           BoundarySide::FixedBoundary});
    }
  } else if (const auto* poly = std::get_if<PolygonBody>(&body)) {
    const auto& v = poly->vertices;
    bool ccw = polygon_signed_area(v) > 0;
    for (size_t e = 0; e < v.size(); ++e) {
      Vec2 a = v[e], b = v[(e + 1) % v.size()];
      double len = dist(a, b);
      if (len < 1e-14) continue;
      Vec2 inw = perp(normalized(b - a));
      if (!ccw) inw = -1.0 * inw;
      int m = std::max(1, static_cast<int>(std::ceil(len / (0.5 * g.h))));
      for (int k = 0; k < m; ++k) {
        double t = (k + 0.5) / m;
        g.body_samples.push_back(
            {a + t * (b - a), inw, len / m, BoundarySide::FixedBoundary});
      }
    }
  } else {
    // Contour the smoothed mask; normals point toward higher mask values,
    // i.e. into the body.
    Field mf(nx, ny);
    for (int k = 0; k < nx * ny; ++k) mf[k] = g.body_mask[k] ? 1.0 : 0.0;
    Field sm = tent_smooth(mf, 2);
    auto segs = extract_isoline(sm, g.h, g.origin, 0.5);
    if (segs.empty())
      throw std::invalid_argument("grid: mask body has no resolvable boundary");
    g.mask_chains_ = stitch_chains(segs, 1e-9 * g.h);
    for (const auto& c : g.mask_chains_) {
      size_t n = c.pts.size();
      size_t m = c.closed ? n : n - 1;
      for (size_t k = 0; k < m; ++k) {
        Vec2 a = c.pts[k], b = c.pts[(k + 1) % n];
        Vec2 mid = 0.5 * (a + b);
        Vec2 grad = gradient_bilinear(sm, g.h, g.origin, mid);
        Vec2 nrm = norm(grad) > 1e-14 ? normalized(grad)
                                      : normalized(perp(b - a));
        g.body_samples.push_back({mid, nrm, dist(a, b),
                                  BoundarySide::FixedBoundary});
      }
    }
  }
  for (const auto& s : g.body_samples) g.body_boundary_length += s.weight;
  return g;
}

std::vector<int> collar(const GridDomain& grid, double dist_) {
  if (dist_ <= 0)
    throw std::invalid_argument("collar: dist must be positive");
  if (dist_ >= grid.clearance)
    throw std::invalid_argument(
        "collar: dist exceeds the body clearance to the box");
  std::vector<int> cells;
  for (int k = 0; k < grid.nx * grid.ny; ++k)
    if (!grid.body_mask[k] && grid.body_cell_distance(k) <= dist_ + 1e-12)
      cells.push_back(k);
  return cells;
}

}  // namespace insulopt
