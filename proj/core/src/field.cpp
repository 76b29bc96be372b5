#include "insulopt/field.hpp"

#include <algorithm>
#include <cmath>

namespace insulopt {

namespace {

struct LatticePos {
  int i0, j0;
  double fx, fy;
};

LatticePos locate(const Field& f, double h, Vec2 origin, Vec2 p) {
  double sx = (p.x - origin.x) / h - 0.5;
  double sy = (p.y - origin.y) / h - 0.5;
  int i0 = static_cast<int>(std::floor(sx));
  int j0 = static_cast<int>(std::floor(sy));
  i0 = std::clamp(i0, 0, f.nx - 2);
  j0 = std::clamp(j0, 0, f.ny - 2);
  double fx = std::clamp(sx - i0, 0.0, 1.0);
  double fy = std::clamp(sy - j0, 0.0, 1.0);
  return {i0, j0, fx, fy};
}

}  // namespace

double sample_bilinear(const Field& f, double h, Vec2 origin, Vec2 p) {
  auto [i0, j0, fx, fy] = locate(f, h, origin, p);
  double v00 = f.at(i0, j0), v10 = f.at(i0 + 1, j0);
  double v01 = f.at(i0, j0 + 1), v11 = f.at(i0 + 1, j0 + 1);
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
         (1 - fx) * fy * v01 + fx * fy * v11;
}

Vec2 gradient_bilinear(const Field& f, double h, Vec2 origin, Vec2 p) {
  auto [i0, j0, fx, fy] = locate(f, h, origin, p);
  double v00 = f.at(i0, j0), v10 = f.at(i0 + 1, j0);
  double v01 = f.at(i0, j0 + 1), v11 = f.at(i0 + 1, j0 + 1);
  double gx = ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) / h;
  double gy = ((1 - fx) * (v01 - v00) + fx * (v11 - v10)) / h;
  return {gx, gy};
}

Field tent_smooth(const Field& f, int passes) {
  Field cur = f;
  Field tmp(f.nx, f.ny);
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };
  for (int pass = 0; pass < passes; ++pass) {
    // Horizontal then vertical [1 2 1]/4.
    for (int j = 0; j < f.ny; ++j)
      for (int i = 0; i < f.nx; ++i)
        tmp.at(i, j) = 0.25 * (cur.at(clampi(i - 1, f.nx - 1), j) +
                               2 * cur.at(i, j) +
                               cur.at(clampi(i + 1, f.nx - 1), j));
    for (int j = 0; j < f.ny; ++j)
      for (int i = 0; i < f.nx; ++i)
        cur.at(i, j) = 0.25 * (tmp.at(i, clampi(j - 1, f.ny - 1)) +
                               2 * tmp.at(i, j) +
                               tmp.at(i, clampi(j + 1, f.ny - 1)));
  }
  return cur;
}

}  // namespace insulopt
