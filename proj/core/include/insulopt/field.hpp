#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "insulopt/vec2.hpp"

namespace insulopt {

// Cell-centered scalar field on a regular nx-by-ny lattice, row-major with
// the bottom row first (index = j*nx + i).
struct Field {
  int nx = 0;
  int ny = 0;
  std::vector<double> v;

  Field() = default;
  Field(int nx_, int ny_, double fill = 0.0)
      : nx(nx_), ny(ny_), v(static_cast<size_t>(nx_) * ny_, fill) {}

  int size() const { return nx * ny; }
  int idx(int i, int j) const { return j * nx + i; }
  double& at(int i, int j) { return v[idx(i, j)]; }
  double at(int i, int j) const { return v[idx(i, j)]; }
  double& operator[](int k) { return v[k]; }
  double operator[](int k) const { return v[k]; }
};

using CellMask = std::vector<std::uint8_t>;

// Bilinear interpolation of a cell-centered field at an arbitrary point.
// Cell (i,j) carries the value at origin + ((i+0.5)h, (j+0.5)h); queries are
// clamped to the lattice hull so edge evaluations stay finite.
double sample_bilinear(const Field& f, double h, Vec2 origin, Vec2 p);

// Gradient of the same interpolant (piecewise bilinear, so piecewise linear
// components); clamped like sample_bilinear.
Vec2 gradient_bilinear(const Field& f, double h, Vec2 origin, Vec2 p);

// Passes of the separable 3x3 tent kernel ([1 2 1]/4 per axis) with
// replicated borders. Regularizes binary occupancy before contouring.
Field tent_smooth(const Field& f, int passes);

}  // namespace insulopt
