#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "insulopt/contour.hpp"
#include "insulopt/field.hpp"
#include "insulopt/vec2.hpp"

namespace insulopt {

enum class BoundarySide { FixedBoundary, FreeBoundary };

// Quadrature node on a one-dimensional interface. `weight` is the arc length
// carried by the node (weights sum to the curve length). For fixed-boundary
// nodes `normal` points into the body; for free-boundary nodes it points out
// of the occupied region.
struct BoundarySample {
  Vec2 point;
  Vec2 normal;
  double weight = 0.0;
  BoundarySide side = BoundarySide::FixedBoundary;
};

struct DiskBody {
  Vec2 center;
  double radius = 0.0;
};

// Simple (non self-intersecting) polygon; either orientation is accepted.
struct PolygonBody {
  std::vector<Vec2> vertices;
};

// Explicit per-cell mask, row-major bottom-to-top, sized to the grid.
struct MaskBody {
  CellMask mask;
};

using BodySpec = std::variant<DiskBody, PolygonBody, MaskBody>;

struct Box {
  Vec2 lo;
  Vec2 hi;
};

// Result of projecting a point onto the body boundary.
struct BodyProjection {
  Vec2 point;       // closest boundary point
  Vec2 outward;     // unit normal pointing away from the body
  double sdist = 0; // signed distance, positive outside the body
};

// Cell-centered computational domain: a square-cell lattice over `box` with a
// rasterized body. Cell (i,j) has center origin + ((i+0.5)h, (j+0.5)h);
// storage is row-major with the bottom row first.
class GridDomain {
 public:
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  Vec2 origin;          // lower-left corner of the box
  Box box;

  BodySpec body;
  CellMask body_mask;               // 1 = cell center inside the body
  int body_cells = 0;
  std::vector<BoundarySample> body_samples;  // ordered along the curve
  double body_boundary_length = 0.0;         // sum of sample weights
  double clearance = 0.0;  // min distance from body cell centers to the box

  int idx(int i, int j) const { return j * nx + i; }
  Vec2 cell_center(int i, int j) const {
    return {origin.x + (i + 0.5) * h, origin.y + (j + 0.5) * h};
  }
  Vec2 cell_center(int k) const { return cell_center(k % nx, k / nx); }
  bool in_grid(int i, int j) const {
    return i >= 0 && i < nx && j >= 0 && j < ny;
  }
  bool on_rim(int i, int j) const {
    return i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
  }
  double cell_area() const { return h * h; }
  double body_area() const { return body_cells * h * h; }

  // Euclidean distance from this cell's center to the nearest body cell
  // center (zero on body cells). Used by collar().
  double body_cell_distance(int k) const { return edt_[k]; }

  BodyProjection project_to_body(Vec2 p) const;

 private:
  friend GridDomain build_grid(const Box&, int, int, const BodySpec&);
  std::vector<double> edt_;
  std::vector<ContourChain> mask_chains_;  // boundary polyline for mask bodies
};

// Rasterizes the body and prepares boundary quadrature. Throws
// std::invalid_argument on: non-square cells, empty or 4-disconnected body,
// or body clearance to the box below 4h.
GridDomain build_grid(const Box& box, int nx, int ny, const BodySpec& body);

// Non-body cells whose center lies within `dist` of a body cell center.
// Requires 0 < dist < clearance. Distance is measured center-to-center, so
// collar(grid, h) is exactly the first ring of non-body cells.
std::vector<int> collar(const GridDomain& grid, double dist);

}  // namespace insulopt
