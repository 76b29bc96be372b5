#pragma once

#include <vector>

#include "insulopt/field.hpp"
#include "insulopt/vec2.hpp"

namespace insulopt {

struct ContourSegment {
  Vec2 a;
  Vec2 b;
};

// Polyline obtained by stitching segments end to end. For a closed chain the
// first point is not repeated at the end.
struct ContourChain {
  std::vector<Vec2> pts;
  bool closed = false;

  double length() const;
};

// Marching squares over the cell-center lattice of `f`: each square spans four
// adjacent cell centers and contributes the iso-crossing of the bilinear
// interpolant. Corners with value >= iso count as inside; the two saddle
// configurations are disambiguated by the square's mean value. Degenerate
// (near zero length) segments are dropped.
std::vector<ContourSegment> extract_isoline(const Field& f, double h,
                                            Vec2 origin, double iso);

// Joins segments that share endpoints (up to `tol`) into chains.
std::vector<ContourChain> stitch_chains(const std::vector<ContourSegment>& segs,
                                        double tol);

// Distance from p to the closest point of any chain (segments, not vertices).
double distance_to_chains(const std::vector<ContourChain>& chains, Vec2 p);

}  // namespace insulopt
