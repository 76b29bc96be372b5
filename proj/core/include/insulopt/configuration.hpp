#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "insulopt/grid.hpp"

namespace insulopt {

// Insulating configuration: per-cell occupancy of the insulated region
// (which always contains the body) plus an optional level-set description.
// When the level set is present its nonnegative set defines the occupancy.
struct Configuration {
  CellMask occupancy;
  std::optional<Field> level_set;
};

// Factories. All of them force occupancy to contain the body.
Configuration config_from_disk(const GridDomain& g, Vec2 center, double radius);
Configuration config_from_level_set(const GridDomain& g, Field level_set);
// Repairs disconnected occupancy by keeping the component containing the body.
Configuration config_from_occupancy(const GridDomain& g, CellMask occupancy);
// Star-shaped region around `center`: sector s of the angle space is occupied
// up to sector_radii[s].
Configuration config_star(const GridDomain& g, Vec2 center,
                          const std::vector<double>& sector_radii);
// Occupied where <X, n> <= offset (n need not be unit; it is normalized).
Configuration config_halfplane(const GridDomain& g, Vec2 n, double offset);

// Forces occupancy >= body mask.
void enforce_body(const GridDomain& g, Configuration& c);

// Keeps the 4-connected occupied component containing the body, clearing the
// rest. Returns the number of cells cleared.
int repair_connectivity(const GridDomain& g, Configuration& c);

// h^2 * (occupied cells - body cells).
double volume_excess(const GridDomain& g, const Configuration& c);

int occupied_count(const Configuration& c);

struct PerimeterEstimate {
  double length = 0.0;
  double ratio = 0.0;      // length / sqrt(occupied area)
  bool irregular = false;  // ratio above the threshold
  bool clipped = false;    // occupancy touches the outermost cell ring
};

// Isoline length of the configuration boundary: the zero isoline of the level
// set when present, else the 0.5 isoline of the tent-smoothed occupancy.
// A box-filling occupancy yields length 0 with the clipped flag set.
PerimeterEstimate perimeter_estimate(const GridDomain& g,
                                     const Configuration& c,
                                     double irregular_threshold = 20.0);

struct FreeBoundary {
  std::vector<BoundarySample> samples;  // ordered along each chain
  std::vector<int> chain_of;            // chain index per sample
  std::vector<ContourChain> chains;
  double length = 0.0;
  bool clipped = false;
};

// Free-boundary quadrature from the same isoline as perimeter_estimate, with
// outward normals from the contour-field gradient. Throws when the occupancy
// equals the body (no free boundary) or fills the box (boundary clipped).
FreeBoundary free_boundary_samples(const GridDomain& g, const Configuration& c);

// The field/iso pair used for contouring (level set at 0, or smoothed
// occupancy at 0.5). Exposed for modules that need a consistent boundary
// description (signed distances, perturbations).
std::pair<Field, double> contour_field(const GridDomain& g,
                                       const Configuration& c);

}  // namespace insulopt
