#pragma once

#include <string>
#include <vector>

#include "insulopt/pde.hpp"

namespace insulopt {

// Measured regularity of a solved pair: the discrete gradient bound plus the
// nondegeneracy ratios near the free boundary. Every constant here is a
// measurement to be compared across resolutions, penalty scales and closed
// forms -- nothing is normalized against a hidden reference.
struct RegularityReport {
  double lip_sup = 0.0;    // sup over cells of the reconstructed |grad u|
  double lip_ratio = 0.0;  // lip_sup / lambda^{1/p}

  struct NondegRow {
    Vec2 point;
    double dist = 0.0;   // distance to the free-boundary polyline
    double value = 0.0;  // u at the cell center
    double ratio = 0.0;  // value / dist
  };
  std::vector<NondegRow> nondeg_rows;
  double nondeg_min = 0.0;
  double nondeg_scaled = 0.0;  // nondeg_min * lambda^{1/p}

  struct StrongRow {
    Vec2 center;  // free-boundary sample the ball sits on
    double r = 0.0;
    double sup = 0.0;    // sup of u over the ball
    double ratio = 0.0;  // sup / r
  };
  std::vector<StrongRow> strong_rows;
  double strong_min = 0.0;
};

// Gradient bound over all cells and its ratio against lambda^{1/p}.
RegularityReport lipschitz_report(const GridDomain& g, const Medium& m,
                                  const PotentialField& field,
                                  double lambda_pen);

// Nondegeneracy ratios: u / dist over occupied cells at distance 2h..8h from
// the free boundary (closer cells are skipped, the quotient is dominated by
// rasterization noise there), and sup u / r over balls centered at boundary
// samples for each requested radius. Radii must be >= 4h; throws when the
// free boundary is empty.
RegularityReport nondegeneracy_report(const GridDomain& g, const Medium& m,
                                      const PotentialField& field,
                                      double lambda_pen,
                                      const std::vector<double>& radii);

// Two-sided measure-density of the occupied phase in balls centered on the
// free boundary, and the boundary length those balls carve out.
struct GeometryReport {
  struct DensityRow {
    Vec2 center;
    double r = 0.0;
    double fraction = 0.0;    // occupied share of the ball's cells
    double complement = 0.0;  // 1 - fraction
  };
  std::vector<DensityRow> density_rows;

  struct HausdorffRow {
    Vec2 center;
    double r = 0.0;
    double ratio = 0.0;  // boundary length inside the ball, divided by r
  };
  std::vector<HausdorffRow> hausdorff_rows;

  double varsigma_est = 0.0;  // min over rows of min(fraction, complement)
};

// Radii must lie in [4h, s/2] where s is the least distance from the free
// boundary to the body boundary. Throws when out of range or when the free
// boundary is empty.
GeometryReport density_report(const GridDomain& g, const Configuration& c,
                              const std::vector<double>& radii);

// Flux density along the free boundary, recovered from the distributional
// residual of the solved field: the residual mass within a 3h band of the
// boundary is attributed to the nearest sample and averaged over a 3h arc
// window, giving a per-unit-length trace Q. The boundary slope follows from
// the medium composition: theta = (Q / a(S))^{1/(p-1)}.
struct TraceQ {
  std::vector<BoundarySample> samples;
  std::vector<double> q;      // flux density per sample
  std::vector<double> theta;  // implied gradient magnitude per sample
  double q_min = 0.0;
  double q_max = 0.0;
  double q_inf_est = 0.0;    // 10th percentile, a staircase-robust floor
  double line_integral = 0.0;  // sum of q * weight
};

TraceQ q_trace(const GridDomain& g, const Medium& m,
               const PotentialField& field);

// Least-squares wedge fit u ~ theta * <X - Z0, inward normal>_+ over balls
// of decreasing radius about the free-boundary sample nearest z0. The fit
// residual per radius (RMS over the ball's cells, divided by r) shrinks
// with r wherever the boundary is smooth; `reduced_point` records whether
// the smallest-radius fit met the residual < 0.2 * theta * r convention.
struct BlowupFit {
  Vec2 center;
  Vec2 inward;

  struct Row {
    double r = 0.0;
    double theta = 0.0;
    double residual = 0.0;  // RMS misfit over the ball
    double rel = 0.0;       // residual / r
    int cells = 0;          // cells with positive model value
  };
  std::vector<Row> rows;  // largest radius first
  double theta_final = 0.0;
  bool reduced_point = false;
};

// Radii must be >= 4h; throws when a ball holds fewer than eight cells with
// positive field values (no slope to fit).
BlowupFit blowup_slope(const GridDomain& g, const PotentialField& field,
                       Vec2 z0, const std::vector<double>& radii);

// Three routes to the same flux: the boundary-profile integral, the residual
// total over the body block, and the Q-trace line integral. On converged
// designs all pairs agree within 5%; a clipped or absent free boundary drops
// the trace route and is noted.
struct FluxBalance {
  double flux_integral = 0.0;
  double residual_total = 0.0;
  double trace_integral = 0.0;
  bool has_trace = false;
  double max_mismatch = 0.0;  // worst pairwise relative gap
  bool balanced = false;      // max_mismatch <= 5%
  std::string note;
};

FluxBalance flux_balance_report(const GridDomain& g, const Medium& m,
                                const PotentialField& field);

}  // namespace insulopt
