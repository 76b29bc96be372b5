#pragma once

#include "insulopt/pde.hpp"

namespace insulopt {

// Inward displacement of the free boundary, supported in a ball: points move
// by
//     X  ->  X - alpha * r * bump(|X - center| / r) * normal,
// so the occupied region loses a dent of depth up to 1.875 * alpha * r around
// `center`. The support ball must stay clear of the body.
struct PerturbationSpec {
  Vec2 center;         // a free-boundary point
  Vec2 normal;         // unit outward normal there
  double r = 0.0;      // support radius of the displacement
  double alpha = 0.0;  // amplitude, in [0, 0.2]
};

// Displacement profile 30 t^2 (1-t)^2 on [0,1], zero outside; unit integral.
double bump(double t);
double bump_slope(double t);
// sup |bump_slope| = 10 / sqrt(3); alpha below its reciprocal keeps the
// displacement map injective.
double bump_slope_max();

// Validates ranges (r > 0, nonzero normal, 0 <= alpha <= 0.2, injective
// amplitude) and that the ball keeps away from the body; normalizes `normal`.
PerturbationSpec make_perturbation_spec(const GridDomain& g, Vec2 center,
                                        Vec2 normal, double r, double alpha);

// Same, taking center and normal from the free-boundary sample nearest to
// `near`.
PerturbationSpec spec_near(const GridDomain& g, const Configuration& c,
                           Vec2 near, double r, double alpha);

// The displaced configuration: the contour field is advected through the
// inverse displacement and re-thresholded. Cells whose centers lie outside
// the support ball are bit-identical to the input (occupancy and level set
// alike); a level set is attached exactly when the input carries one.
// Throws when the amplitude breaks injectivity or the ball meets the body.
Configuration perturb_inward(const GridDomain& g, const Configuration& c,
                             const PerturbationSpec& spec);

// Volume lost by the displacement per unit of alpha * r^2, i.e.
//     [ vol(region) - vol(displaced region) ] / (alpha r^2),
// with both volumes measured by sub-cell quadrature of the contour field
// (exact area of the clipped bilinear interpolant). At a flat boundary point
// the value tends to 2 * integral of bump = 2 as r shrinks. alpha = 0 is
// answered with the one-sided difference at a probe amplitude of 0.05.
double volume_differential(const GridDomain& g, const Configuration& c,
                           const PerturbationSpec& spec);

// The constant 2 above, by two independent quadratures: the diameter segment
// integral of 2 * bump, and the polar quadrature over the displaced half-disk
// of bump_slope(|Y|) <Y/|Y|, normal>. Composite Simpson with n intervals per
// axis (n even).
struct M2Estimate {
  double segment = 0.0;
  double halfdisk = 0.0;
};
M2Estimate m2_constant(int n = 128);

// Energy shift of transporting the potential with the displacement: v is
// defined on the displaced region by v(Phi(X)) = u(X), and
//     [ energy(v) - energy(u) ] / (alpha r^2)
// is evaluated on the original lattice by the change of variables
//     a(Phi(X)) |DPhi(X)^{-T} Du(X)|^p det DPhi(X),
// over the same clipped elements the energy of u integrates. For a linear
// profile of slope theta falling to zero across a flat boundary this tends
// to 2 (p-1) theta^p. Throws when det DPhi is not positive at a quadrature
// point (displacement Jacobian singular).
double energy_differential(const GridDomain& g, const Medium& m,
                           const PotentialField& field,
                           const PerturbationSpec& spec);

}  // namespace insulopt
