#pragma once

#include <cstdint>
#include <string>

#include "insulopt/field.hpp"
#include "insulopt/grid.hpp"

namespace insulopt {

// Heterogeneous degenerate medium of the variational family
//   A(X, xi) = a(X) |xi|^{p-2} xi,
// so potentials minimize (1/p) * integral of a |Du|^p. For 1 < p < 2 the
// evaluation is regularized by |xi| -> sqrt(|xi|^2 + eta^2); eta = 0 keeps
// the exact power map (with A(X, 0) = 0 by continuity).
struct Medium {
  double p = 2.0;
  Field coeff;           // a(X), cellwise, strictly positive
  double ell_lo = 1.0;   // coercivity constant   <A(xi),xi> >= ell_lo |xi|^p
  double ell_hi = 1.0;   // boundedness constant  |A(xi)| <= ell_hi |xi|^{p-1}
  double hoelder_exponent = 1.0;  // declared regularity of a, metadata only
  bool collar_smooth = false;     // a constant within delta0 of the body
  double delta0 = 0.0;
  double eta = 0.0;      // gradient regularization (used when p < 2)
};

// Validates p > 1 and coeff > 0 and fills the ellipticity bounds from the
// coefficient range.
Medium make_medium(const GridDomain& g, double p, Field coeff);

Field coeff_const(const GridDomain& g, double value);
// Alternating tiles of side `period` (length units), values v1/v2.
Field coeff_checkerboard(const GridDomain& g, double v1, double v2,
                         double period);
// Independent uniform draws in [lo, hi] per cell (deterministic in seed).
Field coeff_random(const GridDomain& g, double lo, double hi,
                   std::uint64_t seed);

// Replaces a(X) by its mean over the body boundary at all cells within
// delta0 of the body (center-to-center distance), including body cells.
void apply_collar_smoothing(const GridDomain& g, Medium& m, double delta0);

Vec2 eval_A(const Medium& m, int cell, Vec2 xi);
// <eval_A(xi), xi> = a |xi|^p (regularized for p < 2).
double energy_density(const Medium& m, int cell, Vec2 xi);

struct AxiomReport {
  bool pass = false;
  int samples = 0;
  // Relative margins; negative means a violation beyond round-off.
  double min_coercivity_margin = 0.0;
  double min_boundedness_margin = 0.0;
  double min_monotonicity = 0.0;       // normalized, must be > 0
  double max_homogeneity_residual = 0.0;
  std::string note;
};

// Randomized verification of coercivity, boundedness, strict monotonicity
// and (p-1)-homogeneity on |xi| in [1e-3, 1e3]. Exact claims hold for
// eta = 0; with eta > 0 the report notes the regularized approximation.
AxiomReport axiom_check(const Medium& m, int n_samples, std::uint64_t seed);

}  // namespace insulopt
