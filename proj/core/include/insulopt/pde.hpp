#pragma once

#include <functional>
#include <string>
#include <vector>

#include "insulopt/configuration.hpp"
#include "insulopt/medium.hpp"

namespace insulopt {

// Dirichlet data prescribed on the body boundary, with its range over the
// boundary quadrature samples (positive data required by the solvers).
struct DirichletData {
  std::function<double(Vec2)> fn;
  double sup = 0.0;
  double inf = 0.0;
};

DirichletData make_dirichlet(const GridDomain& g,
                             std::function<double(Vec2)> fn);
DirichletData const_dirichlet(const GridDomain& g, double value);

struct SolverSettings {
  double tol_rel = 1e-9;   // gradient tolerance = tol_rel * initial energy
  int max_iter = 500;      // outer descent iterations
  double eta_scale = 1e-8; // eta = eta_scale * sup(phi) / h   (p < 2)
  int cg_max_iter = 10000;
  bool record_history = true;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double energy = 0.0;     // integral of <A(Du), Du>
  double grad_norm = 0.0;  // sup norm of the reduced energy gradient
  double tol = 0.0;        // the absolute tolerance that was enforced
  std::string note;
  struct HistoryRow {
    int iter;
    double energy;
    double grad_norm;
  };
  std::vector<HistoryRow> history;
};

// A solved potential: full cell field (body cells carry boundary data, cells
// outside the insulated region are zero) plus the configuration it was
// solved on and the solve report. `u_raw` is the solver-native field -- it
// keeps the small negative values the outer ring takes while the profile
// crosses the isoline -- and is the right input for warm restarts.
struct PotentialField {
  Field u;
  Field u_raw;
  Configuration config;
  SolveReport report;
};

// Minimizes the medium energy over fields that take the boundary data on the
// body boundary and vanish on the outer boundary of the insulated region
// (both imposed as stiff penalties on the bilinear trace at the boundary
// quadrature points, with straddling elements weighted by their inside area
// fraction), and are free elsewhere in the occupied region. Throws on
// non-positive data or failed convergence. `warm` (same lattice) seeds the
// iteration when given.
PotentialField solve_potential(const GridDomain& g, const Medium& m,
                               const Configuration& c, const DirichletData& phi,
                               const SolverSettings& s = {},
                               const Field* warm = nullptr);

// Energy of the field over the non-body region:  integral of <A(Du), Du>.
// Elements straddling the body boundary (or the zero level set when `conf`
// carries one) are weighted by their inside area fraction -- the same rule
// the solver minimizes under. When `region` is given (cell indices),
// elements are attributed quarter-wise to their corner cells and only the
// listed cells contribute.
double energy(const GridDomain& g, const Medium& m, const Field& u,
              const Configuration* conf = nullptr,
              const std::vector<int>* region = nullptr);

// Replaces `field` inside the ball by the medium-harmonic extension of its
// own boundary values; everything outside the ball is untouched. The ball
// must not reach the body boundary.
PotentialField harmonic_replacement(const GridDomain& g, const Medium& m,
                                    const PotentialField& field, Vec2 center,
                                    double radius,
                                    const SolverSettings& s = {});

// Distributional residual of the operator applied to the field: the cellwise
// measure mu_c = -integral of <A(Du), D basis_c>, oriented so that it is
// nonnegative on minimizers away from the body (the mass sits on the outer
// zero set and measures the flux leaving the region). `density` stores
// mu_c / h^2; `total` sums -mu_c over the body cells and their first fluid
// ring, which by discrete conservation equals the flux through the body
// boundary. Values vanish at interior cells of a converged potential.
struct ResidualMeasure {
  Field density;
  double total = 0.0;
  double interior_sup = 0.0;  // sup |density| away from both boundaries
  double tol_residual = 0.0;  // 10 * solve tolerance / h^2
};

ResidualMeasure residual_measure(const GridDomain& g, const Medium& m,
                                 const PotentialField& field);

// Medium flux profile through the body boundary: at each boundary sample the
// normal derivative comes from the Richardson pair of centered differences
// over the probe points 0, h, 2h, 3h along the outward normal, the tangential
// one from the neighbouring samples, and the reconstructed gradients are
// averaged with the two arc neighbours before composing with the medium. The
// value reported is <A(X, Du), mu> with mu the inward normal.
struct FluxProfile {
  std::vector<BoundarySample> samples;
  std::vector<double> value;    // flux density per sample
  std::vector<double> arclen;   // cumulative arc length
  double integral = 0.0;
  bool formal = false;          // medium was not collar-smoothed
  int negative_count = 0;       // samples below -tolerance
};

FluxProfile flux_profile(const GridDomain& g, const Medium& m,
                         const PotentialField& field);

// Cellwise gradient magnitude of the bilinear reconstruction (average of the
// adjacent element-center gradients); used by the regularity diagnostics.
Field gradient_magnitude(const GridDomain& g, const Field& u);

}  // namespace insulopt
