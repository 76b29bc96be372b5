#pragma once

#include "insulopt/pde.hpp"

namespace insulopt {

/*
 * Auxiliary free-boundary solvers: the phase-penalized energy
 *
 *   E(f) = sum over cells [ a |grad f|^p + tau * B_eps(f) ] h^2
 *
 * whose minimizers develop a free boundary at the edge of {f > 0}, and the
 * one-sided obstacle problem f <= 0 on a forbidden region. Both share the
 * element machinery of the potential solver and return PotentialField.
 */

struct ACParams {
  double tau = 1.0;  // phase-penalty constant (energy-density units)
  double eps = 0.1;  // regularization width (field units)
};

// tau >= 0 (zero switches the penalty off), eps > 0.
ACParams make_ac_params(double tau, double eps);

// The bump beta(t) = 6 t (1 - t) on [0, 1], zero outside; unit integral.
double beta_bump(double t);

// Smoothed indicator B_eps(s) = integral of beta(z / eps) / eps up to s:
// 3 (s/eps)^2 - 2 (s/eps)^3 on [0, eps], then flat at 1.
double B_eps(const ACParams& prm, double s);

// Minimizes E at fixed regularization width over the whole box (body data
// held by trace pins, zero on the rim). Energy decreases monotonically along
// the accepted iterations; report.energy holds the final E.
PotentialField minimize_E_eps(const GridDomain& g, const Medium& m,
                              const ACParams& prm, const DirichletData& data,
                              const SolverSettings& st = {},
                              const Field* warm = nullptr);

// The eps -> 0 surrogate: geometric continuation starting at 0.1 * sup data,
// halving until the width drops below h, each stage warm-started from the
// previous minimizer.
PotentialField minimize_E_tau(const GridDomain& g, const Medium& m, double tau,
                              const DirichletData& data,
                              const SolverSettings& st = {});

// Forbidden region of the obstacle problem; must stay clear of the body and
// of the ring of cells its boundary pins touch.
struct ObstacleSpec {
  CellMask forbidden;
};

ObstacleSpec obstacle_from_mask(const GridDomain& g, CellMask forbidden);

// Minimizes the medium energy over { f = phi on the body boundary, f <= 0 on
// the forbidden cells } by projected descent; the returned field is clipped
// to f >= 0 (u_raw keeps the unclipped iterate).
PotentialField solve_obstacle(const GridDomain& g, const Medium& m,
                              const DirichletData& phi,
                              const ObstacleSpec& obs,
                              const SolverSettings& st = {});

}  // namespace insulopt
