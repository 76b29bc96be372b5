#pragma once

#include <vector>

#include "insulopt/configuration.hpp"
#include "insulopt/grid.hpp"
#include "insulopt/medium.hpp"
#include "insulopt/pde.hpp"

namespace insulopt {

enum class GammaKind { Linear, Power, Exp };

// Separable boundary nonlinearity  Gamma(X, t) = psi(X) * gamma(t)  with
// gamma one of  t,  t^q (q >= 1),  e^{beta t} - 1 (beta > 0). The weight psi
// lives on the fixed-boundary samples; its max/min ratio is stored.
struct Nonlinearity {
  GammaKind kind = GammaKind::Linear;
  double q = 1.0;
  double beta = 1.0;
  std::vector<double> weight;
  double l_ratio = 1.0;

  double gamma(double t) const;
  double dgamma(double t) const;
};

// Validates the profile parameters (and re-checks convexity/monotonicity by
// sampled differences), requires weight > 0 sized to the boundary samples.
Nonlinearity make_nonlinearity(const GridDomain& g, GammaKind kind,
                               double param, std::vector<double> weight);
Nonlinearity make_nonlinearity_const(const GridDomain& g, GammaKind kind,
                                     double param, double weight_value = 1.0);

// Volume penalty  rho_lambda(t) = lambda_pen * (t - iota)^+ .
struct PenaltyParams {
  double lambda_pen = 0.0;
  double iota = 0.0;
};

// Requires lambda_pen > 0 and 0 < iota < box area - |D|.
PenaltyParams make_penalty(const GridDomain& g, double lambda_pen,
                           double iota);

double penalty(const PenaltyParams& pp, double excess_volume);

// J = sum over fixed-boundary samples of psi(X) gamma(flux(X)) * weight.
// Negative flux samples (a failed solve shows up here first) participate
// as-is; callers should surface profile.negative_count.
double flux_functional(const Nonlinearity& nl, const FluxProfile& fp);

// One full objective evaluation: solve the potential on the configuration,
// read the boundary flux, assemble J_lambda = J + rho_lambda(excess).
struct ObjectiveReport {
  double J = 0.0;
  double pen = 0.0;
  double J_lambda = 0.0;
  double excess = 0.0;
  int flux_negative = 0;
  PotentialField field;
};

ObjectiveReport penalized_objective(const GridDomain& g, const Medium& m,
                                    const Nonlinearity& nl,
                                    const PenaltyParams& pp,
                                    const Configuration& c,
                                    const DirichletData& phi,
                                    const SolverSettings& st = {},
                                    const Field* warm = nullptr);

// Tabulates t -> integral over the fixed boundary of Gamma(X, t); the table
// must be strictly increasing for admissible nonlinearities (coercivity).
struct CoercivityTable {
  std::vector<double> t;
  std::vector<double> value;
  bool increasing = false;
};

CoercivityTable coercivity_probe(const GridDomain& g, const Nonlinearity& nl,
                                 const std::vector<double>& t_grid);

}  // namespace insulopt
