#include "insulopt/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace insulopt {

double Nonlinearity::gamma(double t) const {
  switch (kind) {
    case GammaKind::Linear:
      return t;
    case GammaKind::Power:
      return t <= 0.0 ? 0.0 : std::pow(t, q);
    case GammaKind::Exp:
      return std::expm1(beta * t);
  }
  return t;
}

double Nonlinearity::dgamma(double t) const {
  switch (kind) {
    case GammaKind::Linear:
      return 1.0;
    case GammaKind::Power:
      return t <= 0.0 ? (q == 1.0 ? 1.0 : 0.0) : q * std::pow(t, q - 1.0);
    case GammaKind::Exp:
      return beta * std::exp(beta * t);
  }
  return 1.0;
}

namespace {

// Sampled sanity check on [0, t_max]: gamma increasing with nonnegative
// second differences (up to rounding). The closed forms are convex by
// inspection, but a probe here catches bad parameters fed through files.
void check_profile(const Nonlinearity& nl, double t_max) {
  const int n = 64;
  const double dt = t_max / n;
  double prev = nl.gamma(0.0);
  if (std::abs(prev) > 1e-14)
    throw std::invalid_argument("gamma(0) must vanish");
  for (int i = 1; i + 1 <= n; ++i) {
    const double g0 = nl.gamma((i - 1) * dt);
    const double g1 = nl.gamma(i * dt);
    const double g2 = nl.gamma((i + 1) * dt);
    if (g1 <= g0)
      throw std::invalid_argument("gamma must be increasing on t >= 0");
    if (g2 - 2.0 * g1 + g0 < -1e-10)
      throw std::invalid_argument("gamma must be convex on t >= 0");
  }
}

}  // namespace

Nonlinearity make_nonlinearity(const GridDomain& g, GammaKind kind,
                               double param, std::vector<double> weight) {
  Nonlinearity nl;
  nl.kind = kind;
  switch (kind) {
    case GammaKind::Linear:
      break;
    case GammaKind::Power:
      if (!(param >= 1.0))
        throw std::invalid_argument("power profile needs exponent q >= 1");
      nl.q = param;
      break;
    case GammaKind::Exp:
      if (!(param > 0.0))
        throw std::invalid_argument("exp profile needs rate beta > 0");
      nl.beta = param;
      break;
  }
  check_profile(nl, 4.0);

  if (weight.size() != g.body_samples.size())
    throw std::invalid_argument(
        "weight must carry one value per fixed-boundary sample (" +
        std::to_string(g.body_samples.size()) + " expected, got " +
        std::to_string(weight.size()) + ")");
  double wmin = weight[0], wmax = weight[0];
  for (double w : weight) {
    if (!(w > 0.0))
      throw std::invalid_argument("boundary weight must be positive");
    wmin = std::min(wmin, w);
    wmax = std::max(wmax, w);
  }
  nl.weight = std::move(weight);
  nl.l_ratio = wmax / wmin;
  return nl;
}

Nonlinearity make_nonlinearity_const(const GridDomain& g, GammaKind kind,
                                     double param, double weight_value) {
  return make_nonlinearity(
      g, kind, param,
      std::vector<double>(g.body_samples.size(), weight_value));
}

PenaltyParams make_penalty(const GridDomain& g, double lambda_pen,
                           double iota) {
  if (!(lambda_pen > 0.0))
    throw std::invalid_argument("penalty slope lambda must be positive");
  const double room =
      (g.box.hi.x - g.box.lo.x) * (g.box.hi.y - g.box.lo.y) - g.body_area();
  if (!(iota > 0.0) || !(iota < room))
    throw std::invalid_argument(
        "volume allowance iota must lie strictly between 0 and the free "
        "area of the box (" +
        std::to_string(room) + ")");
  return PenaltyParams{lambda_pen, iota};
}

double penalty(const PenaltyParams& pp, double excess_volume) {
  return pp.lambda_pen * std::max(excess_volume - pp.iota, 0.0);
}

double flux_functional(const Nonlinearity& nl, const FluxProfile& fp) {
  if (fp.samples.size() != nl.weight.size())
    throw std::invalid_argument(
        "flux profile and nonlinearity weight disagree on sample count");
  double J = 0.0;
  for (std::size_t k = 0; k < fp.samples.size(); ++k)
    J += nl.weight[k] * nl.gamma(fp.value[k]) * fp.samples[k].weight;
  return J;
}

ObjectiveReport penalized_objective(const GridDomain& g, const Medium& m,
                                    const Nonlinearity& nl,
                                    const PenaltyParams& pp,
                                    const Configuration& c,
                                    const DirichletData& phi,
                                    const SolverSettings& st,
                                    const Field* warm) {
  ObjectiveReport out;
  out.field = solve_potential(g, m, c, phi, st, warm);
  const FluxProfile fp = flux_profile(g, m, out.field);
  out.J = flux_functional(nl, fp);
  out.flux_negative = fp.negative_count;
  out.excess = volume_excess(g, c);
  out.pen = penalty(pp, out.excess);
  out.J_lambda = out.J + out.pen;
  return out;
}

CoercivityTable coercivity_probe(const GridDomain& g, const Nonlinearity& nl,
                                 const std::vector<double>& t_grid) {
  CoercivityTable tab;
  tab.t = t_grid;
  tab.value.reserve(t_grid.size());
  for (double t : t_grid) {
    double v = 0.0;
    for (std::size_t k = 0; k < g.body_samples.size(); ++k)
      v += nl.weight[k] * nl.gamma(t) * g.body_samples[k].weight;
    tab.value.push_back(v);
  }
  tab.increasing = true;
  for (std::size_t i = 1; i < tab.value.size(); ++i)
    if (!(tab.value[i] > tab.value[i - 1])) tab.increasing = false;
  return tab;
}

}  // namespace insulopt
