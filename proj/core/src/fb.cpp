#include "insulopt/fb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "solver_detail.hpp"

namespace insulopt {

using detail::Role;
using detail::System;

ACParams make_ac_params(double tau, double eps) {
  if (!(tau >= 0.0))
    throw std::invalid_argument("phase penalty tau must be nonnegative");
  if (!(eps > 0.0))
    throw std::invalid_argument("regularization width eps must be positive");
  return ACParams{tau, eps};
}

double beta_bump(double t) {
  return (t <= 0.0 || t >= 1.0) ? 0.0 : 6.0 * t * (1.0 - t);
}

double B_eps(const ACParams& prm, double s) {
  if (s <= 0.0) return 0.0;
  if (s >= prm.eps) return 1.0;
  const double r = s / prm.eps;
  return r * r * (3.0 - 2.0 * r);
}

namespace {

Configuration whole_box(const GridDomain& g) {
  Configuration c;
  c.occupancy.assign(static_cast<std::size_t>(g.nx) * g.ny, 1);
  return c;
}

// Packages the solver-native vector the same way solve_potential does: raw
// copy for restarts, dust-snapped physical field, energy rescaled to the
// <A(Du), Du> convention.
PotentialField package(const GridDomain& g, const Medium& m, System& s,
                       const std::vector<double>& x, SolveReport rep,
                       const Configuration& c, double sup_data,
                       bool clip_negative) {
  PotentialField out;
  out.config = c;
  out.report = std::move(rep);
  std::vector<double> ufull(static_cast<std::size_t>(g.nx) * g.ny);
  detail::expand(s, x, ufull);
  out.u.nx = out.u_raw.nx = g.nx;
  out.u.ny = out.u_raw.ny = g.ny;
  out.u_raw.v = ufull;
  const double slack = 1e-10 * std::max(sup_data, 1.0);
  for (std::size_t cc = 0; cc < ufull.size(); ++cc) {
    double& v = ufull[cc];
    if (g.body_mask[cc]) continue;
    if (clip_negative && v < 0.0) v = 0.0;
    if (v < 0.0 && v > -slack) v = 0.0;
    if (v > sup_data && v < sup_data + slack) v = sup_data;
  }
  out.u.v = std::move(ufull);
  out.report.energy *= m.p;
  return out;
}

}  // namespace

PotentialField minimize_E_eps(const GridDomain& g, const Medium& m,
                              const ACParams& prm, const DirichletData& data,
                              const SolverSettings& st, const Field* warm) {
  detail::check_dirichlet(data);
  if (!(prm.tau >= 0.0) || !(prm.eps > 0.0))
    throw std::invalid_argument("invalid phase-penalty parameters");

  const Configuration c = whole_box(g);
  System s = detail::build_system(g, m, c, data, st);

  if (prm.tau > 0.0) {
    // Phase term tau * B_eps(f) * h^2 on every live fluid cell, carried at
    // 1/p of its weight because the assembled Dirichlet part is too; the
    // final report scales both back up.
    const double eps = prm.eps;
    const double scale = prm.tau / m.p * g.h * g.h;
    for (int cc = 0; cc < g.nx * g.ny; ++cc) {
      if (s.role[cc] != Role::Free || g.body_mask[cc]) continue;
      s.cell_term.cells.push_back(cc);
      s.cell_term.scale.push_back(scale);
    }
    s.cell_term.fn = [eps](double u, double& val, double& dval, double& curv) {
      if (u <= 0.0) {
        val = dval = curv = 0.0;
      } else if (u >= eps) {
        val = 1.0;
        dval = curv = 0.0;
      } else {
        const double r = u / eps;
        val = r * r * (3.0 - 2.0 * r);
        dval = 6.0 * r * (1.0 - r) / eps;
        curv = 6.0 * (1.0 - 2.0 * r) / (eps * eps);
      }
    };
  }

  std::vector<double> x(s.ndof(), 0.0);
  if (warm) {
    if (warm->nx != g.nx || warm->ny != g.ny)
      throw std::invalid_argument("warm start field does not match the grid");
    for (int d = 0; d < s.ndof(); ++d) x[d] = warm->v[s.cell_of[d]];
  } else if (prm.tau > 0.0) {
    // Ramp matched to the one-dimensional support length d * sqrt(a / tau).
    // Starting with the front near its final position matters: only the
    // eps-band of the profile feels the phase force, so a front parked far
    // out would crawl inward one band per Newton step.
    const double mid = 0.5 * (data.sup + data.inf);
    for (int d = 0; d < s.ndof(); ++d) {
      const int cc = s.cell_of[d];
      const double ell =
          1.5 * mid * std::sqrt(s.coeff_cell[cc] / prm.tau) + 4.0 * g.h;
      const double t = g.body_cell_distance(cc) / ell;
      x[d] = mid * std::max(0.0, 1.0 - t);
    }
  } else {
    detail::cold_start(s, g, data, x);
  }

  SolveReport rep = detail::newton_minimize(s, x, st);
  if (!rep.converged)
    throw std::runtime_error("phase-penalty solve did not converge (" +
                             rep.note + "): residual " +
                             std::to_string(rep.grad_norm) + " vs tolerance " +
                             std::to_string(rep.tol));
  return package(g, m, s, x, std::move(rep), c, data.sup, false);
}

PotentialField minimize_E_tau(const GridDomain& g, const Medium& m, double tau,
                              const DirichletData& data,
                              const SolverSettings& st) {
  detail::check_dirichlet(data);
  if (!(tau >= 0.0))
    throw std::invalid_argument("phase penalty tau must be nonnegative");

  PotentialField f;
  const Field* warm = nullptr;
  double eps = 0.1 * data.sup;
  while (true) {
    f = minimize_E_eps(g, m, ACParams{tau, eps}, data, st, warm);
    if (eps < g.h) break;
    eps *= 0.5;
    warm = &f.u_raw;
  }
  return f;
}

ObstacleSpec obstacle_from_mask(const GridDomain& g, CellMask forbidden) {
  if (forbidden.size() != static_cast<std::size_t>(g.nx) * g.ny)
    throw std::invalid_argument("obstacle mask does not match the grid");
  for (int cc = 0; cc < g.nx * g.ny; ++cc) {
    if (!forbidden[cc]) continue;
    if (g.body_mask[cc] || g.body_cell_distance(cc) <= 2.0 * g.h)
      throw std::invalid_argument(
          "obstacle region must stay clear of the body and its boundary-data "
          "ring");
  }
  return ObstacleSpec{std::move(forbidden)};
}

PotentialField solve_obstacle(const GridDomain& g, const Medium& m,
                              const DirichletData& phi,
                              const ObstacleSpec& obs,
                              const SolverSettings& st) {
  detail::check_dirichlet(phi);
  if (obs.forbidden.size() != static_cast<std::size_t>(g.nx) * g.ny)
    throw std::invalid_argument("obstacle mask does not match the grid");

  const Configuration c = whole_box(g);
  System s = detail::build_system(g, m, c, phi, st);
  const int nd = s.ndof();

  std::vector<std::uint8_t> capped(nd, 0);
  for (int d = 0; d < nd; ++d) capped[d] = obs.forbidden[s.cell_of[d]] ? 1 : 0;

  std::vector<double> x(nd, 0.0);
  detail::cold_start(s, g, phi, x);
  for (int d = 0; d < nd; ++d)
    if (capped[d]) x[d] = std::min(x[d], 0.0);

  std::vector<double> u(s.role.size()), graw(s.role.size());
  std::vector<double> gred(nd), diag(nd), dir(nd), xtry(nd);
  std::vector<std::uint8_t> frozen(nd, 0);
  const double cg_rtol = s.linear ? 1e-12 : 1e-6;

  // Projected CG: rows and columns of the frozen (actively constrained)
  // dofs are dropped, so the Newton direction leaves them at the bound.
  auto cg_projected = [&](const std::vector<double>& b,
                          std::vector<double>& d) {
    std::vector<double> r(nd), z(nd), pk(nd), q(nd);
    for (int i = 0; i < nd; ++i) r[i] = frozen[i] ? 0.0 : b[i];
    std::fill(d.begin(), d.end(), 0.0);
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b2) {
      double acc = 0.0;
      for (int i = 0; i < nd; ++i) acc += a[i] * b2[i];
      return acc;
    };
    const double bnorm = std::sqrt(dot(r, r));
    if (bnorm == 0.0) return;
    const double stop = cg_rtol * bnorm;
    for (int i = 0; i < nd; ++i) z[i] = r[i] / diag[i];
    pk = z;
    double rz = dot(r, z);
    for (int it = 0; it < st.cg_max_iter; ++it) {
      if (std::sqrt(dot(r, r)) <= stop) break;
      detail::hess_apply(s, pk, q);
      for (int i = 0; i < nd; ++i)
        if (frozen[i]) q[i] = 0.0;
      const double pq = dot(pk, q);
      if (pq <= 0.0) break;
      const double alpha = rz / pq;
      for (int i = 0; i < nd; ++i) {
        d[i] += alpha * pk[i];
        r[i] -= alpha * q[i];
      }
      for (int i = 0; i < nd; ++i) z[i] = r[i] / diag[i];
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (int i = 0; i < nd; ++i) pk[i] = z[i] + beta * pk[i];
    }
  };

  SolveReport rep;
  double F = 0.0, tol = 0.0;
  for (int it = 0; it <= st.max_iter; ++it) {
    detail::expand(s, x, u);
    F = detail::assemble(s, u, &graw, true);
    detail::reduce(s, graw, gred);

    // KKT residual: free dofs need a vanishing gradient, capped dofs at the
    // bound only a nonpositive one (a positive gradient there means energy
    // can still leave through the feasible side).
    double gnorm = 0.0;
    for (int i = 0; i < nd; ++i) {
      const bool at_bound = capped[i] && x[i] >= -1e-14;
      const double pg = at_bound ? std::max(gred[i], 0.0) : gred[i];
      gnorm = std::max(gnorm, std::fabs(pg));
      frozen[i] = (at_bound && gred[i] <= 0.0) ? 1 : 0;
    }

    if (it == 0) {
      tol = std::max(st.tol_rel * std::fabs(F), 1e-300);
      rep.tol = tol;
    }
    if (st.record_history) rep.history.push_back({it, F, gnorm});
    rep.iterations = it;
    rep.energy = F;
    rep.grad_norm = gnorm;
    if (gnorm <= tol) {
      rep.converged = true;
      break;
    }
    if (it == st.max_iter) break;

    detail::build_diag(s, diag);

    // Same rounding-floor escape as the unconstrained loop: below
    // sqrt(eps_mach * |F| * diag) no representable step decreases F.
    double dmax = 0.0;
    for (double dv : diag) dmax = std::max(dmax, dv);
    const double floor_g =
        10.0 * std::sqrt(2.3e-16 * std::max(std::fabs(F), 1e-300) * dmax);
    if (gnorm <= floor_g) {
      rep.converged = true;
      rep.note = "stopped at the rounding floor";
      break;
    }

    cg_projected(gred, dir);
    for (int i = 0; i < nd; ++i) dir[i] = -dir[i];

    double slope = 0.0;
    for (int i = 0; i < nd; ++i) slope += gred[i] * dir[i];
    if (!(slope < 0.0)) {
      for (int i = 0; i < nd; ++i)
        dir[i] = frozen[i] ? 0.0 : -gred[i] / diag[i];
    }

    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      double lin = 0.0;
      for (int i = 0; i < nd; ++i) {
        xtry[i] = x[i] + t * dir[i];
        if (capped[i] && xtry[i] > 0.0) xtry[i] = 0.0;
        lin += gred[i] * (xtry[i] - x[i]);
      }
      detail::expand(s, xtry, u);
      const double Ft = detail::assemble(s, u, nullptr, false);
      if (Ft <= F + 1e-4 * std::min(lin, 0.0)) {
        x.swap(xtry);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      rep.note = "line search stalled";
      break;
    }
  }
  if (!rep.converged) {
    if (rep.note.empty()) rep.note = "iteration cap reached";
    throw std::runtime_error("obstacle solve did not converge (" + rep.note +
                             "): residual " + std::to_string(rep.grad_norm) +
                             " vs tolerance " + std::to_string(rep.tol));
  }
  return package(g, m, s, x, std::move(rep), c, phi.sup, true);
}

}  // namespace insulopt
