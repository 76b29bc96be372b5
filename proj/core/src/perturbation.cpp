#include "insulopt/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "solver_detail.hpp"

namespace insulopt {

namespace {

constexpr double kBumpPeak = 1.875;  // bump(1/2)

// Index bounds of the cells whose centers the support ball can reach.
void ball_bounds(const GridDomain& g, Vec2 center, double r, int& i0, int& i1,
                 int& j0, int& j1) {
  i0 = std::max(0, (int)std::floor((center.x - r - g.origin.x) / g.h) - 1);
  i1 = std::min(g.nx - 1, (int)std::ceil((center.x + r - g.origin.x) / g.h));
  j0 = std::max(0, (int)std::floor((center.y - r - g.origin.y) / g.h) - 1);
  j1 = std::min(g.ny - 1, (int)std::ceil((center.y + r - g.origin.y) / g.h));
}

// Preimage of y under Phi(x) = x - alpha r bump(|x - center|/r) normal.
// Writing x = y + s * normal, s solves s = alpha r bump(|y + s n - c|/r),
// whose residual is strictly increasing in s while alpha sup|bump'| < 1;
// bisection over [0, alpha r sup bump] is then exact to rounding.
Vec2 preimage(const PerturbationSpec& sp, Vec2 y) {
  auto rhs = [&](double s) {
    return sp.alpha * sp.r * bump(dist(y + s * sp.normal, sp.center) / sp.r);
  };
  double lo = 0.0, hi = sp.alpha * sp.r * kBumpPeak;
  for (int it = 0; it < 64 && lo < hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid - rhs(mid) < 0.0 ? lo : hi) = mid;
  }
  return y + (0.5 * (lo + hi)) * sp.normal;
}

// Copy of `f` resampled through the inverse displacement at the cells inside
// the support ball; everything else is left bit-identical.
Field advect_field(const GridDomain& g, const Field& f,
                   const PerturbationSpec& sp) {
  Field out = f;
  int i0, i1, j0, j1;
  ball_bounds(g, sp.center, sp.r, i0, i1, j0, j1);
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const Vec2 y = g.cell_center(i, j);
      if (dist(y, sp.center) >= sp.r) continue;
      out.at(i, j) = sample_bilinear(f, g.h, g.origin, preimage(sp, y));
    }
  return out;
}

void check_injective(const PerturbationSpec& sp) {
  if (sp.alpha * bump_slope_max() >= 1.0)
    throw std::invalid_argument(
        "perturbation: amplitude breaks injectivity of the displacement");
}

void check_clear_of_body(const GridDomain& g, const PerturbationSpec& sp) {
  if (g.project_to_body(sp.center).sdist <= sp.r)
    throw std::invalid_argument(
        "perturbation: support ball reaches the body");
}

double simpson_weight(int k, int n) {
  if (k == 0 || k == n) return 1.0;
  return k % 2 ? 4.0 : 2.0;
}

}  // namespace

double bump(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double s = 1.0 - t;
  return 30.0 * t * t * s * s;
}

double bump_slope(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
}

double bump_slope_max() { return 10.0 / std::sqrt(3.0); }

PerturbationSpec make_perturbation_spec(const GridDomain& g, Vec2 center,
                                        Vec2 normal, double r, double alpha) {
  if (r <= 0.0) throw std::invalid_argument("perturbation: radius <= 0");
  if (norm(normal) == 0.0)
    throw std::invalid_argument("perturbation: zero normal");
  if (alpha < 0.0 || alpha > 0.2)
    throw std::invalid_argument("perturbation: amplitude outside [0, 0.2]");
  PerturbationSpec sp{center, normalized(normal), r, alpha};
  check_injective(sp);
  check_clear_of_body(g, sp);
  return sp;
}

PerturbationSpec spec_near(const GridDomain& g, const Configuration& c,
                           Vec2 near, double r, double alpha) {
  const FreeBoundary fb = free_boundary_samples(g, c);
  const BoundarySample* best = nullptr;
  double dbest = 0.0;
  for (const auto& s : fb.samples) {
    const double d = dist(s.point, near);
    if (!best || d < dbest) {
      best = &s;
      dbest = d;
    }
  }
  return make_perturbation_spec(g, best->point, best->normal, r, alpha);
}

Configuration perturb_inward(const GridDomain& g, const Configuration& c,
                             const PerturbationSpec& spec) {
  if ((int)c.occupancy.size() != g.nx * g.ny)
    throw std::invalid_argument("perturbation: occupancy size mismatch");
  check_injective(spec);
  check_clear_of_body(g, spec);
  if (spec.alpha == 0.0) return c;

  auto [f, iso] = contour_field(g, c);
  Field fnew = advect_field(g, f, spec);

  Configuration out;
  out.occupancy = c.occupancy;
  int i0, i1, j0, j1;
  ball_bounds(g, spec.center, spec.r, i0, i1, j0, j1);
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      if (dist(g.cell_center(i, j), spec.center) >= spec.r) continue;
      out.occupancy[g.idx(i, j)] = fnew.at(i, j) >= iso ? 1 : 0;
    }
  if (c.level_set) out.level_set = std::move(fnew);
  enforce_body(g, out);
  return out;
}

double volume_differential(const GridDomain& g, const Configuration& c,
                           const PerturbationSpec& spec) {
  PerturbationSpec sp = spec;
  if (sp.alpha == 0.0) sp.alpha = 0.05;  // one-sided probe amplitude

  auto [f, iso] = contour_field(g, c);
  const Field fnew = advect_field(g, f, sp);

  int i0, i1, j0, j1;
  ball_bounds(g, sp.center, sp.r, i0, i1, j0, j1);
  i0 = std::max(0, i0 - 1);
  j0 = std::max(0, j0 - 1);
  i1 = std::min(g.nx - 2, i1);
  j1 = std::min(g.ny - 2, j1);

  double lost = 0.0;
  for (int ey = j0; ey <= j1; ++ey)
    for (int ex = i0; ex <= i1; ++ex) {
      const int k00 = g.idx(ex, ey), k10 = k00 + 1;
      const int k01 = k00 + g.nx, k11 = k01 + 1;
      const double c0[4] = {f[k00] - iso, f[k10] - iso, f[k01] - iso,
                            f[k11] - iso};
      const double c1[4] = {fnew[k00] - iso, fnew[k10] - iso, fnew[k01] - iso,
                            fnew[k11] - iso};
      if (c0[0] == c1[0] && c0[1] == c1[1] && c0[2] == c1[2] && c0[3] == c1[3])
        continue;
      lost += detail::quad_frac(c0) - detail::quad_frac(c1);
    }
  return lost * g.cell_area() / (sp.alpha * sp.r * sp.r);
}

M2Estimate m2_constant(int n) {
  if (n < 2 || n % 2)
    throw std::invalid_argument("m2_constant: need an even interval count");
  M2Estimate est;

  const double dt = 1.0 / n;
  double seg = 0.0;
  for (int k = 0; k <= n; ++k) seg += simpson_weight(k, n) * bump(k * dt);
  est.segment = 2.0 * seg * dt / 3.0;

  // Half-disk on the displaced side of the interface, polar coordinates:
  // rho in [0, 1], angle in [-pi, 0], area element rho drho dphi; the
  // integrand is the directional slope of the bump along the unit normal.
  const double dphi = std::numbers::pi / n;
  double hd = 0.0;
  for (int a = 0; a <= n; ++a) {
    const double phi = -std::numbers::pi + a * dphi;
    double row = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double rho = k * dt;
      row += simpson_weight(k, n) * bump_slope(rho) * rho;
    }
    hd += simpson_weight(a, n) * std::sin(phi) * row;
  }
  est.halfdisk = hd * (dt / 3.0) * (dphi / 3.0);
  return est;
}

double energy_differential(const GridDomain& g, const Medium& m,
                           const PotentialField& field,
                           const PerturbationSpec& spec) {
  if (field.u.nx != g.nx || field.u.ny != g.ny)
    throw std::invalid_argument("energy differential: field size mismatch");
  check_clear_of_body(g, spec);
  if (spec.alpha == 0.0) return 0.0;

  const Vec2 nu = normalized(spec.normal);
  if (norm(nu) == 0.0)
    throw std::invalid_argument("energy differential: zero normal");

  const std::vector<double> bsd = detail::body_band_sdist(g);
  const Field* ls =
      field.config.level_set ? &*field.config.level_set : nullptr;
  const double eta2 = m.p < 2.0 ? m.eta * m.eta : 0.0;
  const double gq = 0.5 / std::sqrt(3.0);

  int i0, i1, j0, j1;
  ball_bounds(g, spec.center, spec.r, i0, i1, j0, j1);
  i0 = std::max(0, i0 - 1);
  j0 = std::max(0, j0 - 1);
  i1 = std::min(g.nx - 2, i1);
  j1 = std::min(g.ny - 2, j1);

  double acc = 0.0;
  for (int ey = j0; ey <= j1; ++ey)
    for (int ex = i0; ex <= i1; ++ex) {
      const double frac = detail::elem_fraction(g, bsd, ls, ex, ey);
      if (frac <= 0.0) continue;
      const int k00 = g.idx(ex, ey), k10 = k00 + 1;
      const int k01 = k00 + g.nx, k11 = k01 + 1;
      const double u00 = field.u[k00], u10 = field.u[k10];
      const double u01 = field.u[k01], u11 = field.u[k11];
      const Vec2 x00 = g.cell_center(ex, ey);

      for (int q = 0; q < 4; ++q) {
        const double xi = 0.5 + (q & 1 ? gq : -gq);
        const double ze = 0.5 + (q & 2 ? gq : -gq);
        const Vec2 xq = x00 + Vec2{xi * g.h, ze * g.h};
        const double tr = dist(xq, spec.center);
        if (tr >= spec.r) continue;  // identical densities cancel

        const Vec2 G = {((u10 - u00) * (1.0 - ze) + (u11 - u01) * ze) / g.h,
                        ((u01 - u00) * (1.0 - xi) + (u11 - u10) * xi) / g.h};
        const double t = tr / spec.r;
        const Vec2 er = tr > 0.0 ? (xq - spec.center) / tr : Vec2{};
        const Vec2 gvec = (spec.alpha * bump_slope(t)) * er;
        const double det = 1.0 - dot(gvec, nu);
        if (det <= 1e-12)
          throw std::runtime_error(
              "energy differential: displacement Jacobian is singular "
              "inside the support ball");
        const Vec2 Gt = G + (dot(nu, G) / det) * gvec;
        const Vec2 phix = xq - (spec.alpha * spec.r * bump(t)) * nu;
        const double a1 = sample_bilinear(m.coeff, g.h, g.origin, phix);
        const double a0 = sample_bilinear(m.coeff, g.h, g.origin, xq);
        const double rho1 =
            a1 * std::pow(norm2(Gt) + eta2, 0.5 * m.p) * det;
        const double rho0 = a0 * std::pow(norm2(G) + eta2, 0.5 * m.p);
        acc += frac * 0.25 * g.cell_area() * (rho1 - rho0);
      }
    }
  return acc / (spec.alpha * spec.r * spec.r);
}

}  // namespace insulopt
