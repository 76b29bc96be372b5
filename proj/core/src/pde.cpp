#include "insulopt/pde.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "solver_detail.hpp"

namespace insulopt {

namespace {

// ---------------------------------------------------------------------------
// Bilinear element tables. Elements live between cell centers: element
// (ex, ey) has corner cells (ex, ey) .. (ex+1, ey+1) and side length h.
// Quadrature is the 2x2 Gauss rule; one-point quadrature would leave the
// checkerboard mode energy-free, so it is not used.
// ---------------------------------------------------------------------------

constexpr double kGaussLo = 0.21132486540518713;  // (1 - 1/sqrt(3)) / 2
constexpr double kGaussHi = 0.78867513459481287;

struct QpTables {
  // dn[qp][corner][axis] is the reference-cell shape gradient (scale by 1/h);
  // nv[qp][corner] is the shape value used to interpolate the coefficient.
  double dn[4][4][2];
  double nv[4][4];
};

QpTables make_tables() {
  QpTables t{};
  const double pts[2] = {kGaussLo, kGaussHi};
  int qp = 0;
  for (int jy = 0; jy < 2; ++jy) {
    for (int jx = 0; jx < 2; ++jx) {
      const double x = pts[jx], y = pts[jy];
      t.nv[qp][0] = (1 - x) * (1 - y);
      t.nv[qp][1] = x * (1 - y);
      t.nv[qp][2] = (1 - x) * y;
      t.nv[qp][3] = x * y;
      t.dn[qp][0][0] = -(1 - y);
      t.dn[qp][0][1] = -(1 - x);
      t.dn[qp][1][0] = (1 - y);
      t.dn[qp][1][1] = -x;
      t.dn[qp][2][0] = -y;
      t.dn[qp][2][1] = (1 - x);
      t.dn[qp][3][0] = y;
      t.dn[qp][3][1] = x;
      ++qp;
    }
  }
  return t;
}

const QpTables& tables() {
  static const QpTables t = make_tables();
  return t;
}

}  // namespace

namespace detail {

void expand(const System& s, const std::vector<double>& x,
            std::vector<double>& u) {
  const int n = static_cast<int>(s.role.size());
  for (int c = 0; c < n; ++c) {
    u[c] = (s.role[c] == Role::Free) ? x[s.dof_of[c]] : s.fixed[c];
  }
}

// Linear part of expand (no constants), used for Hessian products.
void expand_linear(const System& s, const std::vector<double>& x,
                   std::vector<double>& u) {
  const int n = static_cast<int>(s.role.size());
  for (int c = 0; c < n; ++c) {
    u[c] = (s.role[c] == Role::Free) ? x[s.dof_of[c]] : 0.0;
  }
}

void reduce(const System& s, const std::vector<double>& raw,
            std::vector<double>& red) {
  const int nd = s.ndof();
  for (int d = 0; d < nd; ++d) red[d] = raw[s.cell_of[d]];
}

double assemble(System& s, const std::vector<double>& u,
                std::vector<double>* graw, bool store_qp) {
  const GridDomain& g = *s.g;
  const QpTables& tb = tables();
  const double h = g.h;
  const double wq = h * h / 4.0;
  const double inv_h = 1.0 / h;
  const double p = s.p, q = (p - 2.0) / 2.0;
  const double eta2 = s.eta2;

  if (graw) std::fill(graw->begin(), graw->end(), 0.0);
  if (store_qp) s.qp_data.assign(s.elems.size() * 16, 0.0);

  double F = 0.0;
  const int nx = g.nx;
  for (std::size_t ae = 0; ae < s.elems.size(); ++ae) {
    const int e = s.elems[ae];
    const int ex = e % (nx - 1), ey = e / (nx - 1);
    const int cells[4] = {ey * nx + ex, ey * nx + ex + 1, (ey + 1) * nx + ex,
                          (ey + 1) * nx + ex + 1};
    const double uc[4] = {u[cells[0]], u[cells[1]], u[cells[2]], u[cells[3]]};
    const double ac[4] = {s.coeff_cell[cells[0]], s.coeff_cell[cells[1]],
                          s.coeff_cell[cells[2]], s.coeff_cell[cells[3]]};

    const double wsub = s.elem_w[ae];
    const double wqk = wq * wsub;
    for (int k = 0; k < 4; ++k) {
      double gx = 0, gy = 0, a = 0;
      for (int c = 0; c < 4; ++c) {
        gx += tb.dn[k][c][0] * uc[c];
        gy += tb.dn[k][c][1] * uc[c];
        a += tb.nv[k][c] * ac[c];
      }
      gx *= inv_h;
      gy *= inv_h;
      const double w2 = gx * gx + gy * gy;
      const double sreg = w2 + eta2;

      double spow_q;  // s^q = s^{(p-2)/2}
      if (s.linear) {
        spow_q = 1.0;
        F += (a / 2.0) * sreg * wqk;
      } else {
        spow_q = (sreg > 0.0) ? std::pow(sreg, q) : 0.0;
        F += (a / p) * ((sreg > 0.0) ? std::pow(sreg, p / 2.0) : 0.0) * wqk;
      }

      if (graw) {
        const double fac = a * spow_q * wqk;
        for (int c = 0; c < 4; ++c) {
          (*graw)[cells[c]] +=
              fac * (gx * tb.dn[k][c][0] + gy * tb.dn[k][c][1]) * inv_h;
        }
      }

      if (store_qp) {
        // c1, c2 carry the area fraction so the Hessian paths can keep
        // using the plain Gauss weight.
        double c1, c2;
        if (s.linear) {
          c1 = a * wsub;
          c2 = 0.0;
        } else {
          const double sh = w2 + std::max(eta2, s.eta2_hess);
          const double shq = std::pow(sh, q);
          c1 = a * shq * wsub;
          c2 = 2.0 * q * a * shq / sh * wsub;
        }
        double* qd = &s.qp_data[(ae * 4 + k) * 4];
        qd[0] = gx;
        qd[1] = gy;
        qd[2] = c1;
        qd[3] = c2;
      }
    }
  }

  for (const TracePin& pin : s.pins) {
    double tr = -pin.target;
    for (int k = 0; k < 4; ++k) tr += pin.w[k] * u[pin.cells[k]];
    F += 0.5 * pin.kpen * tr * tr;
    if (graw) {
      for (int k = 0; k < 4; ++k)
        (*graw)[pin.cells[k]] += pin.kpen * tr * pin.w[k];
    }
  }

  if (s.cell_term.fn) {
    if (store_qp) s.cell_curv.assign(s.cell_term.cells.size(), 0.0);
    for (std::size_t k = 0; k < s.cell_term.cells.size(); ++k) {
      const int cc = s.cell_term.cells[k];
      const double sc = s.cell_term.scale[k];
      double val = 0.0, dval = 0.0, curv = 0.0;
      s.cell_term.fn(u[cc], val, dval, curv);
      F += sc * val;
      if (graw) (*graw)[cc] += sc * dval;
      if (store_qp) s.cell_curv[k] = sc * std::max(curv, 0.0);
    }
  }
  return F;
}

// Hessian-vector product in reduced (dof) coordinates, using the qp data
// captured by the last assemble(..., store_qp = true).
void hess_apply(System& s, const std::vector<double>& v,
                std::vector<double>& out) {
  const GridDomain& g = *s.g;
  const QpTables& tb = tables();
  const double h = g.h;
  const double wq = h * h / 4.0;
  const double inv_h = 1.0 / h;
  const int nx = g.nx;

  expand_linear(s, v, s.vhat);
  std::fill(s.hraw.begin(), s.hraw.end(), 0.0);

  for (std::size_t ae = 0; ae < s.elems.size(); ++ae) {
    const int e = s.elems[ae];
    const int ex = e % (nx - 1), ey = e / (nx - 1);
    const int cells[4] = {ey * nx + ex, ey * nx + ex + 1, (ey + 1) * nx + ex,
                          (ey + 1) * nx + ex + 1};
    const double vc[4] = {s.vhat[cells[0]], s.vhat[cells[1]],
                          s.vhat[cells[2]], s.vhat[cells[3]]};
    for (int k = 0; k < 4; ++k) {
      const double* qd = &s.qp_data[(ae * 4 + k) * 4];
      const double gx = qd[0], gy = qd[1], c1 = qd[2], c2 = qd[3];
      double vx = 0, vy = 0;
      for (int c = 0; c < 4; ++c) {
        vx += tb.dn[k][c][0] * vc[c];
        vy += tb.dn[k][c][1] * vc[c];
      }
      vx *= inv_h;
      vy *= inv_h;
      const double gdotv = gx * vx + gy * vy;
      const double hx = c1 * vx + c2 * gdotv * gx;
      const double hy = c1 * vy + c2 * gdotv * gy;
      for (int c = 0; c < 4; ++c) {
        s.hraw[cells[c]] +=
            wq * (hx * tb.dn[k][c][0] + hy * tb.dn[k][c][1]) * inv_h;
      }
    }
  }
  for (const TracePin& pin : s.pins) {
    double tr = 0.0;
    for (int k = 0; k < 4; ++k) tr += pin.w[k] * s.vhat[pin.cells[k]];
    for (int k = 0; k < 4; ++k)
      s.hraw[pin.cells[k]] += pin.kpen * tr * pin.w[k];
  }
  if (s.cell_term.fn && !s.cell_curv.empty()) {
    for (std::size_t k = 0; k < s.cell_term.cells.size(); ++k) {
      const int cc = s.cell_term.cells[k];
      s.hraw[cc] += s.cell_curv[k] * s.vhat[cc];
    }
  }
  reduce(s, s.hraw, out);
}

void build_diag(System& s, std::vector<double>& diag) {
  const GridDomain& g = *s.g;
  const QpTables& tb = tables();
  const double h = g.h;
  const double wq = h * h / 4.0;
  const double inv_h2 = 1.0 / (h * h);
  const int nx = g.nx;

  std::fill(diag.begin(), diag.end(), 0.0);
  for (std::size_t ae = 0; ae < s.elems.size(); ++ae) {
    const int e = s.elems[ae];
    const int ex = e % (nx - 1), ey = e / (nx - 1);
    const int cells[4] = {ey * nx + ex, ey * nx + ex + 1, (ey + 1) * nx + ex,
                          (ey + 1) * nx + ex + 1};
    for (int k = 0; k < 4; ++k) {
      const double* qd = &s.qp_data[(ae * 4 + k) * 4];
      const double gx = qd[0], gy = qd[1], c1 = qd[2], c2 = qd[3];
      for (int c = 0; c < 4; ++c) {
        const int cc = cells[c];
        if (s.role[cc] != Role::Free) continue;
        const double dx = tb.dn[k][c][0], dy = tb.dn[k][c][1];
        const double gdn = gx * dx + gy * dy;
        diag[s.dof_of[cc]] +=
            wq * (c1 * (dx * dx + dy * dy) + c2 * gdn * gdn) * inv_h2;
      }
    }
  }
  for (const TracePin& pin : s.pins) {
    for (int k = 0; k < 4; ++k) {
      const int cc = pin.cells[k];
      if (s.role[cc] == Role::Free)
        diag[s.dof_of[cc]] += pin.kpen * pin.w[k] * pin.w[k];
    }
  }
  if (s.cell_term.fn && !s.cell_curv.empty()) {
    for (std::size_t k = 0; k < s.cell_term.cells.size(); ++k) {
      const int cc = s.cell_term.cells[k];
      if (s.role[cc] == Role::Free) diag[s.dof_of[cc]] += s.cell_curv[k];
    }
  }
  double mx = 0.0;
  for (double d : diag) mx = std::max(mx, d);
  const double floor_val = std::max(mx * 1e-14, 1e-300);
  for (double& d : diag) d = std::max(d, floor_val);
}

// Preconditioned CG for H d = b. Returns iterations used.
int cg_solve(System& s, const std::vector<double>& b,
             const std::vector<double>& diag, double rtol, int kmax,
             std::vector<double>& d) {
  const int n = s.ndof();
  std::vector<double> r = b, z(n), pk(n), q(n);
  std::fill(d.begin(), d.end(), 0.0);

  auto dot = [n](const std::vector<double>& a, const std::vector<double>& c) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * c[i];
    return acc;
  };

  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) return 0;
  const double stop = rtol * bnorm;

  for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  pk = z;
  double rz = dot(r, z);
  int it = 0;
  for (; it < kmax; ++it) {
    if (std::sqrt(dot(r, r)) <= stop) break;
    hess_apply(s, pk, q);
    const double pq = dot(pk, q);
    if (pq <= 0.0) break;  // curvature exhausted by rounding
    const double alpha = rz / pq;
    for (int i = 0; i < n; ++i) {
      d[i] += alpha * pk[i];
      r[i] -= alpha * q[i];
    }
    for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) pk[i] = z[i] + beta * pk[i];
  }
  return it;
}

// Locates the bilinear stencil of cell centers around point p. Returns false
// if the stencil would leave the grid.
bool stencil_at(const GridDomain& g, Vec2 p, int cells[4], double w[4]) {
  const double fx = (p.x - g.origin.x) / g.h - 0.5;
  const double fy = (p.y - g.origin.y) / g.h - 0.5;
  const int i0 = static_cast<int>(std::floor(fx));
  const int j0 = static_cast<int>(std::floor(fy));
  if (i0 < 0 || j0 < 0 || i0 + 1 >= g.nx || j0 + 1 >= g.ny) return false;
  const double tx = fx - i0, ty = fy - j0;
  cells[0] = g.idx(i0, j0);
  cells[1] = g.idx(i0 + 1, j0);
  cells[2] = g.idx(i0, j0 + 1);
  cells[3] = g.idx(i0 + 1, j0 + 1);
  w[0] = (1 - tx) * (1 - ty);
  w[1] = tx * (1 - ty);
  w[2] = (1 - tx) * ty;
  w[3] = tx * ty;
  return true;
}

// ---------------------------------------------------------------------------
// Sub-cell quadrature. Straddling elements count only the area fraction that
// lies inside the domain: the positive part of {body sdist > 0} (and of
// {level set > 0} when the configuration carries one), measured exactly on
// the four-triangle split of the element. Integrating full squares instead
// would charge energy for slivers outside the domain and visibly flatten the
// solution near both interfaces.
// ---------------------------------------------------------------------------

// Signed distance to the body boundary per cell center, exact in a band of
// about three cells around the interface and saturated far away (the ramp
// only reads values in |s| < 1.5 h).
std::vector<double> body_band_sdist(const GridDomain& g) {
  const int n = g.nx * g.ny;
  const double far = 10.0 * g.h;
  std::vector<double> sd(n);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int cc = g.idx(i, j);
      bool near = false;
      if (g.body_mask[cc]) {
        for (int dj = -2; dj <= 2 && !near; ++dj)
          for (int di = -2; di <= 2 && !near; ++di) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny) continue;
            if (!g.body_mask[g.idx(ii, jj)]) near = true;
          }
      } else {
        near = g.body_cell_distance(cc) <= 3.0 * g.h;
      }
      sd[cc] = near ? g.project_to_body(g.cell_center(i, j)).sdist
                    : (g.body_mask[cc] ? -far : far);
    }
  }
  return sd;
}

// Fraction of a triangle on which the linear interpolant of (a, b, c) at its
// vertices is positive.
double tri_frac(double a, double b, double c) {
  double d0 = a, d1 = b, d2 = c;
  if (d0 < d1) std::swap(d0, d1);
  if (d1 < d2) std::swap(d1, d2);
  if (d0 < d1) std::swap(d0, d1);
  if (d2 >= 0.0) return 1.0;
  if (d0 <= 0.0) return 0.0;
  if (d1 <= 0.0) return d0 * d0 / ((d0 - d1) * (d0 - d2));
  return 1.0 - d2 * d2 / ((d0 - d2) * (d1 - d2));
}

// Positive-area fraction of element (ex, ey) for the corner values of `f`,
// on the split into four triangles around the element center.
double quad_frac(const double f[4]) {
  const double ctr = 0.25 * (f[0] + f[1] + f[2] + f[3]);
  return 0.25 * (tri_frac(f[0], f[1], ctr) + tri_frac(f[1], f[3], ctr) +
                 tri_frac(f[3], f[2], ctr) + tri_frac(f[2], f[0], ctr));
}

// Fluid area fraction of element (ex, ey): inside the body's complement and,
// when a level set is given, inside its positive phase.
double elem_fraction(const GridDomain& g, const std::vector<double>& bsd,
                     const Field* ls, int ex, int ey) {
  const int nx = g.nx;
  const int cells[4] = {ey * nx + ex, ey * nx + ex + 1, (ey + 1) * nx + ex,
                        (ey + 1) * nx + ex + 1};
  const double sb[4] = {bsd[cells[0]], bsd[cells[1]], bsd[cells[2]],
                        bsd[cells[3]]};
  double frac = quad_frac(sb);
  if (ls && frac > 0.0) {
    const double sl[4] = {ls->v[cells[0]], ls->v[cells[1]], ls->v[cells[2]],
                          ls->v[cells[3]]};
    frac *= quad_frac(sl);
  }
  return frac;
}

System build_system(const GridDomain& g, const Medium& m,
                    const Configuration& c, const DirichletData& phi,
                    const SolverSettings& st) {
  System s;
  s.g = &g;
  s.med = &m;
  s.p = m.p;
  s.linear = (m.p == 2.0);

  const double sup_phi = std::max(phi.sup, 1e-300);
  double eta = m.eta;
  if (eta <= 0.0 && m.p < 2.0) eta = st.eta_scale * sup_phi / g.h;
  s.eta2 = (m.p < 2.0 || m.eta > 0.0) ? eta * eta : 0.0;
  if (m.p > 2.0) {
    const double eh = 1e-7 * sup_phi / g.h;
    s.eta2_hess = eh * eh;
  }

  const int n = g.nx * g.ny;
  s.role.assign(n, Role::FixedZero);
  s.fixed.assign(n, 0.0);
  s.dof_of.assign(n, -1);
  s.coeff_cell = m.coeff.v;

  auto is_body = [&](int i, int j) { return g.body_mask[g.idx(i, j)] != 0; };

  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int cc = g.idx(i, j);
      if (g.body_mask[cc]) {
        bool edge = false;
        for (int dj = -1; dj <= 1 && !edge; ++dj)
          for (int di = -1; di <= 1 && !edge; ++di) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny) continue;
            if (!is_body(ii, jj)) edge = true;
          }
        if (edge) {
          // Boundary ring of the body: free unknowns held to the data by the
          // trace pins below, so interface elements see a smooth profile on
          // both sides of the cut.
          s.role[cc] = Role::Free;
          s.dof_of[cc] = static_cast<int>(s.cell_of.size());
          s.cell_of.push_back(cc);
        } else {
          s.role[cc] = Role::FixedValue;
          s.fixed[cc] = phi.fn(g.project_to_body(g.cell_center(i, j)).point);
        }
      } else if (!g.on_rim(i, j) && c.occupancy[cc]) {
        s.role[cc] = Role::Free;
        s.dof_of[cc] = static_cast<int>(s.cell_of.size());
        s.cell_of.push_back(cc);
      }
    }
  }

  // Sub-cell placement of the outer zero boundary: when the configuration
  // carries a level set, the first ring of unoccupied cells stays free so the
  // profile can cross zero between cell centers; the trace pins below hold it
  // to zero on the isoline itself.
  if (c.level_set) {
    const Field& ls = *c.level_set;
    for (int j = 1; j < g.ny - 1; ++j) {
      for (int i = 1; i < g.nx - 1; ++i) {
        const int cc = g.idx(i, j);
        if (s.role[cc] != Role::FixedZero || ls.v[cc] >= 0.0) continue;
        bool near_free = false;
        for (int dj = -1; dj <= 1 && !near_free; ++dj)
          for (int di = -1; di <= 1 && !near_free; ++di) {
            const int nb = g.idx(i + di, j + dj);
            if (s.role[nb] == Role::Free && !g.body_mask[nb] &&
                c.occupancy[nb])
              near_free = true;
          }
        if (!near_free) continue;
        s.role[cc] = Role::Free;
        s.dof_of[cc] = static_cast<int>(s.cell_of.size());
        s.cell_of.push_back(cc);
      }
    }
  }

  // Active elements: skip all-body squares (covered by the data extension),
  // squares with no unknown at any corner, and squares lying entirely outside
  // the fluid region. Straddling squares carry their inside area fraction.
  const std::vector<double> bsd = body_band_sdist(g);
  const Field* ls_ptr = c.level_set ? &*c.level_set : nullptr;
  const int nex = g.nx - 1, ney = g.ny - 1;
  for (int ey = 0; ey < ney; ++ey) {
    for (int ex = 0; ex < nex; ++ex) {
      const int cells[4] = {g.idx(ex, ey), g.idx(ex + 1, ey),
                            g.idx(ex, ey + 1), g.idx(ex + 1, ey + 1)};
      bool any_fluid = false, any_live = false;
      for (int k = 0; k < 4; ++k) {
        if (!g.body_mask[cells[k]]) any_fluid = true;
        if (s.role[cells[k]] == Role::Free) any_live = true;
      }
      if (!any_fluid || !any_live) continue;
      const double frac = elem_fraction(g, bsd, ls_ptr, ex, ey);
      if (frac <= 0.0) continue;
      s.elems.push_back(ey * nex + ex);
      s.elem_w.push_back(frac);
    }
  }

  // Trace pins: quadratic penalties holding the bilinear trace to the data on
  // the body boundary and to zero on the free boundary. The strength
  // a(X) w_s / h matches the flux stiffness of one boundary segment, so the
  // penalty displaces the effective boundary by only about h / kTraceSigma.
  auto coeff_at = [&](Vec2 pt) {
    int ci = static_cast<int>(std::floor((pt.x - g.origin.x) / g.h));
    int cj = static_cast<int>(std::floor((pt.y - g.origin.y) / g.h));
    ci = std::clamp(ci, 0, g.nx - 1);
    cj = std::clamp(cj, 0, g.ny - 1);
    return s.coeff_cell[g.idx(ci, cj)];
  };
  auto add_pin = [&](Vec2 pt, double target, double seg_w) {
    TracePin pin;
    if (!stencil_at(g, pt, pin.cells, pin.w)) return;
    pin.target = target;
    pin.kpen = kTraceSigma * coeff_at(pt) * seg_w / g.h;
    s.pins.push_back(pin);
  };
  for (const BoundarySample& bs : g.body_samples)
    add_pin(bs.point, phi.fn(bs.point), bs.weight);
  if (c.level_set) {
    bool have_fb = true;
    FreeBoundary fb;
    try {
      fb = free_boundary_samples(g, c);
    } catch (const std::exception&) {
      // Bare body (no free boundary) or a configuration filling the box; the
      // rim pins already provide the outer condition in either case.
      have_fb = false;
    }
    if (have_fb)
      for (const BoundarySample& bs : fb.samples)
        add_pin(bs.point, 0.0, bs.weight);
  }

  s.vhat.resize(n);
  s.hraw.resize(n);
  return s;
}

SolveReport newton_minimize(System& s, std::vector<double>& x,
                            const SolverSettings& st) {
  const int nd = s.ndof();
  SolveReport rep;
  std::vector<double> u(s.role.size()), graw(s.role.size());
  std::vector<double> gred(nd), diag(nd), dir(nd), xtry(nd);

  const double cg_rtol = s.linear ? 1e-12 : 1e-6;
  double F = 0.0, tol = 0.0;

  for (int it = 0; it <= st.max_iter; ++it) {
    expand(s, x, u);
    F = assemble(s, u, &graw, true);
    reduce(s, graw, gred);
    double gnorm = 0.0;
    for (double v : gred) gnorm = std::max(gnorm, std::fabs(v));

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

    build_diag(s, diag);

    // Double precision cannot represent decreases below eps_mach * |F|,
    // which floors the reachable gradient near sqrt(eps_mach * |F| * diag).
    // Asking the line search to push past that floor only makes it grind
    // out null steps, so reaching it counts as convergence.
    double dmax = 0.0;
    for (double dv : diag) dmax = std::max(dmax, dv);
    const double floor_g =
        10.0 * std::sqrt(2.3e-16 * std::max(std::fabs(F), 1e-300) * dmax);
    if (gnorm <= floor_g) {
      rep.converged = true;
      rep.note = "stopped at the rounding floor";
      break;
    }

    cg_solve(s, gred, diag, cg_rtol, st.cg_max_iter, dir);
    for (int i = 0; i < nd; ++i) dir[i] = -dir[i];

    double slope = 0.0;
    for (int i = 0; i < nd; ++i) slope += gred[i] * dir[i];
    if (!(slope < 0.0)) {  // fall back to the preconditioned gradient
      slope = 0.0;
      for (int i = 0; i < nd; ++i) {
        dir[i] = -gred[i] / diag[i];
        slope += gred[i] * dir[i];
      }
    }

    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (int i = 0; i < nd; ++i) xtry[i] = x[i] + t * dir[i];
      expand(s, xtry, u);
      const double Ft = assemble(s, u, nullptr, false);
      if (Ft <= F + 1e-4 * t * slope) {
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
  if (!rep.converged && rep.note.empty()) rep.note = "iteration cap reached";
  return rep;
}

void cold_start(const System& s, const GridDomain& g, const DirichletData& phi,
                std::vector<double>& x) {
  double wmax = 4.0 * g.h;
  for (int d = 0; d < s.ndof(); ++d)
    wmax = std::max(wmax, g.body_cell_distance(s.cell_of[d]));
  const double mid = 0.5 * (phi.sup + phi.inf);
  for (int d = 0; d < s.ndof(); ++d) {
    const double t = g.body_cell_distance(s.cell_of[d]) / (wmax + g.h);
    x[d] = mid * std::max(0.0, 1.0 - t);
  }
}

void check_dirichlet(const DirichletData& phi) {
  if (!(phi.inf > 0.0) || !std::isfinite(phi.sup)) {
    throw std::invalid_argument(
        "boundary data must be positive and finite on the body boundary");
  }
}

}  // namespace detail

using namespace detail;

DirichletData make_dirichlet(const GridDomain& g,
                             std::function<double(Vec2)> fn) {
  DirichletData d;
  d.fn = std::move(fn);
  d.sup = -std::numeric_limits<double>::infinity();
  d.inf = std::numeric_limits<double>::infinity();
  for (const BoundarySample& s : g.body_samples) {
    const double v = d.fn(s.point);
    d.sup = std::max(d.sup, v);
    d.inf = std::min(d.inf, v);
  }
  return d;
}

DirichletData const_dirichlet(const GridDomain& g, double value) {
  return make_dirichlet(g, [value](Vec2) { return value; });
}

PotentialField solve_potential(const GridDomain& g, const Medium& m,
                               const Configuration& c, const DirichletData& phi,
                               const SolverSettings& st, const Field* warm) {
  check_dirichlet(phi);
  if (static_cast<int>(c.occupancy.size()) != g.nx * g.ny)
    throw std::invalid_argument("configuration does not match the grid");

  System s = build_system(g, m, c, phi, st);
  std::vector<double> x(s.ndof(), 0.0);

  if (warm) {
    if (warm->nx != g.nx || warm->ny != g.ny)
      throw std::invalid_argument("warm start field does not match the grid");
    for (int d = 0; d < s.ndof(); ++d) x[d] = warm->v[s.cell_of[d]];
  } else {
    cold_start(s, g, phi, x);
  }

  SolveReport rep = newton_minimize(s, x, st);
  if (!rep.converged) {
    throw std::runtime_error("potential solve did not converge (" + rep.note +
                             "): residual " + std::to_string(rep.grad_norm) +
                             " vs tolerance " + std::to_string(rep.tol));
  }

  PotentialField out;
  out.config = c;
  out.report = std::move(rep);
  out.u.nx = g.nx;
  out.u.ny = g.ny;
  std::vector<double> ufull(g.nx * g.ny);
  expand(s, x, ufull);
  out.u_raw.nx = g.nx;
  out.u_raw.ny = g.ny;
  out.u_raw.v = ufull;
  // The stored field is the physical one: zero off the occupied region (the
  // small negative values the outer ring takes while the profile crosses the
  // isoline live on in u_raw only), data extension on the body, and solver
  // dust snapped back into the data range.
  const double slack = 1e-10 * std::max(phi.sup, 1.0);
  for (int cc = 0; cc < g.nx * g.ny; ++cc) {
    double& v = ufull[cc];
    if (!g.body_mask[cc] && !c.occupancy[cc]) {
      v = 0.0;
      continue;
    }
    if (v < 0.0 && v > -slack) v = 0.0;
    if (v > phi.sup && v < phi.sup + slack) v = phi.sup;
  }
  out.u.v = std::move(ufull);
  // Report <A(Du), Du> rather than the (1/p)-scaled objective; at the
  // minimizer the two differ exactly by the factor p.
  out.report.energy *= m.p;
  return out;
}

double energy(const GridDomain& g, const Medium& m, const Field& u,
              const Configuration* conf, const std::vector<int>* region) {
  if (u.nx != g.nx || u.ny != g.ny)
    throw std::invalid_argument("field does not match the grid");
  const QpTables& tb = tables();
  const double h = g.h, wq = h * h / 4.0, inv_h = 1.0 / h;
  const double p = m.p;
  const std::vector<double> bsd = body_band_sdist(g);
  const Field* ls_ptr =
      (conf && conf->level_set) ? &*conf->level_set : nullptr;

  std::vector<char> in_region;
  if (region) {
    in_region.assign(g.nx * g.ny, 0);
    for (int cc : *region) in_region[cc] = 1;
  }

  double total = 0.0;
  for (int ey = 0; ey < g.ny - 1; ++ey) {
    for (int ex = 0; ex < g.nx - 1; ++ex) {
      const int cells[4] = {g.idx(ex, ey), g.idx(ex + 1, ey),
                            g.idx(ex, ey + 1), g.idx(ex + 1, ey + 1)};
      bool any_fluid = false;
      for (int k = 0; k < 4; ++k)
        if (!g.body_mask[cells[k]]) any_fluid = true;
      if (!any_fluid) continue;

      double share = 1.0;
      if (region) {
        int hits = 0;
        for (int k = 0; k < 4; ++k) hits += in_region[cells[k]];
        if (hits == 0) continue;
        share = hits / 4.0;
      }

      const double frac = elem_fraction(g, bsd, ls_ptr, ex, ey);
      if (frac <= 0.0) continue;

      double elem = 0.0;
      for (int k = 0; k < 4; ++k) {
        double gx = 0, gy = 0, a = 0;
        for (int c = 0; c < 4; ++c) {
          gx += tb.dn[k][c][0] * u.v[cells[c]];
          gy += tb.dn[k][c][1] * u.v[cells[c]];
          a += tb.nv[k][c] * m.coeff.v[cells[c]];
        }
        gx *= inv_h;
        gy *= inv_h;
        const double w2 = gx * gx + gy * gy;
        if (w2 > 0.0) elem += a * std::pow(w2, p / 2.0) * wq;
      }
      total += share * frac * elem;
    }
  }
  return total;
}

PotentialField harmonic_replacement(const GridDomain& g, const Medium& m,
                                    const PotentialField& field, Vec2 center,
                                    double radius,
                                    const SolverSettings& st) {
  if (!(radius > 0.0)) throw std::invalid_argument("replacement ball radius");
  const BodyProjection pr = g.project_to_body(center);
  if (pr.sdist < radius + 2.0 * g.h) {
    throw std::invalid_argument(
        "replacement ball reaches the body boundary collar");
  }

  System s;
  s.g = &g;
  s.med = &m;
  s.p = m.p;
  s.linear = (m.p == 2.0);
  double sup_u = 0.0;
  for (double v : field.u.v) sup_u = std::max(sup_u, std::fabs(v));
  double eta = m.eta;
  if (eta <= 0.0 && m.p < 2.0) eta = st.eta_scale * std::max(sup_u, 1e-300) / g.h;
  s.eta2 = (m.p < 2.0 || m.eta > 0.0) ? eta * eta : 0.0;
  if (m.p > 2.0) {
    const double eh = 1e-7 * std::max(sup_u, 1e-300) / g.h;
    s.eta2_hess = eh * eh;
  }

  const int n = g.nx * g.ny;
  s.role.assign(n, Role::FixedValue);
  s.fixed = field.u.v;
  s.dof_of.assign(n, -1);
  s.coeff_cell = m.coeff.v;

  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int cc = g.idx(i, j);
      if (g.body_mask[cc] || g.on_rim(i, j)) continue;
      if (dist(g.cell_center(i, j), center) <= radius) {
        s.role[cc] = Role::Free;
        s.dof_of[cc] = static_cast<int>(s.cell_of.size());
        s.cell_of.push_back(cc);
      }
    }
  }
  if (s.cell_of.empty())
    throw std::invalid_argument("replacement ball contains no cells");

  const std::vector<double> bsd = body_band_sdist(g);
  const Field* ls_ptr =
      field.config.level_set ? &*field.config.level_set : nullptr;
  const int nex = g.nx - 1;
  for (int ey = 0; ey < g.ny - 1; ++ey) {
    for (int ex = 0; ex < nex; ++ex) {
      const int cells[4] = {g.idx(ex, ey), g.idx(ex + 1, ey),
                            g.idx(ex, ey + 1), g.idx(ex + 1, ey + 1)};
      bool any_free = false;
      for (int k = 0; k < 4; ++k)
        if (s.role[cells[k]] == Role::Free) any_free = true;
      if (!any_free) continue;
      const double frac = elem_fraction(g, bsd, ls_ptr, ex, ey);
      if (frac <= 0.0) continue;
      s.elems.push_back(ey * nex + ex);
      s.elem_w.push_back(frac);
    }
  }
  s.vhat.resize(n);
  s.hraw.resize(n);

  std::vector<double> x(s.ndof());
  for (int d = 0; d < s.ndof(); ++d) x[d] = field.u.v[s.cell_of[d]];
  SolveReport rep = newton_minimize(s, x, st);
  if (!rep.converged) {
    throw std::runtime_error("replacement solve did not converge: " + rep.note);
  }

  PotentialField out;
  out.config = field.config;
  out.u = field.u;
  for (int d = 0; d < s.ndof(); ++d) out.u.v[s.cell_of[d]] = x[d];
  out.u_raw = field.u_raw.v.empty() ? out.u : field.u_raw;
  if (!field.u_raw.v.empty())
    for (int d = 0; d < s.ndof(); ++d) out.u_raw.v[s.cell_of[d]] = x[d];
  out.report = std::move(rep);
  out.report.energy = energy(g, m, out.u, &out.config);
  return out;
}

ResidualMeasure residual_measure(const GridDomain& g, const Medium& m,
                                 const PotentialField& field) {
  const Field& u = field.u;
  if (u.nx != g.nx || u.ny != g.ny)
    throw std::invalid_argument("field does not match the grid");
  const QpTables& tb = tables();
  const double h = g.h, wq = h * h / 4.0, inv_h = 1.0 / h;
  const double p = m.p, q = (p - 2.0) / 2.0;
  const bool linear = (p == 2.0);

  const std::vector<double> bsd = body_band_sdist(g);
  const Field* ls_ptr =
      field.config.level_set ? &*field.config.level_set : nullptr;

  std::vector<double> raw(g.nx * g.ny, 0.0);
  for (int ey = 0; ey < g.ny - 1; ++ey) {
    for (int ex = 0; ex < g.nx - 1; ++ex) {
      const int cells[4] = {g.idx(ex, ey), g.idx(ex + 1, ey),
                            g.idx(ex, ey + 1), g.idx(ex + 1, ey + 1)};
      bool any_fluid = false;
      for (int k = 0; k < 4; ++k)
        if (!g.body_mask[cells[k]]) any_fluid = true;
      if (!any_fluid) continue;
      const double frac = elem_fraction(g, bsd, ls_ptr, ex, ey);
      if (frac <= 0.0) continue;

      for (int k = 0; k < 4; ++k) {
        double gx = 0, gy = 0, a = 0;
        for (int c = 0; c < 4; ++c) {
          gx += tb.dn[k][c][0] * u.v[cells[c]];
          gy += tb.dn[k][c][1] * u.v[cells[c]];
          a += tb.nv[k][c] * m.coeff.v[cells[c]];
        }
        gx *= inv_h;
        gy *= inv_h;
        const double w2 = gx * gx + gy * gy;
        double fac;
        if (linear) {
          fac = a * wq * frac;
        } else if (w2 > 0.0) {
          fac = a * std::pow(w2, q) * wq * frac;
        } else {
          continue;
        }
        for (int c = 0; c < 4; ++c) {
          raw[cells[c]] +=
              fac * (gx * tb.dn[k][c][0] + gy * tb.dn[k][c][1]) * inv_h;
        }
      }
    }
  }

  ResidualMeasure out;
  out.density.nx = g.nx;
  out.density.ny = g.ny;
  out.density.v.resize(raw.size());
  const double inv_area = 1.0 / (h * h);
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.density.v[i] = -raw[i] * inv_area;

  // Total flux absorbed at the body: the weak residual summed over the body
  // cells and the first fluid ring. That set covers every trace-pin stencil
  // on the body boundary, so the sum equals the full pin-reaction total; at
  // stationarity the cells further out contribute nothing.
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int cc = g.idx(i, j);
      bool in_ring = g.body_mask[cc] != 0;
      for (int dj = -1; dj <= 1 && !in_ring; ++dj)
        for (int di = -1; di <= 1 && !in_ring; ++di) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny) continue;
          if (g.body_mask[g.idx(ii, jj)]) in_ring = true;
        }
      if (in_ring) out.total += raw[cc];
    }
  }

  // Interior means: occupied, clear of the body collar and clear of the free
  // boundary by the reach of the interface coupling (trace-pin stencils plus
  // one element), so the converged gradient vanishes there.
  const CellMask& occ = field.config.occupancy;
  const int reach = 8;
  std::vector<char> near_bdry(g.nx * g.ny, 0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (!occ[g.idx(i, j)] || g.on_rim(i, j)) near_bdry[g.idx(i, j)] = 1;
  for (int pass = 0; pass < reach; ++pass) {
    std::vector<char> next = near_bdry;
    for (int j = 1; j < g.ny - 1; ++j)
      for (int i = 1; i < g.nx - 1; ++i) {
        if (near_bdry[g.idx(i, j)]) continue;
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di)
            if (near_bdry[g.idx(i + di, j + dj)]) next[g.idx(i, j)] = 1;
      }
    near_bdry.swap(next);
  }
  double sup = 0.0;
  for (int cc = 0; cc < g.nx * g.ny; ++cc) {
    if (g.body_mask[cc] || near_bdry[cc]) continue;
    if (g.body_cell_distance(cc) <= 5.0 * h) continue;
    sup = std::max(sup, std::fabs(out.density.v[cc]));
  }
  out.interior_sup = sup;
  out.tol_residual = 10.0 * field.report.tol * inv_area;
  return out;
}

FluxProfile flux_profile(const GridDomain& g, const Medium& m,
                         const PotentialField& field) {
  // The difference stencil reaches three cells into the fluid (plus the
  // interpolation spread), so the body collar must be occupied that deep.
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int cc = g.idx(i, j);
      if (g.body_mask[cc] || field.config.occupancy[cc]) continue;
      if (g.body_cell_distance(cc) <= 4.0 * g.h) {
        throw std::runtime_error(
            "flux profile needs an occupied collar of four cells around the "
            "body");
      }
    }
  }

  FluxProfile out;
  out.samples = g.body_samples;
  double a_lo = m.coeff.v.empty() ? 1.0 : m.coeff.v[0], a_hi = a_lo;
  for (double a : m.coeff.v) {
    a_lo = std::min(a_lo, a);
    a_hi = std::max(a_hi, a);
  }
  // With a coefficient that varies through the collar and no smoothing, the
  // pointwise composition below is a formal evaluation only.
  out.formal = !m.collar_smooth && (a_hi - a_lo > 1e-12 * std::fabs(a_hi));
  const std::size_t ns = out.samples.size();
  out.value.resize(ns);
  out.arclen.resize(ns);

  const Vec2 origin = g.origin;
  // Normal derivative at the boundary: extrapolate the centered difference
  // quotients at offsets h and 2h along the outward normal. The boundary
  // value enters with a small coefficient, so the profile's error layer next
  // to the trace pins barely leaks into the quotient.
  std::vector<Vec2> grads(ns);
  for (std::size_t k = 0; k < ns; ++k) {
    const BoundarySample& bs = out.samples[k];
    const Vec2 n = Vec2{-bs.normal.x, -bs.normal.y};  // outward
    const double u0 = sample_bilinear(field.u, g.h, origin, bs.point);
    const double u1 =
        sample_bilinear(field.u, g.h, origin, bs.point + n * g.h);
    const double u2 =
        sample_bilinear(field.u, g.h, origin, bs.point + n * (2.0 * g.h));
    const double u3 =
        sample_bilinear(field.u, g.h, origin, bs.point + n * (3.0 * g.h));
    const double dn = (-2.0 * u0 + u1 + 2.0 * u2 - u3) / (2.0 * g.h);

    // Tangential derivative of the trace along the boundary.
    const std::size_t kp = (k + 1) % ns, km = (k + ns - 1) % ns;
    const double ds = dist(out.samples[kp].point, out.samples[km].point);
    double dt = 0.0;
    if (ds > 1e-14) {
      const double up =
          sample_bilinear(field.u, g.h, origin, out.samples[kp].point);
      const double um =
          sample_bilinear(field.u, g.h, origin, out.samples[km].point);
      dt = (up - um) / ds;
    }
    grads[k] = n * dn + perp(n) * dt;
  }

  double s_acc = 0.0;
  for (std::size_t k = 0; k < ns; ++k) {
    const BoundarySample& bs = out.samples[k];
    // Average the reconstructed gradient with the two neighbouring samples
    // (about one cell of arc) to damp the grid-scale wiggle the difference
    // quotient amplifies.
    const std::size_t kp = (k + 1) % ns, km = (k + ns - 1) % ns;
    const Vec2 grad = (grads[km] + grads[k] + grads[kp]) * (1.0 / 3.0);
    const int ci = std::clamp(
        static_cast<int>(std::floor((bs.point.x - origin.x) / g.h)), 0,
        g.nx - 1);
    const int cj = std::clamp(
        static_cast<int>(std::floor((bs.point.y - origin.y) / g.h)), 0,
        g.ny - 1);
    const Vec2 flux_vec = eval_A(m, g.idx(ci, cj), grad);
    out.value[k] = dot(flux_vec, bs.normal);  // against the inward normal
    out.arclen[k] = s_acc + 0.5 * bs.weight;
    s_acc += bs.weight;
    out.integral += out.value[k] * bs.weight;
  }

  double vmax = 0.0;
  for (double v : out.value) vmax = std::max(vmax, std::fabs(v));
  const double tol = 1e-9 * (1.0 + vmax);
  for (double v : out.value)
    if (v < -tol) ++out.negative_count;
  return out;
}

Field gradient_magnitude(const GridDomain& g, const Field& u) {
  if (u.nx != g.nx || u.ny != g.ny)
    throw std::invalid_argument("field does not match the grid");
  Field out;
  out.nx = g.nx;
  out.ny = g.ny;
  out.v.assign(g.nx * g.ny, 0.0);
  std::vector<double> acc(g.nx * g.ny, 0.0);
  std::vector<int> cnt(g.nx * g.ny, 0);

  const double inv2h = 1.0 / (2.0 * g.h);
  for (int ey = 0; ey < g.ny - 1; ++ey) {
    for (int ex = 0; ex < g.nx - 1; ++ex) {
      const int c00 = g.idx(ex, ey), c10 = g.idx(ex + 1, ey);
      const int c01 = g.idx(ex, ey + 1), c11 = g.idx(ex + 1, ey + 1);
      bool any_fluid = !g.body_mask[c00] || !g.body_mask[c10] ||
                       !g.body_mask[c01] || !g.body_mask[c11];
      if (!any_fluid) continue;
      const double gx = (u.v[c10] + u.v[c11] - u.v[c00] - u.v[c01]) * inv2h;
      const double gy = (u.v[c01] + u.v[c11] - u.v[c00] - u.v[c10]) * inv2h;
      const double mag = std::sqrt(gx * gx + gy * gy);
      for (int cc : {c00, c10, c01, c11}) {
        if (g.body_mask[cc]) continue;
        acc[cc] += mag;
        cnt[cc] += 1;
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.v[i] = cnt[i] ? acc[i] / cnt[i] : 0.0;
  return out;
}

}  // namespace insulopt
