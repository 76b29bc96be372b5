#pragma once

// Shared internals of the energy-minimization solvers (potential, phase
// penalty, obstacle). Not installed; include from core sources only.

#include <cstdint>
#include <functional>
#include <vector>

#include "insulopt/pde.hpp"

namespace insulopt::detail {

enum class Role : std::uint8_t { Free, FixedZero, FixedValue };

// Quadratic tie of the bilinear trace at one boundary sample to its target
// value. The penalty weight scales like sigma * a * ds / h, which keeps the
// effective Robin length of the boundary condition at h / sigma -- far below
// the discretization error -- while the objective stays strictly convex.
struct TracePin {
  int cells[4];
  double w[4];
  double target = 0.0;
  double kpen = 0.0;
};

constexpr double kTraceSigma = 1000.0;

struct System {
  const GridDomain* g = nullptr;
  const Medium* med = nullptr;
  double p = 2.0;
  double eta2 = 0.0;       // regularization inside the energy (p < 2)
  double eta2_hess = 0.0;  // extra regularization for curvature only (p > 2)
  bool linear = false;     // p == 2 fast path

  std::vector<Role> role;
  std::vector<double> fixed;  // value for FixedZero / FixedValue cells
  std::vector<int> dof_of;    // cell -> dof index or -1
  std::vector<int> cell_of;
  std::vector<int> elems;  // active elements, id = ey * (nx - 1) + ex
  std::vector<double> elem_w;  // fluid area fraction per active element
  std::vector<double> coeff_cell;
  std::vector<TracePin> pins;

  // Optional pointwise term: F += scale[k] * value(u at cells[k]). The
  // callback fills value, slope and curvature at the given u; negative
  // curvature is clamped to zero so the Newton model stays convex. Carried
  // by the phase-penalty energies, empty for the plain potential solve.
  struct CellTerm {
    std::function<void(double u, double& val, double& dval, double& curv)> fn;
    std::vector<int> cells;
    std::vector<double> scale;
  };
  CellTerm cell_term;

  // Workspaces sized on build.
  std::vector<double> qp_data;  // per active element and qp: gx, gy, c1, c2
  std::vector<double> cell_curv;
  std::vector<double> vhat, hraw;

  int ndof() const { return static_cast<int>(cell_of.size()); }
};

void expand(const System& s, const std::vector<double>& x,
            std::vector<double>& u);
void expand_linear(const System& s, const std::vector<double>& x,
                   std::vector<double>& u);
void reduce(const System& s, const std::vector<double>& raw,
            std::vector<double>& red);

// Objective F(u) = (1/p) * sum_qp a * (|g|^2 + eta^2)^{p/2} * h^2/4, plus the
// trace pins and the optional cell term. Its raw gradient is the weak form
// of the medium operator.
double assemble(System& s, const std::vector<double>& u,
                std::vector<double>* graw, bool store_qp);
void hess_apply(System& s, const std::vector<double>& v,
                std::vector<double>& out);
void build_diag(System& s, std::vector<double>& diag);
int cg_solve(System& s, const std::vector<double>& b,
             const std::vector<double>& diag, double rtol, int kmax,
             std::vector<double>& d);

// Bilinear stencil of cell centers around p; false if it leaves the grid.
bool stencil_at(const GridDomain& g, Vec2 p, int cells[4], double w[4]);

// Signed distance to the body boundary per cell center, exact in a band of
// about three cells around the interface and saturated far away.
std::vector<double> body_band_sdist(const GridDomain& g);

// Nonnegative-area fraction of one element from its corner values (order
// 00, 10, 01, 11), exact for the split into four triangles about the center.
double quad_frac(const double f[4]);

// Fluid area fraction of element (ex, ey): inside the body's complement and,
// when a level set is given, inside its positive phase.
double elem_fraction(const GridDomain& g, const std::vector<double>& bsd,
                     const Field* ls, int ex, int ey);

System build_system(const GridDomain& g, const Medium& m,
                    const Configuration& c, const DirichletData& phi,
                    const SolverSettings& st);

// Linear decay of the mean boundary value with distance from the body; the
// stock initial guess of the cold solves.
void cold_start(const System& s, const GridDomain& g, const DirichletData& phi,
                std::vector<double>& x);

SolveReport newton_minimize(System& s, std::vector<double>& x,
                            const SolverSettings& st);

void check_dirichlet(const DirichletData& phi);

}  // namespace insulopt::detail
