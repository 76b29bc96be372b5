#include "insulopt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace insulopt {

namespace {

double lambda_root(const Medium& m, double lambda_pen) {
  if (lambda_pen <= 0.0)
    throw std::invalid_argument("diagnostics: penalty scale must be positive");
  return std::pow(lambda_pen, 1.0 / m.p);
}

// At most `cap` indices, evenly strided, deterministic.
std::vector<int> subsample(int n, int cap) {
  std::vector<int> out;
  const int stride = std::max(1, n / cap);
  for (int i = 0; i < n; i += stride) out.push_back(i);
  return out;
}

void require_radii(const GridDomain& g, const std::vector<double>& radii) {
  if (radii.empty())
    throw std::invalid_argument("diagnostics: no radii given");
  for (double r : radii)
    if (r < 4.0 * g.h - 1e-12)
      throw std::invalid_argument("diagnostics: radii must be >= 4h");
}

// Index ranges [begin, end) of each chain's samples (they are contiguous).
std::vector<std::pair<int, int>> chain_ranges(const FreeBoundary& fb) {
  std::vector<std::pair<int, int>> ranges;
  const int n = static_cast<int>(fb.samples.size());
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && fb.chain_of[j] == fb.chain_of[i]) ++j;
    ranges.emplace_back(i, j);
    i = j;
  }
  return ranges;
}

// Length of the part of segment [a, b] inside the ball |X - z| <= r.
double segment_in_ball(Vec2 a, Vec2 b, Vec2 z, double r) {
  const Vec2 d = b - a;
  const double A = norm2(d);
  if (A == 0.0) return 0.0;
  const Vec2 az = a - z;
  const double B = 2.0 * dot(d, az);
  const double C = norm2(az) - r * r;
  const double disc = B * B - 4.0 * A * C;
  if (disc <= 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double t0 = std::max(0.0, (-B - sq) / (2.0 * A));
  const double t1 = std::min(1.0, (-B + sq) / (2.0 * A));
  return t1 > t0 ? (t1 - t0) * std::sqrt(A) : 0.0;
}

// Calls fn(cell index, center) for every cell whose center lies in the ball.
template <class F>
void for_cells_in_ball(const GridDomain& g, Vec2 z, double r, F&& fn) {
  const int i0 = std::max(0, (int)std::floor((z.x - r - g.origin.x) / g.h) - 1);
  const int i1 = std::min(g.nx - 1, (int)std::ceil((z.x + r - g.origin.x) / g.h));
  const int j0 = std::max(0, (int)std::floor((z.y - r - g.origin.y) / g.h) - 1);
  const int j1 = std::min(g.ny - 1, (int)std::ceil((z.y + r - g.origin.y) / g.h));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const Vec2 x = g.cell_center(i, j);
      if (dist(x, z) <= r) fn(g.idx(i, j), x);
    }
}

double relative_gap(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
  return std::fabs(a - b) / scale;
}

}  // namespace

RegularityReport lipschitz_report(const GridDomain& g, const Medium& m,
                                  const PotentialField& field,
                                  double lambda_pen) {
  const double lr = lambda_root(m, lambda_pen);
  RegularityReport rep;
  const Field gm = gradient_magnitude(g, field.u);
  for (double v : gm.v) rep.lip_sup = std::max(rep.lip_sup, v);
  rep.lip_ratio = rep.lip_sup / lr;
  return rep;
}

RegularityReport nondegeneracy_report(const GridDomain& g, const Medium& m,
                                      const PotentialField& field,
                                      double lambda_pen,
                                      const std::vector<double>& radii) {
  const double lr = lambda_root(m, lambda_pen);
  require_radii(g, radii);
  const FreeBoundary fb = free_boundary_samples(g, field.config);

  RegularityReport rep;
  const double lo = 2.0 * g.h, hi = 8.0 * g.h;
  rep.nondeg_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.nx * g.ny; ++k) {
    if (!field.config.occupancy[k] || field.u[k] <= 0.0) continue;
    const Vec2 x = g.cell_center(k);
    const double d = distance_to_chains(fb.chains, x);
    if (d < lo || d > hi) continue;
    const double ratio = field.u[k] / d;
    rep.nondeg_rows.push_back({x, d, field.u[k], ratio});
    rep.nondeg_min = std::min(rep.nondeg_min, ratio);
  }
  if (rep.nondeg_rows.empty()) rep.nondeg_min = 0.0;
  rep.nondeg_scaled = rep.nondeg_min * lr;

  rep.strong_min = std::numeric_limits<double>::infinity();
  for (int si : subsample((int)fb.samples.size(), 48)) {
    const Vec2 z = fb.samples[si].point;
    for (double r : radii) {
      double sup = 0.0;
      for_cells_in_ball(g, z, r, [&](int k, Vec2) {
        sup = std::max(sup, field.u[k]);
      });
      rep.strong_rows.push_back({z, r, sup, sup / r});
      rep.strong_min = std::min(rep.strong_min, sup / r);
    }
  }
  if (rep.strong_rows.empty()) rep.strong_min = 0.0;
  return rep;
}

GeometryReport density_report(const GridDomain& g, const Configuration& c,
                              const std::vector<double>& radii) {
  require_radii(g, radii);
  const FreeBoundary fb = free_boundary_samples(g, c);

  double sep = std::numeric_limits<double>::infinity();
  for (const auto& s : fb.samples)
    sep = std::min(sep, g.project_to_body(s.point).sdist);
  for (double r : radii)
    if (r > 0.5 * sep + 1e-12)
      throw std::invalid_argument(
          "diagnostics: radius exceeds half the boundary separation");

  GeometryReport rep;
  rep.varsigma_est = std::numeric_limits<double>::infinity();
  for (int si : subsample((int)fb.samples.size(), 48)) {
    const Vec2 z = fb.samples[si].point;
    for (double r : radii) {
      int total = 0, occ = 0;
      for_cells_in_ball(g, z, r, [&](int k, Vec2) {
        ++total;
        occ += c.occupancy[k] ? 1 : 0;
      });
      const double f = total > 0 ? (double)occ / total : 0.0;
      rep.density_rows.push_back({z, r, f, 1.0 - f});
      rep.varsigma_est = std::min(rep.varsigma_est, std::min(f, 1.0 - f));

      double len = 0.0;
      for (const auto& ch : fb.chains) {
        const size_t n = ch.pts.size();
        const size_t m = ch.closed ? n : n - 1;
        for (size_t t = 0; t < m; ++t)
          len += segment_in_ball(ch.pts[t], ch.pts[(t + 1) % n], z, r);
      }
      rep.hausdorff_rows.push_back({z, r, len / r});
    }
  }
  if (rep.density_rows.empty()) rep.varsigma_est = 0.0;
  return rep;
}

TraceQ q_trace(const GridDomain& g, const Medium& m,
               const PotentialField& field) {
  const ResidualMeasure rm = residual_measure(g, m, field);
  const FreeBoundary fb = free_boundary_samples(g, field.config);
  const int ns = (int)fb.samples.size();
  const double band = 3.0 * g.h;

  // Residual mass near the boundary, attributed to the nearest sample.
  std::vector<double> mass(ns, 0.0);
  std::vector<char> seen(g.nx * g.ny, 0);
  for (int si = 0; si < ns; ++si) {
    for_cells_in_ball(g, fb.samples[si].point, band + g.h, [&](int k, Vec2 x) {
      if (seen[k]) return;
      seen[k] = 1;
      int best = -1;
      double dbest = 0.0;
      for (int sj = 0; sj < ns; ++sj) {
        const double d = dist(x, fb.samples[sj].point);
        if (best < 0 || d < dbest) {
          best = sj;
          dbest = d;
        }
      }
      if (dbest <= band) mass[best] += rm.density[k] * g.cell_area();
    });
  }

  TraceQ tq;
  tq.samples = fb.samples;
  tq.q.assign(ns, 0.0);
  tq.theta.assign(ns, 0.0);

  // Arc positions per chain, then a 3h sliding window around each sample.
  for (auto [b, e] : chain_ranges(fb)) {
    const int n = e - b;
    std::vector<double> pos(n);
    double L = 0.0;
    for (int i = 0; i < n; ++i) {
      pos[i] = L + 0.5 * fb.samples[b + i].weight;
      L += fb.samples[b + i].weight;
    }
    const bool closed = fb.chains[fb.chain_of[b]].closed;
    for (int i = 0; i < n; ++i) {
      double num = 0.0, den = 0.0;
      for (int j = 0; j < n; ++j) {
        double d = std::fabs(pos[i] - pos[j]);
        if (closed) d = std::min(d, L - d);
        if (d > band) continue;
        num += mass[b + j];
        den += fb.samples[b + j].weight;
      }
      tq.q[b + i] = den > 0.0 ? num / den : 0.0;
    }
  }

  tq.q_min = std::numeric_limits<double>::infinity();
  tq.q_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < ns; ++i) {
    const double a = sample_bilinear(m.coeff, g.h, g.origin,
                                     fb.samples[i].point);
    tq.theta[i] = std::pow(std::max(tq.q[i], 0.0) / a, 1.0 / (m.p - 1.0));
    tq.q_min = std::min(tq.q_min, tq.q[i]);
    tq.q_max = std::max(tq.q_max, tq.q[i]);
    tq.line_integral += tq.q[i] * fb.samples[i].weight;
  }
  std::vector<double> sorted = tq.q;
  std::sort(sorted.begin(), sorted.end());
  tq.q_inf_est = sorted[(size_t)(0.1 * (ns - 1))];
  return tq;
}

BlowupFit blowup_slope(const GridDomain& g, const PotentialField& field,
                       Vec2 z0, const std::vector<double>& radii) {
  require_radii(g, radii);
  const FreeBoundary fb = free_boundary_samples(g, field.config);
  const BoundarySample* best = nullptr;
  double dbest = 0.0;
  for (const auto& s : fb.samples) {
    const double d = dist(s.point, z0);
    if (!best || d < dbest) {
      best = &s;
      dbest = d;
    }
  }

  BlowupFit fit;
  fit.center = best->point;
  fit.inward = -1.0 * best->normal;

  std::vector<double> order = radii;
  std::sort(order.begin(), order.end(), std::greater<>());
  for (double r : order) {
    double sw = 0.0, sww = 0.0;
    int npos = 0, nmodel = 0, nball = 0;
    for_cells_in_ball(g, fit.center, r, [&](int k, Vec2 x) {
      ++nball;
      const double w = std::max(0.0, dot(x - fit.center, fit.inward));
      if (w > 0.0) ++nmodel;
      if (field.u[k] > 0.0) ++npos;
      sw += field.u[k] * w;
      sww += w * w;
    });
    if (npos < 8)
      throw std::runtime_error(
          "blow-up fit: too few positive cells in the ball");
    const double theta = sww > 0.0 ? sw / sww : 0.0;
    double ss = 0.0;
    for_cells_in_ball(g, fit.center, r, [&](int k, Vec2 x) {
      const double w = std::max(0.0, dot(x - fit.center, fit.inward));
      const double e = field.u[k] - theta * w;
      ss += e * e;
    });
    const double res = std::sqrt(ss / std::max(1, nball));
    fit.rows.push_back({r, theta, res, res / r, nmodel});
  }
  fit.theta_final = fit.rows.back().theta;
  fit.reduced_point =
      fit.rows.back().rel < 0.2 * std::max(fit.theta_final, 1e-300);
  return fit;
}

FluxBalance flux_balance_report(const GridDomain& g, const Medium& m,
                                const PotentialField& field) {
  FluxBalance fbal;
  fbal.flux_integral = flux_profile(g, m, field).integral;
  fbal.residual_total = residual_measure(g, m, field).total;
  try {
    const FreeBoundary fb = free_boundary_samples(g, field.config);
    fbal.trace_integral = q_trace(g, m, field).line_integral;
    fbal.has_trace = true;
    if (fb.clipped) fbal.note = "free boundary clipped by the box";
  } catch (const std::exception& e) {
    fbal.has_trace = false;
    fbal.note = std::string("trace route unavailable: ") + e.what();
  }

  fbal.max_mismatch = relative_gap(fbal.flux_integral, fbal.residual_total);
  if (fbal.has_trace) {
    fbal.max_mismatch = std::max(
        {fbal.max_mismatch,
         relative_gap(fbal.flux_integral, fbal.trace_integral),
         relative_gap(fbal.residual_total, fbal.trace_integral)});
  }
  fbal.balanced = fbal.max_mismatch <= 0.05;
  if (!field.report.converged) {
    if (!fbal.note.empty()) fbal.note += "; ";
    fbal.note += "solve report not converged";
  }
  return fbal;
}

}  // namespace insulopt
