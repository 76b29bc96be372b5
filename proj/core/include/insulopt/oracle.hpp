#pragma once

namespace insulopt {

// Closed-form radial potential in a homogeneous medium (coefficient a,
// exponent p) between concentric circles: value `data` on radius r0,
// zero on radius R > r0. Used to calibrate the discrete solvers.
//
//   p = 2:    u(r) = data * log(R/r) / log(R/r0)
//   p != 2:   u(r) = data * (R^m - r^m) / (R^m - r0^m),  m = (p-2)/(p-1)
struct RadialSolution {
  double p = 2.0;
  double a = 1.0;
  double r0 = 0.0;
  double R = 0.0;
  double data = 1.0;

  double u(double r) const;
  double dudr(double r) const;           // negative on (r0, R)
  double grad_mag(double r) const;       // |Du| = -dudr
  double flux_density(double r) const;   // <A(Du), mu>, mu pointing inward
  double flux_integral() const;          // over any circle; r-independent
  double energy() const;                 // integral of a |Du|^p, = data * flux
  double lip_sup() const;                // sup |Du|, attained at r0
};

RadialSolution radial_annulus(double p, double a, double r0, double R,
                              double data);

// Outer radius of the centered annulus whose area between r0 and R equals
// the volume budget: R = sqrt(r0^2 + budget / pi).
double saturation_radius(double r0, double budget);

}  // namespace insulopt
