#include "insulopt/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace insulopt {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double RadialSolution::u(double r) const {
  if (r <= r0) return data;
  if (r >= R) return 0.0;
  if (p == 2.0) return data * std::log(R / r) / std::log(R / r0);
  const double m = (p - 2.0) / (p - 1.0);
  return data * (std::pow(R, m) - std::pow(r, m)) /
         (std::pow(R, m) - std::pow(r0, m));
}

double RadialSolution::dudr(double r) const {
  if (r < r0 || r > R) return 0.0;
  if (p == 2.0) return -data / (r * std::log(R / r0));
  const double m = (p - 2.0) / (p - 1.0);
  return -data * m * std::pow(r, m - 1.0) /
         (std::pow(R, m) - std::pow(r0, m));
}

double RadialSolution::grad_mag(double r) const { return -dudr(r); }

double RadialSolution::flux_density(double r) const {
  return a * std::pow(grad_mag(r), p - 1.0);
}

double RadialSolution::flux_integral() const {
  return 2.0 * kPi * r0 * flux_density(r0);
}

double RadialSolution::energy() const { return data * flux_integral(); }

double RadialSolution::lip_sup() const { return grad_mag(r0); }

RadialSolution radial_annulus(double p, double a, double r0, double R,
                              double data) {
  if (!(p > 1.0) || !(a > 0.0) || !(r0 > 0.0) || !(R > r0) || !(data > 0.0))
    throw std::invalid_argument("radial annulus parameters");
  RadialSolution s;
  s.p = p;
  s.a = a;
  s.r0 = r0;
  s.R = R;
  s.data = data;
  if (p != 2.0) {
    const double m = (p - 2.0) / (p - 1.0);
    if (std::fabs(std::pow(R, m) - std::pow(r0, m)) < 1e-300)
      throw std::invalid_argument("degenerate radial profile");
  }
  return s;
}

double saturation_radius(double r0, double budget) {
  if (!(r0 > 0.0) || !(budget >= 0.0))
    throw std::invalid_argument("saturation radius parameters");
  return std::sqrt(r0 * r0 + budget / kPi);
}

}  // namespace insulopt
