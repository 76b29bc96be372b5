#pragma once

#include <cmath>

namespace insulopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  Vec2& operator+=(Vec2 b) { x += b.x; y += b.y; return *this; }
  Vec2& operator-=(Vec2 b) { x -= b.x; y -= b.y; return *this; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }
inline double norm(Vec2 a) { return std::sqrt(norm2(a)); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

// Unit vector along a; the zero vector maps to itself.
inline Vec2 normalized(Vec2 a) {
  double n = norm(a);
  return n > 0.0 ? a / n : a;
}

// Counterclockwise rotation by 90 degrees.
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

}  // namespace insulopt
