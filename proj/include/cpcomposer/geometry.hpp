#pragma once

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace cpc {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // row-major

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double length(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return length(a - b); }
inline Vec3 normalized(const Vec3& a) { return (1.0 / length(a)) * a; }

inline Vec3 centroid(std::span<const Vec3> xs) {
  Vec3 c{};
  for (const auto& x : xs) c = c + x;
  return xs.empty() ? c : (1.0 / static_cast<double>(xs.size())) * c;
}

inline Vec3 apply(const Mat3& r, const Vec3& x) { return {dot(r[0], x), dot(r[1], x), dot(r[2], x)}; }

inline double determinant(const Mat3& m) { return dot(m[0], cross(m[1], m[2])); }

/// Signed torsion of a-b-c-d in (-pi, pi]; 0 for the planar cis arrangement.
inline double dihedral(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 b0 = a - b;
  const Vec3 b1 = c - b;
  const Vec3 b2 = d - c;
  const Vec3 n1 = normalized(b1);
  const Vec3 v = b0 - dot(b0, n1) * n1;
  const Vec3 w = b2 - dot(b2, n1) * n1;
  const double x = dot(v, w);
  const double y = dot(cross(n1, v), w);
  double t = std::atan2(y, x);
  if (t <= -M_PI) t = M_PI;
  return t;
}

/// Places d so that |cd| = bond, angle(b,c,d) = angle and torsion(a,b,c,d) = torsion.
inline Vec3 place_atom(const Vec3& a, const Vec3& b, const Vec3& c, double bond, double angle, double torsion) {
  const Vec3 bc = normalized(c - b);
  const Vec3 n = normalized(cross(b - a, bc));
  const Vec3 m = cross(n, bc);
  const double x = -bond * std::cos(angle);
  const double y = bond * std::sin(angle) * std::cos(torsion);
  const double z = bond * std::sin(angle) * std::sin(torsion);
  return c + x * bc + y * m + z * n;
}

/// Uniformly random orthogonal matrix; a reflection when `reflect` is set.
template <class Rng>
Mat3 random_orthogonal(Rng& rng, bool reflect = false) {
  std::normal_distribution<double> normal;
  Vec3 q{normal(rng), normal(rng), normal(rng)};
  double w = normal(rng);
  const double s = std::sqrt(w * w + dot(q, q));
  w /= s;
  q = (1.0 / s) * q;
  const double x = q[0], y = q[1], z = q[2];
  Mat3 r{{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  if (reflect) r[2] = -1.0 * r[2];
  return r;
}

}  // namespace cpc
