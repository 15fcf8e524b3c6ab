#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sld/error.hpp"

namespace sld {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Order-independent sum of doubles. Each term is rounded to a fixed grid of
/// 2^-40 and accumulated in a 128-bit integer, so the result does not depend
/// on summation order and negating every term negates the sum exactly.
class ExactSum {
public:
  void add(double v) { acc_ += static_cast<__int128>(std::nearbyint(std::ldexp(v, kShift))); }
  double value() const { return std::ldexp(static_cast<double>(acc_), -kShift); }

private:
  static constexpr int kShift = 40;
  __int128 acc_ = 0;
};

struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  /// Builds a plane with a normalized copy of `normal`.
  static Plane through(const Vec3& point, const Vec3& normal) {
    const double n = normal.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw ParameterError("plane normal must be non-zero");
    }
    return Plane{point, normal / n};
  }

  double signed_distance(const Vec3& p) const { return (p - point).dot(normal); }
  Vec3 project(const Vec3& p) const { return p - signed_distance(p) * normal; }
};

struct Polyline {
  std::vector<Vec3> points;
  bool closed = false;

  std::size_t size() const { return points.size(); }

  double length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
      total += (points[i] - points[i - 1]).norm();
    }
    if (closed && points.size() > 1) {
      total += (points.front() - points.back()).norm();
    }
    return total;
  }
};

/// Open-polyline arc-length resampling. `count` points, endpoints included;
/// a single requested point is the arc-length midpoint.
inline std::vector<Vec3> resample_by_arc_length(std::span<const Vec3> pts, int count) {
  if (count < 1) {
    throw ParameterError("resample count must be >= 1");
  }
  if (pts.empty()) {
    throw ValidationError("cannot resample an empty polyline");
  }
  std::vector<double> cumulative(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cumulative[i] = cumulative[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  const double total = cumulative.back();
  auto at = [&](double s) -> Vec3 {
    if (s <= 0.0) return pts.front();
    if (s >= total) return pts.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    const std::size_t hi = static_cast<std::size_t>(it - cumulative.begin());
    const std::size_t lo = hi - 1;
    const double seg = cumulative[hi] - cumulative[lo];
    const double t = seg > 0.0 ? (s - cumulative[lo]) / seg : 0.0;
    return pts[lo] + t * (pts[hi] - pts[lo]);
  };
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    out.push_back(at(0.5 * total));
    return out;
  }
  for (int i = 0; i < count; ++i) {
    out.push_back(at(total * static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  return out;
}

inline double polyline_length(std::span<const Vec3> pts) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  return total;
}

inline Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

/// Squared distance from `p` to an open polyline (a single point is allowed).
inline double squared_distance_to_polyline(const Vec3& p, std::span<const Vec3> pts) {
  if (pts.size() == 1) return (p - pts.front()).squaredNorm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    best = std::min(best, (p - closest_point_on_segment(p, pts[i - 1], pts[i])).squaredNorm());
  }
  return best;
}

/// Arc length from the start of `pts` to the point of the polyline closest to
/// `p` (earliest segment on ties).
inline double arclength_of_closest(const Vec3& p, std::span<const Vec3> pts) {
  double best = std::numeric_limits<double>::infinity(), at = 0.0, run = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3 q = closest_point_on_segment(p, pts[i - 1], pts[i]);
    const double d = (p - q).squaredNorm();
    if (d < best) {
      best = d;
      at = run + (q - pts[i - 1]).norm();
    }
    run += (pts[i] - pts[i - 1]).norm();
  }
  return at;
}

/// Closest point on triangle (a, b, c) to p, by Voronoi-region classification.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + (d1 / (d1 - d3)) * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + (d2 / (d2 - d6)) * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct RayTriangleHit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
};

/// Watertight ray/triangle test: edges shared by two triangles are never
/// missed nor hit twice. Only hits with t > 0 are reported.
inline std::optional<RayTriangleHit> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                                            const Vec3& b, const Vec3& c) {
  int kz = 0;
  dir.cwiseAbs().maxCoeff(&kz);
  int kx = (kz + 1) % 3;
  int ky = (kx + 1) % 3;
  if (dir[kz] < 0.0) std::swap(kx, ky);
  const double sx = dir[kx] / dir[kz];
  const double sy = dir[ky] / dir[kz];
  const double sz = 1.0 / dir[kz];

  const Vec3 pa = a - origin;
  const Vec3 pb = b - origin;
  const Vec3 pc = c - origin;
  const double ax = pa[kx] - sx * pa[kz];
  const double ay = pa[ky] - sy * pa[kz];
  const double bx = pb[kx] - sx * pb[kz];
  const double by = pb[ky] - sy * pb[kz];
  const double cx = pc[kx] - sx * pc[kz];
  const double cy = pc[ky] - sy * pc[kz];

  double u = cx * by - cy * bx;
  double v = ax * cy - ay * cx;
  double w = bx * ay - by * ax;
  if (u == 0.0 || v == 0.0 || w == 0.0) {
    using LD = long double;
    u = static_cast<double>(LD(cx) * LD(by) - LD(cy) * LD(bx));
    v = static_cast<double>(LD(ax) * LD(cy) - LD(ay) * LD(cx));
    w = static_cast<double>(LD(bx) * LD(ay) - LD(by) * LD(ax));
  }
  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;
  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;

  const double az = sz * pa[kz];
  const double bz = sz * pb[kz];
  const double cz = sz * pc[kz];
  const double t = (u * az + v * bz + w * cz) / det;
  if (!(t > 0.0)) return std::nullopt;

  const double inv = 1.0 / det;
  RayTriangleHit hit;
  hit.t = t;
  hit.point = (u * inv) * a + (v * inv) * b + (w * inv) * c;
  return hit;
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Smallest interior angle of a triangle, radians.
inline double triangle_min_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  auto angle = [](const Vec3& p, const Vec3& q, const Vec3& r) {
    const Vec3 u = q - p;
    const Vec3 v = r - p;
    return std::atan2(u.cross(v).norm(), u.dot(v));
  };
  return std::min({angle(a, b, c), angle(b, c, a), angle(c, a, b)});
}

} // namespace sld
