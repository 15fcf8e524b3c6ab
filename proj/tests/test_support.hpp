#pragma once

// Independent reference implementations used as test oracles.

#include <gtest/gtest.h>

#include <limits>
#include <random>
#include <set>
#include <vector>

#include "sld/trimesh.hpp"

namespace test_support {

using sld::Face;
using sld::Index;
using sld::TriMesh;
using sld::Vec3;

inline void expect_same_mesh(const TriMesh& a, const TriMesh& b, double tol) {
  ASSERT_EQ(a.vertex_count(), b.vertex_count());
  ASSERT_EQ(a.face_count(), b.face_count());
  for (std::size_t i = 0; i < a.vertex_count(); ++i) {
    EXPECT_LE((a.vertices()[i] - b.vertices()[i]).norm(), tol) << "vertex " << i;
  }
  EXPECT_EQ(a.faces(), b.faces());
}

/// STL stores triangle soup, so vertex numbering is by first appearance.
/// Map each reloaded vertex to the original at the same position and compare
/// faces under that map.
inline void expect_same_mesh_renumbered(const TriMesh& a, const TriMesh& b, double tol) {
  ASSERT_EQ(a.vertex_count(), b.vertex_count());
  ASSERT_EQ(a.face_count(), b.face_count());
  std::vector<Index> map(b.vertex_count(), -1);
  for (std::size_t j = 0; j < b.vertex_count(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.vertex_count(); ++i) {
      const double d = (a.vertices()[i] - b.vertices()[j]).norm();
      if (d < best) {
        best = d;
        map[j] = static_cast<Index>(i);
      }
    }
    EXPECT_LE(best, tol) << "vertex " << j;
  }
  for (std::size_t f = 0; f < a.face_count(); ++f) {
    const Face& fb = b.faces()[f];
    const Face mapped{map[static_cast<std::size_t>(fb[0])], map[static_cast<std::size_t>(fb[1])],
                      map[static_cast<std::size_t>(fb[2])]};
    EXPECT_EQ(mapped, a.faces()[f]) << "face " << f;
  }
}

/// Random triangle soup over n vertices; may be non-manifold or disconnected.
inline TriMesh random_mesh(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> v;
  for (int i = 0; i < n; ++i) v.emplace_back(u(rng), u(rng), u(rng));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::uniform_int_distribution<int> count(n / 2, 2 * n);
  std::vector<Face> f;
  const int m = count(rng);
  while (static_cast<int>(f.size()) < m) {
    const Index a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    f.push_back({a, b, c});
  }
  return TriMesh(std::move(v), std::move(f));
}

/// Relax every directed edge until nothing changes.
inline std::vector<double> bellman_ford(const TriMesh& m, Index src) {
  std::set<std::pair<Index, Index>> edges;
  for (const Face& t : m.faces()) {
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      edges.insert({a, b});
      edges.insert({b, a});
    }
  }
  std::vector<double> d(m.vertex_count(), std::numeric_limits<double>::infinity());
  d[static_cast<std::size_t>(src)] = 0.0;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [a, b] : edges) {
      const double nd = d[static_cast<std::size_t>(a)] + (m.vertex(a) - m.vertex(b)).norm();
      if (nd < d[static_cast<std::size_t>(b)]) {
        d[static_cast<std::size_t>(b)] = nd;
        changed = true;
      }
    }
  }
  return d;
}

inline double point_segment_sq(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  double t = ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).squaredNorm();
}

/// Plane projection when inside, else the nearest of the three edges.
inline double brute_point_triangle_sq(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  const Vec3 q = p - n * ((p - a).dot(n) / nn);
  const double wa = (b - q).cross(c - q).dot(n);
  const double wb = (c - q).cross(a - q).dot(n);
  const double wc = (a - q).cross(b - q).dot(n);
  if (wa >= 0 && wb >= 0 && wc >= 0) return (p - q).squaredNorm();
  return std::min({point_segment_sq(p, a, b), point_segment_sq(p, b, c), point_segment_sq(p, c, a)});
}

} // namespace test_support
