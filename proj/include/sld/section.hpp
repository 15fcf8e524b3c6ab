#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sld/face_tree.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

/// Intersection of a face subset with a plane, as maximal chains of
/// segments. Crossing points are keyed by the mesh edge (or vertex) they lie
/// on, so adjacent triangles share endpoints exactly. Closed chains have
/// `closed == true` and do not repeat their first point.
inline std::vector<Polyline> plane_intersection_curve(const TriMesh& mesh, std::span<const Index> faces,
                                                      const Plane& plane) {
  // Node key: (a, b) with a < b for an edge crossing, (v, -1) for a vertex on the plane.
  using Key = std::pair<Index, Index>;
  std::map<Key, Vec3> position;
  std::map<Key, std::vector<Key>> links;

  auto side = [&](Index v) { return plane.signed_distance(mesh.vertex(v)); };
  auto node_for_vertex = [&](Index v) {
    const Key k{v, -1};
    position.emplace(k, plane.project(mesh.vertex(v)));
    return k;
  };
  auto node_for_edge = [&](Index a, Index b) {
    if (a > b) std::swap(a, b);
    const Key k{a, b};
    if (!position.count(k)) {
      const Vec3& pa = mesh.vertex(a);
      const Vec3& pb = mesh.vertex(b);
      const double da = side(a);
      const double db = side(b);
      const Vec3 p = (pa * db - pb * da) / (db - da);
      position.emplace(k, plane.project(p));
    }
    return k;
  };

  for (Index f : faces) {
    const Face& t = mesh.face(f);
    const double d[3] = {side(t[0]), side(t[1]), side(t[2])};
    if (d[0] == 0.0 && d[1] == 0.0 && d[2] == 0.0) continue;
    std::vector<Key> hits;
    for (int k = 0; k < 3; ++k) {
      const int k2 = (k + 1) % 3;
      if (d[k] == 0.0) {
        hits.push_back(node_for_vertex(t[static_cast<std::size_t>(k)]));
      } else if (d[k2] != 0.0 && (d[k] < 0.0) != (d[k2] < 0.0)) {
        hits.push_back(node_for_edge(t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>(k2)]));
      }
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    if (hits.size() != 2) continue;
    auto& la = links[hits[0]];
    auto& lb = links[hits[1]];
    if (std::find(la.begin(), la.end(), hits[1]) == la.end()) {
      la.push_back(hits[1]);
      lb.push_back(hits[0]);
    }
  }

  std::vector<Polyline> curves;
  std::map<Key, char> visited;
  auto walk = [&](Key start) {
    Polyline line;
    Key prev{-2, -2};
    Key cur = start;
    while (true) {
      visited[cur] = 1;
      line.points.push_back(position[cur]);
      std::optional<Key> next;
      for (const Key& n : links[cur]) {
        if (n != prev && !visited[n]) {
          next = n;
          break;
        }
      }
      if (!next) {
        for (const Key& n : links[cur]) {
          if (n == start && n != prev && line.points.size() > 2) line.closed = true;
        }
        break;
      }
      prev = cur;
      cur = *next;
    }
    return line;
  };
  // Open chains start at degree-1 nodes; whatever remains is closed.
  for (const auto& [k, l] : links) {
    if (l.size() == 1 && !visited[k]) curves.push_back(walk(k));
  }
  for (const auto& [k, l] : links) {
    if (!visited[k]) curves.push_back(walk(k));
  }
  std::vector<Polyline> out;
  for (auto& c : curves) {
    std::vector<Vec3> pts;
    for (const Vec3& p : c.points) {
      if (pts.empty() || (pts.back() - p).squaredNorm() > 0.0) pts.push_back(p);
    }
    if (c.closed && pts.size() > 1 && (pts.front() - pts.back()).squaredNorm() == 0.0) pts.pop_back();
    if (pts.size() >= 2) out.push_back(Polyline{std::move(pts), c.closed});
  }
  return out;
}

inline std::optional<Vec3> ray_surface_intersection(const TriMesh& mesh, std::span<const Index> faces,
                                                    const Vec3& origin, const Vec3& direction) {
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw ParameterError("ray direction must be a unit vector");
  const FaceTree tree(mesh, faces);
  const auto hit = tree.raycast(origin, direction);
  if (!hit) return std::nullopt;
  return hit->point;
}

/// Sum of the areas enclosed by the closed loops of a plane cut, by the
/// shoelace formula in plane coordinates. Nested loops are not subtracted.
inline double section_area(const std::vector<Polyline>& loops, const Plane& plane) {
  Vec3 u = plane.normal.unitOrthogonal();
  Vec3 v = plane.normal.cross(u);
  double total = 0.0;
  for (const auto& loop : loops) {
    if (!loop.closed) continue;
    double a = 0.0;
    const std::size_t n = loop.points.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = loop.points[i] - plane.point;
      const Vec3 q = loop.points[(i + 1) % n] - plane.point;
      a += p.dot(u) * q.dot(v) - q.dot(u) * p.dot(v);
    }
    total += std::abs(0.5 * a);
  }
  return total;
}

} // namespace sld
