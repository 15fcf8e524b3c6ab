#pragma once

#include <algorithm>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

struct GeodesicPath {
  std::vector<Index> vertices; // src ... dst
  Polyline polyline;
  double length = 0.0;
};

namespace geodesic_detail {

inline std::vector<double> dijkstra(const TriMesh& mesh, const Adjacency& adj, Index src) {
  std::vector<double> dist(mesh.vertex_count(), std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, Index>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[static_cast<std::size_t>(src)] = 0.0;
  heap.emplace(0.0, src);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (Index v : adj.of(u)) {
      const double nd = d + (mesh.vertex(u) - mesh.vertex(v)).norm();
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

} // namespace geodesic_detail

/// Shortest path on the edge graph of `faces` with Euclidean edge weights.
/// Among equally short paths the lexicographically smallest vertex sequence
/// is returned. Throws NoPathError when dst is unreachable.
inline GeodesicPath geodesic_path(const TriMesh& mesh, std::span<const Index> faces, Index src, Index dst) {
  const auto n = static_cast<Index>(mesh.vertex_count());
  if (src < 0 || src >= n || dst < 0 || dst >= n) throw ValidationError("geodesic endpoint out of range");
  GeodesicPath path;
  if (src == dst) {
    path.vertices = {src};
    path.polyline.points = {mesh.vertex(src)};
    return path;
  }
  const Adjacency adj = vertex_adjacency(mesh, faces);
  const std::vector<double> dist = geodesic_detail::dijkstra(mesh, adj, src);
  const double total = dist[static_cast<std::size_t>(dst)];
  if (!std::isfinite(total)) {
    throw NoPathError("no path between vertices " + std::to_string(src) + " and " + std::to_string(dst));
  }

  // Tight edges u->v (d(u) + w == d(v)) form the shortest-path DAG. Keep the
  // vertices that reach dst inside it, then walk greedily by smallest index.
  auto tight = [&](Index u, Index v) {
    const double du = dist[static_cast<std::size_t>(u)];
    return std::isfinite(du) && du + (mesh.vertex(u) - mesh.vertex(v)).norm() == dist[static_cast<std::size_t>(v)];
  };
  std::vector<char> reaches(mesh.vertex_count(), 0);
  std::vector<Index> stack{dst};
  reaches[static_cast<std::size_t>(dst)] = 1;
  while (!stack.empty()) {
    const Index v = stack.back();
    stack.pop_back();
    for (Index u : adj.of(v)) {
      if (!reaches[static_cast<std::size_t>(u)] && tight(u, v)) {
        reaches[static_cast<std::size_t>(u)] = 1;
        stack.push_back(u);
      }
    }
  }
  Index cur = src;
  path.vertices.push_back(cur);
  while (cur != dst) {
    Index next = -1;
    for (Index v : adj.of(cur)) {
      if (reaches[static_cast<std::size_t>(v)] && tight(cur, v)) {
        next = v;
        break;
      }
    }
    if (next < 0) throw NoPathError("shortest-path reconstruction failed");
    cur = next;
    path.vertices.push_back(cur);
  }
  path.length = total;
  for (Index v : path.vertices) path.polyline.points.push_back(mesh.vertex(v));
  return path;
}

inline GeodesicPath geodesic_path(const TriMesh& mesh, Index src, Index dst) {
  return geodesic_path(mesh, all_faces(mesh), src, dst);
}

} // namespace sld
