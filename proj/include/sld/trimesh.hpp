#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"

namespace sld {

using Index = std::int32_t;
using Face = std::array<Index, 3>;
using VertexSet = std::vector<Index>; // sorted ascending, unique
using FaceSet = std::vector<Index>;   // sorted ascending, unique

inline constexpr double kZeroAreaTolerance = 1e-12;

/// Indexed triangle surface mesh, coordinates in millimeters. Immutable once
/// built; derived meshes are new values.
class TriMesh {
public:
  TriMesh() = default;

  TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::optional<std::vector<int>> labels = std::nullopt)
      : vertices_(std::move(vertices)), faces_(std::move(faces)), labels_(std::move(labels)) {
    check_topology();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t face_count() const { return faces_.size(); }
  bool empty() const { return vertices_.empty() || faces_.empty(); }

  const Vec3& vertex(Index i) const { return vertices_[static_cast<std::size_t>(i)]; }
  const Face& face(Index f) const { return faces_[static_cast<std::size_t>(f)]; }

  std::array<Vec3, 3> corners(Index f) const {
    const Face& t = face(f);
    return {vertex(t[0]), vertex(t[1]), vertex(t[2])};
  }

  TriMesh with_labels(std::vector<int> labels) const {
    if (labels.size() != vertices_.size()) {
      throw ValidationError("label count " + std::to_string(labels.size()) + " does not match vertex count " +
                            std::to_string(vertices_.size()));
    }
    TriMesh copy = *this;
    copy.labels_ = std::move(labels);
    return copy;
  }

  TriMesh without_labels() const {
    TriMesh copy = *this;
    copy.labels_.reset();
    return copy;
  }

  /// Throws ValidationError if the mesh is empty.
  void require_non_empty() const {
    if (empty()) throw ValidationError("mesh is empty");
  }

  /// Index of the first face with area below the zero-area tolerance.
  std::optional<Index> first_zero_area_face() const {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto [a, b, c] = corners(static_cast<Index>(f));
      if (triangle_area(a, b, c) <= kZeroAreaTolerance) return static_cast<Index>(f);
    }
    return std::nullopt;
  }

private:
  void check_topology() const {
    const auto n = static_cast<Index>(vertices_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Face& t = faces_[f];
      for (Index v : t) {
        if (v < 0 || v >= n) {
          throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                                " but the mesh has " + std::to_string(n) + " vertices");
        }
      }
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
        throw ValidationError("face " + std::to_string(f) + " repeats a vertex");
      }
    }
    if (labels_ && labels_->size() != vertices_.size()) {
      throw ValidationError("label count does not match vertex count");
    }
  }

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::optional<std::vector<int>> labels_;
};

/// Unit normals in winding order; throws on zero-area faces.
inline std::vector<Vec3> face_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals;
  normals.reserve(mesh.face_count());
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto [a, b, c] = mesh.corners(static_cast<Index>(f));
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (0.5 * len <= kZeroAreaTolerance) {
      throw SingularGeometryError("face " + std::to_string(f) + " has zero area");
    }
    normals.push_back(n / len);
  }
  return normals;
}

inline Vec3 face_normal(const TriMesh& mesh, Index f) {
  const auto [a, b, c] = mesh.corners(f);
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

inline Vec3 face_centroid(const TriMesh& mesh, Index f) {
  const auto [a, b, c] = mesh.corners(f);
  return (a + b + c) / 3.0;
}

/// Compressed per-vertex neighbor lists, each sorted ascending.
struct Adjacency {
  std::vector<std::size_t> offsets; // size = vertex_count + 1
  std::vector<Index> neighbors;

  std::span<const Index> of(Index v) const {
    const auto i = static_cast<std::size_t>(v);
    return {neighbors.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::size_t degree(Index v) const { return of(v).size(); }
  std::size_t vertex_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// Undirected edges (a < b) sorted lexicographically.
inline std::vector<std::pair<Index, Index>> unique_edges(const TriMesh& mesh, std::span<const Index> faces) {
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(faces.size() * 3);
  for (Index f : faces) {
    const Face& t = mesh.face(f);
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)];
      const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline FaceSet all_faces(const TriMesh& mesh) {
  FaceSet faces(mesh.face_count());
  std::iota(faces.begin(), faces.end(), Index{0});
  return faces;
}

inline VertexSet all_vertices(const TriMesh& mesh) {
  VertexSet verts(mesh.vertex_count());
  std::iota(verts.begin(), verts.end(), Index{0});
  return verts;
}

inline std::vector<std::pair<Index, Index>> unique_edges(const TriMesh& mesh) {
  return unique_edges(mesh, all_faces(mesh));
}

inline Adjacency vertex_adjacency(const TriMesh& mesh, std::span<const Index> faces) {
  const auto edges = unique_edges(mesh, faces);
  Adjacency adj;
  adj.offsets.assign(mesh.vertex_count() + 1, 0);
  for (const auto& [a, b] : edges) {
    ++adj.offsets[static_cast<std::size_t>(a) + 1];
    ++adj.offsets[static_cast<std::size_t>(b) + 1];
  }
  for (std::size_t i = 1; i < adj.offsets.size(); ++i) adj.offsets[i] += adj.offsets[i - 1];
  adj.neighbors.assign(adj.offsets.back(), 0);
  std::vector<std::size_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& [a, b] : edges) {
    adj.neighbors[cursor[static_cast<std::size_t>(a)]++] = b;
    adj.neighbors[cursor[static_cast<std::size_t>(b)]++] = a;
  }
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    std::sort(adj.neighbors.begin() + static_cast<std::ptrdiff_t>(adj.offsets[v]),
              adj.neighbors.begin() + static_cast<std::ptrdiff_t>(adj.offsets[v + 1]));
  }
  return adj;
}

inline Adjacency vertex_adjacency(const TriMesh& mesh) { return vertex_adjacency(mesh, all_faces(mesh)); }

/// Partition of `subset` into edge-connected pieces (edges with both ends in
/// the subset). Sorted by size descending, then by smallest index.
inline std::vector<VertexSet> connected_components(const Adjacency& adj, std::span<const Index> subset) {
  const std::size_t n = adj.vertex_count();
  std::vector<char> in_subset(n, 0);
  for (Index v : subset) in_subset[static_cast<std::size_t>(v)] = 1;
  std::vector<char> seen(n, 0);
  std::vector<VertexSet> components;
  std::vector<Index> stack;
  std::vector<Index> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  for (Index start : sorted) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    VertexSet comp;
    stack.assign(1, start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (Index u : adj.of(v)) {
        const auto ui = static_cast<std::size_t>(u);
        if (in_subset[ui] && !seen[ui]) {
          seen[ui] = 1;
          stack.push_back(u);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    components.push_back(std::move(comp));
  }
  std::stable_sort(components.begin(), components.end(),
                   [](const VertexSet& a, const VertexSet& b) { return a.size() > b.size(); });
  return components;
}

inline std::vector<VertexSet> connected_components(const TriMesh& mesh, std::span<const Index> subset) {
  return connected_components(vertex_adjacency(mesh), subset);
}

/// Faces adjacent across edges; components sorted as for vertices.
inline std::vector<FaceSet> face_components(const TriMesh& mesh, std::span<const Index> faces) {
  std::map<std::pair<Index, Index>, std::vector<Index>> by_edge;
  for (Index f : faces) {
    const Face& t = mesh.face(f);
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)];
      const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
      by_edge[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  }
  std::vector<Index> sorted(faces.begin(), faces.end());
  std::sort(sorted.begin(), sorted.end());
  std::map<Index, std::size_t> slot;
  for (std::size_t i = 0; i < sorted.size(); ++i) slot[sorted[i]] = i;
  std::vector<char> seen(sorted.size(), 0);
  std::vector<FaceSet> comps;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (seen[i]) continue;
    FaceSet comp;
    std::vector<Index> stack{sorted[i]};
    seen[i] = 1;
    while (!stack.empty()) {
      const Index f = stack.back();
      stack.pop_back();
      comp.push_back(f);
      const Face& t = mesh.face(f);
      for (int k = 0; k < 3; ++k) {
        const Index a = t[static_cast<std::size_t>(k)];
        const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
        for (Index g : by_edge[{std::min(a, b), std::max(a, b)}]) {
          const std::size_t s = slot[g];
          if (!seen[s]) {
            seen[s] = 1;
            stack.push_back(g);
          }
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  std::stable_sort(comps.begin(), comps.end(), [](const FaceSet& a, const FaceSet& b) { return a.size() > b.size(); });
  return comps;
}

/// Faces whose three vertices are all flagged.
inline FaceSet faces_within(const TriMesh& mesh, const std::vector<char>& vertex_flag) {
  FaceSet out;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& t = mesh.face(static_cast<Index>(f));
    if (vertex_flag[static_cast<std::size_t>(t[0])] && vertex_flag[static_cast<std::size_t>(t[1])] &&
        vertex_flag[static_cast<std::size_t>(t[2])]) {
      out.push_back(static_cast<Index>(f));
    }
  }
  return out;
}

inline std::vector<char> vertex_flags(std::size_t n, std::span<const Index> subset) {
  std::vector<char> flags(n, 0);
  for (Index v : subset) flags[static_cast<std::size_t>(v)] = 1;
  return flags;
}

inline VertexSet vertices_of_faces(const TriMesh& mesh, std::span<const Index> faces) {
  VertexSet out;
  out.reserve(faces.size() * 3);
  for (Index f : faces) {
    for (Index v : mesh.face(f)) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct BoundaryLoops {
  std::vector<std::vector<Index>> loops;                   // vertex cycles, each oriented along face winding
  std::vector<std::pair<Index, Index>> non_manifold_edges; // edges shared by > 2 faces or pinched boundary
};

/// Boundary cycles of a face set. Boundary edges are edges used by exactly
/// one face of the set; each cycle follows the winding of its faces.
inline BoundaryLoops boundary_loops(const TriMesh& mesh, std::span<const Index> faces) {
  std::map<std::pair<Index, Index>, int> count;
  std::map<std::pair<Index, Index>, std::pair<Index, Index>> directed;
  for (Index f : faces) {
    const Face& t = mesh.face(f);
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)];
      const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
      const std::pair<Index, Index> key{std::min(a, b), std::max(a, b)};
      ++count[key];
      directed[key] = {a, b};
    }
  }
  BoundaryLoops result;
  std::map<Index, std::vector<Index>> next;
  for (const auto& [key, c] : count) {
    if (c > 2) {
      result.non_manifold_edges.push_back(key);
    } else if (c == 1) {
      const auto [a, b] = directed[key];
      next[a].push_back(b);
    }
  }
  for (auto& [v, outs] : next) {
    if (outs.size() > 1) {
      for (Index w : outs) result.non_manifold_edges.emplace_back(std::min(v, w), std::max(v, w));
    }
  }
  if (!result.non_manifold_edges.empty()) return result;

  std::map<Index, char> used;
  for (const auto& [start, outs] : next) {
    if (used[start]) continue;
    std::vector<Index> loop;
    Index v = start;
    while (!used[v]) {
      used[v] = 1;
      loop.push_back(v);
      const auto it = next.find(v);
      if (it == next.end()) break;
      v = it->second.front();
    }
    if (v == start && loop.size() >= 3) result.loops.push_back(std::move(loop));
  }
  return result;
}

} // namespace sld
