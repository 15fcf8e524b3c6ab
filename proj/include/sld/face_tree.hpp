#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  Index face = -1;
  double squared_distance = std::numeric_limits<double>::infinity();
};

struct RayHit {
  Vec3 point = Vec3::Zero();
  Index face = -1;
  double t = 0.0;
};

inline constexpr double kRayTieTolerance = 1e-12;

/// Bounding-volume hierarchy over a subset of a mesh's faces. Holds a
/// reference to the mesh, which must outlive the tree.
class FaceTree {
public:
  FaceTree(const TriMesh& mesh, std::span<const Index> faces) : mesh_(&mesh), faces_(faces.begin(), faces.end()) {
    if (!faces_.empty()) build(0, faces_.size());
  }
  explicit FaceTree(const TriMesh& mesh) : FaceTree(mesh, all_faces(mesh)) {}

  bool empty() const { return faces_.empty(); }

  ClosestPoint closest_point(const Vec3& p) const {
    ClosestPoint best;
    if (faces_.empty()) return best;
    closest(0, p, best);
    return best;
  }

  /// Nearest hit with t > 0; ties within 1e-12 go to the lowest face index.
  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir) const {
    std::optional<RayHit> best;
    if (faces_.empty()) return best;
    const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
    ray(0, origin, dir, inv, best);
    return best;
  }

private:
  struct Node {
    Eigen::AlignedBox3d box;
    std::size_t begin = 0, end = 0;
    std::size_t left = 0, right = 0; // 0 for leaves
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({});
    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d centers;
    for (std::size_t i = begin; i < end; ++i) {
      const auto [a, b, c] = mesh_->corners(faces_[i]);
      box.extend(a);
      box.extend(b);
      box.extend(c);
      centers.extend(((a + b + c) / 3.0).eval());
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= 4) return id;
    int axis = 0;
    centers.sizes().maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(faces_.begin() + static_cast<std::ptrdiff_t>(begin), faces_.begin() + static_cast<std::ptrdiff_t>(mid),
                     faces_.begin() + static_cast<std::ptrdiff_t>(end), [&](Index f, Index g) {
                       const double cf = face_centroid(*mesh_, f)[axis];
                       const double cg = face_centroid(*mesh_, g)[axis];
                       return cf < cg || (cf == cg && f < g);
                     });
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  // Corners in ascending vertex-index order, so results do not depend on
  // winding and a mirrored mesh (reversed winding) gives mirrored answers.
  std::array<Vec3, 3> sorted_corners(Index f) const {
    Face t = mesh_->face(f);
    std::sort(t.begin(), t.end());
    return {mesh_->vertex(t[0]), mesh_->vertex(t[1]), mesh_->vertex(t[2])};
  }

  static double box_sq_dist(const Eigen::AlignedBox3d& box, const Vec3& p) { return box.squaredExteriorDistance(p); }

  void closest(std::size_t id, const Vec3& p, ClosestPoint& best) const {
    const Node& n = nodes_[id];
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const Index f = faces_[i];
        const auto [a, b, c] = sorted_corners(f);
        const Vec3 q = closest_point_on_triangle(p, a, b, c);
        const double d = (q - p).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && f < best.face)) {
          best = {q, f, d};
        }
      }
      return;
    }
    const double dl = box_sq_dist(nodes_[n.left].box, p);
    const double dr = box_sq_dist(nodes_[n.right].box, p);
    const std::size_t first = dl <= dr ? n.left : n.right;
    const std::size_t second = dl <= dr ? n.right : n.left;
    if (std::min(dl, dr) <= best.squared_distance) closest(first, p, best);
    if (std::max(dl, dr) <= best.squared_distance) closest(second, p, best);
  }

  static bool box_hit(const Eigen::AlignedBox3d& box, const Vec3& o, const Vec3& inv, double tmax) {
    double t0 = 0.0, t1 = tmax;
    for (int k = 0; k < 3; ++k) {
      double a = (box.min()[k] - o[k]) * inv[k];
      double b = (box.max()[k] - o[k]) * inv[k];
      if (std::isnan(a) || std::isnan(b)) {
        if (o[k] < box.min()[k] || o[k] > box.max()[k]) return false;
        continue;
      }
      if (a > b) std::swap(a, b);
      t0 = std::max(t0, a);
      t1 = std::min(t1, b * (1.0 + 4 * std::numeric_limits<double>::epsilon()));
      if (t0 > t1) return false;
    }
    return true;
  }

  void ray(std::size_t id, const Vec3& o, const Vec3& d, const Vec3& inv, std::optional<RayHit>& best) const {
    const Node& n = nodes_[id];
    const double tmax = best ? best->t + kRayTieTolerance : std::numeric_limits<double>::infinity();
    if (!box_hit(n.box, o, inv, tmax)) return;
    if (n.left == 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const Index f = faces_[i];
        const auto [a, b, c] = sorted_corners(f);
        const auto hit = intersect_ray_triangle(o, d, a, b, c);
        if (!hit) continue;
        if (!best || hit->t < best->t - kRayTieTolerance ||
            (std::abs(hit->t - best->t) <= kRayTieTolerance && f < best->face)) {
          best = RayHit{hit->point, f, hit->t};
        }
      }
      return;
    }
    ray(n.left, o, d, inv, best);
    ray(n.right, o, d, inv, best);
  }

  const TriMesh* mesh_;
  std::vector<Index> faces_;
  std::vector<Node> nodes_;
};

} // namespace sld
