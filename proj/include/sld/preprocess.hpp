#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

/// Orthonormal right-handed anatomical axes: a_lr x a_ap == a_l.
///
/// a_l points superior and a_ap anterior. Because (left, anterior, superior)
/// is a left-handed triad, a_lr points toward the subject's right; the
/// anatomical left side is where the lateral coordinate is negative.
struct VertebraFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 a_l = Vec3::UnitZ();
  Vec3 a_ap = -Vec3::UnitY();
  Vec3 a_lr = -Vec3::UnitX();

  Vec3 to_local(const Vec3& p) const {
    const Vec3 d = p - origin;
    return {d.dot(a_lr), d.dot(a_ap), d.dot(a_l)};
  }
  Vec3 to_world(const Vec3& q) const { return origin + q.x() * a_lr + q.y() * a_ap + q.z() * a_l; }

  /// Same origin with the anterior direction reversed (and a_lr with it,
  /// to stay right-handed).
  VertebraFrame flipped_ap() const {
    VertebraFrame f = *this;
    f.a_ap = -a_ap;
    f.a_lr = -a_lr;
    return f;
  }
};

/// World-space directions used to give PCA axes an anatomical meaning.
struct FrameHint {
  Vec3 superior = Vec3::UnitZ();
  Vec3 anterior = -Vec3::UnitY();

  static FrameHint lps() { return {Vec3::UnitZ(), -Vec3::UnitY()}; }
  static FrameHint ras() { return {Vec3::UnitZ(), Vec3::UnitY()}; }

  /// "LPS", "RAS" or six comma-separated numbers: superior xyz, anterior xyz.
  static FrameHint parse(const std::string& text) {
    if (text == "LPS" || text == "lps") return lps();
    if (text == "RAS" || text == "ras") return ras();
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t comma = std::min(text.find(',', pos), text.size());
      try {
        v.push_back(std::stod(text.substr(pos, comma - pos)));
      } catch (const std::exception&) {
        throw ParameterError("frame hint must be LPS, RAS or 'sx,sy,sz,ax,ay,az', got '" + text + "'");
      }
      pos = comma + 1;
    }
    if (v.size() != 6) throw ParameterError("custom frame hint needs six numbers, got '" + text + "'");
    FrameHint h{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
    if (h.superior.norm() == 0.0 || h.anterior.norm() == 0.0) throw ParameterError("frame hint axes must be non-zero");
    return h;
  }
};

struct Dimensions {
  double extent_lr = 0.0;
  double extent_ap = 0.0;
  double extent_l = 0.0;
  double mean_edge_length = 0.0;
};

struct SymmetricEigen {
  Vec3 values;
  Mat3 vectors; // columns
};

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix. Flipping the
/// sign of a coordinate axis in the input flips the matching eigenvector
/// components exactly, which keeps mirrored inputs bitwise mirrored.
inline SymmetricEigen jacobi_eigen(Mat3 a) {
  Mat3 v = Mat3::Identity();
  constexpr std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double diag = a(0, 0) * a(0, 0) + a(1, 1) * a(1, 1) + a(2, 2) * a(2, 2);
    if (off <= 1e-32 * diag || off == 0.0) break;
    for (const auto& [p, q] : pairs) {
      const double apq = a(p, q);
      if (apq == 0.0) continue;
      const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
      const double sign = std::signbit(theta) ? -1.0 : 1.0;
      const double t = std::abs(theta) > 1e150 ? 0.5 / theta : sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      for (int k = 0; k < 3; ++k) {
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
      }
      for (int k = 0; k < 3; ++k) {
        const double apk = a(p, k);
        const double aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
      }
      a(p, q) = 0.0;
      a(q, p) = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
      }
    }
  }
  return {Vec3(a(0, 0), a(1, 1), a(2, 2)), v};
}

/// Principal axes of the vertex cloud mapped to anatomy with `hint`: a_l is
/// the axis most aligned with hint.superior (signed toward it), a_ap the
/// remaining axis most aligned with hint.anterior, a_lr completes the frame.
/// Independent of vertex order.
inline VertebraFrame estimate_frame(const TriMesh& mesh, const FrameHint& hint = FrameHint::lps()) {
  const auto& pts = mesh.vertices();
  if (pts.size() < 4) throw DegenerateGeometryError("frame estimation needs at least 4 vertices");
  std::array<ExactSum, 3> sum;
  for (const Vec3& p : pts) {
    for (int k = 0; k < 3; ++k) sum[static_cast<std::size_t>(k)].add(p[k]);
  }
  const double n = static_cast<double>(pts.size());
  const Vec3 centroid(sum[0].value() / n, sum[1].value() / n, sum[2].value() / n);
  std::array<ExactSum, 6> cov;
  for (const Vec3& p : pts) {
    const Vec3 d = p - centroid;
    cov[0].add(d.x() * d.x());
    cov[1].add(d.y() * d.y());
    cov[2].add(d.z() * d.z());
    cov[3].add(d.x() * d.y());
    cov[4].add(d.x() * d.z());
    cov[5].add(d.y() * d.z());
  }
  Mat3 c;
  c << cov[0].value(), cov[3].value(), cov[4].value(), cov[3].value(), cov[1].value(), cov[5].value(), cov[4].value(),
      cov[5].value(), cov[2].value();
  c /= n;
  const SymmetricEigen eig = jacobi_eigen(c);
  std::array<double, 3> sorted{eig.values[0], eig.values[1], eig.values[2]};
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted[2] > 0.0) || sorted[0] / sorted[2] < 1e-9) {
    throw DegenerateGeometryError("vertex cloud is (nearly) coplanar; principal axes are undefined");
  }
  if ((sorted[1] - sorted[0]) / sorted[2] < 1e-6 || (sorted[2] - sorted[1]) / sorted[2] < 1e-6) {
    throw DegenerateGeometryError("vertex covariance is (nearly) isotropic; principal axes are not identifiable");
  }

  const Vec3 sup = hint.superior.normalized();
  const Vec3 ant = hint.anterior.normalized();
  int il = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(eig.vectors.col(k).dot(sup)) > std::abs(eig.vectors.col(il).dot(sup))) il = k;
  }
  int iap = il == 0 ? 1 : 0;
  for (int k = 0; k < 3; ++k) {
    if (k == il || k == iap) continue;
    if (std::abs(eig.vectors.col(k).dot(ant)) > std::abs(eig.vectors.col(iap).dot(ant))) iap = k;
  }
  VertebraFrame frame;
  frame.origin = centroid;
  frame.a_l = eig.vectors.col(il);
  if (frame.a_l.dot(sup) < 0.0) frame.a_l = -frame.a_l;
  frame.a_ap = eig.vectors.col(iap);
  if (frame.a_ap.dot(ant) < 0.0) frame.a_ap = -frame.a_ap;
  frame.a_lr = frame.a_ap.cross(frame.a_l);
  return frame;
}

inline double mean_edge_length(const TriMesh& mesh) {
  const auto edges = unique_edges(mesh);
  if (edges.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [a, b] : edges) total += (mesh.vertex(a) - mesh.vertex(b)).norm();
  return total / static_cast<double>(edges.size());
}

inline Dimensions dimensions(const TriMesh& mesh, const VertebraFrame& frame) {
  mesh.require_non_empty();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : mesh.vertices()) {
    const Vec3 q(p.dot(frame.a_lr), p.dot(frame.a_ap), p.dot(frame.a_l));
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 ext = hi - lo;
  return {ext.x(), ext.y(), ext.z(), mean_edge_length(mesh)};
}

/// Vertices on an edge used by exactly one face.
inline std::vector<char> boundary_vertex_flags(const TriMesh& mesh) {
  std::map<std::pair<Index, Index>, int> count;
  for (const Face& t : mesh.faces()) {
    for (int k = 0; k < 3; ++k) {
      const Index a = t[static_cast<std::size_t>(k)];
      const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<char> flags(mesh.vertex_count(), 0);
  for (const auto& [e, c] : count) {
    if (c == 1) {
      flags[static_cast<std::size_t>(e.first)] = 1;
      flags[static_cast<std::size_t>(e.second)] = 1;
    }
  }
  return flags;
}

enum class SmoothMethod { Laplacian, Taubin };

/// Umbrella-operator smoothing with boundary vertices held fixed. Taubin
/// alternates a shrinking step (lambda) with an inflating step of
/// mu = -1.02 * lambda.
inline TriMesh smooth(const TriMesh& mesh, int iterations, SmoothMethod method, double lambda) {
  if (iterations < 0) throw ParameterError("smoothing iterations must be >= 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ParameterError("smoothing strength must lie in (0, 1]");
  if (iterations == 0) return mesh;
  const Adjacency adj = vertex_adjacency(mesh);
  const std::vector<char> fixed = boundary_vertex_flags(mesh);
  std::vector<Vec3> pos = mesh.vertices();
  std::vector<Vec3> next(pos.size());
  auto step = [&](double w) {
    for (std::size_t v = 0; v < pos.size(); ++v) {
      const auto nb = adj.of(static_cast<Index>(v));
      if (fixed[v] || nb.empty()) {
        next[v] = pos[v];
        continue;
      }
      Vec3 mean = Vec3::Zero();
      for (Index u : nb) mean += pos[static_cast<std::size_t>(u)];
      mean /= static_cast<double>(nb.size());
      next[v] = pos[v] + w * (mean - pos[v]);
    }
    pos.swap(next);
  };
  for (int it = 0; it < iterations; ++it) {
    step(lambda);
    if (method == SmoothMethod::Taubin) step(-1.02 * lambda);
  }
  return TriMesh(std::move(pos), mesh.faces(), mesh.labels());
}

/// Makes face winding consistent within each edge-connected component, then
/// flips components whose faces mostly point toward the component centroid.
inline TriMesh fix_winding(const TriMesh& mesh) {
  std::vector<Face> faces = mesh.faces();
  std::map<std::pair<Index, Index>, std::vector<Index>> by_edge;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const Index a = faces[f][static_cast<std::size_t>(k)];
      const Index b = faces[f][static_cast<std::size_t>((k + 1) % 3)];
      by_edge[{std::min(a, b), std::max(a, b)}].push_back(static_cast<Index>(f));
    }
  }
  auto has_directed = [](const Face& t, Index a, Index b) {
    for (int k = 0; k < 3; ++k) {
      if (t[static_cast<std::size_t>(k)] == a && t[static_cast<std::size_t>((k + 1) % 3)] == b) return true;
    }
    return false;
  };
  std::vector<char> done(faces.size(), 0);
  for (std::size_t seed = 0; seed < faces.size(); ++seed) {
    if (done[seed]) continue;
    std::vector<Index> component;
    std::queue<Index> queue;
    queue.push(static_cast<Index>(seed));
    done[seed] = 1;
    while (!queue.empty()) {
      const Index f = queue.front();
      queue.pop();
      component.push_back(f);
      const Face t = faces[static_cast<std::size_t>(f)];
      for (int k = 0; k < 3; ++k) {
        const Index a = t[static_cast<std::size_t>(k)];
        const Index b = t[static_cast<std::size_t>((k + 1) % 3)];
        const auto& nbrs = by_edge[{std::min(a, b), std::max(a, b)}];
        if (nbrs.size() != 2) continue;
        for (Index g : nbrs) {
          if (g == f || done[static_cast<std::size_t>(g)]) continue;
          Face& u = faces[static_cast<std::size_t>(g)];
          if (has_directed(u, a, b)) std::swap(u[1], u[2]);
          done[static_cast<std::size_t>(g)] = 1;
          queue.push(g);
        }
      }
    }
    Vec3 center = Vec3::Zero();
    for (Index f : component) {
      for (Index v : faces[static_cast<std::size_t>(f)]) center += mesh.vertex(v);
    }
    center /= 3.0 * static_cast<double>(component.size());
    long long vote = 0;
    for (Index f : component) {
      const Face& t = faces[static_cast<std::size_t>(f)];
      const Vec3 a = mesh.vertex(t[0]), b = mesh.vertex(t[1]), c = mesh.vertex(t[2]);
      const double s = (b - a).cross(c - a).dot((a + b + c) / 3.0 - center);
      vote += s > 0.0 ? 1 : (s < 0.0 ? -1 : 0);
    }
    if (vote < 0) {
      for (Index f : component) std::swap(faces[static_cast<std::size_t>(f)][1], faces[static_cast<std::size_t>(f)][2]);
    }
  }
  return TriMesh(mesh.vertices(), std::move(faces), mesh.labels());
}

} // namespace sld
