#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "sld/error.hpp"
#include "sld/face_tree.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

struct RemeshOptions {
  int iterations = 5;
  int final_flip_passes = 3;
  double feature_cos = 0.7; // edges whose faces' normals disagree more than this are not flipped
};

namespace remesh_detail {

inline std::uint64_t edge_key(Index a, Index b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

// Rotate so the smallest index comes first; winding is preserved. Keeping
// this canonical form makes every operation independent of where a face's
// listing starts, so reversed-winding (mirrored) input evolves identically.
inline Face canonical(Face f) {
  while (f[0] > f[1] || f[0] > f[2]) f = {f[1], f[2], f[0]};
  return f;
}

struct EdgeInfo {
  Index a = 0, b = 0;
  Index f0 = -1, f1 = -1;
  int count = 0;
};

class State {
public:
  State(const TriMesh& mesh, double target)
      : pos_(mesh.vertices()), faces_(mesh.faces()), face_alive_(mesh.face_count(), 1), vert_alive_(mesh.vertex_count(), 1),
        hi_(4.0 / 3.0 * target), lo_(4.0 / 5.0 * target) {
    for (auto& f : faces_) f = canonical(f);
    rebuild_edges();
    fixed_.assign(pos_.size(), 0);
    for (const auto& [k, e] : edges_) {
      if (e.count != 2) {
        fixed_[static_cast<std::size_t>(e.a)] = 1;
        fixed_[static_cast<std::size_t>(e.b)] = 1;
      }
    }
  }

  void rebuild_edges() {
    edges_.clear();
    edges_.reserve(faces_.size() * 2);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      for (int k = 0; k < 3; ++k) {
        const Index a = faces_[f][static_cast<std::size_t>(k)];
        const Index b = faces_[f][static_cast<std::size_t>((k + 1) % 3)];
        EdgeInfo& e = edges_[edge_key(a, b)];
        e.a = std::min(a, b);
        e.b = std::max(a, b);
        if (e.count == 0) e.f0 = static_cast<Index>(f);
        else if (e.count == 1) e.f1 = static_cast<Index>(f);
        ++e.count;
      }
    }
  }

  std::vector<EdgeInfo> sorted_edges() const {
    std::vector<EdgeInfo> out;
    out.reserve(edges_.size());
    for (const auto& [k, e] : edges_) out.push_back(e);
    std::sort(out.begin(), out.end(), [](const EdgeInfo& x, const EdgeInfo& y) { return x.a < y.a || (x.a == y.a && x.b < y.b); });
    return out;
  }

  double length(Index a, Index b) const { return (pos(a) - pos(b)).norm(); }
  const Vec3& pos(Index v) const { return pos_[static_cast<std::size_t>(v)]; }

  static Index opposite(const Face& f, Index a, Index b) {
    for (Index v : f) {
      if (v != a && v != b) return v;
    }
    return -1;
  }

  // True when a->b is a directed edge of f.
  static bool directed(const Face& f, Index a, Index b) {
    for (int k = 0; k < 3; ++k) {
      if (f[static_cast<std::size_t>(k)] == a && f[static_cast<std::size_t>((k + 1) % 3)] == b) return true;
    }
    return false;
  }

  Vec3 raw_normal(const Face& f) const { return (pos(f[1]) - pos(f[0])).cross(pos(f[2]) - pos(f[0])); }

  int split_long_edges() {
    rebuild_edges();
    std::vector<EdgeInfo> cand;
    for (const EdgeInfo& e : sorted_edges()) {
      if (e.count <= 2 && length(e.a, e.b) > hi_) cand.push_back(e);
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [&](const EdgeInfo& x, const EdgeInfo& y) { return length(x.a, x.b) > length(y.a, y.b); });
    std::vector<char> touched(faces_.size(), 0);
    int done = 0;
    for (const EdgeInfo& e : cand) {
      if (touched[static_cast<std::size_t>(e.f0)] || (e.f1 >= 0 && touched[static_cast<std::size_t>(e.f1)])) continue;
      const Index m = static_cast<Index>(pos_.size());
      pos_.push_back((pos(e.a) + pos(e.b)) / 2.0);
      vert_alive_.push_back(1);
      fixed_.push_back(e.count == 1 ? 1 : 0);
      for (Index f : {e.f0, e.f1}) {
        if (f < 0) continue;
        const Face t = faces_[static_cast<std::size_t>(f)];
        const Index c = opposite(t, e.a, e.b);
        const bool ab = directed(t, e.a, e.b);
        const Index first = ab ? e.a : e.b;
        const Index second = ab ? e.b : e.a;
        Face p{first, m, c};
        Face q{m, second, c};
        if (first != e.a) std::swap(p, q); // slot f keeps the half containing the lower endpoint
        faces_[static_cast<std::size_t>(f)] = canonical(p);
        faces_.push_back(canonical(q));
        face_alive_.push_back(1);
        touched[static_cast<std::size_t>(f)] = 1;
        touched.push_back(1);
      }
      ++done;
    }
    return done;
  }

  std::vector<std::vector<Index>> incidence() const {
    std::vector<std::vector<Index>> inc(pos_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      for (Index v : faces_[f]) inc[static_cast<std::size_t>(v)].push_back(static_cast<Index>(f));
    }
    return inc;
  }

  std::vector<Index> ring(const std::vector<Index>& inc, Index v) const {
    std::vector<Index> out;
    for (Index f : inc) {
      for (Index u : faces_[static_cast<std::size_t>(f)]) {
        if (u != v) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  int collapse_short_edges() {
    rebuild_edges();
    const auto inc = incidence();
    std::vector<EdgeInfo> cand;
    for (const EdgeInfo& e : sorted_edges()) {
      if (e.count == 2 && length(e.a, e.b) < lo_) cand.push_back(e);
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [&](const EdgeInfo& x, const EdgeInfo& y) { return length(x.a, x.b) < length(y.a, y.b); });
    std::vector<char> touched(pos_.size(), 0);
    int done = 0;
    for (const EdgeInfo& e : cand) {
      const Index a = e.a, b = e.b;
      const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
      if (touched[ia] || touched[ib] || fixed_[ia] || fixed_[ib]) continue;
      const auto ra = ring(inc[ia], a);
      const auto rb = ring(inc[ib], b);
      std::vector<Index> common;
      std::set_intersection(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(common));
      const Index c = opposite(faces_[static_cast<std::size_t>(e.f0)], a, b);
      const Index d = opposite(faces_[static_cast<std::size_t>(e.f1)], a, b);
      if (common.size() != 2 || c == d) continue;
      if (ra.size() <= 3 || rb.size() <= 3) continue;
      if (inc[static_cast<std::size_t>(c)].size() <= 3 || inc[static_cast<std::size_t>(d)].size() <= 3) continue;
      const Vec3 p = (pos(a) + pos(b)) / 2.0;
      bool ok = true;
      std::vector<Index> merged;
      std::set_union(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(merged));
      for (Index v : merged) {
        if (v != a && v != b && (pos(v) - p).norm() > hi_) ok = false;
      }
      if (!ok) continue;
      for (const auto* list : {&inc[ia], &inc[ib]}) {
        for (Index f : *list) {
          const Face& t = faces_[static_cast<std::size_t>(f)];
          const bool has_a = std::find(t.begin(), t.end(), a) != t.end();
          const bool has_b = std::find(t.begin(), t.end(), b) != t.end();
          if (has_a && has_b) continue;
          const Vec3 before = raw_normal(t);
          std::array<Vec3, 3> q{pos(t[0]), pos(t[1]), pos(t[2])};
          for (int k = 0; k < 3; ++k) {
            if (t[static_cast<std::size_t>(k)] == a || t[static_cast<std::size_t>(k)] == b) q[static_cast<std::size_t>(k)] = p;
          }
          const Vec3 after = (q[1] - q[0]).cross(q[2] - q[0]);
          if (after.norm() <= 1e-12 || before.normalized().dot(after.normalized()) < 0.2) ok = false;
        }
      }
      if (!ok) continue;
      pos_[ia] = p;
      for (Index f : inc[ib]) {
        Face& t = faces_[static_cast<std::size_t>(f)];
        if (std::find(t.begin(), t.end(), a) != t.end()) {
          face_alive_[static_cast<std::size_t>(f)] = 0;
          continue;
        }
        for (Index& v : t) {
          if (v == b) v = a;
        }
        t = canonical(t);
      }
      vert_alive_[ib] = 0;
      touched[ia] = touched[ib] = 1;
      for (Index v : merged) touched[static_cast<std::size_t>(v)] = 1;
      ++done;
    }
    return done;
  }

  std::vector<int> valence() const {
    std::vector<int> val(pos_.size(), 0);
    for (const auto& [k, e] : edges_) {
      ++val[static_cast<std::size_t>(e.a)];
      ++val[static_cast<std::size_t>(e.b)];
    }
    return val;
  }

  // Flips edge e when `want` approves the quad (a, b, c, d) with c opposite
  // in the face holding a->b. Vertices of a flipped edge are locked for the pass.
  template <class Want> int flip_pass(Want want, double feature_cos) {
    rebuild_edges();
    const std::vector<int> val = valence();
    std::vector<char> touched(pos_.size(), 0);
    int done = 0;
    for (const EdgeInfo& e : sorted_edges()) {
      if (e.count != 2) continue;
      const Face t0 = faces_[static_cast<std::size_t>(e.f0)];
      const Face t1 = faces_[static_cast<std::size_t>(e.f1)];
      // Orient so t0 holds a->b.
      Index a = e.a, b = e.b;
      const bool swap_faces = !directed(t0, a, b);
      const Face& fa = swap_faces ? t1 : t0;
      const Face& fb = swap_faces ? t0 : t1;
      if (!directed(fa, a, b) || !directed(fb, b, a)) continue;
      const Index c = opposite(fa, a, b);
      const Index d = opposite(fb, a, b);
      if (c == d || touched[static_cast<std::size_t>(a)] || touched[static_cast<std::size_t>(b)] ||
          touched[static_cast<std::size_t>(c)] || touched[static_cast<std::size_t>(d)]) {
        continue;
      }
      if (edges_.count(edge_key(c, d))) continue;
      if (val[static_cast<std::size_t>(a)] <= 3 || val[static_cast<std::size_t>(b)] <= 3) continue;
      const Vec3 n0 = raw_normal(fa);
      const Vec3 n1 = raw_normal(fb);
      if (n0.normalized().dot(n1.normalized()) < feature_cos) continue;
      const Face g0{c, a, d};
      const Face g1{d, b, c};
      const Vec3 m0 = raw_normal(g0);
      const Vec3 m1 = raw_normal(g1);
      const Vec3 avg = n0 + n1;
      if (m0.norm() <= 1e-12 || m1.norm() <= 1e-12 || m0.dot(avg) <= 0.0 || m1.dot(avg) <= 0.0) continue;
      if (m0.normalized().dot(m1.normalized()) < feature_cos) continue;
      if (!want(a, b, c, d, val)) continue;
      // The slot of the lower face index receives the half containing the lower endpoint.
      const Index lo_face = std::min(e.f0, e.f1);
      const Index hi_face = std::max(e.f0, e.f1);
      const bool a_low = a < b;
      faces_[static_cast<std::size_t>(lo_face)] = canonical(a_low ? g0 : g1);
      faces_[static_cast<std::size_t>(hi_face)] = canonical(a_low ? g1 : g0);
      touched[static_cast<std::size_t>(a)] = touched[static_cast<std::size_t>(b)] = 1;
      touched[static_cast<std::size_t>(c)] = touched[static_cast<std::size_t>(d)] = 1;
      ++done;
    }
    return done;
  }

  int valence_flips(double feature_cos) {
    return flip_pass(
        [&](Index a, Index b, Index c, Index d, const std::vector<int>& val) {
          auto dev = [&](Index v, int delta) {
            const int target = fixed_[static_cast<std::size_t>(v)] ? 4 : 6;
            const int x = val[static_cast<std::size_t>(v)] + delta - target;
            return x * x;
          };
          const int before = dev(a, 0) + dev(b, 0) + dev(c, 0) + dev(d, 0);
          const int after = dev(a, -1) + dev(b, -1) + dev(c, 1) + dev(d, 1);
          return after < before;
        },
        feature_cos);
  }

  int delaunay_flips(double feature_cos) {
    return flip_pass(
        [&](Index a, Index b, Index c, Index d, const std::vector<int>&) {
          auto angle = [&](Index apex, Index p, Index q) {
            const Vec3 u = pos(p) - pos(apex);
            const Vec3 v = pos(q) - pos(apex);
            return std::atan2(u.cross(v).norm(), u.dot(v));
          };
          return angle(c, a, b) + angle(d, a, b) > kPi + 1e-9;
        },
        feature_cos);
  }

  void relax(const FaceTree& reference) {
    const auto inc = incidence();
    std::vector<Vec3> next = pos_;
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (!vert_alive_[v] || fixed_[v] || inc[v].empty()) continue;
      const auto nb = ring(inc[v], static_cast<Index>(v));
      Vec3 q = Vec3::Zero();
      for (Index u : nb) q += pos(u);
      q /= static_cast<double>(nb.size());
      Vec3 n = Vec3::Zero();
      for (Index f : inc[v]) n += raw_normal(faces_[static_cast<std::size_t>(f)]);
      const double len = n.norm();
      Vec3 p = q;
      if (len > 0.0) {
        n /= len;
        p = q + n * n.dot(pos_[v] - q);
      }
      next[v] = reference.closest_point(p).point;
    }
    pos_.swap(next);
  }

  TriMesh result() const {
    std::vector<Index> remap(pos_.size(), -1);
    std::vector<char> used(pos_.size(), 0);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      for (Index v : faces_[f]) used[static_cast<std::size_t>(v)] = 1;
    }
    std::vector<Vec3> verts;
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (!used[v]) continue;
      remap[v] = static_cast<Index>(verts.size());
      verts.push_back(pos_[v]);
    }
    std::vector<Face> faces;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const Face& t = faces_[f];
      faces.push_back({remap[static_cast<std::size_t>(t[0])], remap[static_cast<std::size_t>(t[1])],
                       remap[static_cast<std::size_t>(t[2])]});
    }
    return TriMesh(std::move(verts), std::move(faces));
  }

private:
  std::vector<Vec3> pos_;
  std::vector<Face> faces_;
  std::vector<char> face_alive_;
  std::vector<char> vert_alive_;
  std::vector<char> fixed_;
  std::unordered_map<std::uint64_t, EdgeInfo> edges_;
  double hi_, lo_;
};

} // namespace remesh_detail

/// Isotropic remeshing toward `target_edge_length`: split long edges,
/// collapse short ones, flip toward valence 6, relax tangentially and
/// project back onto the input surface. Boundary vertices stay fixed.
/// Per-vertex labels, if present, are carried over from the nearest corner of
/// the closest input face.
inline TriMesh remesh(const TriMesh& mesh, double target_edge_length, const RemeshOptions& opt = {}) {
  if (!(target_edge_length >= 1e-3)) throw ParameterError("remesh target edge length must be at least 1e-3 mm");
  mesh.require_non_empty();
  const FaceTree reference(mesh);
  remesh_detail::State state(mesh, target_edge_length);
  for (int it = 0; it < opt.iterations; ++it) {
    for (int pass = 0; pass < 20 && state.split_long_edges() > 0; ++pass) {
    }
    for (int pass = 0; pass < 20 && state.collapse_short_edges() > 0; ++pass) {
    }
    for (int pass = 0; pass < 5 && state.valence_flips(opt.feature_cos) > 0; ++pass) {
    }
    state.relax(reference);
  }
  for (int pass = 0; pass < opt.final_flip_passes && state.delaunay_flips(opt.feature_cos) > 0; ++pass) {
  }
  TriMesh out = state.result();
  if (mesh.labels()) {
    std::vector<int> labels(out.vertex_count());
    for (std::size_t v = 0; v < out.vertex_count(); ++v) {
      const ClosestPoint cp = reference.closest_point(out.vertices()[v]);
      const Face& t = mesh.face(cp.face);
      Index best = t[0];
      for (Index u : t) {
        const double du = (mesh.vertex(u) - out.vertices()[v]).squaredNorm();
        const double db = (mesh.vertex(best) - out.vertices()[v]).squaredNorm();
        if (du < db || (du == db && u < best)) best = u;
      }
      labels[v] = (*mesh.labels())[static_cast<std::size_t>(best)];
    }
    out = out.with_labels(std::move(labels));
  }
  return out;
}

/// Default target: one fortieth of the longitudinal extent, clamped to [0.5, 2] mm.
inline double default_target_edge_length(double extent_l) { return std::clamp(extent_l / 40.0, 0.5, 2.0); }

} // namespace sld
