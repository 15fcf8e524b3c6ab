#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

/// Regular sampling lattice. Along an axis flagged `centered` the nodes sit at
/// (2i + 1 - n) * h / 2, so node i and node n-1-i are exact negatives.
struct LatticeSpec {
  std::array<int, 3> n{2, 2, 2};
  std::array<double, 3> start{0.0, 0.0, 0.0};
  std::array<bool, 3> centered{false, false, false};
  double h = 1.0;

  double coord(int axis, int i) const {
    const auto a = static_cast<std::size_t>(axis);
    if (centered[a]) return static_cast<double>(2 * i + 1 - n[a]) * (0.5 * h);
    return start[a] + static_cast<double>(i) * h;
  }
};

namespace nets_detail {

template <class Field> Vec3 gradient(const Field& f, const Vec3& p, double e) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= e;
    hi[a] += e;
    g[a] = (f(hi) - f(lo)) / (2.0 * e);
  }
  return g;
}

/// A few damped Newton steps toward the zero set.
template <class Field> Vec3 project(const Field& f, Vec3 p, double h) {
  for (int it = 0; it < 3; ++it) {
    const double v = f(p);
    const Vec3 g = gradient(f, p, 1e-4 * h);
    const double gg = g.squaredNorm();
    if (!(gg > 0.0)) break;
    Vec3 step = g * (v / gg);
    const double len = step.norm();
    if (len > 0.75 * h) step *= 0.75 * h / len;
    p -= step;
  }
  return p;
}

} // namespace nets_detail

/// Surface Nets over a signed field (negative inside). One vertex per cell
/// that straddles the surface, placed at the mean edge crossing and pulled
/// onto the zero set; one quad per sign-changing lattice edge, split along its
/// shorter diagonal. Faces are wound so normals point toward positive values.
template <class Field> TriMesh surface_nets(const Field& field, const LatticeSpec& spec) {
  const int nx = spec.n[0], ny = spec.n[1], nz = spec.n[2];
  if (nx < 2 || ny < 2 || nz < 2) throw ParameterError("lattice needs at least 2 nodes per axis");
  auto node = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) +
                                                                          static_cast<std::size_t>(ny) * k);
  };
  std::vector<double> xs(static_cast<std::size_t>(nx)), ys(static_cast<std::size_t>(ny)), zs(static_cast<std::size_t>(nz));
  for (int i = 0; i < nx; ++i) xs[static_cast<std::size_t>(i)] = spec.coord(0, i);
  for (int j = 0; j < ny; ++j) ys[static_cast<std::size_t>(j)] = spec.coord(1, j);
  for (int k = 0; k < nz; ++k) zs[static_cast<std::size_t>(k)] = spec.coord(2, k);
  auto pos = [&](int i, int j, int k) {
    return Vec3(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)], zs[static_cast<std::size_t>(k)]);
  };

  std::vector<double> value(static_cast<std::size_t>(nx) * ny * nz);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) value[node(i, j, k)] = field(pos(i, j, k));
    }
  }
  auto inside = [&](int i, int j, int k) { return value[node(i, j, k)] < 0.0; };

  const int cx = nx - 1, cy = ny - 1, cz = nz - 1;
  auto cell = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(cx) * (static_cast<std::size_t>(j) +
                                                                          static_cast<std::size_t>(cy) * k);
  };
  std::vector<Index> cell_vertex(static_cast<std::size_t>(cx) * cy * cz, -1);
  std::vector<Vec3> verts;

  static constexpr std::array<std::array<int, 3>, 8> kCorner{
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}}};
  static constexpr std::array<std::array<int, 2>, 12> kEdge{
      {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3}, {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

  for (int k = 0; k < cz; ++k) {
    for (int j = 0; j < cy; ++j) {
      for (int i = 0; i < cx; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          if (inside(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])) mask |= 1 << c;
        }
        if (mask == 0 || mask == 255) continue;
        ExactSum sx, sy, sz;
        int count = 0;
        for (const auto& e : kEdge) {
          const bool ia = (mask >> e[0]) & 1, ib = (mask >> e[1]) & 1;
          if (ia == ib) continue;
          const auto& ca = kCorner[static_cast<std::size_t>(e[0])];
          const auto& cb = kCorner[static_cast<std::size_t>(e[1])];
          const Vec3 pa = pos(i + ca[0], j + ca[1], k + ca[2]);
          const Vec3 pb = pos(i + cb[0], j + cb[1], k + cb[2]);
          const double fa = value[node(i + ca[0], j + ca[1], k + ca[2])];
          const double fb = value[node(i + cb[0], j + cb[1], k + cb[2])];
          Vec3 q = pa;
          for (int a = 0; a < 3; ++a) {
            // Written symmetrically in (a, b) so reversed edges give identical crossings.
            if (pa[a] != pb[a]) q[a] = (pa[a] * fb - pb[a] * fa) / (fb - fa);
          }
          sx.add(q.x());
          sy.add(q.y());
          sz.add(q.z());
          ++count;
        }
        const Vec3 mean(sx.value() / count, sy.value() / count, sz.value() / count);
        cell_vertex[cell(i, j, k)] = static_cast<Index>(verts.size());
        verts.push_back(nets_detail::project(field, mean, spec.h));
      }
    }
  }

  std::vector<Face> faces;
  auto emit_quad = [&](std::array<Index, 4> q) {
    const auto P = [&](int s) { return verts[static_cast<std::size_t>(q[static_cast<std::size_t>(s)])]; };
    const double d02 = (P(0) - P(2)).squaredNorm(), d13 = (P(1) - P(3)).squaredNorm();
    if (d02 < d13) {
      faces.push_back({q[0], q[1], q[2]});
      faces.push_back({q[0], q[2], q[3]});
    } else if (d13 < d02) {
      faces.push_back({q[0], q[1], q[3]});
      faces.push_back({q[1], q[2], q[3]});
    } else {
      ExactSum sx, sy, sz;
      for (int s = 0; s < 4; ++s) {
        sx.add(P(s).x());
        sy.add(P(s).y());
        sz.add(P(s).z());
      }
      const Vec3 c(sx.value() / 4.0, sy.value() / 4.0, sz.value() / 4.0);
      const auto ci = static_cast<Index>(verts.size());
      verts.push_back(nets_detail::project(field, c, spec.h));
      for (int s = 0; s < 4; ++s) faces.push_back({q[static_cast<std::size_t>(s)], q[static_cast<std::size_t>((s + 1) % 4)], ci});
    }
  };

  const std::array<int, 3> dims{nx, ny, nz};
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, w = (axis + 2) % 3;
    for (int k = 0; k < nz; ++k) {
      for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
          std::array<int, 3> a{i, j, k};
          if (a[static_cast<std::size_t>(axis)] + 1 >= dims[static_cast<std::size_t>(axis)]) continue;
          if (a[static_cast<std::size_t>(u)] < 1 || a[static_cast<std::size_t>(w)] < 1) continue;
          if (a[static_cast<std::size_t>(u)] > dims[static_cast<std::size_t>(u)] - 2) continue;
          if (a[static_cast<std::size_t>(w)] > dims[static_cast<std::size_t>(w)] - 2) continue;
          std::array<int, 3> b = a;
          ++b[static_cast<std::size_t>(axis)];
          const bool ia = inside(a[0], a[1], a[2]), ib = inside(b[0], b[1], b[2]);
          if (ia == ib) continue;
          static constexpr std::array<std::array<int, 2>, 4> kRing{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
          std::array<Index, 4> q{};
          for (std::size_t s = 0; s < 4; ++s) {
            std::array<int, 3> c = a;
            c[static_cast<std::size_t>(u)] += kRing[s][0] - 1;
            c[static_cast<std::size_t>(w)] += kRing[s][1] - 1;
            q[s] = cell_vertex[cell(c[0], c[1], c[2])];
          }
          // The ring (0,0),(1,0),(1,1),(0,1) in (u, w) faces +axis.
          if (!ia) std::swap(q[1], q[3]);
          emit_quad(q);
        }
      }
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

} // namespace sld
