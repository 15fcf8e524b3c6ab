#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

/// Icosahedron subdivided `subdivisions` times, vertices projected onto the sphere.
inline TriMesh make_sphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero()) {
  if (!(radius > 0.0)) throw ParameterError("sphere radius must be positive");
  if (subdivisions < 0) throw ParameterError("sphere subdivisions must be >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<Index, Index>, Index> mid;
    auto midpoint = [&](Index a, Index b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const auto id = static_cast<Index>(v.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& t3 : f) {
      const Index a = midpoint(t3[0], t3[1]);
      const Index b = midpoint(t3[1], t3[2]);
      const Index c = midpoint(t3[2], t3[0]);
      next.push_back({t3[0], a, c});
      next.push_back({t3[1], b, a});
      next.push_back({t3[2], c, b});
      next.push_back({a, b, c});
    }
    f.swap(next);
  }
  for (auto& p : v) p = center + radius * p;
  return TriMesh(std::move(v), std::move(f));
}

/// Closed cylinder along +Z centred at the origin, z in [-h/2, h/2].
/// Walls have `stacks` rows; caps are built from `cap_rings` concentric rings.
inline TriMesh make_cylinder(double radius, double height, int segments, int stacks = 1, int cap_rings = 1) {
  if (!(radius > 0.0) || !(height > 0.0)) throw ParameterError("cylinder dimensions must be positive");
  if (segments < 3) throw ParameterError("cylinder needs at least 3 segments");
  if (stacks < 1 || cap_rings < 1) throw ParameterError("cylinder stacks and cap rings must be >= 1");
  std::vector<Vec3> v;
  std::vector<Face> f;
  auto ring_point = [&](int k, double r, double z) {
    const double a = 2.0 * kPi * k / segments;
    return Vec3(r * std::cos(a), r * std::sin(a), z);
  };
  for (int s = 0; s <= stacks; ++s) {
    const double z = -height / 2 + height * s / stacks;
    for (int k = 0; k < segments; ++k) v.push_back(ring_point(k, radius, z));
  }
  auto wall = [&](int s, int k) { return static_cast<Index>(s * segments + ((k % segments) + segments) % segments); };
  for (int s = 0; s < stacks; ++s) {
    for (int k = 0; k < segments; ++k) {
      f.push_back({wall(s, k), wall(s, k + 1), wall(s + 1, k + 1)});
      f.push_back({wall(s, k), wall(s + 1, k + 1), wall(s + 1, k)});
    }
  }
  auto cap = [&](bool top) {
    const double z = top ? height / 2 : -height / 2;
    std::vector<Index> outer(static_cast<std::size_t>(segments));
    for (int k = 0; k < segments; ++k) outer[static_cast<std::size_t>(k)] = wall(top ? stacks : 0, k);
    for (int r = cap_rings - 1; r >= 1; --r) {
      std::vector<Index> inner(static_cast<std::size_t>(segments));
      for (int k = 0; k < segments; ++k) {
        v.push_back(ring_point(k, radius * r / cap_rings, z));
        inner[static_cast<std::size_t>(k)] = static_cast<Index>(v.size() - 1);
      }
      for (int k = 0; k < segments; ++k) {
        const Index o0 = outer[static_cast<std::size_t>(k)], o1 = outer[static_cast<std::size_t>((k + 1) % segments)];
        const Index i0 = inner[static_cast<std::size_t>(k)], i1 = inner[static_cast<std::size_t>((k + 1) % segments)];
        if (top) {
          f.push_back({o0, o1, i1});
          f.push_back({o0, i1, i0});
        } else {
          f.push_back({o0, i1, o1});
          f.push_back({o0, i0, i1});
        }
      }
      outer = std::move(inner);
    }
    v.emplace_back(0.0, 0.0, z);
    const auto c = static_cast<Index>(v.size() - 1);
    for (int k = 0; k < segments; ++k) {
      const Index o0 = outer[static_cast<std::size_t>(k)], o1 = outer[static_cast<std::size_t>((k + 1) % segments)];
      if (top) {
        f.push_back({o0, o1, c});
      } else {
        f.push_back({o1, o0, c});
      }
    }
  };
  cap(true);
  cap(false);
  return TriMesh(std::move(v), std::move(f));
}

/// Axis-aligned box centred at the origin with each face split into a
/// `divisions` x `divisions` grid.
inline TriMesh make_box(const Vec3& size, int divisions = 1) {
  if (!(size.minCoeff() > 0.0)) throw ParameterError("box dimensions must be positive");
  if (divisions < 1) throw ParameterError("box divisions must be >= 1");
  const Vec3 h = size / 2;
  std::vector<Vec3> v;
  std::vector<Face> f;
  std::map<std::array<int, 3>, Index> ids;
  const int n = divisions;
  auto vertex = [&](int i, int j, int k) {
    const std::array<int, 3> key{i, j, k};
    auto it = ids.find(key);
    if (it != ids.end()) return it->second;
    v.emplace_back(-h.x() + size.x() * i / n, -h.y() + size.y() * j / n, -h.z() + size.z() * k / n);
    if (i == 0 || i == n) v.back().x() = i == 0 ? -h.x() : h.x();
    if (j == 0 || j == n) v.back().y() = j == 0 ? -h.y() : h.y();
    if (k == 0 || k == n) v.back().z() = k == 0 ? -h.z() : h.z();
    const auto id = static_cast<Index>(v.size() - 1);
    ids.emplace(key, id);
    return id;
  };
  // For each axis and side, (u, w) span the face in a right-handed order so
  // the winding is outward.
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int ua = (axis + 1) % 3;
      const int wa = (axis + 2) % 3;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          auto at = [&](int du, int dw) {
            std::array<int, 3> c{};
            c[static_cast<std::size_t>(axis)] = side * n;
            c[static_cast<std::size_t>(ua)] = a + du;
            c[static_cast<std::size_t>(wa)] = b + dw;
            return vertex(c[0], c[1], c[2]);
          };
          const Index p00 = at(0, 0), p10 = at(1, 0), p11 = at(1, 1), p01 = at(0, 1);
          if (side == 1) {
            f.push_back({p00, p10, p11});
            f.push_back({p00, p11, p01});
          } else {
            f.push_back({p00, p11, p10});
            f.push_back({p00, p01, p11});
          }
        }
      }
    }
  }
  return TriMesh(std::move(v), std::move(f));
}

/// Tube of radius r around a circular arc of radius R in the XY plane,
/// from angle 0 to `sweep` radians, closed with flat end caps.
inline TriMesh make_torus_section(double major_radius, double minor_radius, double sweep, int major_segments,
                                  int minor_segments) {
  if (!(major_radius > 0.0) || !(minor_radius > 0.0) || !(sweep > 0.0)) {
    throw ParameterError("torus section dimensions must be positive");
  }
  if (minor_radius >= major_radius) throw ParameterError("torus minor radius must be below the major radius");
  if (sweep >= 2.0 * kPi) throw ParameterError("torus section sweep must be below a full turn");
  if (major_segments < 3 || minor_segments < 3) throw ParameterError("torus section needs at least 3 segments");
  std::vector<Vec3> v;
  std::vector<Face> f;
  const int m = minor_segments;
  for (int i = 0; i <= major_segments; ++i) {
    const double a = sweep * i / major_segments;
    const Vec3 radial(std::cos(a), std::sin(a), 0.0);
    for (int j = 0; j < m; ++j) {
      const double b = 2.0 * kPi * j / m;
      v.push_back((major_radius + minor_radius * std::cos(b)) * radial + Vec3(0, 0, minor_radius * std::sin(b)));
    }
  }
  auto id = [&](int i, int j) { return static_cast<Index>(i * m + (j % m)); };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < m; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  for (int end = 0; end < 2; ++end) {
    const int i = end == 0 ? 0 : major_segments;
    const double a = sweep * i / major_segments;
    v.push_back(major_radius * Vec3(std::cos(a), std::sin(a), 0.0));
    const auto c = static_cast<Index>(v.size() - 1);
    for (int j = 0; j < m; ++j) {
      if (end == 0) {
        f.push_back({id(i, j), id(i, j + 1), c});
      } else {
        f.push_back({id(i, j + 1), id(i, j), c});
      }
    }
  }
  TriMesh mesh(std::move(v), std::move(f));
  return mesh;
}

/// Open planar grid in z = 0 with nx x ny cells of the given spacing.
inline TriMesh make_grid(int nx, int ny, double spacing, const Vec3& origin = Vec3::Zero()) {
  if (nx < 1 || ny < 1 || !(spacing > 0.0)) throw ParameterError("grid needs positive cells and spacing");
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) v.push_back(origin + Vec3(i * spacing, j * spacing, 0.0));
  }
  auto id = [&](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriMesh(std::move(v), std::move(f));
}

enum class PrimitiveKind { Sphere, Cylinder, Box, TorusSection };

struct PrimitiveParams {
  double radius = 1.0;       // sphere, cylinder, torus minor radius
  double height = 2.0;       // cylinder
  Vec3 size{1.0, 1.0, 1.0};  // box
  double major_radius = 3.0; // torus
  double sweep = kPi / 2;    // torus
};

/// `resolution` is the segment count around the shape (sphere: derived
/// subdivision level). Below 3 is rejected.
inline TriMesh make_primitive(PrimitiveKind kind, const PrimitiveParams& p, int resolution) {
  if (resolution < 3) throw ParameterError("primitive resolution must be at least 3 segments");
  switch (kind) {
  case PrimitiveKind::Sphere: {
    int level = 0;
    while ((5 << level) < resolution) ++level;
    return make_sphere(p.radius, level);
  }
  case PrimitiveKind::Cylinder:
    return make_cylinder(p.radius, p.height, resolution,
                         std::max(1, static_cast<int>(std::lround(resolution * p.height / (2 * kPi * p.radius)))),
                         std::max(1, resolution / 6));
  case PrimitiveKind::Box:
    return make_box(p.size, std::max(1, resolution / 3));
  case PrimitiveKind::TorusSection:
    return make_torus_section(p.major_radius, p.radius, p.sweep,
                              std::max(3, static_cast<int>(std::lround(resolution * p.sweep * p.major_radius /
                                                                       (2 * kPi * p.radius)))),
                              resolution);
  }
  throw ParameterError("unknown primitive kind");
}

/// Signed enclosed volume by the divergence theorem.
inline double enclosed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto [a, b, c] = mesh.corners(static_cast<Index>(f));
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

} // namespace sld
