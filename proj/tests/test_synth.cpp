#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "sld/preprocess.hpp"
#include "sld/primitives.hpp"
#include "sld/surface_nets.hpp"
#include "sld/synth.hpp"
#include "test_support.hpp"

using namespace sld;

namespace {

const std::pair<TriMesh, SynthTruth>& default_vertebra() {
  static const auto v = make_synthetic_vertebra(SynthParams{});
  return v;
}

/// Every undirected edge in exactly two faces, every directed edge once.
void expect_closed_manifold(const TriMesh& m) {
  std::map<std::pair<Index, Index>, int> directed;
  for (const Face& f : m.faces()) {
    for (int k = 0; k < 3; ++k) directed[{f[static_cast<std::size_t>(k)], f[static_cast<std::size_t>((k + 1) % 3)]}]++;
  }
  int bad = 0;
  for (const auto& [e, c] : directed) {
    if (c != 1 || !directed.count({e.second, e.first})) ++bad;
  }
  EXPECT_EQ(bad, 0);
}

std::array<double, 3> key(const Vec3& p) { return {p.x() + 0.0, p.y(), p.z()}; }

double brute_distance_to_mesh(const TriMesh& m, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    const auto c = m.corners(static_cast<Index>(f));
    best = std::min(best, test_support::brute_point_triangle_sq(p, c[0], c[1], c[2]));
  }
  return std::sqrt(best);
}

} // namespace

TEST(Primitives, SphereVerticesOnSurface) {
  const TriMesh s = make_sphere(1.0, 3);
  for (const Vec3& v : s.vertices()) EXPECT_NEAR(v.norm(), 1.0, 1e-9);
  expect_closed_manifold(s);
}

TEST(Primitives, CylinderVolume) {
  PrimitiveParams p;
  p.radius = 1.0;
  p.height = 2.0;
  const TriMesh c = make_primitive(PrimitiveKind::Cylinder, p, 64);
  EXPECT_NEAR(enclosed_volume(c), 2.0 * kPi, 0.02 * 2.0 * kPi);
  expect_closed_manifold(c);
}

TEST(Primitives, BoxCornersExact) {
  PrimitiveParams p;
  p.size = Vec3(1, 2, 3);
  const TriMesh b = make_primitive(PrimitiveKind::Box, p, 3);
  int corners = 0;
  for (const Vec3& v : b.vertices()) {
    if (std::abs(v.x()) == 0.5 && std::abs(v.y()) == 1.0 && std::abs(v.z()) == 1.5) ++corners;
  }
  EXPECT_EQ(corners, 8);
  EXPECT_NEAR(enclosed_volume(b), 6.0, 1e-9);
}

TEST(Primitives, TorusSectionClosed) {
  PrimitiveParams p;
  p.major_radius = 10.0;
  p.radius = 2.0;
  p.sweep = kPi / 2;
  const TriMesh t = make_primitive(PrimitiveKind::TorusSection, p, 24);
  expect_closed_manifold(t);
  // Pappus: swept area times centroid path length.
  EXPECT_NEAR(enclosed_volume(t), kPi * 4.0 * 10.0 * kPi / 2, 0.03 * kPi * 4.0 * 10.0 * kPi / 2);
}

TEST(Primitives, ResolutionFloor) {
  EXPECT_THROW(make_primitive(PrimitiveKind::Cylinder, {}, 2), ParameterError);
}

TEST(SurfaceNets, SphereField) {
  LatticeSpec spec;
  spec.h = 0.5;
  spec.n = {24, 24, 24};
  spec.centered = {true, true, true};
  const TriMesh m = surface_nets([](const Vec3& p) { return p.norm() - 4.0; }, spec);
  expect_closed_manifold(m);
  for (const Vec3& v : m.vertices()) EXPECT_NEAR(v.norm(), 4.0, 1e-6);
  EXPECT_NEAR(enclosed_volume(m), 4.0 / 3.0 * kPi * 64.0, 0.02 * 4.0 / 3.0 * kPi * 64.0);
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    EXPECT_GT(face_normal(m, static_cast<Index>(f)).dot(face_centroid(m, static_cast<Index>(f))), 0.0);
  }
}

TEST(SurfaceNets, CenteredLatticeIsSymmetric) {
  LatticeSpec spec;
  spec.h = 0.9;
  spec.n = {10, 4, 4};
  spec.centered = {true, false, true};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(spec.coord(0, i), -spec.coord(0, 9 - i));
}

TEST(Synth, DefaultIsWatertightWithAllLabelsAndGroups) {
  const auto& [mesh, truth] = default_vertebra();
  expect_closed_manifold(mesh);
  EXPECT_FALSE(mesh.first_zero_area_face().has_value());
  ASSERT_EQ(truth.labels.vertex_count(), mesh.vertex_count());
  std::set<SegmentLabel> present(truth.labels.labels.begin(), truth.labels.labels.end());
  EXPECT_EQ(present.size(), 9u);
  ASSERT_EQ(truth.landmarks.groups.size(), 15u);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(truth.landmarks.groups[i].key, canonical_groups()[i]);
  const LandmarkCounts counts;
  for (const auto& g : truth.landmarks.groups) {
    std::size_t want = 0;
    switch (g.key.kind) {
    case LigamentKind::ALL: want = static_cast<std::size_t>(counts.all); break;
    case LigamentKind::PLL: want = static_cast<std::size_t>(counts.pll); break;
    case LigamentKind::ITL:
    case LigamentKind::SSL: want = 1; break;
    case LigamentKind::ISL: want = static_cast<std::size_t>(counts.isl); break;
    case LigamentKind::CL: want = 4; break;
    case LigamentKind::LF: want = static_cast<std::size_t>(counts.lf); break;
    }
    EXPECT_EQ(g.points.size(), want) << group_name(g.key);
    ASSERT_NE(truth.annotations.find(g.key), nullptr);
  }
  ASSERT_TRUE(mesh.labels().has_value());
  EXPECT_EQ(*mesh.labels(), truth.labels.as_ints());
}

TEST(Synth, SymmetricBuildIsMirrorInvariant) {
  const auto& [mesh, truth] = default_vertebra();
  std::map<std::array<double, 3>, Index> where;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) where[key(mesh.vertices()[i])] = static_cast<Index>(i);
  std::vector<Index> partner(mesh.vertex_count(), -1);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const auto it = where.find(key(synth_detail::mirror(mesh.vertices()[i])));
    ASSERT_NE(it, where.end()) << "vertex " << i << " has no mirror image";
    partner[i] = it->second;
  }
  std::set<std::array<Index, 3>> faces;
  auto canon = [](Face f) {
    while (f[0] > f[1] || f[0] > f[2]) std::rotate(f.begin(), f.begin() + 1, f.end());
    return std::array<Index, 3>{f[0], f[1], f[2]};
  };
  for (const Face& f : mesh.faces()) faces.insert(canon(f));
  for (const Face& f : mesh.faces()) {
    const Face m{partner[static_cast<std::size_t>(f[0])], partner[static_cast<std::size_t>(f[2])],
                 partner[static_cast<std::size_t>(f[1])]};
    EXPECT_TRUE(faces.count(canon(m)));
  }
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    EXPECT_EQ(truth.labels.labels[static_cast<std::size_t>(partner[i])], mirror_label(truth.labels.labels[i]));
  }
}

TEST(Synth, NoiseIsBoundedAndMirrored) {
  SynthParams p;
  p.noise = 0.1;
  p.seed = 7;
  const auto& clean = default_vertebra().first;
  const auto [noisy, truth] = make_synthetic_vertebra(p);
  ASSERT_EQ(noisy.vertex_count(), clean.vertex_count());
  double largest = 0.0;
  for (std::size_t i = 0; i < clean.vertex_count(); ++i) {
    const double d = (noisy.vertices()[i] - clean.vertices()[i]).norm();
    EXPECT_LE(d, 0.1 + 1e-12);
    largest = std::max(largest, d);
  }
  EXPECT_GT(largest, 0.05);
  std::set<std::array<double, 3>> pos;
  for (const Vec3& v : noisy.vertices()) pos.insert(key(v));
  for (const Vec3& v : noisy.vertices()) EXPECT_TRUE(pos.count(key(synth_detail::mirror(v))));
}

TEST(Synth, DeterministicForSameSeed) {
  SynthParams p = random_synth_params(11);
  const auto a = make_synthetic_vertebra(p);
  const auto b = make_synthetic_vertebra(p);
  test_support::expect_same_mesh(a.first, b.first, 0.0);
  ASSERT_EQ(a.second.landmarks.groups.size(), b.second.landmarks.groups.size());
  for (std::size_t g = 0; g < a.second.landmarks.groups.size(); ++g) {
    EXPECT_EQ(a.second.landmarks.groups[g].points, b.second.landmarks.groups[g].points);
  }
  EXPECT_EQ(a.second.labels.labels, b.second.labels.labels);
}

TEST(Synth, TruthLandmarksLieOnMesh) {
  const auto& [mesh, truth] = default_vertebra();
  for (const auto& g : truth.landmarks.groups) {
    for (const Vec3& p : g.points) EXPECT_LE(brute_distance_to_mesh(mesh, p), 1e-6) << group_name(g.key);
  }
  const FaceTree tree(mesh);
  for (const auto& g : truth.annotations.groups) {
    for (const Vec3& p : g.points) EXPECT_LE(std::sqrt(tree.closest_point(p).squared_distance), 1e-6);
  }
}

TEST(Synth, ProcessTipsNearSurface) {
  const auto& [mesh, truth] = default_vertebra();
  const FaceTree tree(mesh);
  EXPECT_EQ(truth.process_tips.size(), 7u);
  for (const auto& [label, tip] : truth.process_tips) {
    EXPECT_LE(std::sqrt(tree.closest_point(tip).squared_distance), 0.5) << label_name(label);
  }
}

TEST(Synth, SpinousAblationDropsGroups) {
  SynthParams p;
  p.spinous = false;
  const auto [mesh, truth] = make_synthetic_vertebra(p);
  EXPECT_TRUE(truth.labels.vertices_with(SegmentLabel::SpinousProcess).empty());
  EXPECT_EQ(truth.landmarks.find({LigamentKind::SSL, Site::None}), nullptr);
  EXPECT_EQ(truth.landmarks.find({LigamentKind::ISL, Site::Superior}), nullptr);
  EXPECT_EQ(truth.landmarks.find({LigamentKind::ISL, Site::Inferior}), nullptr);
  EXPECT_NE(truth.landmarks.find({LigamentKind::ALL, Site::Superior}), nullptr);
}

TEST(Synth, ArticularAblationDropsFacetAndFlavum) {
  SynthParams p;
  p.articular_inf_left = false;
  const auto [mesh, truth] = make_synthetic_vertebra(p);
  EXPECT_TRUE(truth.labels.vertices_with(SegmentLabel::ArticularInfL).empty());
  EXPECT_EQ(truth.landmarks.find({LigamentKind::CL, Site::InfL}), nullptr);
  EXPECT_EQ(truth.landmarks.find({LigamentKind::LF, Site::Left}), nullptr);
  EXPECT_NE(truth.landmarks.find({LigamentKind::LF, Site::Right}), nullptr);
}

TEST(Synth, RejectsInvalidParameters) {
  SynthParams p;
  p.noise = 0.2 * p.min_feature_radius();
  EXPECT_THROW(make_synthetic_vertebra(p), ParameterError);
  p = SynthParams{};
  p.transverse_radius = -1.0;
  EXPECT_THROW(make_synthetic_vertebra(p), ParameterError);
  p = SynthParams{};
  p.pedicle_radius = 7.0;
  EXPECT_THROW(make_synthetic_vertebra(p), ParameterError);
}

TEST(Synth, RandomParamsBuild) {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const auto [mesh, truth] = make_synthetic_vertebra(random_synth_params(s));
    expect_closed_manifold(mesh);
    EXPECT_EQ(truth.landmarks.groups.size(), 15u);
  }
}

TEST(TiltedBody, CapNormalsAtTilt) {
  const TriMesh b = make_tilted_body(20.0, 25.0, 10.0, 64);
  const double c = std::cos(10.0 * kPi / 180.0);
  int top = 0, bottom = 0;
  for (const Vec3& n : face_normals(b)) {
    if (n.z() > 0.5) {
      EXPECT_NEAR(n.z(), c, 1e-9);
      ++top;
    } else if (n.z() < -0.5) {
      EXPECT_NEAR(n.z(), -c, 1e-9);
      ++bottom;
    }
  }
  EXPECT_GT(top, 0);
  EXPECT_EQ(top, bottom);
  expect_closed_manifold(b);
}

TEST(ReflectX, NormalsMirrorExactly) {
  const TriMesh& m = default_vertebra().first;
  const TriMesh r = reflect_x(m);
  const auto a = face_normals(m), b = face_normals(r);
  for (std::size_t f = 0; f < a.size(); ++f) {
    EXPECT_EQ(b[f].x(), -a[f].x());
    EXPECT_EQ(b[f].y(), a[f].y());
    EXPECT_EQ(b[f].z(), a[f].z());
  }
}
