#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "sld/face_tree.hpp"
#include "sld/geodesic.hpp"
#include "sld/mesh_io.hpp"
#include "sld/primitives.hpp"
#include "sld/section.hpp"
#include "test_support.hpp"

using namespace sld;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sld_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TriMesh single_triangle() { return TriMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

} // namespace

TEST(MeshIo, AsciiStlWeldsSharedEdge) {
  const auto path = temp_path("two.stl");
  std::ofstream(path) << "solid t\n"
                         "facet normal 0 0 1\n outer loop\n  vertex 0 0 0\n  vertex 1 0 0\n  vertex 1 1 0\n endloop\nendfacet\n"
                         "facet normal 0 0 1\n outer loop\n  vertex 0 0 0\n  vertex 1 1 0\n  vertex 0 1 0\n endloop\nendfacet\n"
                         "endsolid t\n";
  const TriMesh m = load_mesh(path);
  EXPECT_EQ(m.vertex_count(), 4u);
  EXPECT_EQ(m.face_count(), 2u);
}

TEST(MeshIo, ObjCube) {
  const auto path = temp_path("cube.obj");
  std::ofstream out(path);
  out << "# cube\no cube\n";
  for (int i = 0; i < 8; ++i) out << "v " << (i & 1) << ' ' << ((i >> 1) & 1) << ' ' << ((i >> 2) & 1) << "\n";
  out << "vn 0 0 1\n";
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) out << "f " << q[0] + 1 << "//1 " << q[1] + 1 << "//1 " << q[2] + 1 << "//1 " << q[3] + 1 << "//1\n";
  out.close();
  const TriMesh m = load_mesh(path);
  EXPECT_EQ(m.vertex_count(), 8u);
  EXPECT_EQ(m.face_count(), 12u);
}

TEST(MeshIo, BinaryPlyIcosahedron) {
  const TriMesh ico = make_sphere(1.0, 0);
  const auto path = temp_path("ico.ply");
  save_mesh(ico, path, MeshFormat::PlyBinary);
  const TriMesh m = load_mesh(path);
  ASSERT_EQ(m.vertex_count(), 12u);
  ASSERT_EQ(m.face_count(), 20u);
  for (const Vec3& p : m.vertices()) EXPECT_NEAR(p.norm(), 1.0, 1e-6);
}

TEST(MeshIo, RoundTripAllFormats) {
  const TriMesh box = make_box({1, 2, 3}, 3);
  for (auto [name, fmt] : {std::pair{"rt.obj", MeshFormat::Obj}, std::pair{"rt_a.stl", MeshFormat::StlAscii},
                           std::pair{"rt_a.ply", MeshFormat::PlyAscii}, std::pair{"rt_b.ply", MeshFormat::PlyBinary}}) {
    const auto path = temp_path(name);
    save_mesh(box, path, fmt);
    const TriMesh back = load_mesh(path, fmt);
    if (fmt == MeshFormat::StlAscii) {
      test_support::expect_same_mesh_renumbered(box, back, 1e-6);
    } else {
      test_support::expect_same_mesh(box, back, 1e-6);
    }
  }
}

TEST(MeshIo, BinaryStlIsFloatPrecision) {
  const TriMesh box = make_box({1, 2, 3}, 2);
  const auto path = temp_path("rt_b.stl");
  save_mesh(box, path, MeshFormat::StlBinary);
  const TriMesh back = load_mesh(path);
  EXPECT_EQ(back.face_count(), box.face_count());
  EXPECT_EQ(back.vertex_count(), box.vertex_count());
}

TEST(MeshIo, LabelsSurvivePly) {
  TriMesh box = make_box({1, 1, 1});
  std::vector<int> labels(box.vertex_count());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 9);
  box = box.with_labels(labels);
  for (auto fmt : {MeshFormat::PlyAscii, MeshFormat::PlyBinary}) {
    const auto path = temp_path("labels.ply");
    save_mesh(box, path, fmt);
    const TriMesh back = load_mesh(path);
    ASSERT_TRUE(back.labels().has_value());
    EXPECT_EQ(*back.labels(), labels);
  }
}

TEST(MeshIo, EmptyWriteRejected) {
  EXPECT_THROW(save_mesh(TriMesh(), temp_path("empty.obj")), ValidationError);
}

TEST(MeshIo, ParseErrorCarriesOffset) {
  const auto path = temp_path("bad.obj");
  std::ofstream(path) << "v 0 0 0\nv 1 0 0\nv 0 zz 0\nf 1 2 3\n";
  try {
    load_mesh(path);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.byte_offset(), 16u + 4u); // line 3 starts at byte 16; "zz" is its fifth byte
  }
}

TEST(MeshIo, EmptyMeshRejected) {
  const auto path = temp_path("empty.obj");
  std::ofstream(path) << "# nothing\n";
  EXPECT_THROW(load_mesh(path), ValidationError);
}

TEST(MeshIo, UnwritablePath) {
  EXPECT_THROW(save_mesh(make_box({1, 1, 1}), "/nonexistent_dir_xyz/out.obj"), IoError);
}

TEST(Normals, RightHandRule) {
  const auto n = face_normals(single_triangle());
  EXPECT_NEAR((n[0] - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
  const TriMesh rev({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 2, 1}});
  EXPECT_NEAR((face_normals(rev)[0] - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
}

TEST(Normals, ConvexOutward) {
  const TriMesh s = make_sphere(2.0, 3);
  const auto n = face_normals(s);
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : s.vertices()) c += p;
  c /= static_cast<double>(s.vertex_count());
  for (std::size_t f = 0; f < n.size(); ++f) {
    EXPECT_NEAR(n[f].norm(), 1.0, 1e-9);
    EXPECT_GT(n[f].dot(face_centroid(s, static_cast<Index>(f)) - c), 0.0);
  }
}

TEST(Normals, ZeroAreaFaceNamed) {
  const TriMesh m({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}}, {{0, 1, 3}, {0, 1, 2}});
  try {
    face_normals(m);
    FAIL();
  } catch (const SingularGeometryError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Adjacency, Triangle) {
  const Adjacency a = vertex_adjacency(single_triangle());
  for (Index v = 0; v < 3; ++v) EXPECT_EQ(a.degree(v), 2u);
}

TEST(Adjacency, CubeDegreesMatchEdgeCount) {
  const TriMesh cube = make_box({1, 1, 1});
  const Adjacency a = vertex_adjacency(cube);
  std::set<std::pair<Index, Index>> edges;
  for (const Face& f : cube.faces()) {
    for (int k = 0; k < 3; ++k) {
      const Index x = f[static_cast<std::size_t>(k)], y = f[static_cast<std::size_t>((k + 1) % 3)];
      edges.insert({std::min(x, y), std::max(x, y)});
    }
  }
  std::size_t sum = 0;
  for (Index v = 0; v < 8; ++v) {
    EXPECT_GE(a.degree(v), 3u);
    EXPECT_LE(a.degree(v), 6u);
    sum += a.degree(v);
    const auto nb = a.of(v);
    EXPECT_TRUE(std::is_sorted(nb.begin(), nb.end()));
    for (Index u : nb) {
      const auto back = a.of(u);
      EXPECT_TRUE(std::binary_search(back.begin(), back.end(), v));
    }
  }
  EXPECT_EQ(sum, 2 * edges.size());
}

TEST(Adjacency, DisconnectedTriangles) {
  const TriMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}}, {{0, 1, 2}, {3, 4, 5}});
  const Adjacency a = vertex_adjacency(m);
  for (Index v = 0; v < 3; ++v) {
    for (Index u : a.of(v)) EXPECT_LT(u, 3);
  }
  const auto comps = connected_components(m, all_vertices(m));
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0], (VertexSet{0, 1, 2}));
  EXPECT_EQ(comps[1], (VertexSet{3, 4, 5}));
}

TEST(Components, SphereBandAndCaps) {
  const TriMesh s = make_sphere(1.0, 3);
  EXPECT_EQ(connected_components(s, all_vertices(s)).size(), 1u);
  VertexSet band, caps;
  for (Index v = 0; v < static_cast<Index>(s.vertex_count()); ++v) {
    const double z = s.vertex(v).z();
    if (std::abs(z) < 0.4) band.push_back(v);
    if (std::abs(z) > 0.7) caps.push_back(v);
  }
  EXPECT_EQ(connected_components(s, band).size(), 1u);
  EXPECT_EQ(connected_components(s, caps).size(), 2u);
}

TEST(Geodesic, SamePointIsZero) {
  const TriMesh s = make_sphere(1.0, 1);
  const auto p = geodesic_path(s, 3, 3);
  EXPECT_EQ(p.length, 0.0);
  EXPECT_EQ(p.vertices.size(), 1u);
}

TEST(Geodesic, StraightStrip) {
  // Strip of unit squares along x; the bottom row is the unique shortest path.
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int i = 0; i <= 6; ++i) {
    v.emplace_back(i, 0, 0);
    v.emplace_back(i, 3, 0);
  }
  for (int i = 0; i < 6; ++i) {
    f.push_back({2 * i, 2 * i + 2, 2 * i + 3});
    f.push_back({2 * i, 2 * i + 3, 2 * i + 1});
  }
  const TriMesh m(v, f);
  const auto p = geodesic_path(m, 0, 12);
  EXPECT_DOUBLE_EQ(p.length, 6.0);
  EXPECT_EQ(p.vertices, (std::vector<Index>{0, 2, 4, 6, 8, 10, 12}));
}

TEST(Geodesic, MatchesBellmanFordOnRandomMeshes) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const TriMesh m = test_support::random_mesh(rng, 40);
    for (int q = 0; q < 5; ++q) {
      std::uniform_int_distribution<Index> pick(0, static_cast<Index>(m.vertex_count() - 1));
      const Index s = pick(rng), t = pick(rng);
      const auto bf = test_support::bellman_ford(m, s);
      if (!std::isfinite(bf[static_cast<std::size_t>(t)])) {
        EXPECT_THROW(geodesic_path(m, s, t), NoPathError);
        continue;
      }
      const auto p = geodesic_path(m, s, t);
      EXPECT_EQ(p.length, bf[static_cast<std::size_t>(t)]);
      EXPECT_GE(p.length + 1e-12, (m.vertex(s) - m.vertex(t)).norm());
      EXPECT_EQ(p.vertices.front(), s);
      EXPECT_EQ(p.vertices.back(), t);
    }
  }
}

TEST(Geodesic, LexicographicTieBreak) {
  // Unit square split both ways: 0->2 via 1 or via 3 have equal length.
  const TriMesh m({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, 5}},
                  {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}});
  const auto p = geodesic_path(m, 0, 2);
  EXPECT_EQ(p.vertices, (std::vector<Index>{0, 1, 2}));
}

TEST(Section, SphereEquator) {
  const TriMesh s = make_sphere(1.0, 4);
  const Plane pl = Plane::through({0, 0, 0.0123}, {0, 0, 1});
  const auto curves = plane_intersection_curve(s, all_faces(s), pl);
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_TRUE(curves[0].closed);
  const double r = std::sqrt(1.0 - 0.0123 * 0.0123);
  for (const Vec3& p : curves[0].points) {
    EXPECT_LT(std::abs(pl.signed_distance(p)), 1e-9);
    EXPECT_NEAR(std::hypot(p.x(), p.y()), r, 0.01);
  }
}

TEST(Section, PlaneAboveIsEmpty) {
  const TriMesh s = make_sphere(1.0, 2);
  EXPECT_TRUE(plane_intersection_curve(s, all_faces(s), Plane::through({0, 0, 2}, {0, 0, 1})).empty());
}

TEST(Section, SingleTriangle) {
  const auto c = plane_intersection_curve(single_triangle(), FaceSet{0}, Plane::through({0.3, 0, 0}, {1, 0, 0}));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].points.size(), 2u);
  EXPECT_FALSE(c[0].closed);
}

TEST(Raycast, TriangleHit) {
  const TriMesh m({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const auto hit = ray_surface_intersection(m, FaceSet{0}, {0, 0, 2}, {0, 0, -1});
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->norm(), 0.0, 1e-15);
  EXPECT_FALSE(ray_surface_intersection(m, FaceSet{0}, {0, 0, 2}, {0, 0, 1}));
  EXPECT_THROW(ray_surface_intersection(m, FaceSet{0}, {0, 0, 2}, {0, 0, -2}), ParameterError);
}

TEST(Raycast, SphereDistance) {
  const TriMesh s = make_sphere(2.0, 4, {1, 1, 1});
  const Vec3 o(10, 1, 1);
  const auto hit = ray_surface_intersection(s, all_faces(s), o, {-1, 0, 0});
  ASSERT_TRUE(hit);
  EXPECT_NEAR((*hit - o).norm(), 9.0 - 2.0, 0.01);
}

TEST(Raycast, WatertightOnSharedEdge) {
  // Rays through shared edges and vertices of a closed mesh must not slip through.
  const TriMesh s = make_box({2, 2, 2}, 2);
  const FaceTree tree(s);
  for (double y : {-0.5, 0.0, 0.5}) {
    for (double z : {-1.0 / 3, 0.0, 0.25}) {
      EXPECT_TRUE(tree.raycast({5, y, z}, {-1, 0, 0})) << y << ' ' << z;
    }
  }
}

TEST(FaceTreeTest, ClosestPointMatchesBruteForce) {
  const TriMesh s = make_torus_section(5.0, 1.0, 2.0, 20, 10);
  const FaceTree tree(s);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-7, 7);
  for (int i = 0; i < 300; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < s.face_count(); ++f) {
      const auto [a, b, c] = s.corners(static_cast<Index>(f));
      best = std::min(best, test_support::brute_point_triangle_sq(p, a, b, c));
    }
    EXPECT_NEAR(tree.closest_point(p).squared_distance, best, 1e-9);
  }
}

TEST(Boundary, GridLoop) {
  const TriMesh g = make_grid(4, 3, 1.0);
  const auto b = boundary_loops(g, all_faces(g));
  ASSERT_EQ(b.loops.size(), 1u);
  EXPECT_EQ(b.loops[0].size(), 14u);
  EXPECT_TRUE(b.non_manifold_edges.empty());
}

TEST(Resample, EndpointsAndSpacing) {
  const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {1, 3, 0}};
  const auto r = resample_by_arc_length(pts, 5);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r.front(), pts.front());
  EXPECT_NEAR((r.back() - pts.back()).norm(), 0.0, 1e-12);
  for (std::size_t i = 1; i < r.size(); ++i) {
    EXPECT_NEAR(polyline_length(std::span<const Vec3>(r.data() + i - 1, 2)), 1.0, 1e-12);
  }
  EXPECT_THROW(resample_by_arc_length(pts, 0), ParameterError);
}

TEST(Determinism, RepeatedQueriesIdentical) {
  const TriMesh s = make_sphere(1.0, 3);
  const auto a = geodesic_path(s, 0, 100);
  const auto b = geodesic_path(s, 0, 100);
  EXPECT_EQ(a.vertices, b.vertices);
  const auto ca = plane_intersection_curve(s, all_faces(s), Plane::through({0, 0, 0.1}, {0.2, 0.1, 1}));
  const auto cb = plane_intersection_curve(s, all_faces(s), Plane::through({0, 0, 0.1}, {0.2, 0.1, 1}));
  ASSERT_EQ(ca.size(), cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) EXPECT_EQ(ca[i].points, cb[i].points);
}
