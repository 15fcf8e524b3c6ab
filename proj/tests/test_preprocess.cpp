#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "sld/face_tree.hpp"
#include "sld/preprocess.hpp"
#include "sld/primitives.hpp"
#include "sld/remesh.hpp"

using namespace sld;

namespace {

Mat3 random_rotation(std::mt19937& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

TriMesh transformed(const TriMesh& m, const Mat3& r, const Vec3& t) {
  std::vector<Vec3> v;
  for (const Vec3& p : m.vertices()) v.push_back(r * p + t);
  return TriMesh(v, m.faces());
}

// Box plus an off-centre lump, so that no principal axis is ambiguous.
TriMesh asymmetric_body() {
  const TriMesh box = make_box({30, 40, 20}, 4);
  const TriMesh lump = make_sphere(4, 2, {8, -10, 6});
  std::vector<Vec3> v = box.vertices();
  std::vector<Face> f = box.faces();
  const auto off = static_cast<Index>(v.size());
  for (const Vec3& p : lump.vertices()) v.push_back(p);
  for (Face t : lump.faces()) f.push_back({t[0] + off, t[1] + off, t[2] + off});
  return TriMesh(v, f);
}

// Latitude-longitude sphere: long slivers near the poles.
TriMesh uv_sphere(double r, int rings, int segments) {
  std::vector<Vec3> v{{0, 0, r}};
  for (int i = 1; i < rings; ++i) {
    const double th = kPi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double ph = 2 * kPi * j / segments;
      v.emplace_back(r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th));
    }
  }
  v.emplace_back(0, 0, -r);
  const auto south = static_cast<Index>(v.size() - 1);
  auto id = [&](int ring, int j) { return static_cast<Index>(1 + (ring - 1) * segments + (j % segments)); };
  std::vector<Face> f;
  for (int j = 0; j < segments; ++j) f.push_back({0, id(1, j), id(1, j + 1)});
  for (int i = 1; i + 1 < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  for (int j = 0; j < segments; ++j) f.push_back({south, id(rings - 1, j + 1), id(rings - 1, j)});
  return TriMesh(v, f);
}

double rms_radius_error(const TriMesh& m, double r) {
  double s = 0;
  for (const Vec3& p : m.vertices()) s += (p.norm() - r) * (p.norm() - r);
  return std::sqrt(s / static_cast<double>(m.vertex_count()));
}

void expect_orthonormal_right_handed(const VertebraFrame& f) {
  EXPECT_NEAR(f.a_l.norm(), 1.0, 1e-9);
  EXPECT_NEAR(f.a_ap.norm(), 1.0, 1e-9);
  EXPECT_NEAR(f.a_lr.norm(), 1.0, 1e-9);
  EXPECT_NEAR(f.a_l.dot(f.a_ap), 0.0, 1e-9);
  EXPECT_NEAR(f.a_l.dot(f.a_lr), 0.0, 1e-9);
  EXPECT_NEAR(f.a_ap.dot(f.a_lr), 0.0, 1e-9);
  EXPECT_LT((f.a_lr.cross(f.a_ap) - f.a_l).norm(), 1e-9);
}

} // namespace

TEST(Jacobi, MatchesEigenSolver) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    Mat3 a;
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) a(r, c) = a(c, r) = u(rng);
    }
    const SymmetricEigen mine = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Mat3> ref(a);
    std::array<double, 3> got{mine.values[0], mine.values[1], mine.values[2]};
    std::sort(got.begin(), got.end());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[static_cast<std::size_t>(k)], ref.eigenvalues()[k], 1e-10);
    for (int k = 0; k < 3; ++k) {
      const Vec3 v = mine.vectors.col(k);
      EXPECT_LT((a * v - mine.values[k] * v).norm(), 1e-10);
    }
    EXPECT_LT((mine.vectors.transpose() * mine.vectors - Mat3::Identity()).norm(), 1e-12);
  }
}

TEST(Frame, AxisAlignedBox) {
  const TriMesh box = make_box({20, 40, 30}, 3);
  const VertebraFrame f = estimate_frame(box);
  expect_orthonormal_right_handed(f);
  EXPECT_LT((f.a_l - Vec3(0, 0, 1)).norm(), 1e-6);
  EXPECT_LT((f.a_ap - Vec3(0, -1, 0)).norm(), 1e-6);
  EXPECT_LT((f.a_lr - Vec3(-1, 0, 0)).norm(), 1e-6);
  const Dimensions d = dimensions(box, f);
  EXPECT_NEAR(d.extent_lr, 20, 1e-9);
  EXPECT_NEAR(d.extent_ap, 40, 1e-9);
  EXPECT_NEAR(d.extent_l, 30, 1e-9);
  EXPECT_GT(d.mean_edge_length, 0);
}

TEST(Frame, RasHintFlipsAnterior) {
  const VertebraFrame f = estimate_frame(make_box({20, 40, 30}, 2), FrameHint::ras());
  EXPECT_LT((f.a_ap - Vec3(0, 1, 0)).norm(), 1e-6);
  expect_orthonormal_right_handed(f);
}

TEST(Frame, RotationEquivariance) {
  std::mt19937 rng(9);
  const TriMesh body = asymmetric_body();
  const VertebraFrame base = estimate_frame(body);
  for (int i = 0; i < 20; ++i) {
    const Mat3 r = random_rotation(rng);
    const Vec3 t(5.0 * i, -3.0, 17.0);
    const FrameHint hint{r * Vec3::UnitZ(), r * -Vec3::UnitY()};
    const VertebraFrame f = estimate_frame(transformed(body, r, t), hint);
    expect_orthonormal_right_handed(f);
    EXPECT_LT((f.a_l - r * base.a_l).norm(), 1e-6);
    EXPECT_LT((f.a_ap - r * base.a_ap).norm(), 1e-6);
    EXPECT_LT((f.a_lr - r * base.a_lr).norm(), 1e-6);
    EXPECT_LT((f.origin - (r * base.origin + t)).norm(), 1e-6);
  }
}

TEST(Frame, VertexOrderIndependent) {
  const TriMesh body = asymmetric_body();
  std::vector<Index> perm(body.vertex_count());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> v(body.vertex_count());
  std::vector<Index> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    v[i] = body.vertex(perm[i]);
    inv[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i);
  }
  std::vector<Face> f;
  for (const Face& t : body.faces()) {
    f.push_back({inv[static_cast<std::size_t>(t[0])], inv[static_cast<std::size_t>(t[1])], inv[static_cast<std::size_t>(t[2])]});
  }
  const TriMesh shuffled(v, f);
  const VertebraFrame a = estimate_frame(body);
  const VertebraFrame b = estimate_frame(shuffled);
  EXPECT_EQ(a.origin, b.origin);
  EXPECT_EQ(a.a_l, b.a_l);
  EXPECT_EQ(a.a_ap, b.a_ap);
  const Dimensions da = dimensions(body, a);
  const Dimensions db = dimensions(shuffled, b);
  EXPECT_EQ(da.extent_l, db.extent_l);
  EXPECT_NEAR(da.mean_edge_length, db.mean_edge_length, 1e-12);
}

TEST(Frame, MirrorIsExact) {
  const TriMesh body = asymmetric_body();
  std::vector<Vec3> v;
  for (const Vec3& p : body.vertices()) v.emplace_back(-p.x(), p.y(), p.z());
  std::vector<Face> f;
  for (const Face& t : body.faces()) f.push_back({t[0], t[2], t[1]});
  const VertebraFrame a = estimate_frame(body);
  const VertebraFrame b = estimate_frame(TriMesh(v, f));
  EXPECT_EQ(b.origin, Vec3(-a.origin.x(), a.origin.y(), a.origin.z()));
  EXPECT_EQ(b.a_l, Vec3(-a.a_l.x(), a.a_l.y(), a.a_l.z()));
  EXPECT_EQ(b.a_ap, Vec3(-a.a_ap.x(), a.a_ap.y(), a.a_ap.z()));
}

TEST(Frame, SphereIsDegenerate) {
  EXPECT_THROW(estimate_frame(make_sphere(1.0, 3)), DegenerateGeometryError);
}

TEST(Frame, CoplanarIsDegenerate) {
  EXPECT_THROW(estimate_frame(make_grid(5, 7, 1.0)), DegenerateGeometryError);
}

TEST(Frame, HintParsing) {
  EXPECT_EQ(FrameHint::parse("LPS").anterior, -Vec3::UnitY());
  EXPECT_EQ(FrameHint::parse("RAS").anterior, Vec3::UnitY());
  const FrameHint h = FrameHint::parse("0,0,1,1,0,0");
  EXPECT_EQ(h.anterior, Vec3::UnitX());
  EXPECT_THROW(FrameHint::parse("1,2"), ParameterError);
  EXPECT_THROW(FrameHint::parse("up"), ParameterError);
}

TEST(Dimensions, UnitCubeAndTranslation) {
  const TriMesh cube = make_box({1, 1, 1});
  VertebraFrame id;
  id.a_lr = Vec3::UnitX();
  id.a_ap = Vec3::UnitY();
  id.a_l = Vec3::UnitZ();
  const Dimensions d = dimensions(cube, id);
  EXPECT_DOUBLE_EQ(d.extent_lr, 1);
  EXPECT_DOUBLE_EQ(d.extent_ap, 1);
  EXPECT_DOUBLE_EQ(d.extent_l, 1);
  const Dimensions moved = dimensions(transformed(cube, Mat3::Identity(), {4, 5, 6}), id);
  EXPECT_NEAR(moved.extent_lr, 1, 1e-12);
  EXPECT_NEAR(moved.mean_edge_length, d.mean_edge_length, 1e-12);
}

TEST(Smooth, ZeroIterationsIsIdentity) {
  const TriMesh s = make_sphere(3, 2);
  const TriMesh out = smooth(s, 0, SmoothMethod::Taubin, 0.5);
  EXPECT_EQ(out.vertices(), s.vertices());
  EXPECT_EQ(out.faces(), s.faces());
}

TEST(Smooth, RejectsBadLambda) {
  const TriMesh s = make_sphere(3, 1);
  EXPECT_THROW(smooth(s, 1, SmoothMethod::Laplacian, 0.0), ParameterError);
  EXPECT_THROW(smooth(s, 1, SmoothMethod::Laplacian, 1.5), ParameterError);
}

TEST(Smooth, TaubinDenoisesSphere) {
  const double r = 10;
  const TriMesh s = make_sphere(r, 4);
  std::mt19937 rng(2);
  std::normal_distribution<double> n(0, 0.02 * r);
  std::vector<Vec3> v;
  for (const Vec3& p : s.vertices()) v.push_back(p + p.normalized() * n(rng));
  const TriMesh noisy(v, s.faces());
  const TriMesh out = smooth(noisy, 20, SmoothMethod::Taubin, 0.5);
  EXPECT_LE(rms_radius_error(out, r), 0.5 * rms_radius_error(noisy, r));
  EXPECT_EQ(out.faces(), s.faces());
}

TEST(Smooth, TaubinVolumeGuard) {
  const TriMesh s = make_sphere(10, 3);
  const double v0 = enclosed_volume(s);
  const double v1 = enclosed_volume(smooth(s, 50, SmoothMethod::Taubin, 0.5));
  EXPECT_LT(std::abs(v1 - v0) / v0, 0.05);
}

TEST(Smooth, PlaneStaysPlanar) {
  const TriMesh g = make_grid(8, 8, 1.0);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<Vec3> v = g.vertices();
  for (auto& p : v) {
    p.x() += u(rng);
    p.y() += u(rng);
  }
  const TriMesh jittered(v, g.faces());
  for (auto method : {SmoothMethod::Laplacian, SmoothMethod::Taubin}) {
    const TriMesh out = smooth(jittered, 10, method, 0.5);
    for (const Vec3& p : out.vertices()) EXPECT_LT(std::abs(p.z()), 1e-9);
  }
}

TEST(FixWinding, RestoresOutwardOrientation) {
  const TriMesh s = make_sphere(2, 2);
  std::vector<Face> f = s.faces();
  for (std::size_t i = 0; i < f.size(); i += 3) std::swap(f[i][1], f[i][2]);
  const TriMesh fixed = fix_winding(TriMesh(s.vertices(), f));
  const auto n = face_normals(fixed);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_GT(n[i].dot(face_centroid(fixed, static_cast<Index>(i))), 0.0);
  std::vector<Face> reversed = s.faces();
  for (auto& t : reversed) std::swap(t[1], t[2]);
  EXPECT_GT(enclosed_volume(fix_winding(TriMesh(s.vertices(), reversed))), 0.0);
}

TEST(Remesh, RefinesSphere) {
  const double r = 10;
  // Vertices are projected onto the input facets, so the input's chord error
  // (about 2% of r at level 2) bounds what any remesh can preserve.
  const TriMesh coarse = make_sphere(r, 3);
  const double e = mean_edge_length(coarse);
  const TriMesh fine = remesh(coarse, e / 2);
  const double ratio = static_cast<double>(fine.face_count()) / static_cast<double>(coarse.face_count());
  EXPECT_GE(ratio, 3.0);
  EXPECT_LE(ratio, 6.0);
  EXPECT_LT(rms_radius_error(fine, r) / r, 0.01);
  EXPECT_NEAR(mean_edge_length(fine), e / 2, 0.25 * e / 2);
}

TEST(Remesh, FixedPointAtCurrentLength) {
  const TriMesh s = make_sphere(10, 3);
  const double e = mean_edge_length(s);
  EXPECT_NEAR(mean_edge_length(remesh(s, e)), e, 0.25 * e);
}

TEST(Remesh, RemovesSlivers) {
  const TriMesh slivers = uv_sphere(10, 8, 96);
  double worst_in = kPi;
  for (std::size_t f = 0; f < slivers.face_count(); ++f) {
    const auto [a, b, c] = slivers.corners(static_cast<Index>(f));
    worst_in = std::min(worst_in, triangle_min_angle(a, b, c));
  }
  ASSERT_LT(worst_in * 180 / kPi, 5.0);
  const double target = 1.0;
  const TriMesh out = remesh(slivers, target);
  double worst = kPi;
  for (std::size_t f = 0; f < out.face_count(); ++f) {
    const auto [a, b, c] = out.corners(static_cast<Index>(f));
    worst = std::min(worst, triangle_min_angle(a, b, c));
  }
  EXPECT_GT(worst * 180 / kPi, 15.0);
  EXPECT_NEAR(mean_edge_length(out), target, 0.25 * target);
  // Sampled deviation from the input surface.
  const FaceTree input(slivers);
  double dev = 0;
  for (std::size_t f = 0; f < out.face_count(); ++f) {
    const auto [a, b, c] = out.corners(static_cast<Index>(f));
    for (const Vec3& p : {a, b, c, Vec3((a + b + c) / 3), Vec3((a + b) / 2)}) {
      dev = std::max(dev, std::sqrt(input.closest_point(p).squared_distance));
    }
  }
  EXPECT_LE(dev, target / 2);
  EXPECT_FALSE(out.first_zero_area_face().has_value());
}

TEST(Remesh, RejectsTinyTarget) {
  EXPECT_THROW(remesh(make_sphere(1, 1), 1e-4), ParameterError);
}

TEST(Remesh, MirrorIsExact) {
  const TriMesh body = asymmetric_body();
  std::vector<Vec3> v;
  for (const Vec3& p : body.vertices()) v.emplace_back(-p.x(), p.y(), p.z());
  std::vector<Face> f;
  for (const Face& t : body.faces()) f.push_back({t[0], t[2], t[1]});
  const TriMesh a = remesh(body, 2.0);
  const TriMesh b = remesh(TriMesh(v, f), 2.0);
  ASSERT_EQ(a.vertex_count(), b.vertex_count());
  ASSERT_EQ(a.face_count(), b.face_count());
  for (std::size_t i = 0; i < a.vertex_count(); ++i) {
    const Vec3& p = a.vertices()[i];
    EXPECT_EQ(b.vertices()[i], Vec3(-p.x(), p.y(), p.z())) << i;
  }
}
