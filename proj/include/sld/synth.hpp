#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>
#include <vector>

#include "sld/error.hpp"
#include "sld/face_tree.hpp"
#include "sld/geodesic.hpp"
#include "sld/geometry.hpp"
#include "sld/primitives.hpp"
#include "sld/surface_nets.hpp"
#include "sld/trimesh.hpp"
#include "sld/types.hpp"

namespace sld {

/// Procedural vertebra in LPS coordinates: +x left, +y posterior, +z
/// superior, body centred at the origin. Lateral positions scale with
/// body_radius / 20.
struct SynthParams {
  double body_radius = 20.0;
  double body_height = 25.0;
  double endplate_tilt_deg = 0.0;
  double pedicle_radius = 4.0;
  double pedicle_waist = 3.0;
  double lamina_radius = 3.5;
  double lamina_half_height = 8.0;
  double spinous_length = 28.0;
  double spinous_pitch_deg = 10.0; // downward
  double spinous_half_width = 3.0;
  double spinous_half_height = 6.0;
  double transverse_length_left = 25.0;
  double transverse_length_right = 25.0; // ignored when symmetric
  double transverse_radius = 3.5;
  double articular_radius = 4.5;
  double facet_gap = 1.0;
  double grid_spacing = 0.9;
  double blend = 1.5;
  bool symmetric = true;
  std::uint64_t seed = 0;
  double noise = 0.0; // max vertex displacement, mm

  bool spinous = true;
  bool transverse_left = true;
  bool transverse_right = true;
  bool articular_sup_left = true;
  bool articular_sup_right = true;
  bool articular_inf_left = true;
  bool articular_inf_right = true;

  double right_transverse_length() const { return symmetric ? transverse_length_left : transverse_length_right; }

  double min_feature_radius() const {
    return std::min({pedicle_waist, lamina_radius, spinous_half_width, transverse_radius, articular_radius});
  }

  void validate() const {
    const std::array<double, 14> positive{body_radius,       body_height,         pedicle_radius,  pedicle_waist,
                                          lamina_radius,     lamina_half_height,  spinous_length,  spinous_half_width,
                                          spinous_half_height, transverse_length_left, transverse_radius,
                                          articular_radius,  facet_gap,           grid_spacing};
    for (double v : positive) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError("synthetic vertebra dimensions must be positive");
    }
    if (!symmetric && !(transverse_length_right > 0.0)) throw ParameterError("right transverse length must be positive");
    if (body_radius < 15.0 || body_radius > 30.0) throw ParameterError("body radius must be in [15, 30] mm");
    if (pedicle_waist > pedicle_radius) throw ParameterError("pedicle waist exceeds pedicle radius");
    if (pedicle_radius > 5.5) throw ParameterError("pedicle radius closes the canal (max 5.5 mm)");
    if (transverse_radius > 5.0) throw ParameterError("transverse radius overlaps the articular pads (max 5 mm)");
    if (articular_radius > 6.0 || lamina_radius > 5.0) throw ParameterError("articular or lamina radius too large");
    if (spinous_half_width > 5.0 || spinous_half_height > 9.0) throw ParameterError("spinous cross-section too large");
    if (spinous_length < 10.0 || transverse_length_left < 8.0 || right_transverse_length() < 8.0) {
      throw ParameterError("process lengths too short to separate from the arch");
    }
    if (facet_gap > 4.0) throw ParameterError("facet gap must be at most 4 mm");
    if (std::abs(spinous_pitch_deg) > 45.0) throw ParameterError("spinous pitch must be within +-45 degrees");
    if (endplate_tilt_deg < 0.0 || endplate_tilt_deg > 20.0) throw ParameterError("endplate tilt must be in [0, 20] degrees");
    if (grid_spacing < 0.3 || grid_spacing > 2.5) throw ParameterError("grid spacing must be in [0.3, 2.5] mm");
    if (blend < 0.0 || blend > 3.0) throw ParameterError("blend must be in [0, 3] mm");
    if (!(noise >= 0.0) || noise >= 0.2 * min_feature_radius()) {
      throw ParameterError("noise amplitude must be below 0.2 x the smallest feature radius");
    }
  }
};

struct SynthTruth {
  Segmentation labels;
  LandmarkSet landmarks;   // counts as configured
  LandmarkSet annotations; // dense attachment-site curves
  std::map<SegmentLabel, Vec3> process_tips;               // extreme along each process's seed direction
  std::map<SegmentLabel, std::vector<Vec3>> centerlines;   // root -> tip
};

namespace synth_detail {

inline double smin(double a, double b, double k) {
  if (k <= 0.0) return std::min(a, b);
  const double h = std::max(k - std::abs(a - b), 0.0);
  return std::min(a, b) - h * h / (4.0 * k);
}

inline constexpr double kOff = std::numeric_limits<double>::infinity();

inline Vec3 mirror(const Vec3& p) { return {-p.x(), p.y(), p.z()}; }

/// One side's arch parts, in left-side (+x) coordinates.
struct Side {
  Vec3 ped_a, ped_b;
  double ped_r = 0, ped_w = 0;
  Vec3 lam_a, lam_b; // z ignored
  double lam_r = 0, lam_h = 0;
  Vec3 tr_a, tr_b;
  double tr_r = 0;
  bool tr_on = true;
  double pad_r = 0, pad_half = 0;
  Vec3 sup_c; // x, y of the vertical capsule axis
  double sup_z0 = 0, sup_z1 = 0;
  bool sup_on = true;
  Vec3 inf_c;
  double inf_z0 = 0, inf_z1 = 0;
  bool inf_on = true;

  double pedicle(const Vec3& p, double* t_out = nullptr) const {
    const Vec3 ab = ped_b - ped_a;
    const double t = std::clamp((p - ped_a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    if (t_out) *t_out = t;
    const double s = 2.0 * t - 1.0;
    return (p - (ped_a + t * ab)).norm() - (ped_w + (ped_r - ped_w) * s * s);
  }
  double lamina(const Vec3& p) const {
    const Vec3 q(p.x(), p.y(), 0.0);
    const double d = (q - closest_point_on_segment(q, lam_a, lam_b)).norm() - lam_r;
    return std::max(d, std::abs(p.z()) - lam_h);
  }
  double transverse(const Vec3& p) const {
    if (!tr_on) return kOff;
    return (p - closest_point_on_segment(p, tr_a, tr_b)).norm() - tr_r;
  }
  double pad(const Vec3& p, const Vec3& c, double z0, double z1) const {
    const Vec3 axis(c.x(), c.y(), std::clamp(p.z(), z0, z1));
    return std::max((p - axis).norm() - pad_r, std::abs(p.x() - c.x()) - pad_half);
  }
  double sup(const Vec3& p) const { return sup_on ? pad(p, sup_c, sup_z0, sup_z1) : kOff; }
  double inf(const Vec3& p) const { return inf_on ? pad(p, inf_c, inf_z0, inf_z1) : kOff; }

  double field(const Vec3& p, double k) const {
    double v = smin(pedicle(p), lamina(p), k);
    v = smin(v, transverse(p), k);
    v = smin(v, sup(p), k);
    return smin(v, inf(p), k);
  }
};

enum Part : int { PBody, PSpinous, PPedL, PLamL, PTrL, PSupL, PInfL, PPedR, PLamR, PTrR, PSupR, PInfR, kParts };

class Model {
public:
  explicit Model(const SynthParams& p) : p_(p) {
    const double s = p.body_radius / 20.0;
    tilt_ = p.endplate_tilt_deg * kPi / 180.0;
    left_ = make_side(s, p.transverse_length_left);
    left_.tr_on = p.transverse_left;
    left_.sup_on = p.articular_sup_left;
    left_.inf_on = p.articular_inf_left;
    right_ = make_side(s, p.right_transverse_length());
    right_.tr_on = p.transverse_right;
    right_.sup_on = p.articular_sup_right;
    right_.inf_on = p.articular_inf_right;
    const double pitch = p.spinous_pitch_deg * kPi / 180.0;
    sp_a_ = Vec3(0.0, 40.0 * s, 0.0);
    sp_d_ = Vec3(0.0, std::cos(pitch), -std::sin(pitch));
    sp_b_ = sp_a_ + p.spinous_length * sp_d_;
  }

  const SynthParams& params() const { return p_; }
  const Side& side(bool left) const { return left ? left_ : right_; }
  const Vec3& spinous_root() const { return sp_a_; }
  const Vec3& spinous_end() const { return sp_b_; }
  const Vec3& spinous_dir() const { return sp_d_; }
  double tilt() const { return tilt_; }

  /// Local "up" of the spinous process: +z with the axial component removed.
  Vec3 spinous_up() const {
    const Vec3 z = Vec3::UnitZ();
    return (z - z.dot(sp_d_) * sp_d_).normalized();
  }

  double body(const Vec3& q) const {
    const double radial = std::hypot(q.x(), q.y()) - p_.body_radius;
    const double c = std::cos(tilt_), t = std::tan(tilt_);
    const double top = (q.z() - p_.body_height / 2 - q.y() * t) * c;
    const double bot = (-q.z() - p_.body_height / 2 - q.y() * t) * c;
    return std::max({radial, top, bot});
  }

  double spinous(const Vec3& q) const {
    if (!p_.spinous) return kOff;
    const Vec3 r = q - closest_point_on_segment(q, sp_a_, sp_b_);
    const double a = p_.spinous_half_width, b = p_.spinous_half_height;
    const double yz = std::hypot(r.y(), r.z());
    return (std::hypot(r.x() / a, yz / b) - 1.0) * std::min(a, b);
  }

  double operator()(const Vec3& q) const {
    const double k = p_.blend;
    const double sides = smin(left_.field(q, k), right_.field(mirror(q), k), k);
    return smin(smin(body(q), spinous(q), k), sides, k);
  }

  std::array<double, kParts> parts(const Vec3& q, double& ped_t_left, double& ped_t_right) const {
    const Vec3 m = mirror(q);
    return {body(q),           spinous(q),      left_.pedicle(q, &ped_t_left), left_.lamina(q),
            left_.transverse(q), left_.sup(q),   left_.inf(q),                  right_.pedicle(m, &ped_t_right),
            right_.lamina(m),  right_.transverse(m), right_.sup(m),             right_.inf(m)};
  }

  SegmentLabel label(const Vec3& q) const {
    double tl = 0, tr = 0;
    const auto v = parts(q, tl, tr);
    const auto best = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
    switch (best) {
    case PBody: return SegmentLabel::Body;
    case PSpinous: return SegmentLabel::SpinousProcess;
    case PPedL: return tl < 0.5 ? SegmentLabel::Body : SegmentLabel::Lamina;
    case PPedR: return tr < 0.5 ? SegmentLabel::Body : SegmentLabel::Lamina;
    case PTrL: return SegmentLabel::TransverseL;
    case PTrR: return SegmentLabel::TransverseR;
    case PSupL: return SegmentLabel::ArticularSupL;
    case PSupR: return SegmentLabel::ArticularSupR;
    case PInfL: return SegmentLabel::ArticularInfL;
    case PInfR: return SegmentLabel::ArticularInfR;
    default: return SegmentLabel::Lamina;
    }
  }

  LatticeSpec lattice() const {
    const double h = p_.grid_spacing;
    const double margin = 2.0 * h + p_.blend;
    const auto reach = [&](const Side& sd) {
      return std::max({sd.tr_on ? sd.tr_b.x() + sd.tr_r : 0.0, sd.sup_c.x() + sd.pad_half, p_.body_radius});
    };
    const double xhalf = std::max(reach(left_), reach(right_)) + margin;
    const double zhalf = std::max({p_.body_height / 2 + p_.body_radius * std::tan(tilt_), left_.sup_z1 + left_.pad_r,
                                   -left_.inf_z0 + left_.pad_r, -sp_b_.z() + p_.spinous_half_height,
                                   sp_b_.z() + p_.spinous_half_height}) +
                         margin;
    const double ymax = std::max({sp_b_.y() + p_.spinous_half_height, left_.sup_c.y() + left_.pad_r,
                                  left_.lam_b.y() + left_.lam_r, left_.tr_a.y() + left_.tr_r}) +
                        margin;
    const double ymin = -p_.body_radius - margin;
    LatticeSpec spec;
    spec.h = h;
    spec.n = {2 * static_cast<int>(std::ceil(xhalf / h)), static_cast<int>(std::ceil((ymax - ymin) / h)) + 1,
              2 * static_cast<int>(std::ceil(zhalf / h))};
    spec.start = {0.0, ymin, 0.0};
    spec.centered = {true, false, true};
    return spec;
  }

private:
  Side make_side(double s, double tr_len) const {
    Side sd;
    sd.ped_a = Vec3(11.0 * s, 14.0 * s, 0.0);
    sd.ped_b = Vec3(14.0 * s, 30.0 * s, 0.0);
    sd.ped_r = p_.pedicle_radius;
    sd.ped_w = p_.pedicle_waist;
    sd.lam_a = Vec3(12.0 * s, 30.5 * s, 0.0);
    sd.lam_b = Vec3(0.0, 37.5 * s, 0.0);
    sd.lam_r = p_.lamina_radius;
    sd.lam_h = p_.lamina_half_height;
    sd.tr_a = Vec3(15.0 * s, 32.0 * s, 0.0);
    sd.tr_b = sd.tr_a + tr_len * Vec3(25.0, -2.0, 0.0).normalized();
    sd.tr_r = p_.transverse_radius;
    sd.pad_r = p_.articular_radius;
    sd.pad_half = p_.articular_radius * 2.0 / 3.0;
    sd.sup_c = Vec3(20.5 * s, 33.0 * s, 0.0);
    sd.sup_z0 = 10.5;
    sd.sup_z1 = 17.5;
    sd.inf_c = Vec3(sd.sup_c.x() - 2.0 * sd.pad_half - p_.facet_gap, 33.0 * s, 0.0);
    sd.inf_z0 = -17.0;
    sd.inf_z1 = -10.0;
    return sd;
  }

  SynthParams p_;
  double tilt_ = 0.0;
  Side left_, right_;
  Vec3 sp_a_, sp_b_, sp_d_;
};

/// Exposed means the surface there belongs to one part alone: the blended
/// field has not been pulled below zero by a neighbour.
inline bool exposed(const Model& m, const Vec3& p) { return m(p) >= -0.05; }

inline std::vector<Vec3> densify(const std::vector<Vec3>& pts, double step) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double len = (pts[i + 1] - pts[i]).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int k = 0; k < n; ++k) out.push_back(pts[i] + (pts[i + 1] - pts[i]) * (static_cast<double>(k) / n));
  }
  if (!pts.empty()) out.push_back(pts.back());
  return out;
}

/// Longest contiguous run of exposed samples.
inline std::vector<Vec3> longest_exposed_run(const Model& m, const std::vector<Vec3>& pts) {
  std::vector<Vec3> best, cur;
  for (const Vec3& p : pts) {
    if (exposed(m, p)) {
      cur.push_back(p);
    } else {
      if (cur.size() > best.size()) best = cur;
      cur.clear();
    }
  }
  if (cur.size() > best.size()) best = cur;
  return best;
}

struct FacetTruth {
  std::vector<Vec3> rim;
  std::vector<Vec3> extremes; // transverse-section ends, then sagittal-section ends
  Vec3 centroid = Vec3::Zero();
};

/// Flat facet face of an articular pad: the slab face inside the capsule,
/// sampled on a 0.1 mm grid and restricted to exposed points.
inline FacetTruth facet_truth(const Model& m, bool left, bool superior) {
  const Side& sd = m.side(left);
  const double sgn = left ? 1.0 : -1.0;
  const Vec3& c = superior ? sd.sup_c : sd.inf_c;
  const double z0 = superior ? sd.sup_z0 : sd.inf_z0, z1 = superior ? sd.sup_z1 : sd.inf_z1;
  const double xf = superior ? c.x() - sd.pad_half : c.x() + sd.pad_half;
  const double half = std::sqrt(sd.pad_r * sd.pad_r - sd.pad_half * sd.pad_half);
  const double step = 0.1;
  const int ny = static_cast<int>(std::ceil(2 * half / step)) + 1;
  const int nz = static_cast<int>(std::ceil((z1 - z0 + 2 * half) / step)) + 1;
  auto at = [&](int a, int b) { return Vec3(sgn * xf, c.y() - half + a * step, z0 - half + b * step); };
  std::vector<char> ok(static_cast<std::size_t>(ny) * nz, 0);
  auto flag = [&](int a, int b) -> char& { return ok[static_cast<std::size_t>(b) * ny + a]; };
  double sy = 0, sz = 0;
  int count = 0;
  for (int b = 0; b < nz; ++b) {
    for (int a = 0; a < ny; ++a) {
      const Vec3 p = at(a, b);
      const double dy = p.y() - c.y(), dz = p.z() - std::clamp(p.z(), z0, z1);
      if (dy * dy + dz * dz > half * half || !exposed(m, p)) continue;
      flag(a, b) = 1;
      sy += p.y();
      sz += p.z();
      ++count;
    }
  }
  FacetTruth out;
  if (count == 0) return out;
  out.centroid = Vec3(sgn * xf, sy / count, sz / count);
  for (int b = 0; b < nz; ++b) {
    for (int a = 0; a < ny; ++a) {
      if (!flag(a, b)) continue;
      const bool edge = a == 0 || b == 0 || a == ny - 1 || b == nz - 1 || !flag(a - 1, b) || !flag(a + 1, b) ||
                        !flag(a, b - 1) || !flag(a, b + 1);
      if (edge) out.rim.push_back(at(a, b));
    }
  }
  const int row = std::clamp(static_cast<int>(std::lround((out.centroid.z() - (z0 - half)) / step)), 0, nz - 1);
  const int col = std::clamp(static_cast<int>(std::lround((out.centroid.y() - (c.y() - half)) / step)), 0, ny - 1);
  int lo = -1, hi = -1;
  for (int a = 0; a < ny; ++a) {
    if (flag(a, row)) {
      if (lo < 0) lo = a;
      hi = a;
    }
  }
  if (lo >= 0) {
    out.extremes.push_back(at(lo, row));
    out.extremes.push_back(at(hi, row));
  }
  lo = hi = -1;
  for (int b = 0; b < nz; ++b) {
    if (flag(col, b)) {
      if (lo < 0) lo = b;
      hi = b;
    }
  }
  if (lo >= 0) {
    out.extremes.push_back(at(col, lo));
    out.extremes.push_back(at(col, hi));
  }
  return out;
}

inline void add_noise(std::vector<Vec3>& v, const SynthParams& p) {
  if (p.noise <= 0.0) return;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto draw = [&]() -> Vec3 {
    Vec3 d;
    do {
      d = Vec3(u(rng), u(rng), u(rng));
    } while (d.squaredNorm() > 1.0);
    return d * p.noise;
  };
  std::vector<Index> partner(v.size(), -1);
  if (p.symmetric) {
    struct Hash {
      std::size_t operator()(const std::array<double, 3>& a) const {
        std::size_t h = 1469598103934665603ull;
        for (double x : a) h = (h ^ std::hash<double>{}(x)) * 1099511628211ull;
        return h;
      }
    };
    std::unordered_map<std::array<double, 3>, Index, Hash> where;
    for (std::size_t i = 0; i < v.size(); ++i) where.emplace(std::array<double, 3>{v[i].x() + 0.0, v[i].y(), v[i].z()}, static_cast<Index>(i));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto it = where.find({-v[i].x() + 0.0, v[i].y(), v[i].z()});
      if (it != where.end()) partner[i] = it->second;
    }
  }
  std::vector<Vec3> offset(v.size(), Vec3::Zero());
  std::vector<char> done(v.size(), 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (done[i]) continue;
    Vec3 d = draw();
    const Index j = partner[i];
    if (j == static_cast<Index>(i)) d.x() = 0.0;
    offset[i] = d;
    done[i] = 1;
    if (j >= 0 && j != static_cast<Index>(i)) {
      offset[static_cast<std::size_t>(j)] = mirror(d);
      done[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += offset[i];
}

} // namespace synth_detail

/// Reflection through x = 0. Winding is reversed by swapping the last two
/// corners, so the first corner (and every derived cross product) is kept.
inline TriMesh reflect_x(const TriMesh& mesh) {
  std::vector<Vec3> v(mesh.vertices());
  for (Vec3& p : v) p.x() = -p.x();
  std::vector<Face> f(mesh.faces());
  for (Face& t : f) std::swap(t[1], t[2]);
  TriMesh out(std::move(v), std::move(f));
  if (mesh.labels()) out = out.with_labels(*mesh.labels());
  return out;
}

/// Cylinder with planar end faces tilted by +-tilt about the x axis and sharp
/// rims: top z = h/2 + y tan(tilt), bottom z = -h/2 - y tan(tilt).
inline TriMesh make_tilted_body(double radius, double height, double tilt_deg, int segments, int stacks = 4,
                                int cap_rings = 4) {
  const TriMesh base = make_cylinder(radius, height, segments, stacks, cap_rings);
  const double t = std::tan(tilt_deg * kPi / 180.0);
  std::vector<Vec3> v(base.vertices());
  for (Vec3& p : v) p.z() += (2.0 * p.z() / height) * p.y() * t;
  return TriMesh(std::move(v), std::vector<Face>(base.faces()));
}

/// Mesh, per-vertex construction labels, and analytic landmarks.
inline std::pair<TriMesh, SynthTruth> make_synthetic_vertebra(const SynthParams& params,
                                                             const LandmarkCounts& counts = {}) {
  using namespace synth_detail;
  params.validate();
  counts.validate();
  const Model model(params);
  TriMesh clean = surface_nets(model, model.lattice());
  if (auto bad = clean.first_zero_area_face()) {
    throw ParameterError("parameters produce a degenerate surface near face " + std::to_string(*bad));
  }

  SynthTruth truth;
  truth.labels.labels.reserve(clean.vertex_count());
  for (const Vec3& p : clean.vertices()) truth.labels.labels.push_back(model.label(p));

  std::vector<Vec3> noisy(clean.vertices());
  add_noise(noisy, params);
  TriMesh mesh(std::move(noisy), std::vector<Face>(clean.faces()));
  mesh = mesh.with_labels(truth.labels.as_ints());

  const FaceTree tree(mesh);
  auto snap = [&](const Vec3& p) { return tree.closest_point(p).point; };
  auto snap_all = [&](std::vector<Vec3> pts) {
    for (Vec3& p : pts) p = snap(p);
    return pts;
  };
  auto add = [&](GroupKey key, const std::vector<Vec3>& dense, std::vector<Vec3> points) {
    truth.annotations.groups.push_back({key, snap_all(dense), std::nullopt, {}});
    truth.landmarks.groups.push_back({key, snap_all(std::move(points)), std::nullopt, {}});
  };

  // ALL / PLL: quarter arcs of the endplate rims around -y and +y.
  const double R = params.body_radius, t = std::tan(model.tilt());
  for (int plate = 0; plate < 2; ++plate) {
    const Site site = plate == 0 ? Site::Superior : Site::Inferior;
    auto rim = [&](double phi) {
      const double x = R * std::cos(phi), y = R * std::sin(phi);
      const double z = plate == 0 ? params.body_height / 2 + y * t : -params.body_height / 2 - y * t;
      return Vec3(x, y, z);
    };
    for (int k = 0; k < 2; ++k) {
      const double centre = k == 0 ? -kPi / 2 : kPi / 2;
      const int n = k == 0 ? counts.all : counts.pll;
      std::vector<Vec3> dense, pts;
      const int m = static_cast<int>(std::ceil(R * kPi / 2 / 0.25));
      for (int i = 0; i <= m; ++i) dense.push_back(rim(centre - kPi / 4 + (kPi / 2) * i / m));
      for (int i = 0; i < n; ++i) pts.push_back(rim(n == 1 ? centre : centre - kPi / 4 + (kPi / 2) * i / (n - 1)));
      add({k == 0 ? LigamentKind::ALL : LigamentKind::PLL, site}, dense, pts);
    }
  }

  // ITL: transverse capsule tips along the axis.
  for (int s = 0; s < 2; ++s) {
    const bool left = s == 0;
    const Side& sd = model.side(left);
    if (!sd.tr_on) continue;
    const Vec3 dir = (sd.tr_b - sd.tr_a).normalized();
    Vec3 tip = sd.tr_b + sd.tr_r * dir;
    Vec3 extreme = sd.tr_b + sd.tr_r * Vec3::UnitX();
    Vec3 root = sd.tr_a;
    if (!left) {
      tip = mirror(tip);
      extreme = mirror(extreme);
      root = mirror(root);
    }
    add({LigamentKind::ITL, left ? Site::Left : Site::Right}, {tip}, {tip});
    const SegmentLabel lab = left ? SegmentLabel::TransverseL : SegmentLabel::TransverseR;
    truth.process_tips[lab] = extreme;
    truth.centerlines[lab] = {root, left ? sd.tr_b : mirror(sd.tr_b)};
  }

  // SSL and ISL.
  const Vec3 up = model.spinous_up();
  const double hh = params.spinous_half_height;
  if (params.spinous) {
    const Vec3 tip = model.spinous_end() + hh * model.spinous_dir();
    add({LigamentKind::SSL, Site::None}, {tip}, {tip});
    truth.process_tips[SegmentLabel::SpinousProcess] = model.spinous_end() + hh * Vec3::UnitY();
    truth.centerlines[SegmentLabel::SpinousProcess] = {model.spinous_root(), model.spinous_end()};
    for (int k = 0; k < 2; ++k) {
      const double sgn = k == 0 ? 1.0 : -1.0;
      std::vector<Vec3> line;
      for (double s = 0.0; s < params.spinous_length; s += 0.1) line.push_back(model.spinous_root() + s * model.spinous_dir() + sgn * hh * up);
      for (int i = 0; i <= 80; ++i) {
        const double a = (80.0 * i / 80) * kPi / 180.0;
        line.push_back(model.spinous_end() + hh * (std::cos(a) * sgn * up + std::sin(a) * model.spinous_dir()));
      }
      const auto run = longest_exposed_run(model, line);
      if (run.size() < 2) continue;
      add({LigamentKind::ISL, k == 0 ? Site::Superior : Site::Inferior}, run, resample_by_arc_length(run, counts.isl));
    }
  }

  // CL: facet faces of the four articular pads.
  std::map<Site, FacetTruth> facets;
  for (int s = 0; s < 2; ++s) {
    for (int sup = 0; sup < 2; ++sup) {
      const bool left = s == 0, superior = sup == 0;
      const Side& sd = model.side(left);
      if (superior ? !sd.sup_on : !sd.inf_on) continue;
      const Site site = superior ? (left ? Site::SupL : Site::SupR) : (left ? Site::InfL : Site::InfR);
      FacetTruth ft = facet_truth(model, left, superior);
      if (ft.extremes.size() != 4) continue;
      add({LigamentKind::CL, site}, ft.rim, ft.extremes);
      const Side& g = model.side(left);
      const Vec3 c = superior ? g.sup_c : g.inf_c;
      const double zr = superior ? g.sup_z1 + g.pad_r : g.inf_z0 - g.pad_r;
      Vec3 extreme(c.x(), c.y(), zr);
      Vec3 a(c.x(), c.y(), superior ? g.sup_z0 : g.inf_z1), b(c.x(), c.y(), superior ? g.sup_z1 : g.inf_z0);
      if (!left) {
        extreme = mirror(extreme);
        a = mirror(a);
        b = mirror(b);
      }
      const SegmentLabel lab = superior ? (left ? SegmentLabel::ArticularSupL : SegmentLabel::ArticularSupR)
                                        : (left ? SegmentLabel::ArticularInfL : SegmentLabel::ArticularInfR);
      truth.process_tips[lab] = extreme;
      truth.centerlines[lab] = {a, b};
      facets[site] = std::move(ft);
    }
  }

  // LF: geodesic over the arch from the inferior facet toward the spinous root.
  Vec3 root = model.spinous_root();
  for (double s = 0.0; s < params.spinous_length && model.side(true).lamina(root) < 0.0; s += 0.05) {
    root = model.spinous_root() + s * model.spinous_dir();
  }
  std::vector<char> arch_vertex(mesh.vertex_count(), 0);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) arch_vertex[i] = truth.labels.labels[i] != SegmentLabel::Body;
  const FaceSet arch_faces = faces_within(mesh, arch_vertex);
  const VertexSet arch_verts = vertices_of_faces(mesh, arch_faces);
  for (int s = 0; s < 2; ++s) {
    const bool left = s == 0;
    const auto it = facets.find(left ? Site::InfL : Site::InfR);
    if (it == facets.end()) continue;
    Vec3 start = it->second.extremes.front();
    for (const Vec3& p : it->second.extremes) {
      if ((p - root).norm() < (start - root).norm()) start = p;
    }
    Index src = -1, dst = -1;
    double bs = std::numeric_limits<double>::infinity(), bd = bs;
    for (Index v : arch_verts) {
      const Vec3& p = mesh.vertex(v);
      const double ds = (p - start).squaredNorm();
      if (ds < bs) {
        bs = ds;
        src = v;
      }
      const bool same_side = left ? clean.vertex(v).x() >= 0.0 : clean.vertex(v).x() <= 0.0;
      if (truth.labels.labels[static_cast<std::size_t>(v)] == SegmentLabel::Lamina && same_side) {
        const double dd = (p - root).squaredNorm();
        if (dd < bd) {
          bd = dd;
          dst = v;
        }
      }
    }
    if (src < 0 || dst < 0) continue;
    GeodesicPath path;
    try {
      path = geodesic_path(mesh, arch_faces, src, dst);
    } catch (const NoPathError&) {
      path = geodesic_path(mesh, src, dst);
    }
    const auto& pts = path.polyline.points;
    add({LigamentKind::LF, left ? Site::Left : Site::Right}, densify(pts, 0.25), resample_by_arc_length(pts, counts.lf));
  }

  truth.landmarks.mesh_id = truth.annotations.mesh_id = "synthetic";
  truth.landmarks.sort_groups();
  truth.annotations.sort_groups();
  return {std::move(mesh), std::move(truth)};
}

/// Randomly perturbed, asymmetric parameters for population-style tests.
inline SynthParams random_synth_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SynthParams p;
  p.symmetric = false;
  p.seed = seed;
  p.body_radius = uni(18.5, 22.0);
  p.body_height = uni(22.0, 28.0);
  p.endplate_tilt_deg = uni(0.0, 6.0);
  p.spinous_length = uni(24.0, 32.0);
  p.spinous_pitch_deg = uni(0.0, 20.0);
  p.transverse_length_left = uni(20.0, 28.0);
  p.transverse_length_right = uni(20.0, 28.0);
  p.transverse_radius = uni(3.0, 4.0);
  p.noise = uni(0.0, 0.15);
  return p;
}

} // namespace sld
