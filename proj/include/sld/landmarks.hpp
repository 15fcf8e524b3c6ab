#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sld/error.hpp"
#include "sld/face_tree.hpp"
#include "sld/geodesic.hpp"
#include "sld/geometry.hpp"
#include "sld/preprocess.hpp"
#include "sld/section.hpp"
#include "sld/trimesh.hpp"
#include "sld/types.hpp"

namespace sld {

/// Arc-length widths of the endplate edge arcs in mm. Zero keeps the
/// angular window given by `edge_arc_fraction`.
struct LandmarkWidths {
  double all = 0.0;
  double pll = 0.0;
};

struct DetectionConfig {
  double theta_deg = 30.0;
  LandmarkCounts counts;
  double edge_arc_fraction = 0.25;
  LandmarkWidths widths;
  double coverage_fraction = 1.0; // share of A2 vertices used for facet extraction
  int isl_oversample = 4;         // ray samples per skeleton segment

  void validate() const {
    if (!(theta_deg > 0.0 && theta_deg < 90.0)) throw ParameterError("detect.theta_deg must be in (0, 90)");
    counts.validate();
    if (!(edge_arc_fraction > 0.0 && edge_arc_fraction <= 0.5)) {
      throw ParameterError("detect.edge_arc_fraction must be in (0, 0.5]");
    }
    if (!(widths.all >= 0.0) || !(widths.pll >= 0.0)) throw ParameterError("detect.widths must be >= 0");
    if (!(coverage_fraction > 0.0 && coverage_fraction <= 1.0)) {
      throw ParameterError("detect.coverage_fraction must be in (0, 1]");
    }
    if (isl_oversample < 1) throw ParameterError("detect.isl_oversample must be >= 1");
  }
};

/// JSON form of a detection configuration, keys as in the config file's
/// "detect" section.
inline nlohmann::json detection_config_to_json(const DetectionConfig& c) {
  return {{"theta_deg", c.theta_deg},
          {"n_all", c.counts.all},
          {"n_pll", c.counts.pll},
          {"n_isl", c.counts.isl},
          {"n_lf", c.counts.lf},
          {"edge_arc_fraction", c.edge_arc_fraction},
          {"width_all_mm", c.widths.all},
          {"width_pll_mm", c.widths.pll},
          {"coverage_fraction", c.coverage_fraction},
          {"isl_oversample", c.isl_oversample}};
}

struct Endplates {
  FaceSet superior;
  FaceSet inferior;
};

namespace lm_detail {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline Vec3 mean_point(std::span<const Vec3> pts) {
  std::array<ExactSum, 3> s;
  for (const Vec3& p : pts) {
    for (int k = 0; k < 3; ++k) s[static_cast<std::size_t>(k)].add(p[k]);
  }
  const double n = static_cast<double>(pts.size());
  return {s[0].value() / n, s[1].value() / n, s[2].value() / n};
}

inline Vec3 mean_vertex(const TriMesh& mesh, std::span<const Index> vs) {
  std::vector<Vec3> pts;
  pts.reserve(vs.size());
  for (Index v : vs) pts.push_back(mesh.vertex(v));
  return mean_point(pts);
}

/// Area-weighted normal of a face set, unnormalized.
inline Vec3 area_normal(const TriMesh& mesh, std::span<const Index> faces) {
  std::array<ExactSum, 3> s;
  for (Index f : faces) {
    const auto [a, b, c] = mesh.corners(f);
    const Vec3 n = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) s[static_cast<std::size_t>(k)].add(n[k]);
  }
  return {s[0].value(), s[1].value(), s[2].value()};
}

inline Vec3 unit_or_throw(const Vec3& v, const std::string& what) {
  const double n = v.norm();
  if (!(n > 1e-12)) throw DetectionError(what + " is degenerate");
  return v / n;
}

inline std::vector<Vec3> snap(const FaceTree& tree, std::vector<Vec3> pts) {
  for (Vec3& p : pts) p = tree.closest_point(p).point;
  return pts;
}

inline FaceSet largest_face_component(const TriMesh& mesh, const FaceSet& faces) {
  if (faces.empty()) return {};
  auto comps = face_components(mesh, faces);
  return comps.front();
}

/// Boundary sub-arc of a plate inside an angular window around `center`.
/// Angles are measured around the loop centroid in the plate plane. The
/// arc runs from the window edge through the center crossing to the other
/// edge; `mid` is the loop point exactly in the center direction.
struct EdgeArc {
  std::vector<Vec3> points;
  Vec3 mid = Vec3::Zero();
};

inline EdgeArc edge_arc(const std::vector<Vec3>& loop, const Vec3& plate_normal, const Vec3& center,
                        double half_angle, double width) {
  const std::size_t n = loop.size();
  if (n < 3) throw DetectionError("endplate boundary has fewer than 3 vertices");
  const Vec3 c = mean_point(loop);
  const Vec3 e1 = unit_or_throw(center - center.dot(plate_normal) * plate_normal, "edge direction");
  const Vec3 e2 = plate_normal.cross(e1);
  std::vector<double> u(n), w(n), phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = loop[i] - c;
    u[i] = d.dot(e1);
    w[i] = d.dot(e2);
    phi[i] = std::atan2(w[i], u[i]);
  }
  // Point on segment i -> j where the polar angle equals alpha.
  auto crossing = [&](std::size_t i, std::size_t j, double alpha) -> Vec3 {
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double fi = u[i] * sa - w[i] * ca;
    const double fj = u[j] * sa - w[j] * ca;
    const double t = fi == fj ? 0.0 : std::clamp(fi / (fi - fj), 0.0, 1.0);
    return loop[i] + t * (loop[j] - loop[i]);
  };

  // Center crossing: a segment whose endpoints straddle angle 0 on the
  // near side; the outermost one wins.
  std::optional<std::size_t> seg;
  Vec3 mid = Vec3::Zero();
  double best_r = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    if (std::abs(phi[i]) >= 0.5 * kPi || std::abs(phi[j]) >= 0.5 * kPi) continue;
    if (!((phi[i] <= 0.0 && phi[j] >= 0.0) || (phi[i] >= 0.0 && phi[j] <= 0.0))) continue;
    const Vec3 p = crossing(i, j, 0.0);
    const double r = (p - c).dot(e1);
    if (r > best_r) {
      best_r = r;
      seg = i;
      mid = p;
    }
  }
  if (!seg) throw DetectionError("endplate boundary does not cross the edge direction");

  // Walk from segment (prev, cur) away from the crossing until the window edge.
  auto walk = [&](std::size_t prev, std::size_t cur, bool forward) {
    std::vector<Vec3> out;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(phi[cur]) > half_angle) {
        out.push_back(crossing(prev, cur, phi[cur] > 0.0 ? half_angle : -half_angle));
        break;
      }
      out.push_back(loop[cur]);
      prev = cur;
      cur = forward ? (cur + 1) % n : (cur + n - 1) % n;
    }
    return out;
  };
  // Cut a side back to `limit` of arc length measured from the center.
  auto trim = [&](const std::vector<Vec3>& side, double limit) {
    std::vector<Vec3> out;
    Vec3 last = mid;
    double run = 0.0;
    for (const Vec3& p : side) {
      const double d = (p - last).norm();
      if (run + d >= limit) {
        out.push_back(last + (d > 0.0 ? (limit - run) / d : 0.0) * (p - last));
        return out;
      }
      run += d;
      out.push_back(p);
      last = p;
    }
    return out;
  };
  const std::size_t i = *seg, j = (i + 1) % n;
  std::vector<Vec3> fwd = walk(i, j, true);
  std::vector<Vec3> bwd = walk(j, i, false);
  if (width > 0.0) {
    fwd = trim(fwd, 0.5 * width);
    bwd = trim(bwd, 0.5 * width);
  }
  EdgeArc arc;
  arc.mid = mid;
  arc.points.assign(bwd.rbegin(), bwd.rend());
  arc.points.push_back(mid);
  arc.points.insert(arc.points.end(), fwd.begin(), fwd.end());
  return arc;
}

/// Plate faces with every pinch vertex (two boundary fans meeting at one
/// vertex) closed by adding the vertex's full face fan, repeated until the
/// boundary is a set of simple cycles.
inline FaceSet close_pinches(const TriMesh& mesh, FaceSet faces) {
  std::vector<std::vector<Index>> fan(mesh.vertex_count());
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    for (Index v : mesh.face(static_cast<Index>(f))) fan[static_cast<std::size_t>(v)].push_back(static_cast<Index>(f));
  }
  for (int round = 0; round < 64; ++round) {
    std::map<std::pair<Index, Index>, int> uses;
    for (Index f : faces) {
      const Face& t = mesh.face(f);
      for (int k = 0; k < 3; ++k) {
        const Index a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
        ++uses[{std::min(a, b), std::max(a, b)}];
      }
    }
    std::map<Index, int> boundary_degree;
    for (const auto& [e, c] : uses) {
      if (c == 1) {
        ++boundary_degree[e.first];
        ++boundary_degree[e.second];
      }
    }
    std::vector<char> in = std::vector<char>(mesh.face_count(), 0);
    for (Index f : faces) in[static_cast<std::size_t>(f)] = 1;
    bool changed = false;
    for (const auto& [v, deg] : boundary_degree) {
      if (deg <= 2) continue;
      for (Index f : fan[static_cast<std::size_t>(v)]) {
        if (!in[static_cast<std::size_t>(f)]) {
          in[static_cast<std::size_t>(f)] = 1;
          changed = true;
        }
      }
    }
    if (!changed) return faces;
    faces.clear();
    for (std::size_t f = 0; f < in.size(); ++f) {
      if (in[f]) faces.push_back(static_cast<Index>(f));
    }
  }
  return faces;
}

/// Extreme of `pts` along `axis`; the first point wins ties.
inline Vec3 extreme_along(std::span<const Vec3> pts, const Vec3& axis, bool maximum) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = pts[i].dot(axis) - pts[best].dot(axis);
    if (maximum ? d > 0.0 : d < 0.0) best = i;
  }
  return pts[best];
}

} // namespace lm_detail

/// Endplate faces of the body by normal alignment with the longitudinal
/// axis, each reduced to its largest face component.
inline Endplates extract_endplates(const TriMesh& mesh, std::span<const Index> body, const VertebraFrame& frame,
                                   double theta_deg) {
  if (!(theta_deg > 0.0 && theta_deg < 90.0)) throw ParameterError("endplate angle must be in (0, 90) degrees");
  const FaceSet faces = faces_within(mesh, vertex_flags(mesh.vertex_count(), body));
  if (faces.empty()) throw DetectionError("vertebral body has no faces");
  const double c = std::cos(theta_deg * kPi / 180.0);
  FaceSet sup, inf;
  for (Index f : faces) {
    const Vec3 n = face_normal(mesh, f);
    const double d = n.dot(frame.a_l);
    if (d >= c) sup.push_back(f);
    if (-d >= c) inf.push_back(f);
  }
  Endplates out{lm_detail::largest_face_component(mesh, sup), lm_detail::largest_face_component(mesh, inf)};
  auto require = [&](const FaceSet& s, const char* which) {
    if (s.empty()) {
      throw DetectionError(std::string("no ") + which + " endplate faces within " + lm_detail::num(theta_deg) +
                           " degrees of the longitudinal axis; try a larger theta");
    }
  };
  require(out.superior, "superior");
  require(out.inferior, "inferior");
  return out;
}

/// ALL and PLL groups on both endplates: equidistant points along the
/// boundary arc facing +a_ap (ALL) and -a_ap (PLL).
inline std::vector<LandmarkGroup> detect_all_pll(const TriMesh& mesh, const Endplates& plates, const VertebraFrame& frame,
                                                 const DetectionConfig& cfg) {
  if (plates.superior.empty() || plates.inferior.empty()) throw DetectionError("both endplates are required");
  std::vector<LandmarkGroup> out;
  for (int p = 0; p < 2; ++p) {
    const FaceSet& faces = p == 0 ? plates.superior : plates.inferior;
    const Site site = p == 0 ? Site::Superior : Site::Inferior;
    const BoundaryLoops bl = boundary_loops(mesh, lm_detail::close_pinches(mesh, faces));
    if (!bl.non_manifold_edges.empty()) {
      std::string edges;
      for (std::size_t k = 0; k < bl.non_manifold_edges.size() && k < 10; ++k) {
        edges += (k ? ", " : "") + std::to_string(bl.non_manifold_edges[k].first) + "-" +
                 std::to_string(bl.non_manifold_edges[k].second);
      }
      throw DetectionError(std::string(site_name(site)) + " endplate boundary is ambiguous at edges " + edges);
    }
    if (bl.loops.empty()) throw DetectionError(std::string(site_name(site)) + " endplate has no boundary");
    std::vector<Vec3> loop;
    double longest = -1.0;
    for (const auto& l : bl.loops) {
      std::vector<Vec3> pts;
      for (Index v : l) pts.push_back(mesh.vertex(v));
      const double len = Polyline{pts, true}.length();
      if (len > longest) {
        longest = len;
        loop = std::move(pts);
      }
    }
    const Vec3 normal = lm_detail::unit_or_throw(lm_detail::area_normal(mesh, faces), "endplate normal");
    for (int k = 0; k < 2; ++k) {
      const bool anterior = k == 0;
      const int count = anterior ? cfg.counts.all : cfg.counts.pll;
      const double width = anterior ? cfg.widths.all : cfg.widths.pll;
      const auto arc = lm_detail::edge_arc(loop, normal, anterior ? frame.a_ap : Vec3(-frame.a_ap),
                                          cfg.edge_arc_fraction * kPi, width);
      LandmarkGroup g;
      g.key = {anterior ? LigamentKind::ALL : LigamentKind::PLL, site};
      std::vector<Vec3> pts = arc.points;
      // Right-to-left order in patient terms: ascending lateral coordinate.
      if (frame.to_local(pts.back()).x() < frame.to_local(pts.front()).x()) std::reverse(pts.begin(), pts.end());
      g.points = count == 1 ? std::vector<Vec3>{arc.mid} : resample_by_arc_length(pts, count);
      out.push_back(std::move(g));
    }
  }
  return out;
}

/// Tip landmark of a process: the skeleton's last segment extended until it
/// leaves the process surface. Falls back to the process vertex farthest
/// along the ray direction.
inline LandmarkGroup detect_process_tip(const TriMesh& mesh, const Segmentation& seg, const SkeletonCurve& curve,
                                        const GroupKey& key) {
  if (curve.points.size() < 2) throw DetectionError(std::string(label_name(curve.label)) + " curve has fewer than 2 points");
  const Vec3& a = curve.points[curve.points.size() - 2];
  const Vec3& b = curve.points.back();
  const Vec3 dir = lm_detail::unit_or_throw(b - a, std::string(label_name(curve.label)) + " curve end");
  LandmarkGroup g;
  g.key = key;
  const FaceSet faces = faces_with_label(mesh, seg, curve.label);
  const FaceTree tree(mesh, faces);
  if (const auto hit = tree.raycast(b, dir)) {
    g.points = {hit->point};
    return g;
  }
  const VertexSet verts = seg.vertices_with(curve.label);
  if (verts.empty()) throw DetectionError(std::string(label_name(curve.label)) + " has no vertices");
  Index best = verts.front();
  for (Index v : verts) {
    if (mesh.vertex(v).dot(dir) > mesh.vertex(best).dot(dir)) best = v;
  }
  g.points = {mesh.vertex(best)};
  g.notes.push_back("fallback: no ray hit, extreme vertex along the curve direction");
  return g;
}

inline std::vector<LandmarkGroup> detect_itl_ssl(const TriMesh& mesh, const Segmentation& seg,
                                                 const std::map<SegmentLabel, SkeletonCurve>& curves) {
  std::vector<LandmarkGroup> out;
  const std::array<std::pair<SegmentLabel, GroupKey>, 3> jobs{
      {{SegmentLabel::TransverseL, {LigamentKind::ITL, Site::Left}},
       {SegmentLabel::TransverseR, {LigamentKind::ITL, Site::Right}},
       {SegmentLabel::SpinousProcess, {LigamentKind::SSL, Site::None}}}};
  for (const auto& [label, key] : jobs) {
    const auto it = curves.find(label);
    if (it == curves.end()) throw DetectionError("no " + std::string(label_name(label)) + " skeleton curve");
    out.push_back(detect_process_tip(mesh, seg, it->second, key));
  }
  return out;
}

/// ISL lines: rays from samples of the spinous skeleton, up and down along
/// the longitudinal axis made orthogonal to the local curve tangent.
inline std::vector<LandmarkGroup> detect_isl(const TriMesh& mesh, const Segmentation& seg,
                                             const SkeletonCurve& spinous, const VertebraFrame& frame,
                                             const DetectionConfig& cfg) {
  if (spinous.points.size() < 2) throw DetectionError("spinous curve has fewer than 2 points");
  const FaceSet faces = faces_with_label(mesh, seg, spinous.label);
  if (faces.empty()) throw DetectionError("spinous process has no faces");
  const FaceTree tree(mesh, faces);
  const int samples = static_cast<int>(spinous.points.size() - 1) * cfg.isl_oversample + 1;
  const std::vector<Vec3> c = resample_by_arc_length(spinous.points, samples);
  std::array<std::vector<Vec3>, 2> hits;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 t = c[std::min(i + 1, c.size() - 1)] - c[i == 0 ? 0 : i - 1];
    if (!(t.norm() > 0.0)) continue;
    const Vec3 tau = t.normalized();
    const Vec3 up = frame.a_l - frame.a_l.dot(tau) * tau;
    if (!(up.norm() > 1e-9)) continue;
    const Vec3 u = up.normalized();
    for (int k = 0; k < 2; ++k) {
      if (const auto h = tree.raycast(c[i], k == 0 ? u : Vec3(-u))) hits[static_cast<std::size_t>(k)].push_back(h->point);
    }
  }
  std::vector<LandmarkGroup> out;
  for (int k = 0; k < 2; ++k) {
    const auto& line = hits[static_cast<std::size_t>(k)];
    if (line.size() < 2) {
      throw DetectionError(std::string("spinous process gives ") + std::to_string(line.size()) + " " +
                           (k == 0 ? "superior" : "inferior") + " ray hits, need 2");
    }
    LandmarkGroup g;
    g.key = {LigamentKind::ISL, k == 0 ? Site::Superior : Site::Inferior};
    g.points = lm_detail::snap(tree, resample_by_arc_length(line, cfg.counts.isl));
    out.push_back(std::move(g));
  }
  for (std::size_t i = 0; i < out[0].points.size(); ++i) {
    if (!(frame.to_local(out[0].points[i]).z() > frame.to_local(out[1].points[i]).z())) {
      throw DetectionError("superior ISL point " + std::to_string(i) + " is not above its inferior partner");
    }
  }
  return out;
}

/// For every y in A2 the closest vertex of A1, lower index on ties; the
/// sorted set of those vertices. With coverage_fraction < 1 only the
/// closest share of A2 contributes.
inline VertexSet facet_argmins(const TriMesh& mesh, std::span<const Index> a1, std::span<const Vec3> a2,
                               double coverage_fraction = 1.0) {
  if (a1.empty() || a2.empty()) throw ValidationError("facet extraction needs non-empty vertex sets");
  if (!(coverage_fraction > 0.0 && coverage_fraction <= 1.0)) throw ParameterError("coverage_fraction must be in (0, 1]");
  // A1 sorted by x; the search widens from the query's slot while the
  // x gap alone can still beat the best distance.
  std::vector<Index> order(a1.begin(), a1.end());
  std::sort(order.begin(), order.end(), [&](Index p, Index q) {
    const double xp = mesh.vertex(p).x(), xq = mesh.vertex(q).x();
    return xp != xq ? xp < xq : p < q;
  });
  std::vector<double> xs(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) xs[i] = mesh.vertex(order[i]).x();
  std::vector<std::pair<double, Index>> picks;
  picks.reserve(a2.size());
  for (const Vec3& y : a2) {
    Index best = -1;
    double bd = std::numeric_limits<double>::infinity();
    auto visit = [&](std::size_t i) {
      const Index v = order[i];
      const double d = (mesh.vertex(v) - y).squaredNorm();
      if (d < bd || (d == bd && v < best)) {
        bd = d;
        best = v;
      }
    };
    const auto mid = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), y.x()) - xs.begin());
    for (std::size_t i = mid; i < order.size(); ++i) {
      const double dx = xs[i] - y.x();
      if (dx * dx > bd) break;
      visit(i);
    }
    for (std::size_t i = mid; i-- > 0;) {
      const double dx = y.x() - xs[i];
      if (dx * dx > bd) break;
      visit(i);
    }
    picks.emplace_back(bd, best);
  }
  if (coverage_fraction < 1.0) {
    std::stable_sort(picks.begin(), picks.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
    const auto keep = static_cast<std::size_t>(std::ceil(coverage_fraction * static_cast<double>(picks.size())));
    picks.resize(std::max<std::size_t>(keep, 1));
  }
  VertexSet j;
  for (const auto& [d, v] : picks) j.push_back(v);
  std::sort(j.begin(), j.end());
  j.erase(std::unique(j.begin(), j.end()), j.end());
  return j;
}

/// Facet surface J of A1 facing the points A2: the argmin set cleaned to
/// its largest connected component.
inline VertexSet extract_facet(const TriMesh& mesh, std::span<const Index> a1, std::span<const Vec3> a2,
                               double coverage_fraction = 1.0) {
  return connected_components(mesh, facet_argmins(mesh, a1, a2, coverage_fraction)).front();
}

inline VertexSet extract_facet(const TriMesh& mesh, std::span<const Index> a1, std::span<const Index> a2,
                               double coverage_fraction = 1.0) {
  std::vector<char> in1 = vertex_flags(mesh.vertex_count(), a1);
  std::vector<Vec3> pts;
  for (Index v : a2) {
    if (in1[static_cast<std::size_t>(v)]) throw ValidationError("facet vertex sets must be disjoint");
    pts.push_back(mesh.vertex(v));
  }
  return extract_facet(mesh, a1, pts, coverage_fraction);
}

/// In-facet axes: `vertical` is a_l (a_ap for facets facing along a_l)
/// with the facet normal removed, `horizontal` completes the pair and
/// points anteriorly when it can.
struct FacetAxes {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Vec3 vertical = Vec3::Zero();
  Vec3 horizontal = Vec3::Zero();
};

inline FacetAxes facet_axes(const TriMesh& mesh, std::span<const Index> facet, std::span<const Index> faces,
                            const VertebraFrame& frame) {
  FacetAxes ax;
  ax.centroid = lm_detail::mean_vertex(mesh, facet);
  ax.normal = lm_detail::unit_or_throw(lm_detail::area_normal(mesh, faces), "facet normal");
  Vec3 v = frame.a_l - frame.a_l.dot(ax.normal) * ax.normal;
  if (v.norm() < 0.1) v = frame.a_ap - frame.a_ap.dot(ax.normal) * ax.normal;
  ax.vertical = v.normalized();
  ax.horizontal = ax.vertical.cross(ax.normal);
  const double s = std::abs(ax.horizontal.dot(frame.a_ap)) > 1e-9 ? ax.horizontal.dot(frame.a_ap)
                                                                    : ax.horizontal.dot(frame.a_lr);
  if (s < 0.0) ax.horizontal = -ax.horizontal;
  return ax;
}

/// CL landmarks of a facet: the extremes of its section by the local
/// transverse plane (ends along the horizontal axis) and the local sagittal
/// plane (ends along the vertical axis), both through the facet centroid.
inline LandmarkGroup detect_cl(const TriMesh& mesh, std::span<const Index> facet, const VertebraFrame& frame,
                               const GroupKey& key = {LigamentKind::CL, Site::None}) {
  if (facet.size() < 8) throw DetectionError("facet has " + std::to_string(facet.size()) + " vertices, need 8");
  const FaceSet faces = faces_within(mesh, vertex_flags(mesh.vertex_count(), facet));
  if (faces.empty()) throw DetectionError("facet has no faces");
  const FacetAxes ax = facet_axes(mesh, facet, faces, frame);
  LandmarkGroup g;
  g.key = key;
  std::vector<Vec3> rim;
  auto boundary = [&]() -> const std::vector<Vec3>& {
    if (rim.empty()) {
      for (const auto& l : boundary_loops(mesh, faces).loops) {
        for (Index v : l) rim.push_back(mesh.vertex(v));
      }
      if (rim.empty()) {
        for (Index v : facet) rim.push_back(mesh.vertex(v));
      }
    }
    return rim;
  };
  const std::array<std::pair<Vec3, Vec3>, 2> cuts{{{ax.vertical, ax.horizontal}, {ax.horizontal, ax.vertical}}};
  for (int k = 0; k < 2; ++k) {
    const auto& [normal, along] = cuts[static_cast<std::size_t>(k)];
    const auto curves = plane_intersection_curve(mesh, faces, Plane::through(ax.centroid, normal));
    std::vector<Vec3> section;
    for (const auto& c : curves) section.insert(section.end(), c.points.begin(), c.points.end());
    std::vector<Vec3> lo_hi;
    if (section.size() >= 2) {
      lo_hi = {lm_detail::extreme_along(section, along, false), lm_detail::extreme_along(section, along, true)};
    }
    if (lo_hi.empty() || !((lo_hi[1] - lo_hi[0]).dot(along) > 0.0)) {
      lo_hi = {lm_detail::extreme_along(boundary(), along, false), lm_detail::extreme_along(boundary(), along, true)};
      g.notes.push_back(std::string("fallback: ") + (k == 0 ? "transverse" : "sagittal") +
                        " section degenerate, boundary extremes used");
    }
    g.points.insert(g.points.end(), lo_hi.begin(), lo_hi.end());
  }
  return g;
}

/// Resampled geodesic from the vertex nearest `start` to `end_vertex`, on
/// `faces` first and on the whole mesh if they do not connect the two.
inline LandmarkGroup geodesic_landmarks(const TriMesh& mesh, std::span<const Index> faces, const Vec3& start,
                                        Index end_vertex, int count, const GroupKey& key) {
  const VertexSet verts = vertices_of_faces(mesh, faces);
  if (verts.empty()) throw DetectionError("no faces to route " + group_name(key) + " over");
  Index src = verts.front();
  for (Index v : verts) {
    if ((mesh.vertex(v) - start).squaredNorm() < (mesh.vertex(src) - start).squaredNorm()) src = v;
  }
  LandmarkGroup g;
  g.key = key;
  GeodesicPath path;
  try {
    path = geodesic_path(mesh, faces, src, end_vertex);
  } catch (const NoPathError&) {
    try {
      path = geodesic_path(mesh, src, end_vertex);
      g.notes.push_back("fallback: endpoints disconnected on the arch, routed over the full mesh");
    } catch (const NoPathError&) {
      throw DetectionError(group_name(key) + " endpoints are disconnected");
    }
  }
  g.points = resample_by_arc_length(path.polyline.points, count);
  return g;
}

/// LF for one side: from the medial-most CL landmark of the inferior facet
/// to the same-side lamina vertex nearest the spinous root. CL points within
/// `tie_tolerance` of the smallest lateral distance are tied; the one
/// nearest the root wins.
inline LandmarkGroup detect_lf_side(const TriMesh& mesh, const Segmentation& seg, const LandmarkGroup& inferior_cl,
                                    const Vec3& spinous_root, bool left, const VertebraFrame& frame, int count,
                                    double tie_tolerance) {
  if (inferior_cl.points.empty()) throw DetectionError("inferior CL group is empty");
  const auto& cl = inferior_cl.points;
  double min_lr = std::numeric_limits<double>::infinity();
  for (const Vec3& p : cl) min_lr = std::min(min_lr, std::abs(frame.to_local(p).x()));
  std::optional<Vec3> start;
  for (const Vec3& p : cl) {
    if (std::abs(frame.to_local(p).x()) > min_lr + tie_tolerance) continue;
    if (!start || (p - spinous_root).squaredNorm() < (*start - spinous_root).squaredNorm()) start = p;
  }
  Index end = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (Index v : seg.vertices_with(SegmentLabel::Lamina)) {
    const double lr = frame.to_local(mesh.vertex(v)).x();
    if (left ? lr > 0.0 : lr < 0.0) continue;
    const double d = (mesh.vertex(v) - spinous_root).squaredNorm();
    if (d < bd) {
      bd = d;
      end = v;
    }
  }
  const GroupKey key{LigamentKind::LF, left ? Site::Left : Site::Right};
  if (end < 0) throw DetectionError("no " + std::string(left ? "left" : "right") + " lamina vertex for LF");
  std::vector<char> arch(mesh.vertex_count(), 0);
  for (std::size_t i = 0; i < arch.size(); ++i) arch[i] = seg.labels[i] != SegmentLabel::Body;
  return geodesic_landmarks(mesh, faces_within(mesh, arch), *start, end, count, key);
}

/// Spinous root used by LF: the first spinous skeleton point, or the lamina
/// centroid moved onto the mid-sagittal plane when no spinous curve exists.
inline Vec3 spinous_root_point(const TriMesh& mesh, const Segmentation& seg,
                               const std::map<SegmentLabel, SkeletonCurve>& curves, const VertebraFrame& frame) {
  const auto it = curves.find(SegmentLabel::SpinousProcess);
  if (it != curves.end() && !it->second.points.empty()) return it->second.points.front();
  const VertexSet lam = seg.vertices_with(SegmentLabel::Lamina);
  if (lam.empty()) throw DetectionError("no spinous curve and no lamina to place the spinous root");
  Vec3 q = frame.to_local(lm_detail::mean_vertex(mesh, lam));
  q.x() = 0.0;
  return frame.to_world(q);
}

inline std::vector<LandmarkGroup> detect_lf(const TriMesh& mesh, const Segmentation& seg,
                                            const std::vector<LandmarkGroup>& cl_groups,
                                            const std::map<SegmentLabel, SkeletonCurve>& curves,
                                            const VertebraFrame& frame, const DetectionConfig& cfg) {
  const Vec3 root = spinous_root_point(mesh, seg, curves, frame);
  const double tol = mean_edge_length(mesh);
  std::vector<LandmarkGroup> out;
  for (int s = 0; s < 2; ++s) {
    const Site want = s == 0 ? Site::InfL : Site::InfR;
    const auto it = std::find_if(cl_groups.begin(), cl_groups.end(),
                                 [&](const LandmarkGroup& g) { return g.key == GroupKey{LigamentKind::CL, want}; });
    if (it == cl_groups.end()) throw DetectionError("no CL group for facet " + std::string(site_name(want)));
    out.push_back(detect_lf_side(mesh, seg, *it, root, s == 0, frame, cfg.counts.lf, tol));
  }
  return out;
}

namespace lm_detail {

struct FacetJob {
  Site site;
  SegmentLabel process;
  SegmentLabel partner;
};

inline constexpr std::array<FacetJob, 4> kFacetJobs{{
    {Site::SupL, SegmentLabel::ArticularSupL, SegmentLabel::ArticularInfL},
    {Site::SupR, SegmentLabel::ArticularSupR, SegmentLabel::ArticularInfR},
    {Site::InfL, SegmentLabel::ArticularInfL, SegmentLabel::ArticularSupL},
    {Site::InfR, SegmentLabel::ArticularInfR, SegmentLabel::ArticularSupR},
}};

} // namespace lm_detail

/// Facet of one articular process facing the adjacent vertebra. With a
/// single vertebra the joint partner is stood in for by the same-side
/// complementary articular process, slid along a_l over the process's
/// extent (from bottom-aligned to top-aligned, one mean edge length per
/// step); every copy contributes to A2.
inline VertexSet articular_facet(const TriMesh& mesh, const Segmentation& seg, SegmentLabel process,
                                 SegmentLabel partner, const VertebraFrame& frame, double coverage_fraction) {
  const VertexSet a1 = seg.vertices_with(process);
  const VertexSet a2 = seg.vertices_with(partner);
  if (a1.empty()) throw DetectionError("no " + std::string(label_name(process)) + " vertices");
  if (a2.empty()) throw DetectionError("no " + std::string(label_name(partner)) + " vertices to find the facet");
  auto range = [&](const VertexSet& vs) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Index v : vs) {
      const double h = mesh.vertex(v).dot(frame.a_l);
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
    return std::pair{lo, hi};
  };
  const auto [lo1, hi1] = range(a1);
  const auto [lo2, hi2] = range(a2);
  const double d0 = std::min(lo1 - lo2, hi1 - hi2), d1 = std::max(lo1 - lo2, hi1 - hi2);
  const double step = std::max(mean_edge_length(mesh), 1e-9);
  const int copies = std::min(200, static_cast<int>(std::ceil((d1 - d0) / step))) + 1;
  std::vector<Vec3> pts;
  pts.reserve(a2.size() * static_cast<std::size_t>(copies));
  for (int k = 0; k < copies; ++k) {
    const double shift = copies == 1 ? 0.5 * (d0 + d1) : d0 + (d1 - d0) * k / (copies - 1);
    for (Index v : a2) pts.push_back(mesh.vertex(v) + shift * frame.a_l);
  }
  return extract_facet(mesh, a1, pts, coverage_fraction);
}

/// Runs every detector. A failing detector is reported in `failures` and
/// the remaining groups are still produced.
inline LandmarkSet detect_all_landmarks(const TriMesh& mesh, const VertebraFrame& frame, const Segmentation& seg,
                                        const std::map<SegmentLabel, SkeletonCurve>& curves,
                                        const DetectionConfig& cfg = {}) {
  cfg.validate();
  seg.require_matches(mesh);
  LandmarkSet out;
  out.config_json = detection_config_to_json(cfg).dump();
  auto attempt = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      out.failures.push_back({name, e.what()});
    }
  };
  auto add = [&](std::vector<LandmarkGroup> gs) {
    for (auto& g : gs) out.groups.push_back(std::move(g));
  };

  attempt("all_pll", [&] {
    const Endplates plates = extract_endplates(mesh, seg.vertices_with(SegmentLabel::Body), frame, cfg.theta_deg);
    add(detect_all_pll(mesh, plates, frame, cfg));
  });
  const std::array<std::tuple<std::string, SegmentLabel, GroupKey>, 3> tips{
      {{"itl_left", SegmentLabel::TransverseL, {LigamentKind::ITL, Site::Left}},
       {"itl_right", SegmentLabel::TransverseR, {LigamentKind::ITL, Site::Right}},
       {"ssl", SegmentLabel::SpinousProcess, {LigamentKind::SSL, Site::None}}}};
  for (const auto& [name, label, key] : tips) {
    attempt(name, [&] {
      const auto it = curves.find(label);
      if (it == curves.end()) throw DetectionError("no " + std::string(label_name(label)) + " skeleton curve");
      out.groups.push_back(detect_process_tip(mesh, seg, it->second, key));
    });
  }
  attempt("isl", [&] {
    const auto it = curves.find(SegmentLabel::SpinousProcess);
    if (it == curves.end()) throw DetectionError("no SpinousProcess skeleton curve");
    add(detect_isl(mesh, seg, it->second, frame, cfg));
  });
  std::vector<LandmarkGroup> cl;
  for (const auto& job : lm_detail::kFacetJobs) {
    attempt("cl_" + std::string(site_name(job.site)), [&] {
      const VertexSet facet = articular_facet(mesh, seg, job.process, job.partner, frame, cfg.coverage_fraction);
      cl.push_back(detect_cl(mesh, facet, frame, {LigamentKind::CL, job.site}));
    });
  }
  const double tol = mean_edge_length(mesh);
  for (int s = 0; s < 2; ++s) {
    const bool left = s == 0;
    attempt(left ? "lf_left" : "lf_right", [&] {
      const Site want = left ? Site::InfL : Site::InfR;
      const auto it = std::find_if(cl.begin(), cl.end(),
                                   [&](const LandmarkGroup& g) { return g.key == GroupKey{LigamentKind::CL, want}; });
      if (it == cl.end()) throw DetectionError("LF needs the CL group of facet " + std::string(site_name(want)));
      const Vec3 root = spinous_root_point(mesh, seg, curves, frame);
      out.groups.push_back(detect_lf_side(mesh, seg, *it, root, left, frame, cfg.counts.lf, tol));
    });
  }
  add(std::move(cl));
  out.sort_groups();
  out.validate_unique();
  return out;
}

} // namespace sld
