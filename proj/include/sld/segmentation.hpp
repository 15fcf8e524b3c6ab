#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/preprocess.hpp"
#include "sld/section.hpp"
#include "sld/trimesh.hpp"
#include "sld/types.hpp"

namespace sld {

struct SegmentationConfig {
  int stations = 40;            // AP section planes for the body/arch split
  double isthmus_depth = 0.2;   // minimum dip, relative to the lower flanking peak
  int skeleton_bins = 10;
  double capture_scale = 1.65;  // capture radius = scale x median cluster distance
  double spinous_cutoff = 0.2;  // posterior AP fraction ignored for transverse seeds
  double band_inner = 0.15;     // para-sagittal band for articular seeds, x extent_LR
  double band_outer = 0.45;
  double cluster_fraction = 1.0; // deepest initial cluster, fraction of seed protrusion
  double neck_ratio = 1.3;       // cross-section growth marking a process root
  int refit_rounds = 1;
  // A seed counts as a process only if it protrudes past the arch centroid by
  // this many body half-extents along its direction.
  double min_protrusion_spinous = 1.0;
  double min_protrusion_transverse = 1.5;
  double min_protrusion_articular = 1.0;

  void validate() const {
    if (stations < 5) throw ParameterError("segmentation needs at least 5 section stations");
    if (!(isthmus_depth > 0.0 && isthmus_depth < 1.0)) throw ParameterError("isthmus depth must be in (0, 1)");
    if (skeleton_bins < 3) throw ParameterError("segmentation.skeleton_bins must be at least 3");
    if (!(capture_scale > 0.0) || !std::isfinite(capture_scale)) {
      throw ParameterError("segmentation.capture_scale must be positive");
    }
    if (!(spinous_cutoff >= 0.0 && spinous_cutoff < 1.0)) throw ParameterError("spinous cutoff must be in [0, 1)");
    if (!(band_inner >= 0.0 && band_inner < band_outer)) throw ParameterError("articular band must satisfy 0 <= inner < outer");
    if (!(cluster_fraction > 0.0 && cluster_fraction <= 1.0)) throw ParameterError("cluster fraction must be in (0, 1]");
    if (!(neck_ratio > 1.0)) throw ParameterError("neck ratio must exceed 1");
    if (refit_rounds < 0) throw ParameterError("refit rounds must be non-negative");
    if (min_protrusion_spinous < 0.0 || min_protrusion_transverse < 0.0 || min_protrusion_articular < 0.0) {
      throw ParameterError("protrusion thresholds must be non-negative");
    }
  }
};

struct BodyArchSplit {
  VertexSet body;
  VertexSet arch;
  std::vector<double> profile; // section areas, anterior -> posterior
  int station = -1;
  double split_ap = 0.0; // local AP coordinate of the splitting plane
};

struct ProcessSeed {
  Index vertex = -1;
  Vec3 direction = Vec3::Zero(); // world-space direction of extremity
};

struct ExtremePoints {
  std::map<SegmentLabel, ProcessSeed> seeds;
  Vec3 arch_centroid = Vec3::Zero();
};

struct SegmentResult {
  Segmentation segmentation;
  std::map<SegmentLabel, SkeletonCurve> curves;
  VertebraFrame frame; // after anterior refinement
  bool frame_flipped = false;
  BodyArchSplit split;
  ExtremePoints extremes;
};

namespace seg_detail {

inline Vec3 centroid(const TriMesh& mesh, std::span<const Index> subset) {
  std::array<ExactSum, 3> s;
  for (Index v : subset) {
    const Vec3& p = mesh.vertex(v);
    for (int k = 0; k < 3; ++k) s[static_cast<std::size_t>(k)].add(p[k]);
  }
  const double n = static_cast<double>(subset.size());
  return {s[0].value() / n, s[1].value() / n, s[2].value() / n};
}

/// Index of the subset's extreme of `key`, lowest vertex index on ties.
template <class Key> Index argmax(std::span<const Index> subset, Key key) {
  Index best = -1;
  double bv = -std::numeric_limits<double>::infinity();
  for (Index v : subset) {
    const double k = key(v);
    if (k > bv || (k == bv && v < best)) {
      bv = k;
      best = v;
    }
  }
  return best;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

} // namespace seg_detail

/// Sweeps planes normal to a_AP and cuts at the deepest interior minimum of
/// the section-area profile (the pedicle isthmus). The body is the largest
/// connected piece anterior of that plane; everything else is arch.
inline BodyArchSplit split_body_arch(const TriMesh& mesh, const VertebraFrame& frame,
                                     const SegmentationConfig& cfg = {}) {
  cfg.validate();
  mesh.require_non_empty();
  const std::size_t nv = mesh.vertex_count();
  std::vector<double> ap(nv);
  for (std::size_t i = 0; i < nv; ++i) ap[i] = frame.to_local(mesh.vertices()[i]).y();
  const auto [lo_it, hi_it] = std::minmax_element(ap.begin(), ap.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DegenerateGeometryError("mesh has no extent along a_AP");

  const int n = cfg.stations;
  const double step = (hi - lo) / n;
  const FaceSet faces = all_faces(mesh);
  BodyArchSplit out;
  out.profile.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = hi - (i + 0.5) * step;
    const Plane plane = Plane::through(frame.origin + t * frame.a_ap, frame.a_ap);
    out.profile[static_cast<std::size_t>(i)] = section_area(plane_intersection_curve(mesh, faces, plane), plane);
  }

  std::vector<double> left(static_cast<std::size_t>(n), 0.0), right(static_cast<std::size_t>(n), 0.0);
  for (int i = 1; i < n; ++i) {
    left[static_cast<std::size_t>(i)] = std::max(left[static_cast<std::size_t>(i - 1)], out.profile[static_cast<std::size_t>(i - 1)]);
  }
  for (int i = n - 2; i >= 0; --i) {
    right[static_cast<std::size_t>(i)] = std::max(right[static_cast<std::size_t>(i + 1)], out.profile[static_cast<std::size_t>(i + 1)]);
  }
  double best_depth = 0.0;
  for (int i = 1; i + 1 < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double flank = std::min(left[k], right[k]);
    const double depth = flank - out.profile[k];
    if (depth > cfg.isthmus_depth * flank && depth > best_depth) {
      best_depth = depth;
      out.station = i;
    }
  }
  if (out.station < 0) throw SegmentationError("no isthmus found: the AP section-area profile has no interior minimum");
  // Parabolic refinement of the minimum between the neighbouring stations.
  const auto k = static_cast<std::size_t>(out.station);
  const double a0 = out.profile[k - 1], a1 = out.profile[k], a2 = out.profile[k + 1];
  const double curv = a0 - 2.0 * a1 + a2;
  const double delta = curv > 0.0 ? std::clamp(0.5 * (a0 - a2) / curv, -0.5, 0.5) : 0.0;
  out.split_ap = hi - (out.station + 0.5 + delta) * step;

  VertexSet anterior;
  for (std::size_t i = 0; i < nv; ++i) {
    if (ap[i] >= out.split_ap) anterior.push_back(static_cast<Index>(i));
  }
  const auto comps = connected_components(mesh, anterior);
  if (comps.empty()) throw SegmentationError("nothing anterior of the isthmus plane");
  out.body = comps.front();
  std::vector<char> in_body = vertex_flags(nv, out.body);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!in_body[i]) out.arch.push_back(static_cast<Index>(i));
  }
  if (out.arch.empty()) throw SegmentationError("isthmus plane leaves an empty vertebral arch");
  return out;
}

/// Seven seed vertices: the posterior extreme (spinous), the lateral extremes
/// outside the posterior cutoff (transverse), and the superior / inferior
/// extremes inside the para-sagittal bands (articular).
inline ExtremePoints cluster_extremes(const TriMesh& mesh, const BodyArchSplit& split, const VertebraFrame& frame,
                                      const SegmentationConfig& cfg = {}) {
  cfg.validate();
  if (split.arch.empty()) throw SegmentationError("empty vertebral arch");
  if (split.body.empty()) throw SegmentationError("empty vertebral body");
  using seg_detail::argmax;
  std::vector<Vec3> loc(mesh.vertex_count());
  for (std::size_t i = 0; i < loc.size(); ++i) loc[i] = frame.to_local(mesh.vertices()[i]);
  auto at = [&](Index v) -> const Vec3& { return loc[static_cast<std::size_t>(v)]; };

  ExtremePoints out;
  out.arch_centroid = seg_detail::centroid(mesh, split.arch);
  const Vec3 c = frame.to_local(out.arch_centroid);

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const Vec3& q : loc) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 extent = hi - lo;
  Vec3 blo = Vec3::Constant(std::numeric_limits<double>::infinity()), bhi = -blo;
  for (Index v : split.body) {
    blo = blo.cwiseMin(at(v));
    bhi = bhi.cwiseMax(at(v));
  }
  const Vec3 body_half = 0.5 * (bhi - blo);

  const std::span<const Index> arch(split.arch);
  VertexSet lateral, band_left, band_right;
  const double cutoff = lo.y() + cfg.spinous_cutoff * extent.y();
  for (Index v : arch) {
    const Vec3& q = at(v);
    if (q.y() >= cutoff) lateral.push_back(v);
    const double off = q.x() - c.x();
    const double a = std::abs(off);
    if (a >= cfg.band_inner * extent.x() && a <= cfg.band_outer * extent.x()) (off < 0.0 ? band_left : band_right).push_back(v);
  }

  struct Candidate {
    SegmentLabel label;
    std::span<const Index> pool;
    int axis;
    double sign;
    double min_protrusion;
  };
  // Left is the negative lateral side of the frame.
  const std::array<Candidate, 7> cand{{
      {SegmentLabel::SpinousProcess, arch, 1, -1.0, cfg.min_protrusion_spinous},
      {SegmentLabel::TransverseL, lateral, 0, -1.0, cfg.min_protrusion_transverse},
      {SegmentLabel::TransverseR, lateral, 0, 1.0, cfg.min_protrusion_transverse},
      {SegmentLabel::ArticularSupL, band_left, 2, 1.0, cfg.min_protrusion_articular},
      {SegmentLabel::ArticularSupR, band_right, 2, 1.0, cfg.min_protrusion_articular},
      {SegmentLabel::ArticularInfL, band_left, 2, -1.0, cfg.min_protrusion_articular},
      {SegmentLabel::ArticularInfR, band_right, 2, -1.0, cfg.min_protrusion_articular},
  }};
  const std::array<Vec3, 3> axes{frame.a_lr, frame.a_ap, frame.a_l};
  std::vector<std::string> missing;
  for (const Candidate& k : cand) {
    const Index v = argmax(k.pool, [&](Index u) { return k.sign * at(u)[k.axis]; });
    const double protrusion = v < 0 ? 0.0 : k.sign * (at(v)[k.axis] - c[k.axis]);
    if (v < 0 || protrusion < k.min_protrusion * body_half[k.axis]) {
      missing.emplace_back(label_name(k.label));
      continue;
    }
    out.seeds[k.label] = {v, k.sign * axes[static_cast<std::size_t>(k.axis)]};
  }
  for (auto a = out.seeds.begin(); a != out.seeds.end(); ++a) {
    for (auto b = std::next(a); b != out.seeds.end(); ++b) {
      if (a->second.vertex == b->second.vertex) missing.emplace_back(label_name(b->first));
    }
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw SegmentationError("missing process: " + names + " (fewer than 7 distinct extreme points)");
  }
  return out;
}

/// Initial per-process clusters. Arch vertices go to the geodesically nearest
/// seed. Walking from the seed toward the arch centroid in slabs of two mean
/// edge lengths, a cluster stops at the first slab whose RMS cross-section
/// radius exceeds `neck_ratio` times the widest seen so far (the process
/// root), or after `cluster_fraction` of the seed's protrusion.
inline std::map<SegmentLabel, VertexSet> process_clusters(const TriMesh& mesh, std::span<const Index> arch,
                                                           const ExtremePoints& ex, const SegmentationConfig& cfg = {}) {
  const std::size_t nv = mesh.vertex_count();
  const std::vector<char> in_arch = vertex_flags(nv, arch);
  const Adjacency adj = vertex_adjacency(mesh, faces_within(mesh, in_arch));
  std::vector<double> dist(nv, std::numeric_limits<double>::infinity());
  std::vector<int> owner(nv, -1);
  using Entry = std::tuple<double, int, Index>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (const auto& [label, seed] : ex.seeds) {
    const auto s = static_cast<std::size_t>(seed.vertex);
    dist[s] = 0.0;
    owner[s] = to_int(label);
    heap.emplace(0.0, to_int(label), seed.vertex);
  }
  while (!heap.empty()) {
    const auto [d, l, u] = heap.top();
    heap.pop();
    const auto ui = static_cast<std::size_t>(u);
    if (d > dist[ui] || l != owner[ui]) continue;
    for (Index w : adj.of(u)) {
      const auto wi = static_cast<std::size_t>(w);
      const double nd = d + (mesh.vertex(u) - mesh.vertex(w)).norm();
      if (nd < dist[wi] || (nd == dist[wi] && l < owner[wi])) {
        dist[wi] = nd;
        owner[wi] = l;
        heap.emplace(nd, l, w);
      }
    }
  }

  double edge_sum = 0.0;
  std::size_t edge_count = 0;
  for (Index v : arch) {
    for (Index u : adj.of(v)) {
      if (u > v) {
        edge_sum += (mesh.vertex(u) - mesh.vertex(v)).norm();
        ++edge_count;
      }
    }
  }
  const double w = std::max(0.5, 2.0 * (edge_count ? edge_sum / static_cast<double>(edge_count) : 0.0));

  std::map<SegmentLabel, VertexSet> out;
  for (const auto& [label, seed] : ex.seeds) {
    const Vec3& d = seed.direction;
    const double top = mesh.vertex(seed.vertex).dot(d);
    const double max_depth = cfg.cluster_fraction * (top - ex.arch_centroid.dot(d));
    const int nslab = std::max(1, static_cast<int>(std::ceil(max_depth / w)));
    std::vector<std::array<ExactSum, 4>> sums(static_cast<std::size_t>(nslab));
    std::vector<int> count(static_cast<std::size_t>(nslab), 0);
    for (Index v : arch) {
      if (owner[static_cast<std::size_t>(v)] != to_int(label)) continue;
      const Vec3& p = mesh.vertex(v);
      const double depth = top - p.dot(d);
      if (depth > max_depth) continue;
      const int j = std::clamp(static_cast<int>(std::floor(depth / w)), 0, nslab - 1);
      const Vec3 q = p - p.dot(d) * d;
      auto& s = sums[static_cast<std::size_t>(j)];
      s[0].add(q.x());
      s[1].add(q.y());
      s[2].add(q.z());
      s[3].add(q.squaredNorm());
      ++count[static_cast<std::size_t>(j)];
    }
    // Walk down from the tip; the process ends where its cross-section widens.
    double threshold = top - max_depth;
    double widest = 0.0;
    for (int j = 0; j < nslab; ++j) {
      const auto ji = static_cast<std::size_t>(j);
      if (count[ji] < 3) continue;
      const double n = count[ji];
      const Vec3 c(sums[ji][0].value() / n, sums[ji][1].value() / n, sums[ji][2].value() / n);
      const double rms = std::sqrt(std::max(0.0, sums[ji][3].value() / n - c.squaredNorm()));
      if (widest > 0.0 && j * w >= 2.0 * widest && (rms > cfg.neck_ratio * widest || rms * cfg.neck_ratio < widest)) {
        threshold = top - (j - 1) * w;
        break;
      }
      widest = std::max(widest, rms);
    }
    VertexSet candidates;
    for (Index v : arch) {
      if (owner[static_cast<std::size_t>(v)] == to_int(label) && mesh.vertex(v).dot(d) >= threshold) candidates.push_back(v);
    }
    for (auto& comp : connected_components(adj, candidates)) {
      if (std::binary_search(comp.begin(), comp.end(), seed.vertex)) {
        out[label] = std::move(comp);
        break;
      }
    }
  }
  return out;
}

/// Slab-centroid skeleton: region vertices binned into `bins` slabs along
/// root_hint -> tip, one centroid per occupied slab, then rebinned by arc
/// length along that first polyline, then one (1, 2, 1) / 4 moving-average pass.
/// Small regions reduce the bin count (3 vertices per bin, at least 3 bins).
inline SkeletonCurve skeleton_curve(const TriMesh& mesh, std::span<const Index> region, const Vec3& root_hint,
                                    const Vec3& tip, int bins = 10, SegmentLabel label = SegmentLabel::Lamina) {
  if (bins < 3) throw ParameterError("skeleton needs at least 3 bins");
  const int k = std::min(bins, static_cast<int>(region.size() / 3));
  if (k < 3) {
    throw SegmentationError("region of " + std::string(label_name(label)) + " too small for a skeleton (" +
                            std::to_string(region.size()) + " vertices)");
  }
  const Vec3 axis = tip - root_hint;
  if (!(axis.squaredNorm() > 0.0)) throw SegmentationError("skeleton root and tip coincide");
  const Vec3 d = axis.normalized();
  // Slab centroids of the region under a scalar parameter, empty slabs skipped.
  auto centroids = [&](const std::vector<double>& t) {
    const auto [lo_it, hi_it] = std::minmax_element(t.begin(), t.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw SegmentationError("skeleton region is flat along its principal direction");
    std::vector<std::array<ExactSum, 3>> sums(static_cast<std::size_t>(k));
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < region.size(); ++i) {
      const Vec3& p = mesh.vertex(region[i]);
      const int b = std::min(k - 1, static_cast<int>(std::floor((t[i] - lo) / (hi - lo) * k)));
      auto& s = sums[static_cast<std::size_t>(b)];
      for (int a = 0; a < 3; ++a) s[static_cast<std::size_t>(a)].add(p[a]);
      ++count[static_cast<std::size_t>(b)];
    }
    std::vector<Vec3> c;
    for (int b = 0; b < k; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      if (count[bi] == 0) continue;
      const double n = count[bi];
      c.emplace_back(sums[bi][0].value() / n, sums[bi][1].value() / n, sums[bi][2].value() / n);
    }
    return c;
  };
  std::vector<double> t(region.size());
  for (std::size_t i = 0; i < region.size(); ++i) t[i] = mesh.vertex(region[i]).dot(d);
  std::vector<Vec3> c = centroids(t);
  // Second pass bins by arc length along the first polyline, so bent regions
  // are sliced across their own centreline.
  if (c.size() >= 3) {
    for (std::size_t i = 0; i < region.size(); ++i) t[i] = arclength_of_closest(mesh.vertex(region[i]), c);
    c = centroids(t);
  }
  SkeletonCurve curve;
  curve.label = label;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 p = (i == 0 || i + 1 == c.size()) ? c[i] : Vec3(0.25 * c[i - 1] + 0.5 * c[i] + 0.25 * c[i + 1]);
    if (curve.points.empty() || (curve.points.back() - p).squaredNorm() > 0.0) curve.points.push_back(p);
  }
  if (curve.points.size() < 2) throw SegmentationError("skeleton of " + std::string(label_name(label)) + " collapsed to a point");
  return curve;
}

/// Reassigns every connected piece of a non-body label other than its largest
/// to the neighbouring label sharing the most edges with it (lower label on
/// ties), until each such label is connected.
inline void clean_orphan_islands(const TriMesh& mesh, std::vector<SegmentLabel>& labels) {
  const Adjacency adj = vertex_adjacency(mesh);
  for (int pass = 0; pass < 16; ++pass) {
    bool changed = false;
    for (SegmentLabel l : kAllLabels) {
      if (l == SegmentLabel::Body) continue;
      VertexSet verts;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == l) verts.push_back(static_cast<Index>(i));
      }
      const auto comps = connected_components(adj, verts);
      for (std::size_t c = 1; c < comps.size(); ++c) {
        std::array<long, kLabelCount> shared{};
        for (Index v : comps[c]) {
          for (Index u : adj.of(v)) {
            const SegmentLabel o = labels[static_cast<std::size_t>(u)];
            if (o != l) ++shared[static_cast<std::size_t>(to_int(o))];
          }
        }
        int target = -1;
        for (int k = 0; k < kLabelCount; ++k) {
          if (shared[static_cast<std::size_t>(k)] > 0 && (target < 0 || shared[static_cast<std::size_t>(k)] > shared[static_cast<std::size_t>(target)])) target = k;
        }
        if (target < 0) continue;
        for (Index v : comps[c]) labels[static_cast<std::size_t>(v)] = static_cast<SegmentLabel>(target);
        changed = true;
      }
    }
    if (!changed) return;
  }
}

/// Each arch vertex takes the label of its nearest curve (lower label within
/// 1e-12) if it lies within that curve's capture radius, else `lamina_label`.
/// Vertices outside the arch are Body. Orphan islands are cleaned up last.
inline Segmentation classify_by_skeleton(const TriMesh& mesh, std::span<const Index> arch,
                                         const std::vector<SkeletonCurve>& curves,
                                         SegmentLabel lamina_label = SegmentLabel::Lamina) {
  std::vector<const SkeletonCurve*> order;
  for (const auto& c : curves) {
    if (c.points.empty()) throw ValidationError("skeleton curve without points");
    order.push_back(&c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const SkeletonCurve* a, const SkeletonCurve* b) { return to_int(a->label) < to_int(b->label); });
  Segmentation seg;
  seg.labels.assign(mesh.vertex_count(), SegmentLabel::Body);
  for (Index v : arch) {
    const Vec3& p = mesh.vertex(v);
    const SkeletonCurve* best = nullptr;
    double bd = std::numeric_limits<double>::infinity();
    for (const SkeletonCurve* c : order) {
      const double d = std::sqrt(squared_distance_to_polyline(p, c->points));
      if (d < bd - 1e-12) {
        bd = d;
        best = c;
      }
    }
    seg.labels[static_cast<std::size_t>(v)] = best && bd <= best->capture_radius ? best->label : lamina_label;
  }
  clean_orphan_islands(mesh, seg.labels);
  return seg;
}

/// Skeleton of one labelled region, rooted at the region vertex nearest the
/// arch centroid, with its capture radius.
inline SkeletonCurve fit_process_curve(const TriMesh& mesh, std::span<const Index> region, SegmentLabel label,
                                       const Vec3& arch_centroid, const Vec3& tip, const SegmentationConfig& cfg) {
  const Index root = seg_detail::argmax(region, [&](Index v) { return -(mesh.vertex(v) - arch_centroid).squaredNorm(); });
  if (root < 0) throw SegmentationError("empty region for " + std::string(label_name(label)));
  SkeletonCurve curve = skeleton_curve(mesh, region, mesh.vertex(root), tip, cfg.skeleton_bins, label);
  std::vector<double> d;
  d.reserve(region.size());
  for (Index v : region) d.push_back(std::sqrt(squared_distance_to_polyline(mesh.vertex(v), curve.points)));
  curve.capture_radius = cfg.capture_scale * seg_detail::median(std::move(d));
  return curve;
}

/// Full segmentation: body/arch split (with the anterior check on a_AP),
/// extreme-point seeds, initial clusters, skeleton fit and classification,
/// then `refit_rounds` rounds of refitting each curve to its labelled region.
inline SegmentResult segment(const TriMesh& mesh, const VertebraFrame& frame, const SegmentationConfig& cfg = {}) {
  cfg.validate();
  SegmentResult out;
  out.frame = frame;
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (Error& e) {
      if (e.stage().empty()) e.set_stage(stage);
      throw;
    }
  };
  out.split = staged("split_body_arch", [&] { return split_body_arch(mesh, out.frame, cfg); });
  const Vec3 all = seg_detail::centroid(mesh, all_vertices(mesh));
  if ((seg_detail::centroid(mesh, out.split.body) - all).dot(out.frame.a_ap) <= 0.0) {
    out.frame = out.frame.flipped_ap();
    out.frame_flipped = true;
    out.split = staged("split_body_arch", [&] { return split_body_arch(mesh, out.frame, cfg); });
  }
  out.extremes = staged("cluster_extremes", [&] { return cluster_extremes(mesh, out.split, out.frame, cfg); });
  const auto clusters = staged("cluster_extremes", [&] { return process_clusters(mesh, out.split.arch, out.extremes, cfg); });

  auto fit = [&](const std::map<SegmentLabel, VertexSet>& regions) {
    std::vector<SkeletonCurve> curves;
    for (const auto& [label, seed] : out.extremes.seeds) {
      const auto it = regions.find(label);
      if (it == regions.end() || it->second.empty()) {
        throw SegmentationError("no vertices left for " + std::string(label_name(label)));
      }
      curves.push_back(fit_process_curve(mesh, it->second, label, out.extremes.arch_centroid, mesh.vertex(seed.vertex), cfg));
    }
    return curves;
  };
  std::vector<SkeletonCurve> curves = staged("skeleton_curve", [&] { return fit(clusters); });
  out.segmentation = classify_by_skeleton(mesh, out.split.arch, curves);
  // Refits follow the labelled regions; capture radii stay those of the seed clusters.
  for (int round = 0; round < cfg.refit_rounds; ++round) {
    std::map<SegmentLabel, VertexSet> regions;
    for (SegmentLabel l : kProcessLabels) regions[l] = out.segmentation.vertices_with(l);
    std::vector<SkeletonCurve> next = staged("skeleton_curve", [&] { return fit(regions); });
    for (std::size_t i = 0; i < next.size(); ++i) next[i].capture_radius = curves[i].capture_radius;
    curves = std::move(next);
    out.segmentation = classify_by_skeleton(mesh, out.split.arch, curves);
  }
  for (auto& c : curves) out.curves[c.label] = std::move(c);
  return out;
}

} // namespace sld
