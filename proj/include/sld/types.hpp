#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/trimesh.hpp"

namespace sld {

/// Anatomical regions. The integer values are the serialized label ids.
enum class SegmentLabel : int {
  Body = 0,
  Lamina = 1,
  SpinousProcess = 2,
  TransverseL = 3,
  TransverseR = 4,
  ArticularSupL = 5,
  ArticularSupR = 6,
  ArticularInfL = 7,
  ArticularInfR = 8,
};

inline constexpr int kLabelCount = 9;

inline constexpr std::array<SegmentLabel, kLabelCount> kAllLabels{
    SegmentLabel::Body,          SegmentLabel::Lamina,        SegmentLabel::SpinousProcess,
    SegmentLabel::TransverseL,   SegmentLabel::TransverseR,   SegmentLabel::ArticularSupL,
    SegmentLabel::ArticularSupR, SegmentLabel::ArticularInfL, SegmentLabel::ArticularInfR};

/// Labels that get a skeleton curve (everything but Body and Lamina).
inline constexpr std::array<SegmentLabel, 7> kProcessLabels{
    SegmentLabel::SpinousProcess, SegmentLabel::TransverseL,   SegmentLabel::TransverseR,  SegmentLabel::ArticularSupL,
    SegmentLabel::ArticularSupR,  SegmentLabel::ArticularInfL, SegmentLabel::ArticularInfR};

inline constexpr int to_int(SegmentLabel l) { return static_cast<int>(l); }

inline SegmentLabel label_from_int(int v) {
  if (v < 0 || v >= kLabelCount) throw ValidationError("segment label out of range: " + std::to_string(v));
  return static_cast<SegmentLabel>(v);
}

inline std::string_view label_name(SegmentLabel l) {
  static constexpr std::array<std::string_view, kLabelCount> names{
      "Body", "Lamina", "SpinousProcess", "TransverseL", "TransverseR", "ArticularSupL", "ArticularSupR",
      "ArticularInfL", "ArticularInfR"};
  return names[static_cast<std::size_t>(l)];
}

/// Reflection through the sagittal plane exchanges left and right.
inline SegmentLabel mirror_label(SegmentLabel l) {
  switch (l) {
  case SegmentLabel::TransverseL: return SegmentLabel::TransverseR;
  case SegmentLabel::TransverseR: return SegmentLabel::TransverseL;
  case SegmentLabel::ArticularSupL: return SegmentLabel::ArticularSupR;
  case SegmentLabel::ArticularSupR: return SegmentLabel::ArticularSupL;
  case SegmentLabel::ArticularInfL: return SegmentLabel::ArticularInfR;
  case SegmentLabel::ArticularInfR: return SegmentLabel::ArticularInfL;
  default: return l;
  }
}

struct SkeletonCurve {
  SegmentLabel label = SegmentLabel::Lamina;
  std::vector<Vec3> points; // root -> tip
  double capture_radius = std::numeric_limits<double>::infinity();
};

struct Segmentation {
  std::vector<SegmentLabel> labels;

  std::size_t vertex_count() const { return labels.size(); }

  VertexSet vertices_with(SegmentLabel l) const {
    VertexSet out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == l) out.push_back(static_cast<Index>(i));
    }
    return out;
  }

  std::vector<int> as_ints() const {
    std::vector<int> out(labels.size());
    std::transform(labels.begin(), labels.end(), out.begin(), [](SegmentLabel l) { return to_int(l); });
    return out;
  }

  static Segmentation from_ints(const std::vector<int>& v) {
    Segmentation s;
    s.labels.reserve(v.size());
    for (int x : v) s.labels.push_back(label_from_int(x));
    return s;
  }

  void require_matches(const TriMesh& mesh) const {
    if (labels.size() != mesh.vertex_count()) {
      throw ValidationError("segmentation has " + std::to_string(labels.size()) + " labels for a mesh with " +
                            std::to_string(mesh.vertex_count()) + " vertices");
    }
  }
};

/// Faces whose three corners all carry `label`.
inline FaceSet faces_with_label(const TriMesh& mesh, const Segmentation& seg, SegmentLabel label) {
  FaceSet out;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& t = mesh.faces()[f];
    if (seg.labels[static_cast<std::size_t>(t[0])] == label && seg.labels[static_cast<std::size_t>(t[1])] == label &&
        seg.labels[static_cast<std::size_t>(t[2])] == label) {
      out.push_back(static_cast<Index>(f));
    }
  }
  return out;
}

enum class LigamentKind : int { ALL = 0, PLL, ITL, SSL, ISL, CL, LF };

inline constexpr std::array<LigamentKind, 7> kAllKinds{LigamentKind::ALL, LigamentKind::PLL, LigamentKind::ITL,
                                                       LigamentKind::SSL, LigamentKind::ISL, LigamentKind::CL,
                                                       LigamentKind::LF};

inline std::string_view kind_name(LigamentKind k) {
  static constexpr std::array<std::string_view, 7> names{"ALL", "PLL", "ITL", "SSL", "ISL", "CL", "LF"};
  return names[static_cast<std::size_t>(k)];
}

inline LigamentKind kind_from_name(std::string_view s) {
  for (LigamentKind k : kAllKinds) {
    if (kind_name(k) == s) return k;
  }
  throw ValidationError("unknown ligament kind '" + std::string(s) + "'");
}

/// Qualifier of a landmark group: endplate, body side, facet, or none.
enum class Site : int { None = 0, Superior, Inferior, Left, Right, SupL, SupR, InfL, InfR };

inline std::string_view site_name(Site s) {
  static constexpr std::array<std::string_view, 9> names{"none",  "superior", "inferior", "left", "right",
                                                         "supL", "supR",     "infL",     "infR"};
  return names[static_cast<std::size_t>(s)];
}

inline Site site_from_name(std::string_view s) {
  for (int i = 0; i < 9; ++i) {
    if (site_name(static_cast<Site>(i)) == s) return static_cast<Site>(i);
  }
  throw ValidationError("unknown landmark site '" + std::string(s) + "'");
}

inline Site mirror_site(Site s) {
  switch (s) {
  case Site::Left: return Site::Right;
  case Site::Right: return Site::Left;
  case Site::SupL: return Site::SupR;
  case Site::SupR: return Site::SupL;
  case Site::InfL: return Site::InfR;
  case Site::InfR: return Site::InfL;
  default: return s;
  }
}

struct GroupKey {
  LigamentKind kind = LigamentKind::ALL;
  Site site = Site::None;
  auto operator<=>(const GroupKey&) const = default;
};

inline std::string group_name(const GroupKey& k) {
  return std::string(kind_name(k.kind)) + (k.site == Site::None ? "" : "/" + std::string(site_name(k.site)));
}

/// The fifteen groups a complete detection produces, in canonical order.
inline std::vector<GroupKey> canonical_groups() {
  return {{LigamentKind::ALL, Site::Superior}, {LigamentKind::ALL, Site::Inferior}, {LigamentKind::PLL, Site::Superior},
          {LigamentKind::PLL, Site::Inferior}, {LigamentKind::ITL, Site::Left},     {LigamentKind::ITL, Site::Right},
          {LigamentKind::SSL, Site::None},     {LigamentKind::ISL, Site::Superior}, {LigamentKind::ISL, Site::Inferior},
          {LigamentKind::CL, Site::SupL},      {LigamentKind::CL, Site::SupR},      {LigamentKind::CL, Site::InfL},
          {LigamentKind::CL, Site::InfR},      {LigamentKind::LF, Site::Left},      {LigamentKind::LF, Site::Right}};
}

/// Points per resampled group. ITL and SSL always carry one point, CL four.
struct LandmarkCounts {
  int all = 3;
  int pll = 3;
  int isl = 5;
  int lf = 5;

  void validate() const {
    if (all < 1 || pll < 1 || isl < 1 || lf < 1) throw ParameterError("landmark counts must be at least 1");
  }
};

struct LandmarkGroup {
  GroupKey key;
  std::vector<Vec3> points;
  std::optional<VertexSet> patch_vertices; // annotations only
  std::vector<std::string> notes;          // provenance flags, e.g. fallbacks taken
};

struct DetectionFailure {
  std::string detector;
  std::string message;
};

struct LandmarkSet {
  std::string mesh_id;
  std::string config_json; // snapshot of the effective configuration
  std::vector<LandmarkGroup> groups;
  std::vector<DetectionFailure> failures;

  void sort_groups() {
    std::sort(groups.begin(), groups.end(), [](const LandmarkGroup& a, const LandmarkGroup& b) { return a.key < b.key; });
  }

  const LandmarkGroup* find(const GroupKey& k) const {
    for (const auto& g : groups) {
      if (g.key == k) return &g;
    }
    return nullptr;
  }

  /// Throws on a repeated (kind, site).
  void validate_unique() const {
    for (std::size_t i = 1; i < groups.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (groups[i].key == groups[j].key) throw ValidationError("duplicate landmark group " + group_name(groups[i].key));
      }
    }
  }
};

} // namespace sld
