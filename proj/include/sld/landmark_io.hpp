#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sld/error.hpp"
#include "sld/mesh_io.hpp"
#include "sld/types.hpp"

namespace sld {

/// JSON form of a landmark or annotation set:
///
///   {"mesh_id": "...", "config": {...} | null,
///    "groups": [{"kind": "CL", "site": "supL", "points": [[x,y,z], ...],
///                "patch_vertices": [i, ...], "notes": ["..."]}],
///    "failures": [{"detector": "...", "message": "..."}]}
///
/// Groups are written in canonical (kind, site) order; `patch_vertices` and
/// `notes` are omitted when absent or empty.
inline nlohmann::ordered_json landmarks_to_json(const LandmarkSet& set) {
  LandmarkSet sorted = set;
  sorted.sort_groups();
  nlohmann::ordered_json j;
  j["mesh_id"] = sorted.mesh_id;
  if (sorted.config_json.empty()) {
    j["config"] = nullptr;
  } else {
    j["config"] = nlohmann::ordered_json::parse(sorted.config_json);
  }
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : sorted.groups) {
    nlohmann::ordered_json jg;
    jg["kind"] = std::string(kind_name(g.key.kind));
    jg["site"] = std::string(site_name(g.key.site));
    jg["points"] = nlohmann::ordered_json::array();
    for (const Vec3& p : g.points) jg["points"].push_back({p.x(), p.y(), p.z()});
    if (g.patch_vertices) jg["patch_vertices"] = *g.patch_vertices;
    if (!g.notes.empty()) jg["notes"] = g.notes;
    j["groups"].push_back(std::move(jg));
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : sorted.failures) j["failures"].push_back({{"detector", f.detector}, {"message", f.message}});
  return j;
}

namespace lio_detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || a == key;
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

inline Vec3 parse_point(const nlohmann::json& p, const std::string& where) {
  if (!p.is_array() || p.size() != 3) throw ValidationError(where + ": point must be [x, y, z]");
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    const auto& c = p[static_cast<std::size_t>(k)];
    if (!c.is_number()) throw ValidationError(where + ": point coordinates must be numbers");
    out[k] = c.get<double>();
    if (!std::isfinite(out[k])) throw ValidationError(where + ": non-finite coordinate");
  }
  return out;
}

} // namespace lio_detail

/// Inverse of landmarks_to_json. Unknown keys, unknown kinds or sites and
/// repeated groups are rejected.
inline LandmarkSet landmarks_from_json(const nlohmann::json& j) {
  using namespace lio_detail;
  check_keys(j, {"mesh_id", "config", "groups", "failures"}, "landmark file");
  LandmarkSet set;
  if (j.contains("mesh_id")) {
    if (!j["mesh_id"].is_string()) throw ValidationError("mesh_id must be a string");
    set.mesh_id = j["mesh_id"].get<std::string>();
  }
  if (j.contains("config") && !j["config"].is_null()) set.config_json = j["config"].dump();
  if (!j.contains("groups") || !j["groups"].is_array()) throw ValidationError("landmark file needs a 'groups' array");
  for (const auto& jg : j["groups"]) {
    check_keys(jg, {"kind", "site", "points", "patch_vertices", "notes"}, "landmark group");
    if (!jg.contains("kind") || !jg["kind"].is_string()) throw ValidationError("landmark group needs a 'kind' string");
    LandmarkGroup g;
    g.key.kind = kind_from_name(jg["kind"].get<std::string>());
    g.key.site = jg.contains("site") ? site_from_name(jg["site"].get<std::string>()) : Site::None;
    const std::string where = "group " + group_name(g.key);
    if (jg.contains("points")) {
      if (!jg["points"].is_array()) throw ValidationError(where + ": 'points' must be an array");
      for (const auto& p : jg["points"]) g.points.push_back(parse_point(p, where));
    }
    if (jg.contains("patch_vertices")) {
      if (!jg["patch_vertices"].is_array()) throw ValidationError(where + ": 'patch_vertices' must be an array");
      std::set<Index> ids;
      for (const auto& v : jg["patch_vertices"]) {
        if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > std::numeric_limits<Index>::max()) {
          throw ValidationError(where + ": patch vertex ids must be non-negative integers");
        }
        ids.insert(static_cast<Index>(v.get<long long>()));
      }
      g.patch_vertices = VertexSet(ids.begin(), ids.end());
    }
    if (jg.contains("notes")) {
      if (!jg["notes"].is_array()) throw ValidationError(where + ": 'notes' must be an array");
      for (const auto& n : jg["notes"]) {
        if (!n.is_string()) throw ValidationError(where + ": notes must be strings");
        g.notes.push_back(n.get<std::string>());
      }
    }
    set.groups.push_back(std::move(g));
  }
  if (j.contains("failures")) {
    if (!j["failures"].is_array()) throw ValidationError("'failures' must be an array");
    for (const auto& jf : j["failures"]) {
      check_keys(jf, {"detector", "message"}, "failure entry");
      set.failures.push_back({jf.value("detector", std::string()), jf.value("message", std::string())});
    }
  }
  set.validate_unique();
  set.sort_groups();
  return set;
}

/// Two-space indented, newline terminated; identical sets give identical bytes.
inline std::string landmarks_to_string(const LandmarkSet& set) { return landmarks_to_json(set).dump(2) + "\n"; }

inline LandmarkSet landmarks_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid landmark JSON: ") + e.what(), e.byte);
  }
  return landmarks_from_json(j);
}

inline void save_landmarks(const LandmarkSet& set, const std::filesystem::path& path) {
  io_detail::write_file(path, landmarks_to_string(set));
}

inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
  try {
    return landmarks_from_string(io_detail::read_file(path));
  } catch (ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

/// Annotation checks: every declared group is non-empty, and patch vertex ids
/// (when present) are valid for a mesh with `vertex_count` vertices.
inline void validate_annotations(const LandmarkSet& ann, std::size_t vertex_count) {
  for (const auto& g : ann.groups) {
    const bool has_patch = g.patch_vertices && !g.patch_vertices->empty();
    if (g.points.empty() && !has_patch) throw ValidationError("annotation group " + group_name(g.key) + " is empty");
    if (g.patch_vertices) {
      for (Index v : *g.patch_vertices) {
        if (static_cast<std::size_t>(v) >= vertex_count) {
          throw ValidationError("annotation group " + group_name(g.key) + " references vertex " + std::to_string(v) +
                                " of a mesh with " + std::to_string(vertex_count) + " vertices");
        }
      }
    }
  }
}

} // namespace sld
