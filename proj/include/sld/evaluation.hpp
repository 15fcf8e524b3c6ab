#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sld/error.hpp"
#include "sld/geometry.hpp"
#include "sld/landmark_io.hpp"
#include "sld/mesh_io.hpp"
#include "sld/trimesh.hpp"
#include "sld/types.hpp"

namespace sld {

enum class SpineRegion : int { Cervical = 0, Thoracic, Lumbar };

inline constexpr std::array<SpineRegion, 3> kAllRegions{SpineRegion::Cervical, SpineRegion::Thoracic, SpineRegion::Lumbar};

inline std::string_view region_name(SpineRegion r) {
  static constexpr std::array<std::string_view, 3> names{"Cervical", "Thoracic", "Lumbar"};
  return names[static_cast<std::size_t>(r)];
}

/// Case-insensitive.
inline SpineRegion region_from_name(std::string_view s) {
  const std::string l = io_detail::lower(std::string(s));
  for (SpineRegion r : kAllRegions) {
    if (io_detail::lower(std::string(region_name(r))) == l) return r;
  }
  throw ValidationError("unknown spine region '" + std::string(s) + "' (expected cervical, thoracic or lumbar)");
}

enum class SdMode { Population, Sample };

inline SdMode sd_mode_from_name(std::string_view s) {
  if (s == "population") return SdMode::Population;
  if (s == "sample") return SdMode::Sample;
  throw ParameterError("sd mode must be 'population' or 'sample', got '" + std::string(s) + "'");
}

inline std::string_view sd_mode_name(SdMode m) { return m == SdMode::Population ? "population" : "sample"; }

/// Distance from `y` to the nearest annotated point.
inline double closest_point_error(const Vec3& y, std::span<const Vec3> annotation) {
  if (annotation.empty()) throw ValidationError("annotation point list is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& a : annotation) best = std::min(best, (y - a).squaredNorm());
  return std::sqrt(best);
}

/// Distance from `y` to the surface patch formed by the faces of `mesh` whose
/// three vertices all belong to `patch`.
inline double closest_point_error(const Vec3& y, const TriMesh& mesh, const VertexSet& patch) {
  if (patch.empty()) throw ValidationError("annotation patch is empty");
  for (Index v : patch) {
    if (v < 0 || static_cast<std::size_t>(v) >= mesh.vertex_count()) {
      throw ValidationError("annotation patch vertex " + std::to_string(v) + " is not a mesh vertex");
    }
  }
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const Face& f : mesh.faces()) {
    if (!std::binary_search(patch.begin(), patch.end(), f[0]) || !std::binary_search(patch.begin(), patch.end(), f[1]) ||
        !std::binary_search(patch.begin(), patch.end(), f[2])) {
      continue;
    }
    any = true;
    const Vec3 c = closest_point_on_triangle(y, mesh.vertex(f[0]), mesh.vertex(f[1]), mesh.vertex(f[2]));
    best = std::min(best, (y - c).squaredNorm());
  }
  if (!any) throw ValidationError("annotation patch contains no complete face");
  return std::sqrt(best);
}

/// Patch annotations take precedence over point lists; a patch needs `mesh`.
inline double closest_point_error(const Vec3& y, const LandmarkGroup& annotation, const TriMesh* mesh) {
  if (annotation.patch_vertices && !annotation.patch_vertices->empty()) {
    if (mesh == nullptr) {
      throw ValidationError("annotation group " + group_name(annotation.key) + " is a surface patch but no mesh was given");
    }
    return closest_point_error(y, *mesh, *annotation.patch_vertices);
  }
  if (annotation.points.empty()) throw ValidationError("annotation group " + group_name(annotation.key) + " is empty");
  return closest_point_error(y, annotation.points);
}

struct ErrorStats {
  std::size_t n = 0;
  double mae = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  double rmse = 0.0;
};

/// MAE, SD (population or sample), range and RMSE of absolute errors. The
/// result does not depend on the order of `errors`. A sample SD of a single
/// error is reported as 0.
inline ErrorStats summarize_errors(std::span<const double> errors, SdMode mode = SdMode::Population) {
  if (errors.empty()) throw ValidationError("no errors to summarize");
  std::vector<double> e(errors.begin(), errors.end());
  for (double& v : e) {
    if (!std::isfinite(v)) throw ValidationError("non-finite landmark error");
    v = std::abs(v);
  }
  std::sort(e.begin(), e.end());
  ErrorStats s;
  s.n = e.size();
  s.min = e.front();
  s.max = e.back();
  long double sum = 0.0L;
  for (double v : e) sum += v;
  const long double n = static_cast<long double>(e.size());
  s.mae = std::clamp(static_cast<double>(sum / n), s.min, s.max);
  long double ss = 0.0L;
  for (double v : e) ss += (static_cast<long double>(v) - s.mae) * (static_cast<long double>(v) - s.mae);
  const double var_pop = static_cast<double>(ss / n);
  // mean(e^2) = MAE^2 + population variance
  s.rmse = std::hypot(s.mae, std::sqrt(var_pop));
  if (mode == SdMode::Population) {
    s.sd = std::sqrt(var_pop);
  } else {
    s.sd = e.size() > 1 ? static_cast<double>(std::sqrt(ss / (n - 1.0L))) : 0.0;
  }
  return s;
}

/// One mesh: its detection, its annotations and optional region metadata.
/// `mesh` is needed only when annotations use surface patches.
struct EvalCase {
  std::string name;
  const TriMesh* mesh = nullptr;
  LandmarkSet detected;
  LandmarkSet annotations;
  std::optional<SpineRegion> region;
};

struct EvalOptions {
  SdMode sd_mode = SdMode::Population;
  bool strict = false; // unmatched detected groups become errors
};

struct LandmarkError {
  std::string case_name;
  GroupKey key;
  std::size_t index = 0;
  double error = 0.0;
};

struct EvalRow {
  std::string category;
  ErrorStats stats;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<LandmarkError> errors;
  std::vector<std::string> warnings;
  SdMode sd_mode = SdMode::Population;

  const EvalRow* find(std::string_view category) const {
    for (const auto& r : rows) {
      if (r.category == category) return &r;
    }
    return nullptr;
  }
};

/// Ligament kinds in report row order.
inline constexpr std::array<LigamentKind, 7> kReportKinds{LigamentKind::ALL, LigamentKind::PLL, LigamentKind::CL,
                                                          LigamentKind::ISL, LigamentKind::LF,  LigamentKind::ITL,
                                                          LigamentKind::SSL};

/// All report categories in row order: Overall, the three regions, the seven kinds.
inline std::vector<std::string> report_categories() {
  std::vector<std::string> out{"Overall"};
  for (SpineRegion r : kAllRegions) out.emplace_back(region_name(r));
  for (LigamentKind k : kReportKinds) out.emplace_back(kind_name(k));
  return out;
}

/// Matches every detected landmark to the annotation of its own (kind, site)
/// group and aggregates the errors per category. Categories without matched
/// landmarks are not emitted.
inline EvalReport compute_metrics(std::span<const EvalCase> cases, const EvalOptions& opt = {}) {
  EvalReport report;
  report.sd_mode = opt.sd_mode;
  std::vector<double> overall;
  std::array<std::vector<double>, 3> by_region;
  std::array<std::vector<double>, 7> by_kind;
  for (const auto& c : cases) {
    if (c.mesh != nullptr) validate_annotations(c.annotations, c.mesh->vertex_count());
    LandmarkSet det = c.detected;
    det.sort_groups();
    for (const auto& g : det.groups) {
      const LandmarkGroup* ann = c.annotations.find(g.key);
      if (ann == nullptr) {
        const std::string msg = c.name + ": detected group " + group_name(g.key) + " has no annotation";
        if (opt.strict) throw ValidationError(msg);
        report.warnings.push_back(msg + "; excluded");
        continue;
      }
      for (std::size_t i = 0; i < g.points.size(); ++i) {
        const double e = closest_point_error(g.points[i], *ann, c.mesh);
        report.errors.push_back({c.name, g.key, i, e});
        overall.push_back(e);
        if (c.region) by_region[static_cast<std::size_t>(*c.region)].push_back(e);
        by_kind[static_cast<std::size_t>(g.key.kind)].push_back(e);
      }
    }
    for (const auto& a : c.annotations.groups) {
      if (det.find(a.key) == nullptr) {
        report.warnings.push_back(c.name + ": annotated group " + group_name(a.key) + " was not detected");
      }
    }
  }
  if (overall.empty()) throw ValidationError("no detected landmark could be matched to an annotation");
  report.rows.push_back({"Overall", summarize_errors(overall, opt.sd_mode)});
  for (SpineRegion r : kAllRegions) {
    const auto& v = by_region[static_cast<std::size_t>(r)];
    if (!v.empty()) report.rows.push_back({std::string(region_name(r)), summarize_errors(v, opt.sd_mode)});
  }
  for (LigamentKind k : kReportKinds) {
    const auto& v = by_kind[static_cast<std::size_t>(k)];
    if (!v.empty()) report.rows.push_back({std::string(kind_name(k)), summarize_errors(v, opt.sd_mode)});
  }
  return report;
}

enum class ReportFormat { Csv, Markdown };

namespace eval_detail {

inline std::string fixed1(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << v;
  return os.str();
}

} // namespace eval_detail

/// CSV (shortest round-trip decimals) or a markdown table with one decimal.
/// Rows keep the report order.
inline std::string render_report(const EvalReport& report, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::Csv) {
    out += "category,n,mae_mm,sd_mm,min_mm,max_mm,rmse_mm\n";
    for (const auto& r : report.rows) {
      const auto& s = r.stats;
      out += r.category + "," + std::to_string(s.n) + "," + io_detail::format_double(s.mae) + "," + io_detail::format_double(s.sd) + "," +
             io_detail::format_double(s.min) + "," + io_detail::format_double(s.max) + "," + io_detail::format_double(s.rmse) + "\n";
    }
    return out;
  }
  using eval_detail::fixed1;
  out += "| Category | MAE ± SD | Error range | RMSE |\n";
  out += "|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    const auto& s = r.stats;
    out += "| " + r.category + " | " + fixed1(s.mae) + " ± " + fixed1(s.sd) + " | " + fixed1(s.min) + " – " + fixed1(s.max) +
           " | " + fixed1(s.rmse) + " |\n";
  }
  return out;
}

/// Reads the CSV produced by render_report back into rows.
inline std::vector<EvalRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "category,n,mae_mm,sd_mm,min_mm,max_mm,rmse_mm") {
    throw ValidationError("report CSV header mismatch");
  }
  std::vector<EvalRow> rows;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 7) throw FormatError("report CSV row needs 7 cells", offset);
    EvalRow r;
    r.category = cells[0];
    r.stats.n = static_cast<std::size_t>(io_detail::parse_int(cells[1], offset));
    r.stats.mae = io_detail::parse_double(cells[2], offset);
    r.stats.sd = io_detail::parse_double(cells[3], offset);
    r.stats.min = io_detail::parse_double(cells[4], offset);
    r.stats.max = io_detail::parse_double(cells[5], offset);
    r.stats.rmse = io_detail::parse_double(cells[6], offset);
    rows.push_back(std::move(r));
    offset += line.size() + 1;
  }
  return rows;
}

} // namespace sld
