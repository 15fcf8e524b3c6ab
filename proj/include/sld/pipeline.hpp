#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sld/error.hpp"
#include "sld/evaluation.hpp"
#include "sld/landmarks.hpp"
#include "sld/mesh_io.hpp"
#include "sld/preprocess.hpp"
#include "sld/remesh.hpp"
#include "sld/segmentation.hpp"
#include "sld/types.hpp"

namespace sld {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct PreprocessConfig {
  bool remesh = true;
  std::optional<double> target_edge_mm; // unset: clamp(extent_L / 40, 0.5, 2)
  SmoothMethod smooth_method = SmoothMethod::Taubin;
  int smooth_iterations = 10;
  double smooth_lambda = 0.5;
  std::string frame_hint = "LPS";
  bool fix_winding = false;

  void validate() const {
    if (target_edge_mm && !(*target_edge_mm >= 1e-3 && std::isfinite(*target_edge_mm))) {
      throw ParameterError("remesh.target_edge_mm must be at least 1e-3");
    }
    if (smooth_iterations < 0) throw ParameterError("smooth.iterations must be non-negative");
    if (!(smooth_lambda > 0.0 && smooth_lambda <= 1.0)) throw ParameterError("smooth.lambda must be in (0, 1]");
    (void)FrameHint::parse(frame_hint);
  }
};

/// Everything a run depends on. Only `preprocess`, `segment`, `detect`,
/// `evaluate` and `regions` are settings; paths and the worker count are not.
struct PipelineConfig {
  PreprocessConfig preprocess;
  SegmentationConfig segment;
  DetectionConfig detect;
  EvalOptions evaluate;
  std::map<std::string, SpineRegion> regions; // mesh id -> region
  std::vector<std::filesystem::path> inputs;
  std::optional<std::filesystem::path> out;
  int jobs = 0; // 0: logical core count

  void validate() const {
    preprocess.validate();
    segment.validate();
    detect.validate();
    if (jobs < 0) throw ParameterError("jobs must be non-negative");
  }
};

namespace cfg_detail {

using nlohmann::json;

inline std::string smooth_method_name(SmoothMethod m) { return m == SmoothMethod::Taubin ? "taubin" : "laplacian"; }

inline SmoothMethod smooth_method_from_name(const std::string& s) {
  if (s == "taubin") return SmoothMethod::Taubin;
  if (s == "laplacian") return SmoothMethod::Laplacian;
  throw ValidationError("smooth.method must be 'taubin' or 'laplacian', got '" + s + "'");
}

/// Reads members of one config object, rejecting keys nobody asked for.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.emplace_back(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ValidationError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ValidationError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ValidationError("config key '" + path_ + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.emplace_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string prefix(const char* key) const { return path_ + key + "."; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ValidationError("unknown config key '" + path_ + key + "'");
      }
    }
  }

private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

} // namespace cfg_detail

/// The settings part of the configuration as JSON, in a fixed key order.
inline nlohmann::json settings_to_json(const PipelineConfig& c) {
  using nlohmann::json;
  json j;
  j["remesh"] = {{"enabled", c.preprocess.remesh},
                 {"target_edge_mm", c.preprocess.target_edge_mm ? json(*c.preprocess.target_edge_mm) : json(nullptr)}};
  j["smooth"] = {{"method", cfg_detail::smooth_method_name(c.preprocess.smooth_method)},
                 {"iterations", c.preprocess.smooth_iterations},
                 {"lambda", c.preprocess.smooth_lambda}};
  j["frame"] = {{"hint", c.preprocess.frame_hint}, {"fix_winding", c.preprocess.fix_winding}};
  const SegmentationConfig& s = c.segment;
  j["segment"] = {{"stations", s.stations},
                  {"isthmus_depth", s.isthmus_depth},
                  {"skeleton_bins", s.skeleton_bins},
                  {"capture_scale", s.capture_scale},
                  {"spinous_cutoff", s.spinous_cutoff},
                  {"band_inner", s.band_inner},
                  {"band_outer", s.band_outer},
                  {"cluster_fraction", s.cluster_fraction},
                  {"neck_ratio", s.neck_ratio},
                  {"refit_rounds", s.refit_rounds},
                  {"min_protrusion_spinous", s.min_protrusion_spinous},
                  {"min_protrusion_transverse", s.min_protrusion_transverse},
                  {"min_protrusion_articular", s.min_protrusion_articular}};
  j["detect"] = detection_config_to_json(c.detect);
  j["evaluate"] = {{"sd_mode", std::string(sd_mode_name(c.evaluate.sd_mode))}, {"strict", c.evaluate.strict}};
  json regions = json::object();
  for (const auto& [id, r] : c.regions) regions[id] = io_detail::lower(std::string(region_name(r)));
  j["regions"] = regions;
  return j;
}

/// Parses a configuration object. Missing keys keep their defaults; unknown
/// keys and mistyped values are errors. Relative input paths are resolved
/// against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using cfg_detail::Section;
  PipelineConfig c;
  Section root(j, "");
  if (const auto* r = root.child("remesh")) {
    Section s(*r, root.prefix("remesh"));
    s.get("enabled", c.preprocess.remesh);
    if (const auto* t = s.child("target_edge_mm"); t && !t->is_null()) {
      if (!t->is_number()) throw ValidationError("config key 'remesh.target_edge_mm' has the wrong type");
      c.preprocess.target_edge_mm = t->get<double>();
    }
    s.finish();
  }
  if (const auto* r = root.child("smooth")) {
    Section s(*r, root.prefix("smooth"));
    std::string method = cfg_detail::smooth_method_name(c.preprocess.smooth_method);
    s.get("method", method);
    c.preprocess.smooth_method = cfg_detail::smooth_method_from_name(method);
    s.get("iterations", c.preprocess.smooth_iterations);
    s.get("lambda", c.preprocess.smooth_lambda);
    s.finish();
  }
  if (const auto* r = root.child("frame")) {
    Section s(*r, root.prefix("frame"));
    s.get("hint", c.preprocess.frame_hint);
    s.get("fix_winding", c.preprocess.fix_winding);
    s.finish();
  }
  if (const auto* r = root.child("segment")) {
    Section s(*r, root.prefix("segment"));
    SegmentationConfig& g = c.segment;
    s.get("stations", g.stations);
    s.get("isthmus_depth", g.isthmus_depth);
    s.get("skeleton_bins", g.skeleton_bins);
    s.get("capture_scale", g.capture_scale);
    s.get("spinous_cutoff", g.spinous_cutoff);
    s.get("band_inner", g.band_inner);
    s.get("band_outer", g.band_outer);
    s.get("cluster_fraction", g.cluster_fraction);
    s.get("neck_ratio", g.neck_ratio);
    s.get("refit_rounds", g.refit_rounds);
    s.get("min_protrusion_spinous", g.min_protrusion_spinous);
    s.get("min_protrusion_transverse", g.min_protrusion_transverse);
    s.get("min_protrusion_articular", g.min_protrusion_articular);
    s.finish();
  }
  if (const auto* r = root.child("detect")) {
    Section s(*r, root.prefix("detect"));
    DetectionConfig& d = c.detect;
    s.get("theta_deg", d.theta_deg);
    s.get("n_all", d.counts.all);
    s.get("n_pll", d.counts.pll);
    s.get("n_isl", d.counts.isl);
    s.get("n_lf", d.counts.lf);
    s.get("edge_arc_fraction", d.edge_arc_fraction);
    s.get("width_all_mm", d.widths.all);
    s.get("width_pll_mm", d.widths.pll);
    s.get("coverage_fraction", d.coverage_fraction);
    s.get("isl_oversample", d.isl_oversample);
    s.finish();
  }
  if (const auto* r = root.child("evaluate")) {
    Section s(*r, root.prefix("evaluate"));
    std::string mode(sd_mode_name(c.evaluate.sd_mode));
    s.get("sd_mode", mode);
    try {
      c.evaluate.sd_mode = sd_mode_from_name(mode);
    } catch (const ParameterError& e) {
      throw ValidationError(std::string("evaluate.") + e.what());
    }
    s.get("strict", c.evaluate.strict);
    s.finish();
  }
  if (const auto* r = root.child("regions")) {
    if (!r->is_object()) throw ValidationError("config 'regions' must map mesh ids to regions");
    for (const auto& [id, v] : r->items()) {
      if (!v.is_string()) throw ValidationError("region of '" + id + "' must be a string");
      c.regions[id] = region_from_name(v.get<std::string>());
    }
  }
  if (const auto* r = root.child("inputs")) {
    if (!r->is_array()) throw ValidationError("config 'inputs' must be an array of paths");
    for (const auto& v : *r) {
      if (!v.is_string()) throw ValidationError("config 'inputs' must hold strings");
      std::filesystem::path p = v.get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw ValidationError("config input '" + p.string() + "' does not exist");
      c.inputs.push_back(p);
    }
  }
  if (const auto* r = root.child("out")) {
    if (!r->is_string()) throw ValidationError("config 'out' must be a path string");
    std::filesystem::path p = r->get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.out = p;
  }
  root.get("jobs", c.jobs);
  root.finish();
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ValidationError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  const std::string text = io_detail::read_file(path);
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j, path.parent_path());
}

/// 64-bit FNV-1a, lower-case hex.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const PipelineConfig& c) { return fnv1a_hex(settings_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Logging

enum class LogLevel : int { Off = 0, Error, Warn, Info, Debug };

/// Line-delimited JSON records on stderr. The level comes from SLD_LOG
/// (off, error, warn, info, debug; default info).
class Logger {
public:
  static Logger& instance() {
    static Logger log;
    return log;
  }

  static LogLevel parse_level(const char* s) {
    if (s == nullptr) return LogLevel::Info;
    const std::string v = io_detail::lower(s);
    if (v == "off" || v == "0" || v == "none") return LogLevel::Off;
    if (v == "error") return LogLevel::Error;
    if (v == "warn" || v == "warning") return LogLevel::Warn;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }

  LogLevel level() const { return level_; }
  void set_level(LogLevel l) { level_ = l; }
  void set_stream(std::ostream* os) { os_ = os; }

  void log(LogLevel l, nlohmann::ordered_json fields) {
    if (l == LogLevel::Off || static_cast<int>(l) > static_cast<int>(level_)) return;
    static constexpr std::array<const char*, 5> names{"off", "error", "warn", "info", "debug"};
    nlohmann::ordered_json rec;
    rec["level"] = names[static_cast<std::size_t>(l)];
    for (auto& [k, v] : fields.items()) rec[k] = v;
    const std::string line = rec.dump() + "\n";
    std::lock_guard<std::mutex> lock(mu_);
    (*os_) << line << std::flush;
  }

  void stage(const std::string& mesh, const std::string& stage, double ms, bool ok, const std::string& error = {}) {
    nlohmann::ordered_json f{{"stage", stage}, {"mesh", mesh}, {"duration_ms", ms}, {"outcome", ok ? "ok" : "failed"}};
    if (!ok) f["error"] = error;
    log(ok ? LogLevel::Info : LogLevel::Error, std::move(f));
  }

private:
  Logger() : level_(parse_level(std::getenv("SLD_LOG"))) {}
  LogLevel level_;
  std::ostream* os_ = &std::cerr;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Per-mesh pipeline

struct StageRecord {
  std::string name;
  bool ok = true;
  double ms = 0.0;
};

enum class StopAfter { Preprocess, Segment, Detect };

struct MeshRun {
  std::string mesh_id;
  TriMesh mesh; // after preprocessing; the surface the labels and landmarks refer to
  VertebraFrame frame;
  std::optional<SegmentResult> seg;
  std::optional<LandmarkSet> landmarks;
  std::vector<StageRecord> stages;
  double target_edge_mm = 0.0; // effective remesh target, 0 if not remeshed
  bool ok = false;
  std::string failed_stage;
  std::string error;
};

struct Preprocessed {
  TriMesh mesh;
  VertebraFrame frame;
  double target_edge_mm = 0.0;
};

/// Winding fix, remeshing, smoothing and frame estimation.
inline Preprocessed preprocess_mesh(const TriMesh& input, const PreprocessConfig& c) {
  c.validate();
  const FrameHint hint = FrameHint::parse(c.frame_hint);
  Preprocessed out{c.fix_winding ? fix_winding(input) : input, {}, 0.0};
  if (c.remesh) {
    out.target_edge_mm = c.target_edge_mm ? *c.target_edge_mm
                                          : default_target_edge_length(dimensions(out.mesh, estimate_frame(out.mesh, hint)).extent_l);
    out.mesh = remesh(out.mesh, out.target_edge_mm);
  }
  if (c.smooth_iterations > 0) out.mesh = smooth(out.mesh, c.smooth_iterations, c.smooth_method, c.smooth_lambda);
  out.frame = estimate_frame(out.mesh, hint);
  return out;
}

/// The landmark provenance snapshot: settings plus their hash.
inline std::string config_snapshot(const PipelineConfig& c) {
  nlohmann::json j = settings_to_json(c);
  j["config_hash"] = config_hash(c);
  j["tool_version"] = std::string(kToolVersion);
  return j.dump();
}

/// Runs preprocess -> segment -> detect on one mesh. Errors are caught and
/// recorded with the failing stage (the innermost named sub-stage when the
/// error carries one); nothing is thrown.
inline MeshRun run_mesh(const TriMesh& input, const std::string& mesh_id, const PipelineConfig& cfg,
                        StopAfter stop = StopAfter::Detect) {
  MeshRun run;
  run.mesh_id = mesh_id;
  auto timed = [&](const char* name, auto&& fn) -> bool {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    bool ok = true;
    try {
      fn();
    } catch (const Error& e) {
      ok = false;
      error = e.what();
      run.failed_stage = e.stage().empty() ? name : e.stage();
    } catch (const std::exception& e) {
      ok = false;
      error = e.what();
      run.failed_stage = name;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    run.stages.push_back({name, ok, ms});
    Logger::instance().stage(mesh_id, name, ms, ok, error);
    if (!ok) run.error = error;
    return ok;
  };
  if (!timed("preprocess", [&] {
        Preprocessed p = preprocess_mesh(input, cfg.preprocess);
        run.mesh = std::move(p.mesh);
        run.frame = p.frame;
        run.target_edge_mm = p.target_edge_mm;
      })) {
    return run;
  }
  if (stop == StopAfter::Preprocess) {
    run.ok = true;
    return run;
  }
  if (!timed("segment", [&] { run.seg = segment(run.mesh, run.frame, cfg.segment); })) return run;
  run.mesh = run.mesh.with_labels(run.seg->segmentation.as_ints());
  if (stop == StopAfter::Segment) {
    run.ok = true;
    return run;
  }
  if (!timed("detect", [&] {
        LandmarkSet set = detect_all_landmarks(run.mesh, run.seg->frame, run.seg->segmentation, run.seg->curves, cfg.detect);
        set.mesh_id = mesh_id;
        set.config_json = config_snapshot(cfg);
        run.landmarks = std::move(set);
      })) {
    return run;
  }
  run.ok = true;
  return run;
}

/// Splits a labelled mesh into one sub-mesh per label. A face goes to the
/// label shared by at least two of its corners, else to its first corner's.
/// Vertices are renumbered in original order; unused ones are dropped.
inline std::array<TriMesh, kLabelCount> label_parts(const TriMesh& mesh, const Segmentation& seg) {
  seg.require_matches(mesh);
  std::array<std::vector<Face>, kLabelCount> faces;
  for (const Face& f : mesh.faces()) {
    const int a = to_int(seg.labels[static_cast<std::size_t>(f[0])]);
    const int b = to_int(seg.labels[static_cast<std::size_t>(f[1])]);
    const int c = to_int(seg.labels[static_cast<std::size_t>(f[2])]);
    const int l = (b == c) ? b : a;
    faces[static_cast<std::size_t>(l)].push_back(f);
  }
  std::array<TriMesh, kLabelCount> out;
  for (std::size_t l = 0; l < faces.size(); ++l) {
    std::vector<Index> remap(mesh.vertex_count(), -1);
    for (const Face& f : faces[l]) {
      for (Index v : f) remap[static_cast<std::size_t>(v)] = 0;
    }
    std::vector<Vec3> verts;
    for (std::size_t v = 0; v < remap.size(); ++v) {
      if (remap[v] == 0) {
        remap[v] = static_cast<Index>(verts.size());
        verts.push_back(mesh.vertex(static_cast<Index>(v)));
      }
    }
    std::vector<Face> fs;
    fs.reserve(faces[l].size());
    for (const Face& f : faces[l]) {
      fs.push_back({remap[static_cast<std::size_t>(f[0])], remap[static_cast<std::size_t>(f[1])],
                    remap[static_cast<std::size_t>(f[2])]});
    }
    out[l] = TriMesh(std::move(verts), std::move(fs));
  }
  return out;
}

} // namespace sld
