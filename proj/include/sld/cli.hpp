#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sld/error.hpp"
#include "sld/evaluation.hpp"
#include "sld/landmark_io.hpp"
#include "sld/mesh_io.hpp"
#include "sld/pipeline.hpp"
#include "sld/synth.hpp"

namespace sld::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 2;

struct GlobalOptions {
  std::string config;
  std::string out;
  int jobs = -1;
  bool dry_run = false;
  bool strict = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string frame_hint;
  bool fix_winding = false;
  std::string sd_mode;
  bool export_parts = false;
};

namespace detail {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

inline PipelineConfig effective_config(const GlobalOptions& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (!g.frame_hint.empty()) c.preprocess.frame_hint = g.frame_hint;
  if (g.fix_winding) c.preprocess.fix_winding = true;
  if (!g.sd_mode.empty()) c.evaluate.sd_mode = sd_mode_from_name(g.sd_mode);
  if (g.strict) c.evaluate.strict = true;
  if (g.jobs >= 0) c.jobs = g.jobs;
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  return c;
}

inline fs::path require_out(const PipelineConfig& c) {
  if (!c.out) throw ParameterError("an output directory is required (--out or config 'out')");
  return *c.out;
}

/// Output stems: the input file stem, suffixed with the input position when
/// two inputs share a stem.
inline std::vector<std::string> output_stems(const std::vector<fs::path>& inputs) {
  std::map<std::string, int> count;
  for (const auto& p : inputs) ++count[p.stem().string()];
  std::vector<std::string> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string s = inputs[i].stem().string();
    out.push_back(count[s] > 1 ? s + "-" + std::to_string(i + 1) : s);
  }
  return out;
}

inline int worker_count(int jobs, std::size_t tasks) {
  int n = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, static_cast<int>(tasks)));
}

/// Runs fn(i) for i in [0, n) on `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct MeshEntry {
  std::string input;
  std::string mesh_id;
  MeshRun run;
  std::vector<std::string> outputs;
  std::size_t input_vertices = 0;
};

inline void write_parts(const TriMesh& mesh, const Segmentation& seg, const fs::path& dir, const std::string& stem,
                        std::vector<std::string>& outputs) {
  const auto parts = label_parts(mesh, seg);
  for (SegmentLabel l : kAllLabels) {
    const fs::path p = dir / (stem + "." + std::string(label_name(l)) + ".obj");
    const TriMesh& part = parts[static_cast<std::size_t>(to_int(l))];
    if (part.face_count() == 0) {
      io_detail::write_file(p, "# no faces carry this label\n");
    } else {
      save_mesh(part, p, MeshFormat::Obj);
    }
    outputs.push_back(p.filename().string());
  }
}

inline ordered_json manifest_entry(const MeshEntry& e) {
  ordered_json j;
  j["input"] = e.input;
  j["mesh_id"] = e.mesh_id;
  j["outcome"] = e.run.ok ? "ok" : "failed";
  if (!e.run.ok) {
    j["failed_stage"] = e.run.failed_stage;
    j["error"] = e.run.error;
  }
  ordered_json stages = ordered_json::array();
  for (const auto& s : e.run.stages) stages.push_back({{"name", s.name}, {"outcome", s.ok ? "ok" : "failed"}, {"ms", s.ms}});
  j["stages"] = stages;
  if (e.input_vertices > 0) j["input_vertices"] = e.input_vertices;
  if (e.run.ok) {
    j["vertices"] = e.run.mesh.vertex_count();
    j["target_edge_mm"] = e.run.target_edge_mm;
  }
  if (e.run.landmarks) {
    j["groups"] = e.run.landmarks->groups.size();
    ordered_json f = ordered_json::array();
    for (const auto& d : e.run.landmarks->failures) f.push_back({{"detector", d.detector}, {"message", d.message}});
    j["detector_failures"] = f;
  }
  j["outputs"] = e.outputs;
  return j;
}

/// Shared driver of `detect` and `segment`.
inline int run_batch(const GlobalOptions& g, std::vector<std::string> positional, StopAfter stop, std::ostream& out) {
  const PipelineConfig cfg = effective_config(g);
  std::vector<fs::path> inputs = cfg.inputs;
  for (const auto& p : positional) inputs.emplace_back(p);
  if (inputs.empty()) throw ParameterError("no input meshes given");
  const fs::path dir = require_out(cfg);
  fs::create_directories(dir);
  const auto stems = output_stems(inputs);
  std::vector<MeshEntry> entries(inputs.size());
  const int workers = worker_count(cfg.jobs, inputs.size());
  parallel_for(inputs.size(), workers, [&](std::size_t i) {
    MeshEntry& e = entries[i];
    e.input = inputs[i].string();
    e.mesh_id = inputs[i].filename().string();
    e.run.mesh_id = e.mesh_id;
    const auto t0 = std::chrono::steady_clock::now();
    TriMesh input;
    bool loaded = true;
    std::string error;
    try {
      input = load_mesh(inputs[i]);
      e.input_vertices = input.vertex_count();
    } catch (const std::exception& ex) {
      loaded = false;
      error = ex.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    Logger::instance().stage(e.mesh_id, "load", ms, loaded, error);
    if (!loaded) {
      e.run.stages.push_back({"load", false, ms});
      e.run.failed_stage = "load";
      e.run.error = error;
      return;
    }
    if (g.dry_run) {
      e.run.stages.push_back({"load", true, ms});
      e.run.ok = true;
      e.run.mesh = input;
      return;
    }
    std::vector<StageRecord> load_stage{{"load", true, ms}};
    e.run = run_mesh(input, e.mesh_id, cfg, stop);
    e.run.stages.insert(e.run.stages.begin(), load_stage.begin(), load_stage.end());
    if (!e.run.ok) return;
    const auto tw = std::chrono::steady_clock::now();
    try {
      const fs::path ply = dir / (stems[i] + ".labels.ply");
      save_mesh(e.run.mesh, ply, MeshFormat::PlyBinary);
      e.outputs.push_back(ply.filename().string());
      if (e.run.landmarks) {
        const fs::path lm = dir / (stems[i] + ".landmarks.json");
        save_landmarks(*e.run.landmarks, lm);
        e.outputs.push_back(lm.filename().string());
      }
      if (g.export_parts) write_parts(e.run.mesh, e.run.seg->segmentation, dir, stems[i], e.outputs);
      e.run.stages.push_back({"write", true, 0.0});
    } catch (const std::exception& ex) {
      e.run.ok = false;
      e.run.failed_stage = "write";
      e.run.error = ex.what();
      e.run.stages.push_back({"write", false, 0.0});
    }
    e.run.stages.back().ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tw).count();
    Logger::instance().stage(e.mesh_id, "write", e.run.stages.back().ms, e.run.ok, e.run.error);
  });

  ordered_json manifest;
  manifest["tool"] = "sld";
  manifest["version"] = std::string(kToolVersion);
  manifest["command"] = stop == StopAfter::Segment ? "segment" : "detect";
  manifest["config_hash"] = config_hash(cfg);
  manifest["config"] = settings_to_json(cfg);
  manifest["dry_run"] = g.dry_run;
  manifest["jobs"] = workers;
  ordered_json meshes = ordered_json::array();
  std::size_t ok = 0;
  for (const auto& e : entries) {
    meshes.push_back(manifest_entry(e));
    if (e.run.ok) ++ok;
  }
  manifest["meshes"] = meshes;
  manifest["succeeded"] = ok;
  manifest["failed"] = entries.size() - ok;
  io_detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << ok << " of " << entries.size() << " meshes succeeded; manifest " << (dir / "manifest.json").string() << "\n";
  return ok > 0 ? kExitOk : kExitFailure;
}

inline std::optional<SpineRegion> lookup_region(const std::map<std::string, SpineRegion>& regions, const std::string& id) {
  if (auto it = regions.find(id); it != regions.end()) return it->second;
  const std::string stem = fs::path(id).stem().string();
  if (auto it = regions.find(stem); it != regions.end()) return it->second;
  return std::nullopt;
}

inline int run_evaluate(const GlobalOptions& g, const std::vector<std::string>& landmark_files,
                        const std::vector<std::string>& annotation_files, const std::vector<std::string>& mesh_files,
                        const std::string& region_file, std::ostream& out) {
  PipelineConfig cfg = effective_config(g);
  if (landmark_files.empty()) throw ParameterError("no landmark files given");
  if (landmark_files.size() != annotation_files.size()) {
    throw ParameterError("landmark and annotation file counts differ (" + std::to_string(landmark_files.size()) + " vs " +
                         std::to_string(annotation_files.size()) + ")");
  }
  if (!mesh_files.empty() && mesh_files.size() != landmark_files.size()) {
    throw ParameterError("mesh file count must match the landmark file count");
  }
  if (!region_file.empty()) {
    const auto j = nlohmann::json::parse(io_detail::read_file(region_file));
    if (!j.is_object()) throw ValidationError("region map must be a JSON object");
    for (const auto& [id, v] : j.items()) {
      if (!v.is_string()) throw ValidationError("region of '" + id + "' must be a string");
      cfg.regions[id] = region_from_name(v.get<std::string>());
    }
  }
  std::vector<TriMesh> meshes;
  for (const auto& m : mesh_files) meshes.push_back(load_mesh(m));
  std::vector<EvalCase> cases;
  std::vector<std::string> configs;
  for (std::size_t i = 0; i < landmark_files.size(); ++i) {
    EvalCase c;
    c.detected = load_landmarks(landmark_files[i]);
    c.annotations = load_landmarks(annotation_files[i]);
    c.name = c.detected.mesh_id.empty() ? fs::path(landmark_files[i]).filename().string() : c.detected.mesh_id;
    c.mesh = meshes.empty() ? nullptr : &meshes[i];
    c.region = lookup_region(cfg.regions, c.name);
    if (!c.detected.config_json.empty() &&
        std::find(configs.begin(), configs.end(), c.detected.config_json) == configs.end()) {
      configs.push_back(c.detected.config_json);
    }
    cases.push_back(std::move(c));
  }
  const EvalReport report = compute_metrics(cases, cfg.evaluate);
  for (const auto& w : report.warnings) Logger::instance().log(LogLevel::Warn, {{"stage", "evaluate"}, {"warning", w}});
  const fs::path dir = require_out(cfg);
  if (g.dry_run) {
    out << "dry run: " << report.rows.size() << " report rows computed, nothing written\n";
    return kExitOk;
  }
  fs::create_directories(dir);
  io_detail::write_file(dir / "report.csv", render_report(report, ReportFormat::Csv));
  io_detail::write_file(dir / "report.md", render_report(report, ReportFormat::Markdown));
  ordered_json j;
  j["sd_mode"] = std::string(sd_mode_name(report.sd_mode));
  j["rows"] = ordered_json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"category", r.category},
                         {"n", r.stats.n},
                         {"mae_mm", r.stats.mae},
                         {"sd_mm", r.stats.sd},
                         {"min_mm", r.stats.min},
                         {"max_mm", r.stats.max},
                         {"rmse_mm", r.stats.rmse}});
  }
  j["warnings"] = report.warnings;
  j["detection_configs"] = ordered_json::array();
  for (const auto& c : configs) j["detection_configs"].push_back(ordered_json::parse(c));
  io_detail::write_file(dir / "report.json", j.dump(2) + "\n");
  out << render_report(report, ReportFormat::Markdown);
  return kExitOk;
}

struct SynthFlags {
  std::string name = "vertebra";
  double noise = 0.0;
  double grid = 0.0;
  double tilt = -1.0;
  double pitch = 1e9;
  bool asymmetric = false;
  bool random = false;
  bool no_spinous = false, no_tl = false, no_tr = false;
  bool no_sl = false, no_sr = false, no_il = false, no_ir = false;
};

inline int run_synth(const GlobalOptions& g, const SynthFlags& f, std::ostream& out) {
  if (g.out.empty()) throw ParameterError("synth needs --out");
  SynthParams p = f.random ? random_synth_params(g.seed) : SynthParams{};
  if (g.seed_set) p.seed = g.seed;
  if (f.noise > 0.0) p.noise = f.noise;
  if (f.grid > 0.0) p.grid_spacing = f.grid;
  if (f.tilt >= 0.0) p.endplate_tilt_deg = f.tilt;
  if (f.pitch < 1e8) p.spinous_pitch_deg = f.pitch;
  if (f.asymmetric) p.symmetric = false;
  p.spinous = !f.no_spinous;
  p.transverse_left = !f.no_tl;
  p.transverse_right = !f.no_tr;
  p.articular_sup_left = !f.no_sl;
  p.articular_sup_right = !f.no_sr;
  p.articular_inf_left = !f.no_il;
  p.articular_inf_right = !f.no_ir;
  auto [mesh, truth] = make_synthetic_vertebra(p);
  if (g.dry_run) {
    out << "dry run: " << mesh.vertex_count() << " vertices, nothing written\n";
    return kExitOk;
  }
  const fs::path dir = g.out;
  fs::create_directories(dir);
  const std::string mesh_file = f.name + ".ply";
  truth.landmarks.mesh_id = mesh_file;
  truth.annotations.mesh_id = mesh_file;
  save_mesh(mesh.with_labels(truth.labels.as_ints()), dir / mesh_file, MeshFormat::PlyBinary);
  save_landmarks(truth.landmarks, dir / (f.name + ".landmarks.json"));
  save_landmarks(truth.annotations, dir / (f.name + ".annotations.json"));
  out << "wrote " << (dir / mesh_file).string() << " (" << mesh.vertex_count() << " vertices, "
      << truth.landmarks.groups.size() << " landmark groups)\n";
  return kExitOk;
}

} // namespace detail

/// Entry point; `args` excludes the program name. Returns the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Spinal ligament landmark detection on vertebra surface meshes", "sld"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--jobs", g.jobs, "worker threads (0: logical cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--dry-run", g.dry_run, "validate inputs and write only the manifest");
  app.add_flag("--strict", g.strict, "unmatched landmark groups are errors");
  auto* seed = app.add_option("--seed", g.seed, "random seed (synth)");
  app.add_option("--frame-hint", g.frame_hint, "LPS, RAS or 'sx,sy,sz,ax,ay,az'");
  app.add_flag("--fix-winding", g.fix_winding, "re-orient faces consistently outward before processing");
  app.add_option("--sd-mode", g.sd_mode, "population or sample")->check(CLI::IsMember({"population", "sample"}));
  app.add_flag("--export-parts", g.export_parts, "also write one OBJ per segment label");
  app.set_version_flag("--version", std::string(kToolVersion));

  std::vector<std::string> detect_inputs, segment_inputs;
  auto* detect = app.add_subcommand("detect", "preprocess, segment and detect landmarks");
  detect->add_option("inputs", detect_inputs, "mesh files (STL, OBJ, PLY)");
  auto* segment_cmd = app.add_subcommand("segment", "preprocess and segment");
  segment_cmd->add_option("inputs", segment_inputs, "mesh files (STL, OBJ, PLY)");

  std::vector<std::string> lm_files, ann_files, mesh_files;
  std::string region_file;
  auto* evaluate = app.add_subcommand("evaluate", "compare landmark files with annotations");
  evaluate->add_option("--landmarks", lm_files, "detected landmark files")->required();
  evaluate->add_option("--annotations", ann_files, "annotation files, paired by position")->required();
  evaluate->add_option("--meshes", mesh_files, "meshes the annotation patches refer to");
  evaluate->add_option("--regions", region_file, "JSON map from mesh id to spine region")->check(CLI::ExistingFile);

  detail::SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "generate a synthetic vertebra with truth files");
  synth->add_option("--name", sf.name, "output file stem");
  synth->add_option("--noise", sf.noise, "vertex noise amplitude, mm");
  synth->add_option("--grid", sf.grid, "polygonization grid spacing, mm");
  synth->add_option("--tilt", sf.tilt, "endplate tilt, degrees");
  synth->add_option("--pitch", sf.pitch, "spinous pitch, degrees");
  synth->add_flag("--asymmetric", sf.asymmetric, "allow different left/right transverse lengths");
  synth->add_flag("--random", sf.random, "randomized proportions drawn from --seed");
  synth->add_flag("--no-spinous", sf.no_spinous, "omit the spinous process");
  synth->add_flag("--no-transverse-left", sf.no_tl, "omit the left transverse process");
  synth->add_flag("--no-transverse-right", sf.no_tr, "omit the right transverse process");
  synth->add_flag("--no-articular-sup-left", sf.no_sl, "omit the superior left articular process");
  synth->add_flag("--no-articular-sup-right", sf.no_sr, "omit the superior right articular process");
  synth->add_flag("--no-articular-inf-left", sf.no_il, "omit the inferior left articular process");
  synth->add_flag("--no-articular-inf-right", sf.no_ir, "omit the inferior right articular process");

  std::vector<std::string> argv_store{"sld"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  }
  g.seed_set = seed->count() > 0;
  try {
    if (detect->parsed()) return detail::run_batch(g, detect_inputs, StopAfter::Detect, out);
    if (segment_cmd->parsed()) return detail::run_batch(g, segment_inputs, StopAfter::Segment, out);
    if (evaluate->parsed()) return detail::run_evaluate(g, lm_files, ann_files, mesh_files, region_file, out);
    if (synth->parsed()) return detail::run_synth(g, sf, out);
  } catch (const std::exception& e) {
    err << "sld: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

} // namespace sld::cli
