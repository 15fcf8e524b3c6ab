#include <gtest/gtest.h>

#include <sstream>

#include <unistd.h>

#include "sld/cli.hpp"
#include "sld/primitives.hpp"

using namespace sld;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct QuietLog : ::testing::Environment {
  void SetUp() override { Logger::instance().set_level(LogLevel::Off); }
};
const auto* const kQuiet = ::testing::AddGlobalTestEnvironment(new QuietLog);

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("sld_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int sld_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  return cli::run(args, out, err);
}

std::vector<std::string> listing(const fs::path& d) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(d)) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

json read_json(const fs::path& p) { return json::parse(io_detail::read_file(p)); }

// One synthetic vertebra and its default detection, shared by the tests.
struct Fixture {
  fs::path root = fresh_dir("fixture");
  fs::path synth = root / "synth";
  fs::path detect = root / "detect";
  int synth_code = sld_run({"synth", "--out", synth.string()});
  int detect_code = sld_run({"detect", (synth / "vertebra.ply").string(), "--out", detect.string()});
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Skips remeshing and smoothing to keep batch tests fast.
fs::path fast_config(const fs::path& dir) {
  const fs::path p = dir / "fast.json";
  io_detail::write_file(p, R"({"remesh":{"enabled":false},"smooth":{"iterations":0}})");
  return p;
}

} // namespace

TEST(CliSynth, DefaultsWriteThreeFiles) {
  const Fixture& f = fixture();
  ASSERT_EQ(f.synth_code, 0);
  EXPECT_EQ(listing(f.synth),
            (std::vector<std::string>{"vertebra.annotations.json", "vertebra.landmarks.json", "vertebra.ply"}));
  const TriMesh m = load_mesh(f.synth / "vertebra.ply");
  ASSERT_TRUE(m.labels().has_value());
  std::set<int> labels(m.labels()->begin(), m.labels()->end());
  EXPECT_EQ(labels.size(), 9u);
  EXPECT_EQ(load_landmarks(f.synth / "vertebra.landmarks.json").groups.size(), 15u);
}

TEST(CliSynth, SeedIsDeterministic) {
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  ASSERT_EQ(sld_run({"synth", "--seed", "7", "--random", "--out", a.string()}), 0);
  ASSERT_EQ(sld_run({"synth", "--seed", "7", "--random", "--out", b.string()}), 0);
  for (const auto& name : listing(a)) EXPECT_EQ(io_detail::read_file(a / name), io_detail::read_file(b / name)) << name;
  const fs::path c = fresh_dir("seed_c");
  ASSERT_EQ(sld_run({"synth", "--seed", "8", "--random", "--out", c.string()}), 0);
  EXPECT_NE(io_detail::read_file(a / "vertebra.ply"), io_detail::read_file(c / "vertebra.ply"));
}

TEST(CliSynth, NoSpinousAblation) {
  const fs::path d = fresh_dir("nospin");
  ASSERT_EQ(sld_run({"synth", "--no-spinous", "--out", d.string()}), 0);
  const TriMesh m = load_mesh(d / "vertebra.ply");
  EXPECT_EQ(std::count(m.labels()->begin(), m.labels()->end(), to_int(SegmentLabel::SpinousProcess)), 0);
  const LandmarkSet t = load_landmarks(d / "vertebra.landmarks.json");
  EXPECT_EQ(t.find({LigamentKind::SSL, Site::None}), nullptr);
  EXPECT_EQ(t.find({LigamentKind::ISL, Site::Superior}), nullptr);
  EXPECT_EQ(t.find({LigamentKind::ISL, Site::Inferior}), nullptr);
  EXPECT_NE(t.find({LigamentKind::ITL, Site::Left}), nullptr);
}

TEST(CliSynth, InvalidParametersExitTwo) {
  const fs::path d = fresh_dir("badsynth");
  EXPECT_EQ(sld_run({"synth", "--grid", "10", "--out", d.string()}), 2);
  EXPECT_EQ(sld_run({"synth"}), 2);
  EXPECT_TRUE(listing(d).empty());
}

TEST(CliDetect, OneMeshGivesFifteenGroups) {
  const Fixture& f = fixture();
  ASSERT_EQ(f.detect_code, 0);
  EXPECT_EQ(listing(f.detect),
            (std::vector<std::string>{"manifest.json", "vertebra.labels.ply", "vertebra.landmarks.json"}));
  const LandmarkSet s = load_landmarks(f.detect / "vertebra.landmarks.json");
  EXPECT_EQ(s.groups.size(), 15u);
  EXPECT_TRUE(s.failures.empty());
  const json m = read_json(f.detect / "manifest.json");
  EXPECT_EQ(m["tool"], "sld");
  EXPECT_EQ(m["version"], std::string(kToolVersion));
  EXPECT_EQ(m["config_hash"], config_hash(PipelineConfig{}));
  ASSERT_EQ(m["meshes"].size(), 1u);
  EXPECT_EQ(m["meshes"][0]["outcome"], "ok");
  std::vector<std::string> stages;
  for (const auto& s2 : m["meshes"][0]["stages"]) {
    stages.push_back(s2["name"]);
    EXPECT_GE(s2["ms"].get<double>(), 0.0);
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"load", "preprocess", "segment", "detect", "write"}));
}

TEST(CliDetect, CorruptInputInBatchIsIsolated) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("batch");
  fs::copy_file(f.synth / "vertebra.ply", d / "a.ply");
  io_detail::write_file(d / "b.stl", "solid broken\nfacet normal 0 0 1\nouter loop\nvertex 0 0\n");
  fs::copy_file(f.synth / "vertebra.ply", d / "c.ply");
  const fs::path out = d / "out";
  const std::string cfg = fast_config(d).string();
  ASSERT_EQ(sld_run({"detect", (d / "a.ply").string(), (d / "b.stl").string(), (d / "c.ply").string(), "--config", cfg,
                     "--out", out.string(), "--jobs", "3"}),
            0);
  EXPECT_EQ(listing(out), (std::vector<std::string>{"a.labels.ply", "a.landmarks.json", "c.labels.ply",
                                                    "c.landmarks.json", "manifest.json"}));
  const json m = read_json(out / "manifest.json");
  ASSERT_EQ(m["meshes"].size(), 3u);
  EXPECT_EQ(m["meshes"][0]["mesh_id"], "a.ply");
  EXPECT_EQ(m["meshes"][1]["mesh_id"], "b.stl");
  EXPECT_EQ(m["meshes"][1]["outcome"], "failed");
  EXPECT_EQ(m["meshes"][1]["failed_stage"], "load");
  EXPECT_EQ(m["meshes"][2]["outcome"], "ok");
  EXPECT_EQ(m["succeeded"], 2);
  EXPECT_EQ(m["failed"], 1);
  // Mesh a is unaffected by its neighbours: same bytes as a single-mesh run.
  const fs::path solo = d / "solo";
  ASSERT_EQ(sld_run({"detect", (d / "a.ply").string(), "--config", cfg, "--out", solo.string()}), 0);
  EXPECT_EQ(io_detail::read_file(out / "a.landmarks.json"), io_detail::read_file(solo / "a.landmarks.json"));
  EXPECT_EQ(io_detail::read_file(out / "a.labels.ply"), io_detail::read_file(solo / "a.labels.ply"));
}

TEST(CliDetect, AllFailuresExitTwo) {
  const fs::path d = fresh_dir("allfail");
  io_detail::write_file(d / "x.obj", "v 0 0 0\nf 1 2 3\n");
  EXPECT_EQ(sld_run({"detect", (d / "x.obj").string(), "--out", (d / "out").string()}), 2);
  const json m = read_json(d / "out" / "manifest.json");
  EXPECT_EQ(m["succeeded"], 0);
  EXPECT_EQ(sld_run({"detect", "--out", (d / "none").string()}), 2);
  EXPECT_EQ(sld_run({"detect", (d / "x.obj").string()}), 2); // no output directory
}

TEST(CliDetect, DryRunWritesOnlyManifest) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("dry");
  ASSERT_EQ(sld_run({"detect", (f.synth / "vertebra.ply").string(), "--dry-run", "--out", d.string()}), 0);
  EXPECT_EQ(listing(d), (std::vector<std::string>{"manifest.json"}));
  EXPECT_EQ(read_json(d / "manifest.json")["dry_run"], true);
}

TEST(CliDetect, OptionsChangeConfigHash) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("hash");
  ASSERT_EQ(sld_run({"detect", (f.synth / "vertebra.ply").string(), "--dry-run", "--frame-hint", "RAS", "--out",
                     (d / "a").string()}),
            0);
  ASSERT_EQ(sld_run({"detect", (f.synth / "vertebra.ply").string(), "--dry-run", "--jobs", "4", "--out",
                     (d / "b").string()}),
            0);
  const json a = read_json(d / "a" / "manifest.json");
  const json b = read_json(d / "b" / "manifest.json");
  EXPECT_NE(a["config_hash"], config_hash(PipelineConfig{}));
  EXPECT_EQ(b["config_hash"], config_hash(PipelineConfig{}));
}

TEST(CliDetect, UnknownConfigKeyExitsTwo) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("badcfg");
  io_detail::write_file(d / "c.json", R"({"detect":{"thetadeg":20}})");
  EXPECT_EQ(sld_run({"detect", (f.synth / "vertebra.ply").string(), "--config", (d / "c.json").string(), "--out",
                     (d / "out").string()}),
            2);
  EXPECT_FALSE(fs::exists(d / "out"));
  EXPECT_EQ(sld_run({"detect", "--bogus-flag"}), 2);
  EXPECT_EQ(sld_run({}), 2);
}

TEST(CliSegment, ExportPartsWritesNineObjFiles) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("parts");
  ASSERT_EQ(sld_run({"segment", (f.synth / "vertebra.ply").string(), "--export-parts", "--config",
                     fast_config(d).string(), "--out", (d / "out").string()}),
            0);
  const auto files = listing(d / "out");
  EXPECT_EQ(std::count_if(files.begin(), files.end(), [](const std::string& s) { return s.ends_with(".obj"); }), 9);
  for (SegmentLabel l : kAllLabels) {
    const fs::path p = d / "out" / ("vertebra." + std::string(label_name(l)) + ".obj");
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_GT(load_mesh(p).face_count(), 0u);
  }
  const TriMesh m = load_mesh(d / "out" / "vertebra.labels.ply");
  std::set<int> labels(m.labels()->begin(), m.labels()->end());
  EXPECT_EQ(labels.size(), 9u);
  EXPECT_FALSE(fs::exists(d / "out" / "vertebra.landmarks.json"));
}

TEST(CliSegment, EllipsoidFailureNamesSplitStage) {
  const fs::path d = fresh_dir("ellipsoid");
  std::vector<Vec3> v(make_sphere(1.0, 3).vertices());
  for (Vec3& p : v) p = Vec3(20.0 * p.x(), 15.0 * p.y(), 10.0 * p.z());
  save_mesh(TriMesh(std::move(v), std::vector<Face>(make_sphere(1.0, 3).faces())), d / "e.ply");
  EXPECT_EQ(sld_run({"segment", (d / "e.ply").string(), "--config", fast_config(d).string(), "--out",
                     (d / "out").string()}),
            2);
  const json m = read_json(d / "out" / "manifest.json");
  EXPECT_EQ(m["meshes"][0]["failed_stage"], "split_body_arch");
}

TEST(CliEvaluate, DetectionAgainstSynthTruth) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("eval");
  ASSERT_EQ(sld_run({"evaluate", "--landmarks", (f.detect / "vertebra.landmarks.json").string(), "--annotations",
                     (f.synth / "vertebra.annotations.json").string(), "--out", d.string()}),
            0);
  EXPECT_EQ(listing(d), (std::vector<std::string>{"report.csv", "report.json", "report.md"}));
  const auto rows = parse_report_csv(io_detail::read_file(d / "report.csv"));
  ASSERT_EQ(rows.size(), 8u); // no region metadata
  EXPECT_EQ(rows[0].category, "Overall");
  const double edge = mean_edge_length(load_mesh(f.detect / "vertebra.labels.ply"));
  EXPECT_LE(rows[0].stats.mae, 2.0 * edge);
  const json rep = read_json(d / "report.json");
  ASSERT_EQ(rep["detection_configs"].size(), 1u);
  EXPECT_EQ(rep["detection_configs"][0]["smooth"]["method"], "taubin");
}

TEST(CliEvaluate, IdenticalFilesGiveZeroReport) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("eval_zero");
  const std::string lm = (f.detect / "vertebra.landmarks.json").string();
  ASSERT_EQ(sld_run({"evaluate", "--landmarks", lm, "--annotations", lm, "--out", d.string()}), 0);
  for (const auto& r : parse_report_csv(io_detail::read_file(d / "report.csv"))) {
    EXPECT_EQ(r.stats.mae, 0.0);
    EXPECT_EQ(r.stats.max, 0.0);
    EXPECT_EQ(r.stats.rmse, 0.0);
  }
}

TEST(CliEvaluate, RegionsGiveElevenRows) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("eval_regions");
  // Three copies of the detection, one per region.
  std::vector<std::string> lms, anns;
  const LandmarkSet det = load_landmarks(f.detect / "vertebra.landmarks.json");
  json regions;
  for (const char* name : {"C5", "T8", "L3"}) {
    LandmarkSet s = det;
    s.mesh_id = std::string(name) + ".ply";
    save_landmarks(s, d / (std::string(name) + ".json"));
    lms.push_back((d / (std::string(name) + ".json")).string());
    anns.push_back((f.synth / "vertebra.annotations.json").string());
  }
  regions["C5.ply"] = "cervical";
  regions["T8"] = "Thoracic";
  regions["L3.ply"] = "LUMBAR";
  io_detail::write_file(d / "regions.json", regions.dump());
  std::vector<std::string> args{"evaluate", "--landmarks"};
  args.insert(args.end(), lms.begin(), lms.end());
  args.push_back("--annotations");
  args.insert(args.end(), anns.begin(), anns.end());
  for (const std::string& a : std::vector<std::string>{"--regions", (d / "regions.json").string(), "--out", (d / "out").string()}) args.push_back(a);
  ASSERT_EQ(sld_run(args), 0);
  const auto rows = parse_report_csv(io_detail::read_file(d / "out" / "report.csv"));
  std::vector<std::string> cats;
  for (const auto& r : rows) cats.push_back(r.category);
  EXPECT_EQ(cats, report_categories());
  const std::string md = io_detail::read_file(d / "out" / "report.md");
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 13);
}

TEST(CliEvaluate, StrictMissingAnnotationGroupExitsTwo) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("eval_strict");
  LandmarkSet ann = load_landmarks(f.synth / "vertebra.annotations.json");
  ann.groups.erase(std::remove_if(ann.groups.begin(), ann.groups.end(),
                                  [](const LandmarkGroup& g) { return g.key.kind == LigamentKind::SSL; }),
                   ann.groups.end());
  save_landmarks(ann, d / "partial.json");
  const std::string lm = (f.detect / "vertebra.landmarks.json").string();
  EXPECT_EQ(sld_run({"evaluate", "--landmarks", lm, "--annotations", (d / "partial.json").string(), "--out",
                     (d / "lax").string()}),
            0);
  const json rep = read_json(d / "lax" / "report.json");
  EXPECT_EQ(rep["warnings"].size(), 1u);
  EXPECT_EQ(sld_run({"evaluate", "--strict", "--landmarks", lm, "--annotations", (d / "partial.json").string(), "--out",
                     (d / "strict").string()}),
            2);
  EXPECT_EQ(sld_run({"evaluate", "--landmarks", lm, "--out", (d / "x").string()}), 2); // annotations missing
}

TEST(CliEvaluate, SampleSdMode) {
  const Fixture& f = fixture();
  const fs::path d = fresh_dir("eval_sd");
  const std::vector<std::string> base{"evaluate", "--landmarks", (f.detect / "vertebra.landmarks.json").string(),
                                      "--annotations", (f.synth / "vertebra.annotations.json").string()};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(sld_run(with({"--out", (d / "pop").string()})), 0);
  ASSERT_EQ(sld_run(with({"--sd-mode", "sample", "--out", (d / "sam").string()})), 0);
  const auto pop = parse_report_csv(io_detail::read_file(d / "pop" / "report.csv"));
  const auto sam = parse_report_csv(io_detail::read_file(d / "sam" / "report.csv"));
  const double n = static_cast<double>(pop[0].stats.n);
  EXPECT_NEAR(sam[0].stats.sd, pop[0].stats.sd * std::sqrt(n / (n - 1.0)), 1e-12);
  EXPECT_EQ(sam[0].stats.mae, pop[0].stats.mae);
  EXPECT_EQ(sld_run(with({"--sd-mode", "unbiased", "--out", (d / "bad").string()})), 2);
}
