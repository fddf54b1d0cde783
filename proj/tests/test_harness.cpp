#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace rktest;
namespace fs = std::filesystem;

#ifndef RKSIM_CLI_PATH
#error "RKSIM_CLI_PATH must point at the CLI binary"
#endif
#ifndef RKSIM_SCENES_DIR
#error "RKSIM_SCENES_DIR must point at the bundled scenes"
#endif

// ---------------------------------------------------------------------------
// Scene configuration (de)serialization.
// ---------------------------------------------------------------------------

Json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  EXPECT_TRUE(in) << path;
  Json j;
  in >> j;
  return j;
}

TEST(SceneConfig, SerializationIsIdempotentForBundledScenes) {
  for (const char* name : {"bend.json", "twist.json", "drop_sphere.json"}) {
    const Json original = load_json_file(fs::path(RKSIM_SCENES_DIR) / name);
    const SceneConfig cfg = parse_scene(original);
    const Json first = scene_to_json(cfg);
    const Json second = scene_to_json(parse_scene(first));
    EXPECT_EQ(first.dump(), second.dump()) << name;
  }
}

TEST(SceneConfig, BendSceneParsesToExpectedValues) {
  const SceneConfig cfg =
      load_scene_file(fs::path(RKSIM_SCENES_DIR) / "bend.json");
  EXPECT_EQ(cfg.name, "bend");
  EXPECT_EQ(cfg.shape.kind, "box");
  EXPECT_DOUBLE_EQ(cfg.shape.hi[0], 5.0);
  EXPECT_EQ(cfg.integration_target, 1000);
  EXPECT_EQ(cfg.kernel_count, 80);
  EXPECT_EQ(cfg.mode_count, 16);
  EXPECT_DOUBLE_EQ(cfg.h, 0.025);
  EXPECT_DOUBLE_EQ(cfg.duration, 0.5);
  EXPECT_EQ(cfg.step_count(), 20);
  ASSERT_EQ(cfg.bcs.size(), 1u);
  EXPECT_EQ(cfg.bcs[0].kind, BoundaryCondition::Kind::fix_region);
  EXPECT_FALSE(cfg.ground.has_value());
}

TEST(SceneConfig, TwistAngleRoundTripsThroughDegrees) {
  const SceneConfig cfg =
      load_scene_file(fs::path(RKSIM_SCENES_DIR) / "twist.json");
  ASSERT_EQ(cfg.bcs.size(), 2u);
  EXPECT_EQ(cfg.bcs[1].kind, BoundaryCondition::Kind::twist_handle);
  EXPECT_NEAR(cfg.bcs[1].total_angle, 2.0 * EIGEN_PI, 1e-12);
  const Json j = scene_to_json(cfg);
  EXPECT_NEAR(j["boundary_conditions"][1]["total_angle_deg"].get<double>(),
              360.0, 1e-9);
}

void expect_parse_failure(Json j, const std::string& field) {
  try {
    parse_scene(j);
    FAIL() << "expected a validation error for " << field;
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), field);
  }
}

TEST(SceneConfig, ParseRejectsMalformedDocuments) {
  const Json good = load_json_file(fs::path(RKSIM_SCENES_DIR) / "bend.json");

  Json j = good;
  j.erase("time");
  expect_parse_failure(j, "time");

  j = good;
  j["version"] = 2;
  expect_parse_failure(j, "version");

  j = good;
  j["shape"]["kind"] = "torus";
  expect_parse_failure(j, "shape.kind");

  j = good;
  j["shape"]["min"] = Json::array({0.0, 0.0});
  expect_parse_failure(j, "shape.min");

  j = good;
  j["sampling"]["kernel_count"] = "eighty";
  expect_parse_failure(j, "sampling.kernel_count");

  j = good;
  j["boundary_conditions"][0]["kind"] = "glue";
  expect_parse_failure(j, "boundary_conditions[0].kind");

  j = good;
  j["material"]["regions"] = Json::array({Json{{"kind", "cylinder"}}});
  expect_parse_failure(j, "material.regions[0].kind");

  j = good;
  j["solver"] = Json{{"psd_projection", 1}};
  expect_parse_failure(j, "solver.psd_projection");
}

void expect_validate_failure(const SceneConfig& cfg, const std::string& field) {
  try {
    validate_scene(cfg, cfg.shape.resolve("."));
    FAIL() << "expected a validation error for " << field;
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), field);
  }
}

TEST(SceneConfig, ValidationCatchesCrossFieldProblems) {
  const SceneConfig good =
      load_scene_file(fs::path(RKSIM_SCENES_DIR) / "bend.json");
  ASSERT_NO_THROW(validate_scene(good, good.shape.resolve(".")));

  SceneConfig cfg = good;
  cfg.h = 0.0;
  expect_validate_failure(cfg, "time.h");

  cfg = good;
  cfg.duration = 0.01;  // shorter than one step
  expect_validate_failure(cfg, "time.duration");

  cfg = good;
  cfg.mode_count = cfg.kernel_count;
  expect_validate_failure(cfg, "modes.count");

  cfg = good;
  cfg.kernel_count = 3;
  expect_validate_failure(cfg, "sampling.kernel_count");

  cfg = good;
  cfg.integration_target = 7;
  expect_validate_failure(cfg, "sampling.integration_target");

  cfg = good;
  cfg.material.poisson_ratio = 0.6;
  expect_validate_failure(cfg, "material.poisson_ratio");

  cfg = good;
  MaterialRegion region;
  region.kind = MaterialRegion::Kind::box;
  region.box = Aabb{Vec3(50, 50, 50), Vec3(51, 51, 51)};
  cfg.material.regions.push_back(region);
  expect_validate_failure(cfg, "material.regions[0]");

  cfg = good;
  region.kind = MaterialRegion::Kind::shell;
  region.center = Vec3(2.5, 0.5, 0.5);
  region.r_min = 0.4;
  region.r_max = 0.2;
  cfg.material.regions = {region};
  expect_validate_failure(cfg, "material.regions[0]");

  cfg = good;
  cfg.bcs[0].region = Aabb{Vec3(50, 50, 50), Vec3(51, 51, 51)};
  expect_validate_failure(cfg, "boundary_conditions[0].box");

  cfg = good;
  BoundaryCondition pull;
  pull.kind = BoundaryCondition::Kind::pull_points;
  cfg.bcs.push_back(pull);
  expect_validate_failure(cfg, "boundary_conditions[1].indices");
}

TEST(SceneConfig, StageLabelsSurviveThePipeline) {
  SceneConfig cfg = load_scene_file(fs::path(RKSIM_SCENES_DIR) / "bend.json");
  cfg.integration_target = 64;
  cfg.kernel_count = 200;  // more kernels than sampled points
  cfg.mode_count = 6;
  try {
    build_model(cfg, ".");
    FAIL() << "expected a sampling-stage failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "sampling");
    EXPECT_NE(std::string(e.what()).find("insufficient points"),
              std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Trajectory container and metrics.
// ---------------------------------------------------------------------------

struct TmpDir {
  fs::path dir;
  explicit TmpDir(const char* name) {
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
};

Trajectory tiny_trajectory() {
  Trajectory t;
  t.h = 0.25;
  t.bbox = Aabb{Vec3(-1, 0, 2), Vec3(1, 3, 4)};
  std::mt19937 gen(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int f = 0; f < 3; ++f) {
    Points p(5, 3);
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(gen);
    t.frames.push_back(p);
  }
  return t;
}

TEST(Trajectory, RoundTripsBitExactly) {
  static const TmpDir tmp("rksim_traj_test");
  const Trajectory t = tiny_trajectory();
  const fs::path path = tmp.dir / "t.rktj";
  save_trajectory(path, t);
  EXPECT_FALSE(fs::exists(tmp.dir / "t.rktj.tmp"));

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "RKTJ");

  const Trajectory r = load_trajectory(path);
  EXPECT_EQ(r.h, t.h);
  EXPECT_EQ((r.bbox.lo - t.bbox.lo).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((r.bbox.hi - t.bbox.hi).cwiseAbs().maxCoeff(), 0.0);
  ASSERT_EQ(r.frames.size(), t.frames.size());
  for (size_t f = 0; f < t.frames.size(); ++f)
    EXPECT_EQ(std::memcmp(r.frames[f].data(), t.frames[f].data(),
                          sizeof(double) * 15),
              0);
}

TEST(Trajectory, SaveRejectsBadFrames) {
  static const TmpDir tmp("rksim_traj_bad");
  Trajectory t = tiny_trajectory();
  t.frames[1](2, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    save_trajectory(tmp.dir / "nan.rktj", t);
    FAIL() << "expected a non-finite error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged state"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(tmp.dir / "nan.rktj"));

  t = tiny_trajectory();
  t.frames.push_back(Points::Zero(4, 3));  // ragged
  EXPECT_THROW(save_trajectory(tmp.dir / "ragged.rktj", t), Error);
}

TEST(Trajectory, LoadRejectsCorruptFiles) {
  static const TmpDir tmp("rksim_traj_corrupt");
  const fs::path good_path = tmp.dir / "good.rktj";
  save_trajectory(good_path, tiny_trajectory());

  // Wrong magic.
  {
    std::ifstream in(good_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    bytes[0] = 'X';
    std::ofstream out(tmp.dir / "magic.rktj", std::ios::binary);
    out << bytes;
  }
  try {
    load_trajectory(tmp.dir / "magic.rktj");
    FAIL() << "expected a magic error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad trajectory magic"),
              std::string::npos);
  }

  // Truncated mid-frame.
  {
    std::ifstream in(good_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    std::ofstream out(tmp.dir / "short.rktj", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(load_trajectory(tmp.dir / "short.rktj"), Error);

  EXPECT_THROW(load_trajectory(tmp.dir / "missing.rktj"), Error);
}

TEST(Metrics, UniformOffsetHasClosedFormScores) {
  const Trajectory ref = tiny_trajectory();
  MetricReport self = compare_trajectories(ref, ref);
  EXPECT_EQ(self.mse, 0.0);
  EXPECT_EQ(self.max_error, 0.0);

  Trajectory other = ref;
  for (Points& f : other.frames) f.col(0).array() += 0.03;
  const double diag = ref.bbox.diagonal();
  const MetricReport rep = compare_trajectories(ref, other);
  EXPECT_NEAR(rep.mse, 0.03 * 0.03 / (diag * diag), 1e-12);
  EXPECT_NEAR(rep.max_error, 0.03 / diag, 1e-12);
}

TEST(Metrics, RejectsIncomparableInputs) {
  const Trajectory ref = tiny_trajectory();
  Trajectory other = ref;
  other.frames.pop_back();
  EXPECT_THROW(compare_trajectories(ref, other), Error);

  other = ref;
  other.h *= 2.0;
  EXPECT_THROW(compare_trajectories(ref, other), Error);

  other = ref;
  Trajectory degenerate = ref;
  degenerate.bbox.hi = degenerate.bbox.lo;
  EXPECT_THROW(compare_trajectories(degenerate, other), Error);
}

// ---------------------------------------------------------------------------
// Asset readers.
// ---------------------------------------------------------------------------

TEST(AssetReaders, CloudFilesAllowCommentsAndCommas) {
  static const TmpDir tmp("rksim_cloud_test");
  {
    std::ofstream out(tmp.dir / "pts.xyz");
    out << "# a header comment\n"
        << "0, 0, 0\n"
        << "1 0 0   # trailing note\n"
        << "\n"
        << "0,1,0\n"
        << "0 0 1\n";
  }
  const Points pts = load_cloud(tmp.dir / "pts.xyz");
  ASSERT_EQ(pts.rows(), 4);
  EXPECT_EQ((pts.row(1) - Eigen::RowVector3d(1, 0, 0)).norm(), 0.0);
  EXPECT_EQ((pts.row(2) - Eigen::RowVector3d(0, 1, 0)).norm(), 0.0);

  {
    std::ofstream out(tmp.dir / "few.xyz");
    out << "0 0 0\n1 1 1\n2 2 2\n";
  }
  EXPECT_THROW(load_cloud(tmp.dir / "few.xyz"), Error);
  EXPECT_THROW(load_cloud(tmp.dir / "absent.xyz"), Error);
}

TEST(AssetReaders, ObjFilesParseTrianglesWithAttributeSuffixes) {
  static const TmpDir tmp("rksim_obj_test");
  {
    std::ofstream out(tmp.dir / "tri.obj");
    out << "# comment\n"
        << "v 0 0 0\n"
        << "v 1 0 0\n"
        << "v 0 1 0\n"
        << "v 0 0 1\n"
        << "f 1/1/1 2/2/2 3/3/3\n"
        << "f 1 3 4\n";
  }
  const TriMesh mesh = load_obj(tmp.dir / "tri.obj");
  EXPECT_EQ(mesh.vertices.rows(), 4);
  EXPECT_EQ(mesh.faces.rows(), 2);
  EXPECT_EQ(mesh.faces(0, 2), 2);
  EXPECT_EQ(mesh.faces(1, 2), 3);

  {
    std::ofstream out(tmp.dir / "bad_v.obj");
    out << "v 1 2\n";
  }
  EXPECT_THROW(load_obj(tmp.dir / "bad_v.obj"), Error);
  {
    std::ofstream out(tmp.dir / "bad_f.obj");
    out << "v 0 0 0\nv 1 0 0\nf 1 2\n";
  }
  EXPECT_THROW(load_obj(tmp.dir / "bad_f.obj"), Error);
}

// ---------------------------------------------------------------------------
// End-to-end scene run (in process).
// ---------------------------------------------------------------------------

SceneConfig small_scene() {
  SceneConfig cfg;
  cfg.name = "small";
  cfg.shape.kind = "box";
  cfg.shape.lo = Vec3::Zero();
  cfg.shape.hi = Vec3(1.0, 0.5, 0.5);
  cfg.integration_target = 120;
  cfg.kernel_count = 16;
  cfg.mode_count = 6;
  cfg.h = 0.02;
  cfg.duration = 0.06;
  BoundaryCondition clamp;
  clamp.kind = BoundaryCondition::Kind::fix_region;
  clamp.region = Aabb{Vec3(-0.1, -0.1, -0.1), Vec3(0.2, 0.6, 0.6)};
  cfg.bcs.push_back(clamp);
  return cfg;
}

TEST(RunScene, FirstFrameIsTheRestConfiguration) {
  const SceneConfig cfg = small_scene();
  const SceneRun run = run_scene(cfg, ".");
  ASSERT_EQ(run.trajectory.frames.size(), 4u);
  EXPECT_EQ(run.trajectory.h, cfg.h);
  EXPECT_EQ((run.trajectory.frames[0] - run.model.integ.points)
                .cwiseAbs()
                .maxCoeff(),
            0.0);
  EXPECT_EQ((run.trajectory.bbox.lo - run.model.integ.bbox.lo).norm(), 0.0);
  EXPECT_GT(run.model.timings.eigensolve_s, 0.0);
  // Gravity pulls the free end down across the run.
  EXPECT_LT(run.trajectory.frames.back().col(2).minCoeff(),
            run.trajectory.frames[0].col(2).minCoeff());
}

// ---------------------------------------------------------------------------
// CLI subprocess checks.
// ---------------------------------------------------------------------------

struct CliWorld {
  fs::path dir;
  fs::path small_scene_path;
  fs::path bend_out;
  Json bend_report;
  int bend_exit = -1;

  CliWorld() {
    dir = fs::temp_directory_path() / "rksim_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    small_scene_path = dir / "small.json";
    std::ofstream(small_scene_path) << scene_to_json(small_scene()).dump(2);

    bend_out = dir / "bend.rktj";
    std::string out;
    bend_exit = run(std::string("run --scene ") +
                        (fs::path(RKSIM_SCENES_DIR) / "bend.json").string() +
                        " --out " + bend_out.string(),
                    &out, nullptr);
    if (bend_exit == 0) bend_report = Json::parse(out);
  }

  int run(const std::string& args, std::string* out_text,
          std::string* err_text) const {
    static int counter = 0;
    const fs::path out_file = dir / ("out" + std::to_string(counter) + ".txt");
    const fs::path err_file = dir / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = std::string(RKSIM_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    if (out_text) *out_text = slurp(out_file);
    if (err_text) *err_text = slurp(err_file);
    if (!WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
  }
};

const CliWorld& cli() {
  static const CliWorld w;
  return w;
}

TEST(Cli, RunsTheBundledBendScene) {
  const CliWorld& w = cli();
  ASSERT_EQ(w.bend_exit, 0);
  EXPECT_EQ(w.bend_report["scene"], "bend");
  EXPECT_EQ(w.bend_report["kernels"], 80);
  EXPECT_EQ(w.bend_report["modes"], 16);
  EXPECT_EQ(w.bend_report["frames"], 21);
  EXPECT_GT(w.bend_report["timings"]["eigensolve_s"].get<double>(), 0.0);
  EXPECT_GT(w.bend_report["timings"]["per_step_s"].get<double>(), 0.0);
  EXPECT_GT(w.bend_report["newton_iterations"].get<int>(), 0);

  const Trajectory traj = load_trajectory(w.bend_out);
  EXPECT_EQ(traj.frame_count(), 21);
  EXPECT_EQ(traj.point_count(), w.bend_report["points"].get<Index>());
  EXPECT_DOUBLE_EQ(traj.h, 0.025);
}

TEST(Cli, CompareScoresIdenticalRunsAsZero) {
  const CliWorld& w = cli();
  ASSERT_EQ(w.bend_exit, 0);
  std::string out;
  const int code = w.run(
      "compare " + w.bend_out.string() + " " + w.bend_out.string(), &out,
      nullptr);
  ASSERT_EQ(code, 0);
  const Json rep = Json::parse(out);
  EXPECT_EQ(rep["mse"].get<double>(), 0.0);
  EXPECT_EQ(rep["max_error"].get<double>(), 0.0);
  EXPECT_EQ(rep["frames"], 21);
}

TEST(Cli, CompareRejectsMismatchedTrajectories) {
  const CliWorld& w = cli();
  ASSERT_EQ(w.bend_exit, 0);
  const fs::path small_out = w.dir / "small.rktj";
  ASSERT_EQ(w.run("run --scene " + w.small_scene_path.string() + " --out " +
                      small_out.string(),
                  nullptr, nullptr),
            0);
  std::string err;
  const int code = w.run(
      "compare " + w.bend_out.string() + " " + small_out.string(), nullptr,
      &err);
  EXPECT_EQ(code, 1);
  const Json rep = Json::parse(err);
  EXPECT_EQ(rep["stage"], "compare");
  EXPECT_NE(rep["error"].get<std::string>().find("incomparable"),
            std::string::npos);
}

TEST(Cli, RejectsInvalidMaterialWithFieldPath) {
  const CliWorld& w = cli();
  Json bad = load_json_file(fs::path(RKSIM_SCENES_DIR) / "bend.json");
  bad["material"]["poisson_ratio"] = 0.6;
  const fs::path bad_path = w.dir / "bad_nu.json";
  std::ofstream(bad_path) << bad.dump(2);
  std::string err;
  const int code =
      w.run("run --scene " + bad_path.string() + " --out " +
                (w.dir / "never.rktj").string(),
            nullptr, &err);
  EXPECT_EQ(code, 2);
  const Json rep = Json::parse(err);
  EXPECT_EQ(rep["stage"], "config");
  EXPECT_EQ(rep["field"], "material.poisson_ratio");
  EXPECT_FALSE(fs::exists(w.dir / "never.rktj"));
}

TEST(Cli, RejectsUnparseableSceneFiles) {
  const CliWorld& w = cli();
  const fs::path bad_path = w.dir / "broken.json";
  std::ofstream(bad_path) << "{ this is not json";
  std::string err;
  const int code = w.run("run --scene " + bad_path.string(), nullptr, &err);
  EXPECT_EQ(code, 2);
  const Json rep = Json::parse(err);
  EXPECT_EQ(rep["stage"], "config");
  EXPECT_EQ(rep["field"], "scene");
}

TEST(Cli, SingleStepSceneProducesTwoFrames) {
  const CliWorld& w = cli();
  SceneConfig cfg = small_scene();
  cfg.duration = cfg.h;
  const fs::path path = w.dir / "one_step.json";
  std::ofstream(path) << scene_to_json(cfg).dump(2);
  std::string out;
  const fs::path traj_path = w.dir / "one_step.rktj";
  ASSERT_EQ(w.run("run --scene " + path.string() + " --out " +
                      traj_path.string(),
                  &out, nullptr),
            0);
  EXPECT_EQ(Json::parse(out)["frames"], 2);
  EXPECT_EQ(load_trajectory(traj_path).frame_count(), 2);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const CliWorld& w = cli();
  auto read_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const fs::path a = w.dir / "det_a.rktj";
  const fs::path b = w.dir / "det_b.rktj";
  ASSERT_EQ(w.run("run --scene " + w.small_scene_path.string() + " --out " +
                      a.string(),
                  nullptr, nullptr),
            0);
  ASSERT_EQ(w.run("run --scene " + w.small_scene_path.string() + " --out " +
                      b.string(),
                  nullptr, nullptr),
            0);
  const std::string bytes_a = read_bytes(a);
  ASSERT_FALSE(bytes_a.empty());
  EXPECT_EQ(bytes_a, read_bytes(b));

  // Worker-count cap must not change results.
  const fs::path c = w.dir / "det_c.rktj";
  const std::string cmd = "RKPM_THREADS=4 " + std::string(RKSIM_CLI_PATH) +
                          " run --scene " + w.small_scene_path.string() +
                          " --out " + c.string() + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(bytes_a, read_bytes(c));
}

TEST(Cli, ModeOverrideChangesTheReport) {
  const CliWorld& w = cli();
  std::string out;
  ASSERT_EQ(w.run("run --scene " + w.small_scene_path.string() + " --out " +
                      (w.dir / "m3.rktj").string() + " --m 3",
                  &out, nullptr),
            0);
  EXPECT_EQ(Json::parse(out)["modes"], 3);
}

TEST(Cli, ModesExportWritesLoadableArtifacts) {
  const CliWorld& w = cli();
  const fs::path modes_path = w.dir / "small.rkpm";
  const fs::path weights_path = w.dir / "small_weights.txt";
  std::string out;
  ASSERT_EQ(w.run("modes-export --scene " + w.small_scene_path.string() +
                      " --modes " + modes_path.string() + " --out " +
                      weights_path.string(),
                  &out, nullptr),
            0);
  const Json rep = Json::parse(out);
  EXPECT_EQ(rep["kernels"], 16);
  EXPECT_EQ(rep["modes"], 6);

  // The container reloads and re-saves to identical bytes.
  const SkinningModes modes = load_modes(modes_path);
  EXPECT_EQ(modes.coeffs.rows(), 16);
  EXPECT_EQ(modes.coeffs.cols(), 7);
  const fs::path resave = w.dir / "resave.rkpm";
  save_modes(resave, modes);
  auto read_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(read_bytes(modes_path), read_bytes(resave));

  // The weight dump: one line per point, "x y z w0 ... wm", the constant
  // column flat, and the columns orthonormal under the integration weights.
  const SceneConfig cfg = load_scene_file(w.small_scene_path);
  const IntegrationSet integ =
      sample_grid(cfg.shape.resolve(w.dir), cfg.material,
                  cfg.integration_target);
  std::ifstream in(weights_path);
  ASSERT_TRUE(in);
  MatX w_cols(integ.size(), 7);
  std::string line;
  Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double x, y, z;
    ASSERT_TRUE(static_cast<bool>(ls >> x >> y >> z));
    ASSERT_LT(row, integ.size());
    EXPECT_NEAR(x, integ.points(row, 0), 1e-14);
    for (Index j = 0; j < 7; ++j) ASSERT_TRUE(static_cast<bool>(ls >> w_cols(row, j)));
    double extra;
    EXPECT_FALSE(static_cast<bool>(ls >> extra));
    ++row;
  }
  ASSERT_EQ(row, integ.size());

  const VecX w0 = w_cols.col(0);
  EXPECT_LE((w0.array() - w0.mean()).abs().maxCoeff(),
            1e-6 * std::abs(w0.mean()));
  const MatX gram = w_cols.transpose() * integ.weights.asDiagonal() * w_cols;
  EXPECT_LE((gram - MatX::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cli, WriteFailuresReportTheIoStageAndLeaveNoArtifact) {
  const CliWorld& w = cli();
  const fs::path target = w.dir / "no_such_dir" / "out.rktj";
  std::string err;
  const int code = w.run("run --scene " + w.small_scene_path.string() +
                             " --out " + target.string(),
                         nullptr, &err);
  EXPECT_EQ(code, 1);
  const Json rep = Json::parse(err);
  EXPECT_EQ(rep["stage"], "io");
  EXPECT_FALSE(fs::exists(target));
}

TEST(Cli, RejectsUnknownBenchProtocol) {
  const CliWorld& w = cli();
  std::string err;
  const int code = w.run("bench-beam stretch --m 4", nullptr, &err);
  EXPECT_EQ(code, 2);
  const Json rep = Json::parse(err);
  EXPECT_EQ(rep["stage"], "config");
  EXPECT_EQ(rep["field"], "bench.test");
}

TEST(Cli, RequiresASubcommand) {
  const CliWorld& w = cli();
  EXPECT_NE(w.run("", nullptr, nullptr), 0);
}

}  // namespace
