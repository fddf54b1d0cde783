#pragma once

#include "rksim/oracle.hpp"
#include "rksim/pipeline.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace rksim {

// Built-in beam benchmark: the 5 x 1 x 1 m beam under a bend (cantilever
// gravity sag) or twist (rotating end handle) protocol, simulated with the
// full-order reference and a sweep of reduced mode counts. Reported MSE and
// fit residuals are normalized by the reference bounding-box diagonal.

struct BenchOptions {
  Index integration_target = 1000;
  Index kernel_count = 80;
  std::vector<Index> mode_counts = {6, 9, 16, 32};
  double bend_h = 0.02;
  double bend_duration = 0.8;
  double twist_h = 0.02;
  double twist_duration = 1.0;
  double twist_angle_deg = 360.0;
};

inline SceneConfig bench_beam_base(const BenchOptions& opt) {
  SceneConfig cfg;
  cfg.shape.kind = "box";
  cfg.shape.lo = Vec3(0.0, 0.0, 0.0);
  cfg.shape.hi = Vec3(5.0, 1.0, 1.0);
  cfg.material.young_modulus = 5e6;
  cfg.material.poisson_ratio = 0.45;
  cfg.material.density = 1000.0;
  cfg.integration_target = opt.integration_target;
  cfg.kernel_count = opt.kernel_count;
  BoundaryCondition clamp;
  clamp.kind = BoundaryCondition::Kind::fix_region;
  clamp.region.lo = Vec3(-0.1, -0.1, -0.1);
  clamp.region.hi = Vec3(0.5, 1.1, 1.1);
  cfg.bcs.push_back(clamp);
  return cfg;
}

inline SceneConfig bench_bend_config(const BenchOptions& opt = {}) {
  SceneConfig cfg = bench_beam_base(opt);
  cfg.name = "bend";
  cfg.h = opt.bend_h;
  cfg.duration = opt.bend_duration;
  cfg.gravity = Vec3(0.0, 0.0, -9.8);
  return cfg;
}

inline SceneConfig bench_twist_config(const BenchOptions& opt = {}) {
  SceneConfig cfg = bench_beam_base(opt);
  cfg.name = "twist";
  cfg.h = opt.twist_h;
  cfg.duration = opt.twist_duration;
  cfg.gravity = Vec3::Zero();
  BoundaryCondition handle;
  handle.kind = BoundaryCondition::Kind::twist_handle;
  handle.region.lo = Vec3(4.5, -0.1, -0.1);
  handle.region.hi = Vec3(5.1, 1.1, 1.1);
  handle.axis = Vec3(1.0, 0.0, 0.0);
  handle.origin = Vec3(0.0, 0.5, 0.5);
  handle.total_angle = opt.twist_angle_deg * (EIGEN_PI / 180.0);
  cfg.bcs.push_back(handle);
  return cfg;
}

struct BenchRow {
  std::string scene;
  Index modes = -1;  // -1 marks the full-order reference row
  Index dof = 0;
  double mse = 0.0;
  double max_error = 0.0;
  double fit_residual = 0.0;
  double sim_seconds = 0.0;
};

struct BenchSceneReport {
  std::string scene;
  std::vector<BenchRow> rows;  // reference row first, then ascending m
  PipelineTimings timings;
};

struct BenchReport {
  std::vector<BenchSceneReport> scenes;
  double total_seconds = 0.0;
};

inline BenchSceneReport bench_scene(const SceneConfig& cfg,
                                    std::vector<Index> mode_counts) {
  if (mode_counts.empty())
    throw ValidationError("modes.count", "invalid input: empty mode sweep");
  std::sort(mode_counts.begin(), mode_counts.end());
  BenchSceneReport report;
  report.scene = cfg.name;

  BuildOptions bopt;
  bopt.mode_override = mode_counts.back();
  BuiltModel model = build_model(cfg, ".", bopt);
  report.timings = model.timings;

  Timer ref_timer;
  const SimResult ref = detail::run_stage(
      "simulate", [&] { return full_order_solve(cfg, model.table, model.integ); });
  const Trajectory ref_traj = make_trajectory(ref, model.integ.bbox);
  BenchRow ref_row;
  ref_row.scene = cfg.name;
  ref_row.dof = 3 * model.table.kernel_count;
  ref_row.sim_seconds = ref_timer.seconds();
  report.rows.push_back(ref_row);

  for (Index m : mode_counts) {
    const SkinningModes sub = truncate_modes(model.modes, m);
    ReducedKinematics kin(sub, model.table, model.integ);
    ImplicitSystem<ReducedKinematics> sys(kin, model.integ, cfg.bcs,
                                          cfg.duration, cfg.gravity, cfg.ground,
                                          cfg.solver);
    Timer timer;
    const SimResult sim = detail::run_stage("simulate", [&] {
      return run_simulation(sys, cfg.h, cfg.step_count(), cfg.solver);
    });
    BenchRow row;
    row.scene = cfg.name;
    row.modes = m;
    row.dof = kin.dof();
    row.sim_seconds = timer.seconds();
    const MetricReport metric =
        compare_trajectories(ref_traj, make_trajectory(sim, model.integ.bbox));
    row.mse = metric.mse;
    row.max_error = metric.max_error;
    row.fit_residual = fit_basis_residual(ref.frames, kin, model.integ.bbox).residual;
    report.rows.push_back(row);
  }
  return report;
}

// One benchmark protocol ("bend" or "twist") over the given mode sweep.
inline BenchSceneReport run_bench_beam(const std::string& test,
                                       const std::vector<Index>& mode_counts,
                                       const BenchOptions& opt = {}) {
  if (test == "bend") return bench_scene(bench_bend_config(opt), mode_counts);
  if (test == "twist") return bench_scene(bench_twist_config(opt), mode_counts);
  throw ValidationError("bench.test",
                        "invalid input: unknown bench test '" + test +
                            "' (expected bend or twist)");
}

inline Json bench_to_json(const BenchSceneReport& report) {
  Json rows = Json::array();
  for (const BenchRow& r : report.rows) {
    Json row;
    row["scene"] = r.scene;
    if (r.modes >= 0)
      row["m"] = r.modes;
    else
      row["m"] = "reference";
    row["dof"] = r.dof;
    row["mse"] = r.mse;
    row["max_error"] = r.max_error;
    row["fit_residual"] = r.fit_residual;
    row["sim_seconds"] = r.sim_seconds;
    rows.push_back(row);
  }
  Json j;
  j["note"] = "reference is the full-order solve on the same discretization, "
              "not converged FEM; orderings and trends are comparable, "
              "absolute published values are not";
  j["scene"] = report.scene;
  j["rows"] = rows;
  j["timings"] =
      Json{{"sampling_s", report.timings.sampling_s},
           {"basis_s", report.timings.basis_s},
           {"assembly_s", report.timings.assembly_s},
           {"eigensolve_s", report.timings.eigensolve_s}};
  return j;
}

}  // namespace rksim
