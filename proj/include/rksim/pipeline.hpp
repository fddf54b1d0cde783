#pragma once

#include "rksim/basis.hpp"
#include "rksim/kinematics.hpp"
#include "rksim/modes.hpp"
#include "rksim/sampling.hpp"
#include "rksim/scene.hpp"
#include "rksim/simulate.hpp"
#include "rksim/trajectory.hpp"

#include <filesystem>
#include <string>
#include <utility>

namespace rksim {

// Error with the pipeline stage that raised it, for machine-readable reports.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

namespace detail {

template <class Fn>
auto run_stage(const char* label, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ValidationError&) {
    throw;  // keeps the field path; callers report these as config errors
  } catch (const std::exception& e) {
    throw StageError(label, e.what());
  }
}

}  // namespace detail

struct PipelineTimings {
  double sampling_s = 0.0;
  double basis_s = 0.0;
  double assembly_s = 0.0;
  double eigensolve_s = 0.0;
  double simulate_s = 0.0;
};

// Everything derived from a scene config up to (but not including) time
// stepping: integration points, kernels, basis table, and skinning modes.
struct BuiltModel {
  SceneConfig config;
  IntegrationSet integ;
  KernelSet kernels;
  BasisTable table;
  SkinningModes modes;
  PipelineTimings timings;
};

struct BuildOptions {
  bool dense_basis = false;
  Index mode_override = -1;  // >= 0 replaces config.mode_count
};

inline BuiltModel build_model(const SceneConfig& cfg,
                              const std::filesystem::path& base_dir,
                              const BuildOptions& opt = {}) {
  BuiltModel model;
  model.config = cfg;
  if (opt.mode_override >= 0) model.config.mode_count = opt.mode_override;

  const ShapeSource shape = detail::run_stage(
      "config", [&] {
        ShapeSource s = cfg.shape.resolve(base_dir);
        validate_scene(model.config, s);
        return s;
      });

  detail::run_stage("sampling", [&] {
    Timer timer;
    model.integ = sample_grid(shape, cfg.material, cfg.integration_target);
    model.kernels = build_kernel_set(model.integ, cfg.kernel_count);
    model.timings.sampling_s = timer.seconds();
    return 0;
  });

  detail::run_stage("basis", [&] {
    Timer timer;
    BasisOptions bopt;
    bopt.dense = opt.dense_basis;
    model.table = build_basis_table(model.integ, model.kernels, bopt);
    model.timings.basis_s = timer.seconds();
    return 0;
  });

  detail::run_stage("modes", [&] {
    Timer assembly;
    const WeightSpaceHessian hw = assemble_weight_hessian(model.table, model.integ);
    const RkpmMassMatrix mass = assemble_mass_matrix(model.table, model.integ);
    model.timings.assembly_s = assembly.seconds();
    Timer eigen;
    model.modes = solve_modes(hw, mass, model.config.mode_count);
    model.timings.eigensolve_s = eigen.seconds();
    return 0;
  });

  return model;
}

// Full-order reference solve over all 3K nodal displacements, run through the
// same incremental-potential machinery as the reduced model. Dense-solver
// budget caps the kernel count.
inline SimResult full_order_solve(const SceneConfig& cfg, const BasisTable& table,
                                  const IntegrationSet& integ) {
  if (table.kernel_count > 2000)
    throw ValidationError("sampling.kernel_count",
                          "invalid input: full-order solve supports at most "
                          "2000 kernels");
  FullKinematics kin(table, integ);
  ImplicitSystem<FullKinematics> sys(kin, integ, cfg.bcs, cfg.duration,
                                     cfg.gravity, cfg.ground, cfg.solver);
  return run_simulation(sys, cfg.h, cfg.step_count(), cfg.solver);
}

struct SceneRun {
  BuiltModel model;
  Trajectory trajectory;
  SimResult sim;
};

inline SceneRun run_scene(const SceneConfig& cfg,
                          const std::filesystem::path& base_dir,
                          const BuildOptions& opt = {}) {
  SceneRun run;
  run.model = build_model(cfg, base_dir, opt);
  detail::run_stage("simulate", [&] {
    Timer timer;
    const SceneConfig& c = run.model.config;
    ReducedKinematics kin(run.model.modes, run.model.table, run.model.integ);
    ImplicitSystem<ReducedKinematics> sys(kin, run.model.integ, c.bcs,
                                          c.duration, c.gravity, c.ground,
                                          c.solver);
    run.sim = run_simulation(sys, c.h, c.step_count(), c.solver);
    run.model.timings.simulate_s = timer.seconds();
    return 0;
  });
  run.trajectory = make_trajectory(run.sim, run.model.integ.bbox);
  return run;
}

}  // namespace rksim
