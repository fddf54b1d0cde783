#include "rksim/rksim.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using rksim::Index;
using rksim::Json;

void write_text_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw rksim::Error("invalid input: cannot open " + tmp.string());
    out << content;
    if (!out) throw rksim::Error("invalid input: short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<Index> parse_mode_list(const std::string& arg) {
  std::vector<Index> out;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(static_cast<Index>(std::stoll(tok)));
    } catch (const std::exception&) {
      throw rksim::ValidationError("m", "invalid input: bad mode count '" + tok + "'");
    }
    if (out.back() < 1)
      throw rksim::ValidationError("m", "invalid input: mode counts must be >= 1");
  }
  if (out.empty())
    throw rksim::ValidationError("m", "invalid input: empty mode list");
  return out;
}

struct CommonFlags {
  std::string scene_path;
  std::string out_path;
  std::string modes_path;
  Index mode_override = -1;
  std::int64_t seed = -1;
  bool dense_basis = false;
  bool no_psd = false;
};

rksim::SceneConfig load_config(const CommonFlags& flags) {
  rksim::SceneConfig cfg = rksim::load_scene_file(flags.scene_path);
  if (flags.mode_override >= 0) cfg.mode_count = flags.mode_override;
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.no_psd) cfg.solver.psd_projection = false;
  return cfg;
}

int cmd_run(const CommonFlags& flags) {
  const rksim::SceneConfig cfg = load_config(flags);
  rksim::BuildOptions bopt;
  bopt.dense_basis = flags.dense_basis;
  const fs::path base = fs::path(flags.scene_path).parent_path();
  rksim::SceneRun run = rksim::run_scene(cfg, base, bopt);

  const fs::path traj_path =
      flags.out_path.empty() ? fs::path(cfg.name + ".rktj") : fs::path(flags.out_path);
  rksim::detail::run_stage("io", [&] {
    rksim::save_trajectory(traj_path, run.trajectory);
    if (!flags.modes_path.empty())
      rksim::save_modes(flags.modes_path, run.model.modes);
    return 0;
  });

  const rksim::PipelineTimings& t = run.model.timings;
  int total_newton = 0;
  double max_f = 0.0;
  for (const rksim::StepStats& s : run.sim.steps) {
    total_newton += s.newton.iterations;
    max_f = std::max(max_f, s.max_def_grad_norm);
  }
  Json report;
  report["scene"] = cfg.name;
  report["points"] = run.model.integ.size();
  report["kernels"] = run.model.table.kernel_count;
  report["modes"] = run.model.modes.count_nonconstant();
  report["frames"] = run.trajectory.frame_count();
  report["h"] = run.trajectory.h;
  report["seed"] = cfg.seed;
  report["trajectory"] = traj_path.string();
  report["timings"] = Json{
      {"sampling_s", t.sampling_s},   {"basis_s", t.basis_s},
      {"assembly_s", t.assembly_s},   {"eigensolve_s", t.eigensolve_s},
      {"simulate_s", t.simulate_s},
      {"per_step_s", run.sim.steps.empty()
                         ? 0.0
                         : t.simulate_s / static_cast<double>(run.sim.steps.size())}};
  report["newton_iterations"] = total_newton;
  report["max_def_grad_norm"] = max_f;
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::string& ref_path, const std::string& other_path) {
  const auto [ref, other] = rksim::detail::run_stage("compare", [&] {
    return std::pair<rksim::Trajectory, rksim::Trajectory>(
        rksim::load_trajectory(ref_path), rksim::load_trajectory(other_path));
  });
  const rksim::MetricReport metric = rksim::detail::run_stage(
      "compare", [&] { return rksim::compare_trajectories(ref, other); });
  Json report;
  report["mse"] = metric.mse;
  report["max_error"] = metric.max_error;
  report["frames"] = ref.frame_count();
  report["points"] = ref.point_count();
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::string& test, const std::string& mode_list,
              const std::string& out_path) {
  const std::vector<Index> modes = parse_mode_list(mode_list);
  const rksim::BenchSceneReport report = rksim::run_bench_beam(test, modes);
  std::printf("# %s: reduced vs full-order reference (trend benchmark; the\n",
              report.scene.c_str());
  std::printf("# reference is the full-order solve, not converged FEM)\n");
  std::printf("%-10s %6s %12s %12s %14s %10s\n", "m", "dof", "mse", "max_err",
              "fit_residual", "sim_s");
  for (const rksim::BenchRow& row : report.rows) {
    if (row.modes < 0)
      std::printf("%-10s %6lld %12s %12s %14s %10.2f\n", "reference",
                  static_cast<long long>(row.dof), "-", "-", "-",
                  row.sim_seconds);
    else
      std::printf("%-10lld %6lld %12.4e %12.4e %14.4e %10.2f\n",
                  static_cast<long long>(row.modes),
                  static_cast<long long>(row.dof), row.mse, row.max_error,
                  row.fit_residual, row.sim_seconds);
  }
  if (!out_path.empty())
    write_text_atomic(out_path, rksim::bench_to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_modes_export(const CommonFlags& flags) {
  const rksim::SceneConfig cfg = load_config(flags);
  rksim::BuildOptions bopt;
  bopt.dense_basis = flags.dense_basis;
  const fs::path base = fs::path(flags.scene_path).parent_path();
  const rksim::BuiltModel model = rksim::build_model(cfg, base, bopt);

  const fs::path modes_path =
      flags.modes_path.empty() ? fs::path(cfg.name + ".rkpm") : fs::path(flags.modes_path);
  const fs::path dump_path =
      flags.out_path.empty() ? fs::path(cfg.name + "_weights.txt") : fs::path(flags.out_path);
  rksim::detail::run_stage("io", [&] {
    rksim::save_modes(modes_path, model.modes);
    const rksim::MatX w = rksim::weight_table(model.modes, model.table);
    std::ostringstream text;
    text.precision(17);
    for (Index i = 0; i < model.integ.size(); ++i) {
      text << model.integ.points(i, 0) << " " << model.integ.points(i, 1) << " "
           << model.integ.points(i, 2);
      for (Index j = 0; j < w.cols(); ++j) text << " " << w(i, j);
      text << "\n";
    }
    write_text_atomic(dump_path, text.str());
    return 0;
  });

  Json report;
  report["modes_file"] = modes_path.string();
  report["weights_file"] = dump_path.string();
  report["kernels"] = model.table.kernel_count;
  report["modes"] = model.modes.count_nonconstant();
  report["eigensolve_s"] = model.timings.eigensolve_s;
  std::cout << report.dump(2) << "\n";
  return 0;
}

int report_failure(const std::string& stage, const std::string& field,
                   const std::string& error, int code) {
  Json j;
  j["stage"] = stage;
  if (!field.empty()) j["field"] = field;
  j["error"] = error;
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-free reduced-order hyperelastic simulator"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string compare_a, compare_b;
  std::string bench_test, bench_modes = "6,9,16,32", bench_out;

  CLI::App* run = app.add_subcommand("run", "Sample, build modes, simulate a scene");
  run->add_option("--scene", flags.scene_path, "Scene config path")->required();
  run->add_option("--out", flags.out_path, "Output trajectory path");
  run->add_option("--modes", flags.modes_path, "Also write the modes container here");
  run->add_option("--m", flags.mode_override, "Override mode count");
  run->add_option("--seed", flags.seed, "Override scene seed");
  run->add_flag("--dense-basis", flags.dense_basis, "Disable the kernel support cutoff");
  run->add_flag("--no-psd-projection", flags.no_psd, "Skip per-point Hessian PSD projection");

  CLI::App* cmp = app.add_subcommand("compare", "Normalized MSE between two trajectories");
  cmp->add_option("reference", compare_a, "Reference trajectory")->required();
  cmp->add_option("other", compare_b, "Trajectory to score")->required();

  CLI::App* bench = app.add_subcommand("bench-beam", "Built-in beam benchmark");
  bench->add_option("test", bench_test, "bend or twist")->required();
  bench->add_option("--m", bench_modes, "Comma-separated mode counts");
  bench->add_option("--out", bench_out, "Write the JSON report here");

  CLI::App* mex = app.add_subcommand("modes-export", "Write modes + per-point weights");
  mex->add_option("--scene", flags.scene_path, "Scene config path")->required();
  mex->add_option("--modes", flags.modes_path, "Output modes container path");
  mex->add_option("--out", flags.out_path, "Output weight dump path");
  mex->add_option("--m", flags.mode_override, "Override mode count");
  mex->add_option("--seed", flags.seed, "Override scene seed");
  mex->add_flag("--dense-basis", flags.dense_basis, "Disable the kernel support cutoff");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(flags);
    if (cmp->parsed()) return cmd_compare(compare_a, compare_b);
    if (bench->parsed()) return cmd_bench(bench_test, bench_modes, bench_out);
    if (mex->parsed()) return cmd_modes_export(flags);
  } catch (const rksim::ValidationError& e) {
    return report_failure("config", e.field(), e.what(), 2);
  } catch (const rksim::StageError& e) {
    return report_failure(e.stage(), "", e.what(), 1);
  } catch (const std::exception& e) {
    return report_failure("internal", "", e.what(), 1);
  }
  return 1;
}
