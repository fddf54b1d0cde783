#pragma once

#include "rksim/core.hpp"
#include "rksim/simulate.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace rksim {

// Per-frame point positions plus the header metadata needed to compare runs.
struct Trajectory {
  double h = 0.0;
  Aabb bbox;  // rest-shape bounds of the producing scene
  std::vector<Points> frames;

  Index point_count() const { return frames.empty() ? 0 : frames.front().rows(); }
  Index frame_count() const { return static_cast<Index>(frames.size()); }
};

inline Trajectory make_trajectory(const SimResult& sim, const Aabb& bbox) {
  Trajectory t;
  t.h = sim.h;
  t.bbox = bbox;
  t.frames = sim.frames;
  return t;
}

// Binary container: "RKTJ" magic, u32 version, u64 N, u64 T, f64 h,
// 6 x f64 bbox (lo, hi), then T frames of N row-major f64 triples.
// Little-endian; written to a temp file and renamed so failures never leave
// a partial trajectory behind.
inline void save_trajectory(const std::filesystem::path& path,
                            const Trajectory& traj) {
  for (const Points& f : traj.frames) {
    if (f.rows() != traj.point_count())
      throw Error("contract violation: ragged trajectory frames");
    if (!f.allFinite())
      throw Error("diverged state: non-finite trajectory positions");
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("invalid input: cannot open " + tmp.string());
    const char magic[4] = {'R', 'K', 'T', 'J'};
    const std::uint32_t version = 1;
    const std::uint64_t n = static_cast<std::uint64_t>(traj.point_count());
    const std::uint64_t t = static_cast<std::uint64_t>(traj.frame_count());
    detail::write_exact(out, magic, 4);
    detail::write_exact(out, &version, sizeof version);
    detail::write_exact(out, &n, sizeof n);
    detail::write_exact(out, &t, sizeof t);
    detail::write_exact(out, &traj.h, sizeof traj.h);
    for (int a = 0; a < 3; ++a) detail::write_exact(out, &traj.bbox.lo[a], 8);
    for (int a = 0; a < 3; ++a) detail::write_exact(out, &traj.bbox.hi[a], 8);
    for (const Points& f : traj.frames)
      detail::write_exact(out, f.data(), sizeof(double) * 3 *
                                            static_cast<size_t>(f.rows()));
    if (!out) throw Error("invalid input: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("invalid input: cannot open " + path.string());
  char magic[4];
  detail::read_exact(in, magic, 4, "trajectory header");
  if (std::memcmp(magic, "RKTJ", 4) != 0)
    throw Error("invalid input: bad trajectory magic in " + path.string());
  std::uint32_t version = 0;
  detail::read_exact(in, &version, sizeof version, "trajectory header");
  if (version != 1)
    throw Error("invalid input: unsupported trajectory version " +
                std::to_string(version));
  std::uint64_t n = 0, t = 0;
  detail::read_exact(in, &n, sizeof n, "trajectory header");
  detail::read_exact(in, &t, sizeof t, "trajectory header");
  if (n == 0 || t == 0 || n > (1ull << 32) || t > (1ull << 32))
    throw Error("invalid input: implausible trajectory dimensions");
  Trajectory traj;
  detail::read_exact(in, &traj.h, sizeof traj.h, "trajectory header");
  for (int a = 0; a < 3; ++a)
    detail::read_exact(in, &traj.bbox.lo[a], 8, "trajectory header");
  for (int a = 0; a < 3; ++a)
    detail::read_exact(in, &traj.bbox.hi[a], 8, "trajectory header");
  traj.frames.resize(static_cast<size_t>(t));
  for (Points& f : traj.frames) {
    f.resize(static_cast<Index>(n), 3);
    detail::read_exact(in, f.data(), sizeof(double) * 3 * static_cast<size_t>(n),
                       "trajectory frame");
    if (!f.allFinite())
      throw Error("invalid input: non-finite trajectory positions");
  }
  return traj;
}

struct MetricReport {
  double mse = 0.0;        // mean squared point distance / diag^2
  double max_error = 0.0;  // max point distance / diag
};

// Frame-by-frame comparison normalized by the reference (first) trajectory's
// bounding-box diagonal.
inline MetricReport compare_trajectories(const Trajectory& ref,
                                         const Trajectory& other) {
  if (ref.point_count() != other.point_count() ||
      ref.frame_count() != other.frame_count() || ref.h != other.h)
    throw Error("incomparable trajectories: point count, frame count, and "
                "timestep must match");
  const double diag = ref.bbox.diagonal();
  if (!(diag > 0.0))
    throw Error("incomparable trajectories: degenerate reference bounds");
  MetricReport rep;
  double accum = 0.0;
  Index count = 0;
  for (Index f = 0; f < ref.frame_count(); ++f) {
    const auto& a = ref.frames[static_cast<size_t>(f)];
    const auto& b = other.frames[static_cast<size_t>(f)];
    const VecX d = (a - b).rowwise().norm();
    accum += d.squaredNorm();
    count += d.size();
    rep.max_error = std::max(rep.max_error, d.maxCoeff());
  }
  rep.mse = accum / static_cast<double>(count) / (diag * diag);
  rep.max_error /= diag;
  return rep;
}

}  // namespace rksim
