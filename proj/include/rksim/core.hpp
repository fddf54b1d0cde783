#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rksim {

using Index = Eigen::Index;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
// Point sets are stored one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Runtime failure in a pipeline stage (bad numerics, bad file, diverged solve).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Rejected input: carries the offending field path for machine-readable reports.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());

  static Aabb of_points(const Points& pts) {
    Aabb box;
    for (Index i = 0; i < pts.rows(); ++i) box.expand(pts.row(i).transpose());
    return box;
  }

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 extent() const { return hi - lo; }
  double volume() const { return extent().prod(); }
  double diagonal() const { return extent().norm(); }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
};

// ---------------------------------------------------------------------------
// Deterministic parallelism.
//
// Work is split into fixed-size chunks; chunk results are combined in chunk
// order regardless of which worker ran them, so outputs are bit-identical for
// any worker count. Worker count comes from RKPM_THREADS (clamped to hardware)
// and defaults to the hardware concurrency.
// ---------------------------------------------------------------------------

inline int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("RKPM_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min<long>(v, hw));
  }
  return hw;
}

// Runs fn(chunk_index, begin, end) for consecutive chunks [begin, end) of
// size at most chunk. Chunks are claimed atomically; fn must only write
// chunk-local state (e.g. a per-chunk output slot) to stay deterministic.
template <class Fn>
void parallel_chunks(Index total, Index chunk, const Fn& fn) {
  if (total <= 0) return;
  const Index nchunks = (total + chunk - 1) / chunk;
  const int workers = std::min<Index>(worker_count(), nchunks);
  if (workers <= 1) {
    for (Index c = 0; c < nchunks; ++c)
      fn(c, c * chunk, std::min(total, (c + 1) * chunk));
    return;
  }
  std::atomic<Index> next{0};
  auto body = [&] {
    for (;;) {
      const Index c = next.fetch_add(1);
      if (c >= nchunks) return;
      fn(c, c * chunk, std::min(total, (c + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
}

class Timer {
 public:
  Timer() : start_(clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace rksim
