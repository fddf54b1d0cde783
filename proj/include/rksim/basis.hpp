#pragma once

#include "rksim/core.hpp"
#include "rksim/sampling.hpp"

#include <array>
#include <string>
#include <vector>

namespace rksim {

// Gaussian raw kernel and its spatial gradient.
inline double raw_kernel(const Vec3& x, const Vec3& p, double r) {
  return std::exp(-(x - p).squaredNorm() / (r * r));
}

inline Vec3 raw_kernel_grad(const Vec3& x, const Vec3& p, double r) {
  return (-2.0 / (r * r)) * raw_kernel(x, p, r) * (x - p);
}

struct BasisOptions {
  // Kernels are treated as zero beyond cutoff * r_k; exp(-49) ~ 5e-22 sits
  // far below double noise. dense = true evaluates every kernel (verification).
  double cutoff = 7.0;
  bool dense = false;
};

// Correction system at one query point: moment matrix M, correction C with
// M C = P(X), and their spatial derivatives (M dC = dP - dM C).
struct MomentSystem {
  Mat4 M = Mat4::Zero();
  Vec4 C = Vec4::Zero();
  std::array<Mat4, 3> dM = {Mat4::Zero(), Mat4::Zero(), Mat4::Zero()};
  std::array<Vec4, 3> dC = {Vec4::Zero(), Vec4::Zero(), Vec4::Zero()};
};

// One cached table row: the kernels active at a query point with their
// corrected values and gradients.
struct BasisRow {
  std::vector<Index> active;                     // ascending kernel indices
  VecX values;                                   // phi_k, k in active
  Eigen::Matrix<double, Eigen::Dynamic, 3> grads;  // d phi_k / dx

  double value_of(Index kernel) const {
    auto it = std::lower_bound(active.begin(), active.end(), kernel);
    if (it == active.end() || *it != kernel) return 0.0;
    return values[it - active.begin()];
  }
};

namespace detail {

inline std::vector<Index> active_kernels(const Vec3& x, const KernelSet& kernels,
                                         const BasisOptions& opts) {
  std::vector<Index> active;
  const Index k = kernels.size();
  if (opts.dense) {
    active.resize(static_cast<size_t>(k));
    for (Index i = 0; i < k; ++i) active[static_cast<size_t>(i)] = i;
    return active;
  }
  for (Index i = 0; i < k; ++i) {
    const double reach = opts.cutoff * kernels.radii[i];
    if ((x - kernels.centers.row(i).transpose()).squaredNorm() <= reach * reach)
      active.push_back(i);
  }
  return active;
}

inline Vec4 monomials(const Vec3& x) { return Vec4(1.0, x[0], x[1], x[2]); }

[[noreturn]] inline void throw_uncovered(const Vec3& x, const std::string& why) {
  throw Error("uncovered query point at (" + std::to_string(x[0]) + ", " +
              std::to_string(x[1]) + ", " + std::to_string(x[2]) + "): " + why);
}

// Solves the correction system. The regularized factorization is used as a
// preconditioner with one refinement pass against the unregularized M, which
// keeps reproduction residuals at roundoff level even on elongated domains
// where the raw monomial moment matrix is badly scaled.
inline MomentSystem moment_system(const Vec3& x, const KernelSet& kernels,
                                  const std::vector<Index>& active,
                                  bool check_coverage = true) {
  if (active.size() < 4)
    throw_uncovered(x, "fewer than 4 kernels in range");
  MomentSystem sys;
  for (Index k : active) {
    const Vec3 p = kernels.centers.row(k).transpose();
    const double r = kernels.radii[k];
    const Vec4 pk = monomials(p);
    const Mat4 outer = pk * pk.transpose();
    const double w = raw_kernel(x, p, r);
    const Vec3 gw = raw_kernel_grad(x, p, r);
    sys.M.noalias() += w * outer;
    for (int s = 0; s < 3; ++s) sys.dM[s].noalias() += gw[s] * outer;
  }
  const double scale = sys.M.trace() / 4.0;
  if (check_coverage) {
    Eigen::SelfAdjointEigenSolver<Mat4> eig;
    eig.compute(sys.M, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues()[0] > 1e-8 * scale))
      throw_uncovered(x, "moment matrix is rank-deficient");
  }
  Mat4 reg = sys.M;
  reg.diagonal().array() += 1e-10 * scale;
  const Eigen::LDLT<Mat4> ldlt(reg);
  auto refined_solve = [&](const Vec4& rhs) {
    Vec4 c = ldlt.solve(rhs);
    c += ldlt.solve(rhs - sys.M * c);
    return c;
  };
  sys.C = refined_solve(monomials(x));
  for (int s = 0; s < 3; ++s) {
    Vec4 dp = Vec4::Zero();
    dp[1 + s] = 1.0;
    sys.dC[s] = refined_solve(dp - sys.dM[s] * sys.C);
  }
  return sys;
}

inline BasisRow basis_row(const Vec3& x, const KernelSet& kernels,
                          const BasisOptions& opts) {
  BasisRow row;
  row.active = active_kernels(x, kernels, opts);
  const MomentSystem sys = moment_system(x, kernels, row.active);
  const Index a = static_cast<Index>(row.active.size());
  row.values.resize(a);
  row.grads.resize(a, 3);
  for (Index e = 0; e < a; ++e) {
    const Index k = row.active[static_cast<size_t>(e)];
    const Vec3 p = kernels.centers.row(k).transpose();
    const double r = kernels.radii[k];
    const Vec4 pk = monomials(p);
    const double w = raw_kernel(x, p, r);
    const Vec3 gw = raw_kernel_grad(x, p, r);
    const double corr = pk.dot(sys.C);
    row.values[e] = w * corr;
    for (int s = 0; s < 3; ++s)
      row.grads(e, s) = gw[s] * corr + w * pk.dot(sys.dC[s]);
  }
  return row;
}

}  // namespace detail

inline MomentSystem moment_and_correction(const Vec3& x, const KernelSet& kernels,
                                          const BasisOptions& opts = {}) {
  return detail::moment_system(x, kernels, detail::active_kernels(x, kernels, opts));
}

// Corrected shape function values phi_k(X) = raw_k(X) * P(p_k)^T C(X), as a
// dense K-vector (zeros outside the active set).
inline VecX shape_values(const Vec3& x, const KernelSet& kernels,
                         const BasisOptions& opts = {}) {
  const BasisRow row = detail::basis_row(x, kernels, opts);
  VecX phi = VecX::Zero(kernels.size());
  for (size_t e = 0; e < row.active.size(); ++e)
    phi[row.active[e]] = row.values[static_cast<Index>(e)];
  return phi;
}

// Analytic gradients of the corrected shape functions, K x 3.
inline Eigen::Matrix<double, Eigen::Dynamic, 3> shape_gradients(
    const Vec3& x, const KernelSet& kernels, const BasisOptions& opts = {}) {
  const BasisRow row = detail::basis_row(x, kernels, opts);
  Eigen::Matrix<double, Eigen::Dynamic, 3> grads =
      Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(kernels.size(), 3);
  for (size_t e = 0; e < row.active.size(); ++e)
    grads.row(row.active[e]) = row.grads.row(static_cast<Index>(e));
  return grads;
}

// Cached values/gradients over a fixed query set, sparse by active kernels.
struct BasisTable {
  Index kernel_count = 0;
  bool dense = false;
  double cutoff = 7.0;
  std::vector<BasisRow> rows;

  Index size() const { return static_cast<Index>(rows.size()); }
};

inline BasisTable build_basis_table(const IntegrationSet& integ,
                                    const KernelSet& kernels,
                                    const BasisOptions& opts = {}) {
  BasisTable table;
  table.kernel_count = kernels.size();
  table.dense = opts.dense;
  table.cutoff = opts.cutoff;
  const Index n = integ.size();
  table.rows.resize(static_cast<size_t>(n));
  std::vector<std::string> failures(static_cast<size_t>(n));
  parallel_chunks(n, 64, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      try {
        table.rows[static_cast<size_t>(i)] =
            detail::basis_row(integ.points.row(i).transpose(), kernels, opts);
      } catch (const Error& err) {
        failures[static_cast<size_t>(i)] = err.what();
      }
    }
  });
  Index bad = 0;
  std::string first;
  for (const std::string& f : failures)
    if (!f.empty()) {
      if (bad == 0) first = f;
      ++bad;
    }
  if (bad > 0)
    throw Error(std::to_string(bad) + " of " + std::to_string(n) +
                " query points failed; first: " + first);
  return table;
}

}  // namespace rksim
