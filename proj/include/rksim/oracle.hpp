#pragma once

#include "rksim/basis.hpp"
#include "rksim/core.hpp"
#include "rksim/elasticity.hpp"
#include "rksim/kinematics.hpp"

#include <vector>

namespace rksim {

// Total elastic energy of the full-order model at nodal displacements d
// (one 3-vector per kernel): F_i = I + sum_k d_k grad phi_k(X_i)^T.
inline double full_energy(const MatX& d, const BasisTable& table,
                          const IntegrationSet& integ,
                          const std::vector<LameParams>& lame) {
  if (d.rows() != table.kernel_count || d.cols() != 3)
    throw Error("contract violation: displacement matrix must be K x 3");
  double energy = 0.0;
  for (Index i = 0; i < integ.size(); ++i) {
    const BasisRow& row = table.rows[static_cast<size_t>(i)];
    Mat3 f = Mat3::Identity();
    for (size_t e = 0; e < row.active.size(); ++e)
      f.noalias() += d.row(row.active[e]).transpose() *
                     row.grads.row(static_cast<Index>(e));
    energy += integ.weights[i] * energy_density(f, lame[static_cast<size_t>(i)]);
  }
  return energy;
}

// Central-difference weight-space Hessian of the full-order energy at rest:
// the per-axis K x K blocks of d^2 E / dd^2 summed over x, y, z. This is the
// independent reference the analytic weight-space assembly is checked against.
inline MatX fd_weight_hessian(const BasisTable& table,
                              const IntegrationSet& integ,
                              const std::vector<LameParams>& lame,
                              double step_rel = 1e-5) {
  const Index k = table.kernel_count;
  const double eps = step_rel * integ.bbox.diagonal();
  MatX h = MatX::Zero(k, k);
  MatX d = MatX::Zero(k, 3);
  auto energy_at = [&]() { return full_energy(d, table, integ, lame); };
  for (int s = 0; s < 3; ++s) {
    for (Index a = 0; a < k; ++a) {
      // Diagonal: (E(+e) - 2 E(0) + E(-e)) / e^2 with E(0) = 0 exactly.
      d(a, s) = eps;
      const double ep = energy_at();
      d(a, s) = -eps;
      const double em = energy_at();
      d(a, s) = 0.0;
      h(a, a) += (ep + em) / (eps * eps);
      for (Index b = a + 1; b < k; ++b) {
        d(a, s) = eps;
        d(b, s) = eps;
        const double epp = energy_at();
        d(b, s) = -eps;
        const double epm = energy_at();
        d(a, s) = -eps;
        const double emm = energy_at();
        d(b, s) = eps;
        const double emp = energy_at();
        d(a, s) = 0.0;
        d(b, s) = 0.0;
        const double v = (epp - epm - emp + emm) / (4.0 * eps * eps);
        h(a, b) += v;
        h(b, a) += v;
      }
    }
  }
  return h;
}

// Per-frame least-squares projection of a reference trajectory onto the
// reduced kinematics: min_z sum_i |X_i + B_i z - x_i^ref|^2. The residual is
// the mean point-distance over all points and frames, normalized by the
// reference bounding-box diagonal.
struct FitResult {
  std::vector<VecX> z_star;   // one per frame
  double residual = 0.0;      // normalized mean distance
  bool rank_deficient = false;
};

inline FitResult fit_basis_residual(const std::vector<Points>& reference,
                                    const ReducedKinematics& kin,
                                    const Aabb& bbox) {
  if (reference.empty())
    throw Error("invalid input: empty reference trajectory");
  const Index n = kin.n_points();
  for (const Points& f : reference)
    if (f.rows() != n)
      throw Error("incomparable trajectories: reference frame size differs "
                  "from kinematics point count");
  const Index handles = kin.handles();
  const Index cols = 4 * handles;
  const MatX& bhat = kin.bhat();

  // Normal matrix sum_i B_i^T B_i expands bhat^T bhat across the three axes.
  const MatX small = bhat.transpose() * bhat;  // cols x cols
  MatX normal = MatX::Zero(kin.dof(), kin.dof());
  for (Index j = 0; j < handles; ++j)
    for (Index jp = 0; jp < handles; ++jp)
      for (int q = 0; q < 4; ++q)
        for (int qp = 0; qp < 4; ++qp) {
          const double v = small(4 * j + q, 4 * jp + qp);
          for (int a = 0; a < 3; ++a)
            normal(12 * j + 4 * a + q, 12 * jp + 4 * a + qp) = v;
        }

  FitResult out;
  Eigen::LDLT<MatX> ldlt(normal);
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  const bool deficient =
      ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= 1e-12 * std::max(dmax, 1e-300);
  Eigen::CompleteOrthogonalDecomposition<MatX> cod;
  if (deficient) {
    out.rank_deficient = true;
    cod.compute(normal);
  }

  const double diag = std::max(bbox.diagonal(), 1e-300);
  double accum = 0.0;
  Points fitted;
  for (const Points& frame : reference) {
    const MatX u = frame - kin.rest();  // N x 3 displacements
    const MatX rhs_small = bhat.transpose() * u;  // cols x 3
    VecX rhs(kin.dof());
    for (Index j = 0; j < handles; ++j)
      for (int a = 0; a < 3; ++a)
        for (int q = 0; q < 4; ++q)
          rhs[12 * j + 4 * a + q] = rhs_small(4 * j + q, a);
    VecX z = deficient ? VecX(cod.solve(rhs)) : VecX(ldlt.solve(rhs));
    kin.positions(z, fitted);
    accum += (fitted - frame).rowwise().norm().mean();
    out.z_star.push_back(std::move(z));
  }
  out.residual = accum / static_cast<double>(reference.size()) / diag;
  return out;
}

}  // namespace rksim
