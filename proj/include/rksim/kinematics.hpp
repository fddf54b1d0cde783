#pragma once

#include "rksim/core.hpp"
#include "rksim/elasticity.hpp"
#include "rksim/modes.hpp"

#include <array>
#include <vector>

namespace rksim {

// ---------------------------------------------------------------------------
// Both kinematics are affine maps of their DoF vector z:
//   x_i(z) = X_i + B_i z,   vec(F_i(z)) = vec(I) + G_i z,
// with constant B_i, G_i. The integrator only touches this interface:
//   dof(), n_points(), positions(), def_grads(), elastic_gradient(),
//   elastic_hessian(), add_point_force(), add_point_outer(), mass(),
//   weighted_pull().
// ---------------------------------------------------------------------------

// Linear-blend-skinning kinematics over m+1 weight fields:
//   x = X + sum_j W^j(X) Z_j Xbar,   Xbar = (x, y, z, 1),
// z stacks the Z_j row-major: z[12 j + 4 a + q] = Z_j(a, q).
class ReducedKinematics {
 public:
  ReducedKinematics(const SkinningModes& modes, const BasisTable& table,
                    const IntegrationSet& integ) {
    if (modes.coeffs.rows() != table.kernel_count)
      throw Error("contract violation: modes and basis table kernel counts disagree");
    if (table.size() != integ.size())
      throw Error("contract violation: basis table and integration set sizes disagree");
    handles_ = modes.coeffs.cols();
    n_ = integ.size();
    rest_ = integ.points;
    const MatX weights = weight_table(modes, table);
    // Weight gradients: grad W^j(X_i) = sum_k grad phi_k(X_i) c_k^j.
    bhat_.setZero(n_, 4 * handles_);
    ghat_.setZero(3 * n_, 4 * handles_);
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table.rows[static_cast<size_t>(i)];
      Eigen::Matrix<double, 3, Eigen::Dynamic> gw(3, handles_);
      gw.setZero();
      for (size_t e = 0; e < row.active.size(); ++e)
        gw.noalias() += row.grads.row(static_cast<Index>(e)).transpose() *
                        modes.coeffs.row(row.active[e]);
      Vec4 xbar;
      xbar << rest_.row(i).transpose(), 1.0;
      for (Index j = 0; j < handles_; ++j)
        for (int q = 0; q < 4; ++q) {
          const Index col = 4 * j + q;
          bhat_(i, col) = weights(i, j) * xbar[q];
          for (int b = 0; b < 3; ++b) {
            double v = xbar[q] * gw(b, j);
            if (q == b) v += weights(i, j);
            ghat_(3 * i + b, col) = v;
          }
        }
    }
    build_mass(integ);
  }

  Index dof() const { return 12 * handles_; }
  Index handles() const { return handles_; }
  Index n_points() const { return n_; }
  const Points& rest() const { return rest_; }
  const MatX& mass() const { return mass_; }
  const MatX& bhat() const { return bhat_; }

  // z reshaped so position/def-grad evaluation becomes one GEMM:
  // zr[4j+q, a] = Z_j(a, q).
  MatX reshape(const VecX& z) const {
    MatX zr(4 * handles_, 3);
    for (Index j = 0; j < handles_; ++j)
      for (int a = 0; a < 3; ++a)
        for (int q = 0; q < 4; ++q)
          zr(4 * j + q, a) = z[12 * j + 4 * a + q];
    return zr;
  }

  void positions(const VecX& z, Points& out) const {
    const MatX zr = reshape(z);
    out = rest_;
    out.noalias() += bhat_ * zr;
  }

  void def_grads(const VecX& z, std::vector<Mat3>& out) const {
    const MatX zr = reshape(z);
    const MatX fm = ghat_ * zr;  // (3N) x 3; F_i = I + block^T
    out.resize(static_cast<size_t>(n_));
    for (Index i = 0; i < n_; ++i)
      out[static_cast<size_t>(i)] =
          Mat3::Identity() + fm.middleRows(3 * i, 3).transpose();
  }

  Vec3 position(Index i, const VecX& z) const {
    const MatX zr = reshape(z);
    return rest_.row(i).transpose() + (bhat_.row(i) * zr).transpose();
  }

  // g += sum_i G_i^T vec(P_i) for the given per-point 3x3 stresses.
  void elastic_gradient(const std::vector<Mat3>& stress, VecX& g) const {
    MatX s(3 * n_, 3);
    for (Index i = 0; i < n_; ++i)
      s.middleRows(3 * i, 3) = stress[static_cast<size_t>(i)].transpose();
    const MatX gr = ghat_.transpose() * s;  // (4J) x 3 in reshape layout
    scatter_reshaped(gr, g);
  }

  // H += sum_i G_i^T H9_i G_i, exploiting the block structure
  // G_i = I3 (x) ghat_i: block (a, a') of H is ghat^T H9(3a.., 3a'..) ghat.
  void elastic_hessian(const std::vector<Mat9>& h9, MatX& h) const {
    const Index cols = 4 * handles_;
    std::array<MatX, 6> blocks;
    for (auto& b : blocks) b.setZero(cols, cols);
    Eigen::Matrix<double, 3, Eigen::Dynamic> tmp(3, cols);
    for (Index i = 0; i < n_; ++i) {
      const auto gh = ghat_.middleRows(3 * i, 3);
      const Mat9& hi = h9[static_cast<size_t>(i)];
      int slot = 0;
      for (int a = 0; a < 3; ++a)
        for (int ap = a; ap < 3; ++ap, ++slot) {
          tmp.noalias() = hi.block<3, 3>(3 * a, 3 * ap) * gh;
          blocks[slot].noalias() += gh.transpose() * tmp;
        }
    }
    int slot = 0;
    for (int a = 0; a < 3; ++a)
      for (int ap = a; ap < 3; ++ap, ++slot)
        for (Index j = 0; j < handles_; ++j)
          for (Index jp = 0; jp < handles_; ++jp)
            for (int q = 0; q < 4; ++q)
              for (int qp = 0; qp < 4; ++qp) {
                const double v = blocks[slot](4 * j + q, 4 * jp + qp);
                h(12 * j + 4 * a + q, 12 * jp + 4 * ap + qp) += v;
                if (a != ap)
                  h(12 * jp + 4 * ap + qp, 12 * j + 4 * a + q) += v;
              }
  }

  // g += B_i^T f.
  void add_point_force(Index i, const Vec3& f, VecX& g) const {
    for (Index j = 0; j < handles_; ++j)
      for (int a = 0; a < 3; ++a)
        for (int q = 0; q < 4; ++q)
          g[12 * j + 4 * a + q] += bhat_(i, 4 * j + q) * f[a];
  }

  // H += B_i^T A B_i.
  void add_point_outer(Index i, const Mat3& a3, MatX& h) const {
    for (Index j = 0; j < handles_; ++j)
      for (Index jp = 0; jp < handles_; ++jp)
        for (int q = 0; q < 4; ++q)
          for (int qp = 0; qp < 4; ++qp) {
            const double bb = bhat_(i, 4 * j + q) * bhat_(i, 4 * jp + qp);
            for (int a = 0; a < 3; ++a)
              for (int ap = 0; ap < 3; ++ap)
                h(12 * j + 4 * a + q, 12 * jp + 4 * ap + qp) += bb * a3(a, ap);
          }
  }

  // sum_i w_i B_i^T f (constant pulls such as gravity).
  VecX weighted_pull(const VecX& w, const Vec3& f) const {
    const VecX acc = bhat_.transpose() * w;  // 4J
    VecX g = VecX::Zero(dof());
    for (Index j = 0; j < handles_; ++j)
      for (int a = 0; a < 3; ++a)
        for (int q = 0; q < 4; ++q)
          g[12 * j + 4 * a + q] = acc[4 * j + q] * f[a];
    return g;
  }

 private:
  void scatter_reshaped(const MatX& gr, VecX& g) const {
    for (Index j = 0; j < handles_; ++j)
      for (int a = 0; a < 3; ++a)
        for (int q = 0; q < 4; ++q)
          g[12 * j + 4 * a + q] += gr(4 * j + q, a);
  }

  void build_mass(const IntegrationSet& integ) {
    const Index cols = 4 * handles_;
    // mhat = sum_i rho_i v_i bhat_i^T bhat_i, shared by the three axes.
    MatX mhat = MatX::Zero(cols, cols);
    {
      MatX s = bhat_.transpose();  // cols x N
      for (Index i = 0; i < n_; ++i)
        s.col(i) *= std::sqrt(integ.density[i] * integ.weights[i]);
      mhat.selfadjointView<Eigen::Lower>().rankUpdate(s, 1.0);
      mhat = mhat.selfadjointView<Eigen::Lower>();
    }
    mass_.setZero(dof(), dof());
    for (Index j = 0; j < handles_; ++j)
      for (Index jp = 0; jp < handles_; ++jp)
        for (int q = 0; q < 4; ++q)
          for (int qp = 0; qp < 4; ++qp) {
            const double v = mhat(4 * j + q, 4 * jp + qp);
            for (int a = 0; a < 3; ++a)
              mass_(12 * j + 4 * a + q, 12 * jp + 4 * a + qp) = v;
          }
  }

  Index handles_ = 0;
  Index n_ = 0;
  Points rest_;
  MatX bhat_;  // N x 4J, bhat[i, 4j+q] = W^j(X_i) Xbar_q
  MatX ghat_;  // 3N x 4J, ghat[3i+b, 4j+q] = Xbar_q d_b W^j + [q==b] W^j
  MatX mass_;
};

// Full-order kinematics: one 3-vector displacement per kernel,
//   x_i = X_i + sum_k phi_k(X_i) d_k,  F_i = I + sum_k d_k grad phi_k^T,
// z[3k + a] = d_k[a].
class FullKinematics {
 public:
  FullKinematics(const BasisTable& table, const IntegrationSet& integ)
      : table_(&table), integ_(&integ) {
    if (table.size() != integ.size())
      throw Error("contract violation: basis table and integration set sizes disagree");
    k_ = table.kernel_count;
    n_ = integ.size();
    rest_ = integ.points;
    build_mass(integ);
  }

  Index dof() const { return 3 * k_; }
  Index kernels() const { return k_; }
  Index n_points() const { return n_; }
  const Points& rest() const { return rest_; }
  const MatX& mass() const { return mass_; }

  void positions(const VecX& z, Points& out) const {
    out = rest_;
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table_->rows[static_cast<size_t>(i)];
      Vec3 u = Vec3::Zero();
      for (size_t e = 0; e < row.active.size(); ++e)
        u += row.values[static_cast<Index>(e)] *
             z.segment<3>(3 * row.active[e]);
      out.row(i) += u.transpose();
    }
  }

  Vec3 position(Index i, const VecX& z) const {
    const BasisRow& row = table_->rows[static_cast<size_t>(i)];
    Vec3 u = rest_.row(i).transpose();
    for (size_t e = 0; e < row.active.size(); ++e)
      u += row.values[static_cast<Index>(e)] * z.segment<3>(3 * row.active[e]);
    return u;
  }

  void def_grads(const VecX& z, std::vector<Mat3>& out) const {
    out.resize(static_cast<size_t>(n_));
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table_->rows[static_cast<size_t>(i)];
      Mat3 f = Mat3::Identity();
      for (size_t e = 0; e < row.active.size(); ++e)
        f.noalias() += z.segment<3>(3 * row.active[e]) *
                       row.grads.row(static_cast<Index>(e));
      out[static_cast<size_t>(i)] = f;
    }
  }

  void elastic_gradient(const std::vector<Mat3>& stress, VecX& g) const {
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table_->rows[static_cast<size_t>(i)];
      const Mat3& p = stress[static_cast<size_t>(i)];
      for (size_t e = 0; e < row.active.size(); ++e)
        g.segment<3>(3 * row.active[e]).noalias() +=
            p * row.grads.row(static_cast<Index>(e)).transpose();
    }
  }

  void elastic_hessian(const std::vector<Mat9>& h9, MatX& h) const {
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table_->rows[static_cast<size_t>(i)];
      const Index a_cnt = static_cast<Index>(row.active.size());
      const auto& gphi = row.grads;  // A x 3
      const Mat9& hi = h9[static_cast<size_t>(i)];
      Eigen::Matrix<double, Eigen::Dynamic, 3> y(a_cnt, 3);
      MatX c(a_cnt, a_cnt);
      for (int a = 0; a < 3; ++a)
        for (int ap = a; ap < 3; ++ap) {
          y.noalias() = gphi * hi.block<3, 3>(3 * a, 3 * ap);
          c.noalias() = y * gphi.transpose();
          for (Index e = 0; e < a_cnt; ++e)
            for (Index f = 0; f < a_cnt; ++f) {
              const Index ke = row.active[static_cast<size_t>(e)];
              const Index kf = row.active[static_cast<size_t>(f)];
              h(3 * ke + a, 3 * kf + ap) += c(e, f);
              if (a != ap) h(3 * kf + ap, 3 * ke + a) += c(e, f);
            }
        }
    }
  }

  void add_point_force(Index i, const Vec3& f, VecX& g) const {
    const BasisRow& row = table_->rows[static_cast<size_t>(i)];
    for (size_t e = 0; e < row.active.size(); ++e)
      g.segment<3>(3 * row.active[e]) +=
          row.values[static_cast<Index>(e)] * f;
  }

  void add_point_outer(Index i, const Mat3& a3, MatX& h) const {
    const BasisRow& row = table_->rows[static_cast<size_t>(i)];
    for (size_t e = 0; e < row.active.size(); ++e)
      for (size_t f = 0; f < row.active.size(); ++f) {
        const double pp = row.values[static_cast<Index>(e)] *
                          row.values[static_cast<Index>(f)];
        h.block<3, 3>(3 * row.active[e], 3 * row.active[f]) += pp * a3;
      }
  }

  VecX weighted_pull(const VecX& w, const Vec3& f) const {
    VecX g = VecX::Zero(dof());
    for (Index i = 0; i < n_; ++i) {
      const BasisRow& row = table_->rows[static_cast<size_t>(i)];
      for (size_t e = 0; e < row.active.size(); ++e)
        g.segment<3>(3 * row.active[e]) +=
            (w[i] * row.values[static_cast<Index>(e)]) * f;
    }
    return g;
  }

 private:
  void build_mass(const IntegrationSet& integ) {
    const MatX mk = assemble_gram(
        k_, n_, 1, [&](Index i, auto cols) {
          cols.setZero();
          const BasisRow& row = table_->rows[static_cast<size_t>(i)];
          const double w = std::sqrt(integ.density[i] * integ.weights[i]);
          for (size_t e = 0; e < row.active.size(); ++e)
            cols(row.active[e], 0) = w * row.values[static_cast<Index>(e)];
        });
    mass_.setZero(dof(), dof());
    for (Index a = 0; a < k_; ++a)
      for (Index b = 0; b < k_; ++b)
        for (int c = 0; c < 3; ++c) mass_(3 * a + c, 3 * b + c) = mk(a, b);
  }

  const BasisTable* table_;
  const IntegrationSet* integ_;
  Index k_ = 0;
  Index n_ = 0;
  Points rest_;
  MatX mass_;
};

}  // namespace rksim
