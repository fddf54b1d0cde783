#pragma once

#include "rksim/basis.hpp"
#include "rksim/core.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace rksim {

// ---------------------------------------------------------------------------
// Gram-style quadrature assembly: H = sum_i S_i S_i^T with a few columns per
// integration point. Columns are filled in parallel (each point owns its
// slots); the rank updates run sequentially in fixed chunk order, so results
// are bit-identical for any worker count.
// ---------------------------------------------------------------------------
template <class Fill>
MatX assemble_gram(Index dim, Index n_points, Index cols_per_point,
                   const Fill& fill) {
  MatX h = MatX::Zero(dim, dim);
  const Index chunk = 256;
  MatX s(dim, cols_per_point * std::min(chunk, std::max<Index>(n_points, 1)));
  for (Index base = 0; base < n_points; base += chunk) {
    const Index cnt = std::min(chunk, n_points - base);
    parallel_chunks(cnt, 32, [&](Index, Index b, Index e) {
      for (Index j = b; j < e; ++j)
        fill(base + j, s.middleCols(cols_per_point * j, cols_per_point));
    });
    h.selfadjointView<Eigen::Lower>().rankUpdate(
        s.leftCols(cols_per_point * cnt), 1.0);
  }
  return MatX(h.selfadjointView<Eigen::Lower>());
}

struct WeightSpaceHessian {
  MatX matrix;              // K x K, symmetric PSD, Pa * m
  Index integration_count = 0;
  bool dense_basis = false;
};

// (H_w)_kl = sum_i v_i (lambda_i + 4 mu_i) grad phi_k . grad phi_l — the
// x+y+z displacement blocks of the rest-state elastic Hessian collapsed into
// weight space.
inline WeightSpaceHessian assemble_weight_hessian(const BasisTable& table,
                                                  const IntegrationSet& integ) {
  WeightSpaceHessian out;
  out.integration_count = integ.size();
  out.dense_basis = table.dense;
  out.matrix = assemble_gram(
      table.kernel_count, integ.size(), 3, [&](Index i, auto cols) {
        cols.setZero();
        const BasisRow& row = table.rows[static_cast<size_t>(i)];
        const double w = std::sqrt(
            integ.weights[i] * (integ.lame_lambda[i] + 4.0 * integ.lame_mu[i]));
        for (size_t e = 0; e < row.active.size(); ++e)
          cols.row(row.active[e]) =
              w * row.grads.row(static_cast<Index>(e));
      });
  return out;
}

// Weak-form Laplace matrix: sum_i v_i grad phi_k . grad phi_l (the material
// independent specialization of the weight-space Hessian).
inline MatX assemble_laplace(const BasisTable& table,
                             const IntegrationSet& integ) {
  return assemble_gram(
      table.kernel_count, integ.size(), 3, [&](Index i, auto cols) {
        cols.setZero();
        const BasisRow& row = table.rows[static_cast<size_t>(i)];
        const double w = std::sqrt(integ.weights[i]);
        for (size_t e = 0; e < row.active.size(); ++e)
          cols.row(row.active[e]) =
              w * row.grads.row(static_cast<Index>(e));
      });
}

struct RkpmMassMatrix {
  MatX matrix;  // K x K, symmetric PSD, m^3
};

// M_kl = sum_i v_i phi_k(X_i) phi_l(X_i), the kernel-space volume Gram matrix.
inline RkpmMassMatrix assemble_mass_matrix(const BasisTable& table,
                                           const IntegrationSet& integ) {
  RkpmMassMatrix out;
  out.matrix = assemble_gram(
      table.kernel_count, integ.size(), 1, [&](Index i, auto cols) {
        cols.setZero();
        const BasisRow& row = table.rows[static_cast<size_t>(i)];
        const double w = std::sqrt(integ.weights[i]);
        for (size_t e = 0; e < row.active.size(); ++e)
          cols(row.active[e], 0) = w * row.values[static_cast<Index>(e)];
      });
  return out;
}

struct SkinningModes {
  MatX coeffs;       // K x (m+1); column 0 is the constant mode
  VecX eigenvalues;  // m+1, ascending
  Index count_nonconstant() const { return coeffs.cols() - 1; }
  double constant_weight() const { return coeffs.col(0).mean(); }
};

// Smallest m+1 generalized eigenpairs of H_w v = lambda M v. Eigenvectors are
// re-orthonormalized in the (shifted) M inner product, sign-fixed on their
// largest entry, and the leading mode is verified to be spatially constant.
inline SkinningModes solve_modes(const WeightSpaceHessian& hw,
                                 const RkpmMassMatrix& mass, Index m) {
  const Index k = hw.matrix.rows();
  if (mass.matrix.rows() != k || mass.matrix.cols() != k ||
      hw.matrix.cols() != k)
    throw Error("contract violation: matrix sizes disagree in solve_modes");
  if (m < 0 || m + 1 > k)
    throw ValidationError("modes.count",
                          "invalid input: need m + 1 <= kernel count");
  MatX shifted = mass.matrix;
  shifted.diagonal().array() +=
      1e-10 * mass.matrix.trace() / static_cast<double>(k);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatX> eig(hw.matrix, shifted);
  if (eig.info() != Eigen::Success)
    throw Error("eigensolve failed (generalized symmetric solver, status " +
                std::to_string(static_cast<int>(eig.info())) + ")");
  SkinningModes modes;
  modes.eigenvalues = eig.eigenvalues().head(m + 1);
  modes.coeffs = eig.eigenvectors().leftCols(m + 1);

  // Two passes of modified Gram-Schmidt in the shifted-M inner product.
  MatX mc = shifted * modes.coeffs;  // updated column-by-column below
  for (Index j = 0; j < m + 1; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) {
        const double proj = modes.coeffs.col(i).dot(mc.col(j));
        modes.coeffs.col(j) -= proj * modes.coeffs.col(i);
        mc.col(j) -= proj * mc.col(i);
      }
    }
    const double norm2 = modes.coeffs.col(j).dot(mc.col(j));
    if (!(norm2 > 0.0))
      throw Error("eigensolve failed: eigenvector collapsed during "
                  "re-orthonormalization");
    const double inv = 1.0 / std::sqrt(norm2);
    modes.coeffs.col(j) *= inv;
    mc.col(j) *= inv;
  }

  for (Index j = 0; j < m + 1; ++j) {
    Index arg = 0;
    modes.coeffs.col(j).cwiseAbs().maxCoeff(&arg);
    if (modes.coeffs(arg, j) < 0.0) modes.coeffs.col(j) = -modes.coeffs.col(j);
  }

  const double mean = modes.coeffs.col(0).mean();
  const double var =
      (modes.coeffs.col(0).array() - mean).square().mean();
  if (!(var <= 1e-6 * mean * mean))
    throw Error("basis defect: leading mode is not spatially constant "
                "(relative variance " +
                std::to_string(var / std::max(mean * mean, 1e-300)) + ")");
  return modes;
}

// First m+1 columns of an existing solve; eigenvectors are nested, so this is
// the exact mode set a smaller m would produce.
inline SkinningModes truncate_modes(const SkinningModes& modes, Index m) {
  if (m + 1 > modes.coeffs.cols())
    throw Error("contract violation: cannot truncate to more modes than solved");
  SkinningModes out;
  out.coeffs = modes.coeffs.leftCols(m + 1);
  out.eigenvalues = modes.eigenvalues.head(m + 1);
  return out;
}

// Skinning weights W^j(X) = sum_k phi_k(X) c_k^j for one cached row.
inline VecX weight_field(const SkinningModes& modes, const BasisRow& row) {
  VecX w = VecX::Zero(modes.coeffs.cols());
  for (size_t e = 0; e < row.active.size(); ++e)
    w += row.values[static_cast<Index>(e)] *
         modes.coeffs.row(row.active[e]).transpose();
  return w;
}

inline VecX weight_field(const SkinningModes& modes, const Vec3& x,
                         const KernelSet& kernels,
                         const BasisOptions& opts = {}) {
  return weight_field(modes, detail::basis_row(x, kernels, opts));
}

// N x (m+1) weights over a whole table.
inline MatX weight_table(const SkinningModes& modes, const BasisTable& table) {
  MatX w(table.size(), modes.coeffs.cols());
  for (Index i = 0; i < table.size(); ++i)
    w.row(i) =
        weight_field(modes, table.rows[static_cast<size_t>(i)]).transpose();
  return w;
}

// ---------------------------------------------------------------------------
// Binary container: "RKPM" magic, u32 version, u64 K, u64 m, row-major
// coefficient doubles, then m+1 eigenvalues. Little-endian, write-then-rename.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_exact(std::ofstream& out, const void* data, size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

inline void read_exact(std::ifstream& in, void* data, size_t bytes,
                       const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!in || in.gcount() != static_cast<std::streamsize>(bytes))
    throw Error(std::string("invalid input: truncated ") + what);
}

}  // namespace detail

inline void save_modes(const std::filesystem::path& path,
                       const SkinningModes& modes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("invalid input: cannot open " + tmp.string());
    const char magic[4] = {'R', 'K', 'P', 'M'};
    const std::uint32_t version = 1;
    const std::uint64_t k = static_cast<std::uint64_t>(modes.coeffs.rows());
    const std::uint64_t m = static_cast<std::uint64_t>(modes.coeffs.cols() - 1);
    detail::write_exact(out, magic, 4);
    detail::write_exact(out, &version, sizeof version);
    detail::write_exact(out, &k, sizeof k);
    detail::write_exact(out, &m, sizeof m);
    for (Index r = 0; r < modes.coeffs.rows(); ++r)
      for (Index c = 0; c < modes.coeffs.cols(); ++c) {
        const double v = modes.coeffs(r, c);
        detail::write_exact(out, &v, sizeof v);
      }
    for (Index c = 0; c < modes.eigenvalues.size(); ++c) {
      const double v = modes.eigenvalues[c];
      detail::write_exact(out, &v, sizeof v);
    }
    if (!out) throw Error("invalid input: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline SkinningModes load_modes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("invalid input: cannot open " + path.string());
  char magic[4];
  detail::read_exact(in, magic, 4, "modes header");
  if (std::memcmp(magic, "RKPM", 4) != 0)
    throw Error("invalid input: bad modes magic in " + path.string());
  std::uint32_t version = 0;
  detail::read_exact(in, &version, sizeof version, "modes header");
  if (version != 1)
    throw Error("invalid input: unsupported modes version " +
                std::to_string(version));
  std::uint64_t k = 0, m = 0;
  detail::read_exact(in, &k, sizeof k, "modes header");
  detail::read_exact(in, &m, sizeof m, "modes header");
  if (k == 0 || m + 1 > k || k > (1u << 24))
    throw Error("invalid input: implausible modes dimensions");
  SkinningModes modes;
  modes.coeffs.resize(static_cast<Index>(k), static_cast<Index>(m + 1));
  for (Index r = 0; r < modes.coeffs.rows(); ++r)
    for (Index c = 0; c < modes.coeffs.cols(); ++c)
      detail::read_exact(in, &modes.coeffs(r, c), sizeof(double), "modes data");
  modes.eigenvalues.resize(static_cast<Index>(m + 1));
  for (Index c = 0; c < modes.eigenvalues.size(); ++c)
    detail::read_exact(in, &modes.eigenvalues[c], sizeof(double), "modes data");
  if (!modes.coeffs.allFinite() || !modes.eigenvalues.allFinite())
    throw Error("invalid input: non-finite modes data");
  return modes;
}

}  // namespace rksim
