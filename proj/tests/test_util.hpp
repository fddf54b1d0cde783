#pragma once

#include <rksim/rksim.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace rktest {

using namespace rksim;

inline Mat3 random_in_range(std::mt19937& gen, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = u(gen);
  return m;
}

inline Vec3 random_vec3(std::mt19937& gen, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  return Vec3(u(gen), u(gen), u(gen));
}

inline Mat3 random_rotation(std::mt19937& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(gen), n(gen), n(gen), n(gen));
  while (q.norm() < 1e-6) q = Eigen::Quaterniond(n(gen), n(gen), n(gen), n(gen));
  q.normalize();
  return q.toRotationMatrix();
}

// Frobenius distance from F to its nearest rotation (polar factor).
inline double dist_from_rotations(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 flip = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
    flip(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * flip * svd.matrixV().transpose();
  return (f - r).norm();
}

// Random deformation gradient with determinant inside [dlo, dhi]; optionally
// at least `min_rot_dist` away from the rotation group.
inline Mat3 random_def_grad(std::mt19937& gen, double dlo, double dhi,
                            double min_rot_dist = 0.0) {
  for (int tries = 0; tries < 100000; ++tries) {
    const Mat3 f = Mat3::Identity() + random_in_range(gen, 0.45);
    const double j = f.determinant();
    if (j < dlo || j > dhi) continue;
    if (min_rot_dist > 0.0 && dist_from_rotations(f) < min_rot_dist) continue;
    return f;
  }
  throw std::runtime_error("random_def_grad: rejection sampling failed");
}

inline double rel_err(double got, double want, double floor = 1e-300) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

// sin of the largest principal angle between the column spans of a and b.
// Computed from the residual of projecting one orthonormalized span onto the
// other, which stays accurate for tiny angles.
inline double max_principal_angle_sin(const MatX& a, const MatX& b) {
  auto orthonormalize = [](const MatX& m) {
    Eigen::HouseholderQR<MatX> qr(m);
    return MatX(qr.householderQ() * MatX::Identity(m.rows(), m.cols()));
  };
  const MatX qa = orthonormalize(a);
  const MatX qb = orthonormalize(b);
  const MatX resid = qb - qa * (qa.transpose() * qb);
  Eigen::JacobiSVD<MatX> svd(resid);
  return std::min(svd.singularValues().maxCoeff(), 1.0);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman_rho(const std::vector<double>& a,
                           const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::runtime_error("spearman_rho: bad inputs");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cab = 0.0, caa = 0.0, cbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cab += (ra[i] - ma) * (rb[i] - mb);
    caa += (ra[i] - ma) * (ra[i] - ma);
    cbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cab / std::sqrt(std::max(caa * cbb, 1e-300));
}

inline IntegrationSet box_integ(const Vec3& lo, const Vec3& hi, Index target,
                                const MaterialSpec& mat = {}) {
  return sample_grid(ShapeSource::make_box(lo, hi), mat, target);
}

// DoF vector whose constant mode encodes the affine map x -> linear x + shift.
inline VecX constant_mode_dofs(const ReducedKinematics& kin,
                               const SkinningModes& modes, const Mat3& linear,
                               const Vec3& shift) {
  VecX z = VecX::Zero(kin.dof());
  const double w0 = modes.constant_weight();
  const Mat3 a = (linear - Mat3::Identity()) / w0;
  const Vec3 t = shift / w0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) z[4 * r + c] = a(r, c);
    z[4 * r + 3] = t[r];
  }
  return z;
}

inline double min_pairwise_distance(const Points& pts,
                                    const std::vector<Index>& subset) {
  double best = std::numeric_limits<double>::max();
  for (size_t a = 0; a < subset.size(); ++a)
    for (size_t b = a + 1; b < subset.size(); ++b)
      best = std::min(best, (pts.row(subset[a]) - pts.row(subset[b])).norm());
  return best;
}

}  // namespace rktest
