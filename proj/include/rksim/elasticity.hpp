#pragma once

#include "rksim/core.hpp"

namespace rksim {

// Stable Neo-Hookean material, reparametrized so the rest state is an exact
// energy minimum:
//   Psi(F) = 1/2 [ lambda_bar (det F - gamma)^2 + mu_bar tr(F^T F) - e0 ]
// with lambda_bar = lambda + mu, mu_bar = mu, gamma = 1 + mu_bar/lambda_bar,
// and e0 chosen so Psi(I) = 0.
struct LameParams {
  double lambda = 0.0;
  double mu = 0.0;
  double lambda_bar = 0.0;
  double mu_bar = 0.0;
  double gamma = 0.0;
  double gamma_m1 = 0.0;  // gamma - 1 = mu_bar/lambda_bar, kept unsubtracted
  double e0 = 0.0;
};

inline LameParams lame_from_engineering(double young, double nu) {
  if (!(young > 0.0) || !std::isfinite(young))
    throw ValidationError("young_modulus",
                          "invalid input: young_modulus must be positive");
  if (!std::isfinite(nu) || nu < 0.0)
    throw ValidationError("poisson_ratio",
                          "invalid input: poisson_ratio must lie in [0, 0.5)");
  if (nu >= 0.5)
    throw ValidationError(
        "poisson_ratio",
        "incompressible limit unsupported: poisson_ratio must be < 0.5");
  LameParams p;
  p.mu = young / (2.0 * (1.0 + nu));
  p.lambda = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  p.lambda_bar = p.lambda + p.mu;
  p.mu_bar = p.mu;
  p.gamma_m1 = p.mu_bar / p.lambda_bar;
  p.gamma = 1.0 + p.gamma_m1;
  p.e0 = p.mu_bar * p.mu_bar / p.lambda_bar + 3.0 * p.mu_bar;
  return p;
}

// det(I + D) - 1 evaluated without forming det F, exact in the entries of D.
// Near the rest state this avoids the catastrophic 1 - 1 cancellation that a
// direct determinant would introduce into the energy.
inline double det_shift(const Mat3& D) {
  const double e1 = D.trace();
  const double e2 = 0.5 * (e1 * e1 - (D * D).trace());
  const double e3 = D.determinant();
  return e1 + e2 + e3;
}

// Energy density in an algebraically identical incremental form,
//   Psi = 1/2 [ lambda_bar dJ^2 - 2 mu_bar (e2(D) + e3(D)) + mu_bar |D|_F^2 ],
// D = F - I, dJ = det F - 1 = e1 + e2 + e3. The gamma and e0 calibration
// terms cancel exactly in this expansion. Every remaining term is O(|D|^2),
// so Psi(I) = 0 exactly and finite-difference probes near rest are not
// drowned by roundoff.
inline double energy_density(const Mat3& F, const LameParams& p) {
  const Mat3 D = F - Mat3::Identity();
  const double e1 = D.trace();
  const double e2 = 0.5 * (e1 * e1 - (D * D).trace());
  const double e3 = D.determinant();
  const double dj = e1 + e2 + e3;
  return 0.5 * (p.lambda_bar * dj * dj - 2.0 * p.mu_bar * (e2 + e3) +
                p.mu_bar * D.squaredNorm());
}

// First Piola-Kirchhoff stress: dPsi/dF = mu_bar F + lambda_bar (J - gamma) J F^-T.
inline Mat3 pk1_stress(const Mat3& F, const LameParams& p) {
  const double dj = det_shift(F - Mat3::Identity());
  const double j = 1.0 + dj;
  if (j == 0.0)
    throw Error("non-invertible deformation: det F = 0 in pk1_stress");
  const Mat3 finv_t = F.inverse().transpose();
  return p.mu_bar * F + (p.lambda_bar * (dj - p.gamma_m1) * j) * finv_t;
}

// Row-major flattening (F11, F12, F13, F21, ...) used for all 9-vectors and
// 9x9 blocks in this library.
inline Vec9 vec_rowmajor(const Mat3& A) {
  Vec9 v;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) v[3 * a + b] = A(a, b);
  return v;
}

inline Mat3 unvec_rowmajor(const Vec9& v) {
  Mat3 A;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) A(a, b) = v[3 * a + b];
  return A;
}

// d^2 Psi / dF^2 as a symmetric 9x9 in the row-major flattening:
//   H = mu_bar I9 + lambda_bar (2J - gamma) J g g^T - lambda_bar (J - gamma) J W,
// g = vec(F^-T), W[(ab),(cd)] = (F^-1)_bc (F^-1)_da (from d(F^-T) = -F^-T dF^T F^-T).
inline Mat9 hessian_wrt_F(const Mat3& F, const LameParams& p) {
  const double dj = det_shift(F - Mat3::Identity());
  const double j = 1.0 + dj;
  if (j == 0.0)
    throw Error("non-invertible deformation: det F = 0 in hessian_wrt_F");
  const Mat3 finv = F.inverse();
  const Vec9 g = vec_rowmajor(finv.transpose());
  const double c_outer = p.lambda_bar * (2.0 * dj + 1.0 - p.gamma_m1) * j;
  const double c_w = p.lambda_bar * (dj - p.gamma_m1) * j;
  // Group the products so entry (i,j) and entry (j,i) round identically; the
  // two rank-structured terms can exceed the result by orders of magnitude
  // near inversion, and symmetry must survive that cancellation exactly.
  const Mat9 gg = g * g.transpose();
  Mat9 h = c_outer * gg;
  h.diagonal().array() += p.mu_bar;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 3; ++d)
          h(3 * a + b, 3 * c + d) -= c_w * (finv(b, c) * finv(d, a));
  return h;
}

// Clamps negative eigenvalues of a symmetric matrix to zero so Newton always
// sees a descent-compatible elastic block.
inline Mat9 psd_project(const Mat9& h) {
  const double scale = h.cwiseAbs().maxCoeff();
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1.0))
    throw Error("contract violation: psd_project requires a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Mat9> eig(h);
  if (eig.info() != Eigen::Success)
    throw Error("eigensolve failed: 9x9 symmetric eigendecomposition");
  Vec9 lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

struct CauchyStress {
  Mat3 sigma;
  Vec3 principals;  // eigenvalues of sigma, ascending
};

// sigma = P F^T / det F; principal stresses are its eigenvalues.
inline CauchyStress cauchy_stress(const Mat3& F, const LameParams& p) {
  const double j = 1.0 + det_shift(F - Mat3::Identity());
  if (!(j > 0.0))
    throw Error("inverted element: det F <= 0 in cauchy_stress");
  CauchyStress out;
  const Mat3 raw = pk1_stress(F, p) * F.transpose() / j;
  out.sigma = 0.5 * (raw + raw.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(out.sigma);
  if (eig.info() != Eigen::Success)
    throw Error("eigensolve failed: principal stress eigendecomposition");
  out.principals = eig.eigenvalues();
  return out;
}

}  // namespace rksim
