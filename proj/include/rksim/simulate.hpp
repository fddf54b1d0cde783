#pragma once

#include "rksim/core.hpp"
#include "rksim/elasticity.hpp"
#include "rksim/kinematics.hpp"
#include "rksim/sampling.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace rksim {

struct GroundPlane {
  Vec3 normal = Vec3(0, 0, 1);  // contact when x . normal < offset
  double offset = 0.0;
  double stiffness = 0.0;  // 0 -> scene default penalty
};

struct BoundaryCondition {
  enum class Kind { fix_region, twist_handle, pull_points };
  Kind kind = Kind::fix_region;
  Aabb region;                 // selector for fix_region / twist_handle
  std::vector<Index> indices;  // explicit selector for pull_points
  Vec3 axis = Vec3(1, 0, 0);   // twist
  Vec3 origin = Vec3::Zero();  // twist: a point on the axis
  double total_angle = 0.0;    // twist: radians reached at t = duration
  Vec3 offset = Vec3::Zero();  // pull
  double ramp = 0.0;           // pull: seconds to full offset (0 -> duration)
  double kappa = 0.0;          // 0 -> scene default penalty
};

namespace detail {

// A boundary condition resolved against a concrete point set: selected
// indices plus a time-parameterized rigid target per selected point.
struct ResolvedBC {
  std::vector<Index> sel;
  double kappa = 0.0;
  std::function<Vec3(const Vec3& rest, double t)> target;
};

inline ResolvedBC resolve_bc(const BoundaryCondition& bc, const Points& rest,
                             double duration, double default_kappa) {
  ResolvedBC r;
  r.kappa = bc.kappa > 0.0 ? bc.kappa : default_kappa;
  if (bc.kind == BoundaryCondition::Kind::pull_points) {
    r.sel = bc.indices;
    for (Index i : r.sel)
      if (i < 0 || i >= rest.rows())
        throw ValidationError("boundary_conditions.indices",
                              "invalid input: point index out of range");
  } else {
    for (Index i = 0; i < rest.rows(); ++i)
      if (bc.region.contains(rest.row(i).transpose())) r.sel.push_back(i);
  }
  if (r.sel.empty())
    throw ValidationError("boundary_conditions",
                          "invalid input: selector matches no points");
  switch (bc.kind) {
    case BoundaryCondition::Kind::fix_region:
      r.target = [](const Vec3& x, double) { return x; };
      break;
    case BoundaryCondition::Kind::twist_handle: {
      const Vec3 axis = bc.axis.normalized();
      const Vec3 origin = bc.origin;
      const double rate = duration > 0.0 ? bc.total_angle / duration : 0.0;
      r.target = [axis, origin, rate](const Vec3& x, double t) {
        // Evaluate eagerly: returning the unevaluated sum would reference the
        // temporary rotated vector after it dies.
        return Vec3(origin + Eigen::AngleAxisd(rate * t, axis) * (x - origin));
      };
      break;
    }
    case BoundaryCondition::Kind::pull_points: {
      const Vec3 offset = bc.offset;
      const double ramp = bc.ramp > 0.0 ? bc.ramp : duration;
      r.target = [offset, ramp](const Vec3& x, double t) {
        const double s = ramp > 0.0 ? std::min(t / ramp, 1.0) : 1.0;
        return Vec3(x + s * offset);
      };
      break;
    }
  }
  return r;
}

}  // namespace detail

struct SolverOptions {
  int newton_max_iters = 20;
  double newton_tol = 1e-8;
  int max_line_search = 30;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  bool psd_projection = true;
  double penalty_kappa = 0.0;  // 0 -> 1e4 * max(lambda + 2 mu) * mean v
};

struct NewtonReport {
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  bool ridge_used = false;
  bool monotone = true;
  double grad_inf = 0.0;
  double energy = 0.0;
};

// Minimizes a smooth objective with Newton directions and a weak-Wolfe line
// search (Armijo c1, curvature c2, bisection bracketing). The objective is
// obj(z, grad_or_null, hess_or_null) -> energy.
template <class Obj>
VecX newton_minimize(VecX z, const Obj& obj, int max_iters, double tol,
                     double scale, NewtonReport& rep, double c1 = 1e-4,
                     double c2 = 0.9, int max_ls = 30) {
  const Index n = z.size();
  VecX g(n), gtrial(n);
  MatX h(n, n);
  double energy = obj(z, &g, &h);
  rep = NewtonReport{};
  rep.energy = energy;
  rep.grad_inf = g.cwiseAbs().maxCoeff();
  if (!std::isfinite(energy)) throw Error("diverged state: non-finite energy");

  for (int it = 0; it < max_iters; ++it) {
    if (rep.grad_inf < tol * scale) {
      rep.converged = true;
      break;
    }
    Eigen::LDLT<MatX> ldlt(h);
    VecX p = ldlt.solve(-g);
    double gp = g.dot(p);
    if (!p.allFinite() || !(gp < 0.0)) {
      MatX hr = h;
      hr.diagonal().array() += 1e-8 * h.trace() / static_cast<double>(n);
      p = Eigen::LDLT<MatX>(hr).solve(-g);
      gp = g.dot(p);
      rep.ridge_used = true;
      if (!p.allFinite() || !(gp < 0.0)) {
        rep.stalled = true;
        break;
      }
    }

    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double alpha = 1.0;
    double best_alpha = -1.0, best_energy = energy;
    bool accepted = false;
    for (int ls = 0; ls < max_ls; ++ls) {
      const VecX ztrial = z + alpha * p;
      const double etrial = obj(ztrial, &gtrial, nullptr);
      if (!std::isfinite(etrial) || etrial > energy + c1 * alpha * gp) {
        hi = alpha;
        alpha = 0.5 * (lo + hi);
        continue;
      }
      if (etrial < best_energy) {
        best_energy = etrial;
        best_alpha = alpha;
      }
      const double slope = gtrial.dot(p);
      if (slope < c2 * gp) {
        lo = alpha;
        alpha = std::isinf(hi) ? 2.0 * alpha : 0.5 * (lo + hi);
        continue;
      }
      if (slope > -c2 * gp) {
        // Strong-Wolfe guard: the slope flipped well past zero, so this trial
        // overshot the 1D minimum; accepting it can hop into a spurious basin.
        hi = alpha;
        alpha = 0.5 * (lo + hi);
        continue;
      }
      accepted = true;
      break;
    }
    if (!accepted) {
      if (best_alpha > 0.0) {
        // All Wolfe trials exhausted; keep the best sufficient-decrease point.
        z += best_alpha * p;
        energy = obj(z, &g, &h);
        rep.grad_inf = g.cwiseAbs().maxCoeff();
        rep.iterations = it + 1;
      }
      rep.stalled = true;
      break;
    }
    z += alpha * p;
    const double eprev = energy;
    energy = obj(z, &g, &h);
    rep.monotone = rep.monotone && energy <= eprev;
    rep.grad_inf = g.cwiseAbs().maxCoeff();
    rep.energy = energy;
    rep.iterations = it + 1;
    if (!std::isfinite(energy)) throw Error("diverged state: non-finite energy");
  }
  rep.energy = energy;
  return z;
}

// Incremental-potential system over any affine kinematics:
//   E(z) = 1/(2 h^2) (z - ztilde)^T M (z - ztilde) + sum_i v_i Psi(F_i(z))
//          - sum_i rho_i v_i g . x_i(z) + penalties + ground contact.
template <class Kin>
class ImplicitSystem {
 public:
  ImplicitSystem(const Kin& kin, const IntegrationSet& integ,
                 const std::vector<BoundaryCondition>& bcs, double duration,
                 Vec3 gravity, std::optional<GroundPlane> ground,
                 const SolverOptions& opts)
      : kin_(&kin), integ_(&integ), gravity_(gravity), ground_(ground),
        opts_(opts) {
    const Index n = integ.size();
    lame_ = lame_table(integ);
    double max_stiff = 0.0;
    for (const LameParams& p : lame_)
      max_stiff = std::max(max_stiff, p.lambda + 2.0 * p.mu);
    default_kappa_ = opts.penalty_kappa > 0.0
                         ? opts.penalty_kappa
                         : 1e4 * max_stiff * integ.weights.mean();
    for (const BoundaryCondition& bc : bcs)
      bcs_.push_back(detail::resolve_bc(bc, integ.points, duration, default_kappa_));
    if (ground_ && !(ground_->stiffness > 0.0))
      ground_->stiffness = default_kappa_;

    // Constant pieces: gravity pull, gravity rest offset, penalty Hessian.
    VecX rho_v = integ.density.cwiseProduct(integ.weights);
    gravity_pull_ = kin.weighted_pull(rho_v, gravity);
    gravity_rest_ = 0.0;
    for (Index i = 0; i < n; ++i)
      gravity_rest_ += rho_v[i] * gravity.dot(integ.points.row(i).transpose());
    bc_hessian_.setZero(kin.dof(), kin.dof());
    for (const detail::ResolvedBC& bc : bcs_)
      for (Index i : bc.sel)
        kin_->add_point_outer(i, bc.kappa * Mat3::Identity(), bc_hessian_);

    // Convergence scale: mu_bar-weighted volume over the bbox diagonal.
    double muv = 0.0;
    for (Index i = 0; i < n; ++i) muv += integ.weights[i] * integ.lame_mu[i];
    scale_ = muv / std::max(integ.bbox.diagonal(), 1e-300);
  }

  Index dof() const { return kin_->dof(); }
  double convergence_scale() const { return scale_; }
  double default_kappa() const { return default_kappa_; }
  const Kin& kinematics() const { return *kin_; }
  const IntegrationSet& integ() const { return *integ_; }
  const std::vector<LameParams>& lame() const { return lame_; }

  // Energy/gradient/Hessian of the incremental potential at z, stepping from
  // (z_t, zdot_t) to time t_next = t + h. h <= 0 evaluates the static
  // potential (no inertia). min_det, when requested, reports the smallest
  // det F over the integration points at z.
  double eval(const VecX& z, const VecX& z_t, const VecX& zdot, double h,
              double t_next, VecX* grad, MatX* hess,
              double* min_det = nullptr) const {
    const Index n = integ_->size();
    if (grad) grad->setZero(dof());
    if (hess) hess->setZero(dof(), dof());
    double energy = 0.0;

    if (h > 0.0) {
      const VecX dz = z - (z_t + h * zdot);
      const VecX mdz = kin_->mass() * dz;
      const double inv_h2 = 1.0 / (h * h);
      energy += 0.5 * inv_h2 * dz.dot(mdz);
      if (grad) *grad += inv_h2 * mdz;
      if (hess) *hess += inv_h2 * kin_->mass();
    }

    kin_->positions(z, xbuf_);
    kin_->def_grads(z, fbuf_);
    if (grad) sbuf_.resize(static_cast<size_t>(n));
    if (hess) hbuf_.resize(static_cast<size_t>(n));
    if (min_det) *min_det = std::numeric_limits<double>::max();
    for (Index i = 0; i < n; ++i) {
      const Mat3& f = fbuf_[static_cast<size_t>(i)];
      const LameParams& p = lame_[static_cast<size_t>(i)];
      const double v = integ_->weights[i];
      if (min_det) *min_det = std::min(*min_det, f.determinant());
      energy += v * energy_density(f, p);
      if (grad) sbuf_[static_cast<size_t>(i)] = v * pk1_stress(f, p);
      if (hess) {
        Mat9 h9 = hessian_wrt_F(f, p);
        if (opts_.psd_projection) h9 = psd_project(h9);
        hbuf_[static_cast<size_t>(i)] = v * h9;
      }
    }
    if (grad) kin_->elastic_gradient(sbuf_, *grad);
    if (hess) kin_->elastic_hessian(hbuf_, *hess);

    energy -= gravity_pull_.dot(z) + gravity_rest_;
    if (grad) *grad -= gravity_pull_;

    for (const detail::ResolvedBC& bc : bcs_)
      for (Index i : bc.sel) {
        const Vec3 diff = xbuf_.row(i).transpose() -
                          bc.target(integ_->points.row(i).transpose(), t_next);
        energy += 0.5 * bc.kappa * diff.squaredNorm();
        if (grad) kin_->add_point_force(i, bc.kappa * diff, *grad);
      }
    if (hess) *hess += bc_hessian_;

    if (ground_) {
      const Vec3 nrm = ground_->normal.normalized();
      const double kc = ground_->stiffness;
      for (Index i = 0; i < n; ++i) {
        const double s = xbuf_.row(i).dot(nrm) - ground_->offset;
        if (s < 0.0) {
          const double v = integ_->weights[i];
          energy += 0.5 * kc * v * s * s;
          if (grad) kin_->add_point_force(i, (kc * v * s) * nrm, *grad);
          if (hess)
            kin_->add_point_outer(i, (kc * v) * (nrm * nrm.transpose()), *hess);
        }
      }
    }
    return energy;
  }

  // Static residual (no inertia) at a state; used for equilibrium checks.
  double static_gradient(const VecX& z, double t, VecX& grad) const {
    return eval(z, z, VecX::Zero(dof()), 0.0, t, &grad, nullptr);
  }

 private:
  const Kin* kin_;
  const IntegrationSet* integ_;
  std::vector<detail::ResolvedBC> bcs_;
  Vec3 gravity_;
  std::optional<GroundPlane> ground_;
  SolverOptions opts_;
  std::vector<LameParams> lame_;
  double default_kappa_ = 0.0;
  VecX gravity_pull_;
  double gravity_rest_ = 0.0;
  MatX bc_hessian_;
  double scale_ = 1.0;

  mutable Points xbuf_;
  mutable std::vector<Mat3> fbuf_;
  mutable std::vector<Mat3> sbuf_;
  mutable std::vector<Mat9> hbuf_;
};

struct SimState {
  VecX z;
  VecX zdot;
  double t = 0.0;
};

struct StepStats {
  NewtonReport newton;
  double wall_seconds = 0.0;
  double max_def_grad_norm = 0.0;
};

// One backward-Euler step: minimize the incremental potential from the
// inertial predictor, then update velocity by finite difference.
template <class Kin>
StepStats step(const ImplicitSystem<Kin>& sys, SimState& state, double h,
               const SolverOptions& opts) {
  if (!(h > 0.0))
    throw ValidationError("time.h", "invalid input: timestep must be positive");
  if (!state.z.allFinite() || !state.zdot.allFinite())
    throw Error("diverged state: non-finite DoFs");
  Timer timer;
  const double t_next = state.t + h;
  const VecX z_t = state.z;
  const VecX zdot_t = state.zdot;
  // Inversion filter: once the solve starts from an inversion-free state,
  // line-search trials that invert an element report infinite energy and get
  // rejected, which keeps the iterates inside the physical basin. A solve
  // that already starts inverted runs unfiltered so it can recover.
  bool filter_armed = false;
  bool first_eval = true;
  auto obj = [&](const VecX& z, VecX* g, MatX* hess) {
    double dmin = 0.0;
    const double e = sys.eval(z, z_t, zdot_t, h, t_next, g, hess, &dmin);
    if (first_eval) {
      first_eval = false;
      filter_armed = dmin > 0.0;
    } else if (filter_armed && !(dmin > 0.0)) {
      return std::numeric_limits<double>::infinity();
    }
    return e;
  };
  StepStats stats;
  VecX z1 = newton_minimize(z_t + h * zdot_t, obj, opts.newton_max_iters,
                            opts.newton_tol, sys.convergence_scale(),
                            stats.newton, opts.wolfe_c1, opts.wolfe_c2,
                            opts.max_line_search);
  if (!z1.allFinite()) throw Error("diverged state: non-finite DoFs after step");
  state.zdot = (z1 - z_t) / h;
  state.z = z1;
  state.t = t_next;

  std::vector<Mat3> fbuf;
  sys.kinematics().def_grads(state.z, fbuf);
  for (const Mat3& f : fbuf)
    stats.max_def_grad_norm = std::max(stats.max_def_grad_norm, f.norm());
  stats.wall_seconds = timer.seconds();
  return stats;
}

struct SimResult {
  std::vector<Points> frames;  // frames[0] is the rest/initial configuration
  std::vector<StepStats> steps;
  double h = 0.0;

  double total_seconds() const {
    double s = 0.0;
    for (const StepStats& st : steps) s += st.wall_seconds;
    return s;
  }
};

// Runs `steps` backward-Euler steps from rest (z = 0) unless an initial state
// is supplied; records positions each frame.
template <class Kin>
SimResult run_simulation(const ImplicitSystem<Kin>& sys, double h, Index n_steps,
                         const SolverOptions& opts,
                         const SimState* initial = nullptr) {
  SimState state;
  if (initial) {
    state = *initial;
  } else {
    state.z = VecX::Zero(sys.dof());
    state.zdot = VecX::Zero(sys.dof());
  }
  SimResult result;
  result.h = h;
  result.frames.reserve(static_cast<size_t>(n_steps) + 1);
  Points x;
  sys.kinematics().positions(state.z, x);
  result.frames.push_back(x);
  for (Index s = 0; s < n_steps; ++s) {
    result.steps.push_back(step(sys, state, h, opts));
    sys.kinematics().positions(state.z, x);
    result.frames.push_back(x);
  }
  return result;
}

struct StressField {
  MatX principals;             // N x 3, ascending per point, clamped
  std::vector<Index> inverted; // points with det F <= 0 (principals zeroed)
};

// Cauchy principal stresses per point at a given state, clamped to a display
// range.
template <class Kin>
StressField evaluate_stress_field(const Kin& kin,
                                  const std::vector<LameParams>& lame,
                                  const VecX& z, double clamp_abs = 1e6) {
  std::vector<Mat3> fbuf;
  kin.def_grads(z, fbuf);
  StressField out;
  out.principals.setZero(kin.n_points(), 3);
  for (Index i = 0; i < kin.n_points(); ++i) {
    const Mat3& f = fbuf[static_cast<size_t>(i)];
    if (!(f.determinant() > 0.0)) {
      out.inverted.push_back(i);
      continue;
    }
    const CauchyStress cs = cauchy_stress(f, lame[static_cast<size_t>(i)]);
    out.principals.row(i) = cs.principals.transpose().cwiseMax(-clamp_abs).cwiseMin(clamp_abs);
  }
  return out;
}

}  // namespace rksim
