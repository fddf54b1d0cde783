#pragma once

#include "rksim/core.hpp"
#include "rksim/elasticity.hpp"

#include <cmath>
#include <vector>

namespace rksim {

struct TriMesh {
  Points vertices;
  Eigen::Matrix<Index, Eigen::Dynamic, 3, Eigen::RowMajor> faces;
};

namespace detail {

// Ray/triangle test (Moller-Trumbore); used for parity-based inside queries.
// Watertight input is assumed; edge-grazing robustness is out of scope, the
// ray direction is fixed and incommensurate with axis-aligned geometry.
inline bool ray_hits_triangle(const Vec3& origin, const Vec3& dir,
                              const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 h = dir.cross(e2);
  const double a = e1.dot(h);
  if (std::abs(a) < 1e-14) return false;
  const double f = 1.0 / a;
  const Vec3 s = origin - v0;
  const double u = f * s.dot(h);
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = f * dir.dot(q);
  if (v < 0.0 || u + v > 1.0) return false;
  return f * e2.dot(q) > 0.0;
}

inline const Vec3& parity_ray_dir() {
  static const Vec3 dir = Vec3(0.5640135781, 0.2938175623, 0.7718391462).normalized();
  return dir;
}

}  // namespace detail

class ShapeSource {
 public:
  enum class Kind { box, sphere, mesh, cloud };

  static ShapeSource make_box(const Vec3& lo, const Vec3& hi) {
    ShapeSource s;
    s.kind_ = Kind::box;
    s.box_.lo = lo;
    s.box_.hi = hi;
    s.validate_bounds();
    return s;
  }
  static ShapeSource make_sphere(const Vec3& center, double radius) {
    ShapeSource s;
    s.kind_ = Kind::sphere;
    s.center_ = center;
    s.radius_ = radius;
    if (!(radius > 0.0) || !center.allFinite())
      throw ValidationError("shape.radius", "degenerate shape: sphere radius must be positive");
    s.box_.lo = center.array() - radius;
    s.box_.hi = center.array() + radius;
    return s;
  }
  static ShapeSource make_mesh(TriMesh mesh) {
    ShapeSource s;
    s.kind_ = Kind::mesh;
    s.mesh_ = std::move(mesh);
    if (s.mesh_.vertices.rows() < 4 || s.mesh_.faces.rows() < 4)
      throw ValidationError("shape.mesh", "degenerate shape: mesh needs at least 4 vertices and faces");
    if (!s.mesh_.vertices.allFinite())
      throw ValidationError("shape.mesh", "invalid input: non-finite mesh vertices");
    s.box_ = Aabb::of_points(s.mesh_.vertices);
    s.validate_bounds();
    return s;
  }
  static ShapeSource make_cloud(Points pts) {
    ShapeSource s;
    s.kind_ = Kind::cloud;
    s.cloud_ = std::move(pts);
    if (s.cloud_.rows() < 4)
      throw ValidationError("shape.cloud", "insufficient points: cloud sources need at least 4 points");
    if (!s.cloud_.allFinite())
      throw ValidationError("shape.cloud", "invalid input: non-finite cloud coordinates");
    s.box_ = Aabb::of_points(s.cloud_);
    s.validate_bounds();
    return s;
  }

  Kind kind() const { return kind_; }
  const Aabb& bounds() const { return box_; }
  const Points& cloud() const { return cloud_; }
  const TriMesh& mesh() const { return mesh_; }
  Vec3 sphere_center() const { return center_; }
  double sphere_radius() const { return radius_; }

  bool inside(const Vec3& p) const {
    switch (kind_) {
      case Kind::box:
        return box_.contains(p);
      case Kind::sphere:
        return (p - center_).squaredNorm() <= radius_ * radius_;
      case Kind::mesh: {
        if (!box_.contains(p)) return false;
        int hits = 0;
        for (Index f = 0; f < mesh_.faces.rows(); ++f)
          if (detail::ray_hits_triangle(p, detail::parity_ray_dir(),
                                        mesh_.vertices.row(mesh_.faces(f, 0)).transpose(),
                                        mesh_.vertices.row(mesh_.faces(f, 1)).transpose(),
                                        mesh_.vertices.row(mesh_.faces(f, 2)).transpose()))
            ++hits;
        return (hits % 2) == 1;
      }
      case Kind::cloud:
        throw Error("contract violation: inside() undefined for pass-through clouds");
    }
    return false;
  }

  // Fraction of a 32^3 probe grid over the bounding box that lands inside.
  // Exactly 1 for boxes; ~pi/6 for the inscribed sphere.
  double occupancy() const {
    constexpr int res = 32;
    if (kind_ == Kind::cloud) {
      std::vector<char> occupied(res * res * res, 0);
      const Vec3 ext = box_.extent();
      for (Index i = 0; i < cloud_.rows(); ++i) {
        Eigen::Vector3i c;
        for (int a = 0; a < 3; ++a) {
          double t = ext[a] > 0.0 ? (cloud_(i, a) - box_.lo[a]) / ext[a] : 0.0;
          c[a] = std::min(res - 1, std::max(0, static_cast<int>(t * res)));
        }
        occupied[(c[0] * res + c[1]) * res + c[2]] = 1;
      }
      Index marked = 0;
      for (char v : occupied) marked += v;
      return static_cast<double>(marked) / (res * res * res);
    }
    const Vec3 cell = box_.extent() / res;
    Index in = 0;
    for (int ix = 0; ix < res; ++ix)
      for (int iy = 0; iy < res; ++iy)
        for (int iz = 0; iz < res; ++iz) {
          const Vec3 p = box_.lo + Vec3((ix + 0.5) * cell[0], (iy + 0.5) * cell[1],
                                        (iz + 0.5) * cell[2]);
          if (inside(p)) ++in;
        }
    return static_cast<double>(in) / (res * res * res);
  }

 private:
  void validate_bounds() const {
    if (!box_.lo.allFinite() || !box_.hi.allFinite())
      throw ValidationError("shape", "invalid input: non-finite bounds");
    if (!((box_.hi - box_.lo).array() > 0.0).all())
      throw ValidationError("shape", "degenerate shape: bounding box must have positive extents");
  }

  Kind kind_ = Kind::box;
  Aabb box_;
  Vec3 center_ = Vec3::Zero();
  double radius_ = 0.0;
  TriMesh mesh_;
  Points cloud_;
};

struct MaterialRegion {
  enum class Kind { box, shell };
  Kind kind = Kind::box;
  Aabb box;                    // box regions
  Vec3 center = Vec3::Zero();  // shell regions
  double r_min = 0.0;
  double r_max = 0.0;
  double young_modulus = 5e6;
  double poisson_ratio = 0.45;
  double density = 1000.0;

  bool contains(const Vec3& p) const {
    if (kind == Kind::box) return box.contains(p);
    const double r2 = (p - center).squaredNorm();
    return r2 >= r_min * r_min && r2 <= r_max * r_max;
  }
};

struct MaterialSpec {
  double young_modulus = 5e6;
  double poisson_ratio = 0.45;
  double density = 1000.0;
  std::vector<MaterialRegion> regions;  // last matching region wins

  void validate() const {
    check_one("material.", young_modulus, poisson_ratio, density);
    for (size_t r = 0; r < regions.size(); ++r)
      check_one("material.regions[" + std::to_string(r) + "].",
                regions[r].young_modulus, regions[r].poisson_ratio,
                regions[r].density);
  }

  // (E, nu, rho) at a point; defaults where no region matches.
  void at(const Vec3& p, double& young, double& nu, double& rho) const {
    young = young_modulus;
    nu = poisson_ratio;
    rho = density;
    for (const MaterialRegion& r : regions)
      if (r.contains(p)) {
        young = r.young_modulus;
        nu = r.poisson_ratio;
        rho = r.density;
      }
  }

 private:
  static void check_one(const std::string& prefix, double young, double nu,
                        double rho) {
    if (!(young > 0.0) || !std::isfinite(young))
      throw ValidationError(prefix + "young_modulus",
                            "invalid input: young_modulus must be positive");
    if (!(nu > 0.0))
      throw ValidationError(prefix + "poisson_ratio",
                            "invalid input: poisson_ratio must lie in (0, 0.5)");
    if (nu >= 0.5)
      throw ValidationError(prefix + "poisson_ratio",
                            "incompressible limit unsupported: poisson_ratio must be < 0.5");
    if (!(rho > 0.0) || !std::isfinite(rho))
      throw ValidationError(prefix + "density",
                            "invalid input: density must be positive");
  }
};

// Integration points with per-point quadrature weights and material fields.
struct IntegrationSet {
  Points points;       // N x 3
  VecX weights;        // v_i, m^3
  VecX lame_lambda;    // Pa
  VecX lame_mu;        // Pa
  VecX density;        // kg/m^3
  Aabb bbox;           // source-shape bounds

  Index size() const { return points.rows(); }
  double total_volume() const { return weights.sum(); }
};

// Per-point constitutive parameters rebuilt from the stored Lame fields.
inline std::vector<LameParams> lame_table(const IntegrationSet& integ) {
  std::vector<LameParams> out(static_cast<size_t>(integ.size()));
  for (Index i = 0; i < integ.size(); ++i) {
    LameParams& p = out[static_cast<size_t>(i)];
    p.lambda = integ.lame_lambda[i];
    p.mu = integ.lame_mu[i];
    p.lambda_bar = p.lambda + p.mu;
    p.mu_bar = p.mu;
    p.gamma_m1 = p.mu_bar / p.lambda_bar;
    p.gamma = 1.0 + p.gamma_m1;
    p.e0 = p.mu_bar * p.mu_bar / p.lambda_bar + 3.0 * p.mu_bar;
  }
  return out;
}

namespace detail {

inline void fill_materials(IntegrationSet& set, const MaterialSpec& material) {
  material.validate();
  const Index n = set.size();
  set.lame_lambda.resize(n);
  set.lame_mu.resize(n);
  set.density.resize(n);
  for (Index i = 0; i < n; ++i) {
    double young, nu, rho;
    material.at(set.points.row(i).transpose(), young, nu, rho);
    const LameParams lame = lame_from_engineering(young, nu);
    set.lame_lambda[i] = lame.lambda;
    set.lame_mu[i] = lame.mu;
    set.density[i] = rho;
  }
}

}  // namespace detail

// Uniform-grid quadrature over the shape's bounding box. The per-axis
// resolution ceil(cbrt(target / occupancy)) makes the accepted interior count
// land near target_count for non-box shapes; each accepted cell carries its
// full cell volume. Cloud sources pass through with a voxel-occupancy volume
// estimate split evenly across points.
inline IntegrationSet sample_grid(const ShapeSource& shape,
                                  const MaterialSpec& material,
                                  Index target_count) {
  if (target_count < 8)
    throw ValidationError("sampling.integration_target",
                          "invalid input: integration target must be at least 8");
  IntegrationSet set;
  set.bbox = shape.bounds();
  if (shape.kind() == ShapeSource::Kind::cloud) {
    set.points = shape.cloud();
    const Index n = set.size();
    const double volume = set.bbox.volume() * shape.occupancy();
    set.weights = VecX::Constant(n, volume / static_cast<double>(n));
    detail::fill_materials(set, material);
    return set;
  }
  const double occ = shape.occupancy();
  if (occ <= 0.0) throw Error("degenerate shape: no interior detected");
  const Index res = static_cast<Index>(
      std::ceil(std::cbrt(static_cast<double>(target_count) / occ)));
  const Index n_axis = std::max<Index>(res, 2);
  const Vec3 cell = shape.bounds().extent() / static_cast<double>(n_axis);
  const double cell_volume = cell.prod();
  std::vector<Vec3> accepted;
  accepted.reserve(static_cast<size_t>(target_count));
  for (Index ix = 0; ix < n_axis; ++ix)
    for (Index iy = 0; iy < n_axis; ++iy)
      for (Index iz = 0; iz < n_axis; ++iz) {
        const Vec3 p = shape.bounds().lo +
                       Vec3((ix + 0.5) * cell[0], (iy + 0.5) * cell[1],
                            (iz + 0.5) * cell[2]);
        if (shape.inside(p)) accepted.push_back(p);
      }
  if (accepted.empty()) throw Error("degenerate shape: no interior grid cells");
  set.points.resize(static_cast<Index>(accepted.size()), 3);
  for (Index i = 0; i < set.points.rows(); ++i)
    set.points.row(i) = accepted[static_cast<size_t>(i)].transpose();
  set.weights = VecX::Constant(set.points.rows(), cell_volume);
  detail::fill_materials(set, material);
  return set;
}

// Greedy max-min subset selection. Deterministic: the seed is the point
// nearest the centroid, and every argmin/argmax tie resolves to the smallest
// index.
inline std::vector<Index> farthest_point_sampling(const Points& points,
                                                  Index count) {
  const Index n = points.rows();
  if (count < 1)
    throw ValidationError("sampling.kernel_count",
                          "invalid input: kernel count must be at least 1");
  if (count > n)
    throw Error("insufficient points: requested " + std::to_string(count) +
                " picks from " + std::to_string(n) + " points");
  if (!points.allFinite())
    throw Error("invalid input: non-finite point coordinates");

  const Vec3 centroid = points.colwise().mean().transpose();
  Index seed = 0;
  double best = std::numeric_limits<double>::max();
  for (Index i = 0; i < n; ++i) {
    const double d2 = (points.row(i).transpose() - centroid).squaredNorm();
    if (d2 < best) {
      best = d2;
      seed = i;
    }
  }

  std::vector<Index> picks;
  picks.reserve(static_cast<size_t>(count));
  picks.push_back(seed);
  VecX dist2 =
      (points.rowwise() - points.row(seed)).rowwise().squaredNorm();
  for (Index c = 1; c < count; ++c) {
    Index far = 0;
    double far_d2 = -1.0;
    for (Index i = 0; i < n; ++i)
      if (dist2[i] > far_d2) {
        far_d2 = dist2[i];
        far = i;
      }
    picks.push_back(far);
    dist2 = dist2.cwiseMin(
        (points.rowwise() - points.row(far)).rowwise().squaredNorm());
  }
  return picks;
}

// r_k = distance from center k to its second-nearest other center, i.e. the
// minimal radius whose ball reaches two other centers.
inline VecX kernel_radii(const Points& centers) {
  const Index k = centers.rows();
  if (k < 3)
    throw ValidationError("kernels",
                          "invalid input: kernel_radii needs at least 3 centers");
  VecX radii(k);
  for (Index a = 0; a < k; ++a) {
    double d1 = std::numeric_limits<double>::max();
    double d2 = std::numeric_limits<double>::max();
    for (Index b = 0; b < k; ++b) {
      if (b == a) continue;
      const double d = (centers.row(a) - centers.row(b)).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (d1 <= 0.0)
      throw Error("degenerate centers: duplicate center at index " +
                  std::to_string(a));
    radii[a] = d2;
  }
  return radii;
}

struct KernelSet {
  Points centers;  // K x 3
  VecX radii;      // K, all > 0

  Index size() const { return centers.rows(); }
};

// FPS-selected kernel centers over the integration points, with radii from
// the two-neighbor rule.
inline KernelSet build_kernel_set(const IntegrationSet& integ, Index count) {
  if (count < 4)
    throw ValidationError("sampling.kernel_count",
                          "invalid input: need at least 4 kernels");
  const std::vector<Index> picks = farthest_point_sampling(integ.points, count);
  KernelSet kernels;
  kernels.centers.resize(count, 3);
  for (Index i = 0; i < count; ++i)
    kernels.centers.row(i) = integ.points.row(picks[static_cast<size_t>(i)]);
  kernels.radii = kernel_radii(kernels.centers);
  return kernels;
}

}  // namespace rksim
