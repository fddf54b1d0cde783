#pragma once

#include "rksim/core.hpp"
#include "rksim/sampling.hpp"
#include "rksim/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace rksim {

using Json = nlohmann::json;

// Point clouds as "x y z" per line; '#' comments; commas treated as blanks.
inline Points load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("invalid input: cannot open " + path.string());
  std::vector<Vec3> pts;
  std::string line;
  while (std::getline(in, line)) {
    for (char& c : line)
      if (c == ',') c = ' ';
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (ls >> x >> y >> z) pts.emplace_back(x, y, z);
  }
  if (pts.size() < 4)
    throw Error("insufficient points: cloud file " + path.string() +
                " has fewer than 4 points");
  Points out(static_cast<Index>(pts.size()), 3);
  for (Index i = 0; i < out.rows(); ++i)
    out.row(i) = pts[static_cast<size_t>(i)].transpose();
  return out;
}

// Minimal OBJ reader: "v x y z" and triangular "f a b c" (1-based indices,
// "a/uv/n" suffixes ignored).
inline TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("invalid input: cannot open " + path.string());
  std::vector<Vec3> verts;
  std::vector<Eigen::Matrix<Index, 3, 1>> faces;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw Error("invalid input: malformed vertex in " + path.string());
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::array<Index, 3> idx;
      for (int c = 0; c < 3; ++c) {
        std::string tok;
        if (!(ls >> tok))
          throw Error("invalid input: non-triangular face in " + path.string());
        idx[static_cast<size_t>(c)] =
            static_cast<Index>(std::stoll(tok.substr(0, tok.find('/')))) - 1;
      }
      faces.push_back(Eigen::Matrix<Index, 3, 1>(idx[0], idx[1], idx[2]));
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (Index i = 0; i < mesh.vertices.rows(); ++i)
    mesh.vertices.row(i) = verts[static_cast<size_t>(i)].transpose();
  mesh.faces.resize(static_cast<Index>(faces.size()), 3);
  for (Index i = 0; i < mesh.faces.rows(); ++i)
    mesh.faces.row(i) = faces[static_cast<size_t>(i)].transpose();
  return mesh;
}

// Shape description as written in configs; resolved to a ShapeSource on use
// so mesh/cloud paths stay serializable.
struct ShapeDesc {
  std::string kind = "box";  // box | sphere | mesh | cloud
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  std::string path;  // mesh/cloud file, relative to the config

  ShapeSource resolve(const std::filesystem::path& base_dir) const {
    if (kind == "box") return ShapeSource::make_box(lo, hi);
    if (kind == "sphere") return ShapeSource::make_sphere(center, radius);
    if (kind == "mesh") return ShapeSource::make_mesh(load_obj(base_dir / path));
    if (kind == "cloud")
      return ShapeSource::make_cloud(load_cloud(base_dir / path));
    throw ValidationError("shape.kind", "invalid input: unknown shape kind '" +
                                            kind + "'");
  }
};

struct SceneConfig {
  std::uint32_t version = 1;
  std::string name = "scene";
  ShapeDesc shape;
  MaterialSpec material;
  Index integration_target = 1000;
  Index kernel_count = 100;
  Index mode_count = 16;
  double h = 0.01;
  double duration = 1.0;
  Vec3 gravity = Vec3(0.0, 0.0, -9.8);
  std::vector<BoundaryCondition> bcs;
  std::optional<GroundPlane> ground;
  SolverOptions solver;
  std::uint64_t seed = 0;

  Index step_count() const {
    return static_cast<Index>(std::llround(duration / h));
  }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization with field-path validation errors.
// ---------------------------------------------------------------------------

namespace detail {

inline const Json& require(const Json& j, const std::string& key,
                           const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end())
    throw ValidationError(path, "invalid input: missing field " + path);
  return *it;
}

inline double as_number(const Json& j, const std::string& path) {
  if (!j.is_number())
    throw ValidationError(path, "invalid input: " + path + " must be a number");
  return j.get<double>();
}

inline Index as_index(const Json& j, const std::string& path) {
  if (!j.is_number_integer())
    throw ValidationError(path,
                          "invalid input: " + path + " must be an integer");
  return j.get<Index>();
}

inline Vec3 as_vec3(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3)
    throw ValidationError(path, "invalid input: " + path +
                                    " must be an array of 3 numbers");
  return Vec3(as_number(j[0], path), as_number(j[1], path),
              as_number(j[2], path));
}

inline Json vec3_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

}  // namespace detail

inline SceneConfig parse_scene(const Json& j) {
  SceneConfig cfg;
  cfg.version = static_cast<std::uint32_t>(
      detail::as_index(detail::require(j, "version", "version"), "version"));
  if (cfg.version != 1)
    throw ValidationError("version", "invalid input: unsupported config version");
  if (j.contains("name")) cfg.name = j["name"].get<std::string>();

  {
    const Json& s = detail::require(j, "shape", "shape");
    cfg.shape.kind = detail::require(s, "kind", "shape.kind").get<std::string>();
    if (cfg.shape.kind == "box") {
      cfg.shape.lo = detail::as_vec3(detail::require(s, "min", "shape.min"), "shape.min");
      cfg.shape.hi = detail::as_vec3(detail::require(s, "max", "shape.max"), "shape.max");
    } else if (cfg.shape.kind == "sphere") {
      cfg.shape.center =
          detail::as_vec3(detail::require(s, "center", "shape.center"), "shape.center");
      cfg.shape.radius =
          detail::as_number(detail::require(s, "radius", "shape.radius"), "shape.radius");
    } else if (cfg.shape.kind == "mesh" || cfg.shape.kind == "cloud") {
      cfg.shape.path = detail::require(s, "path", "shape.path").get<std::string>();
    } else {
      throw ValidationError("shape.kind", "invalid input: unknown shape kind '" +
                                              cfg.shape.kind + "'");
    }
  }

  if (j.contains("material")) {
    const Json& m = j["material"];
    if (m.contains("young_modulus"))
      cfg.material.young_modulus = detail::as_number(m["young_modulus"], "material.young_modulus");
    if (m.contains("poisson_ratio"))
      cfg.material.poisson_ratio = detail::as_number(m["poisson_ratio"], "material.poisson_ratio");
    if (m.contains("density"))
      cfg.material.density = detail::as_number(m["density"], "material.density");
    if (m.contains("regions")) {
      Index r = 0;
      for (const Json& jr : m["regions"]) {
        const std::string path = "material.regions[" + std::to_string(r) + "]";
        MaterialRegion region;
        const std::string kind =
            detail::require(jr, "kind", path + ".kind").get<std::string>();
        if (kind == "box") {
          region.kind = MaterialRegion::Kind::box;
          region.box.lo = detail::as_vec3(detail::require(jr, "min", path + ".min"), path + ".min");
          region.box.hi = detail::as_vec3(detail::require(jr, "max", path + ".max"), path + ".max");
        } else if (kind == "shell") {
          region.kind = MaterialRegion::Kind::shell;
          region.center =
              detail::as_vec3(detail::require(jr, "center", path + ".center"), path + ".center");
          region.r_min = detail::as_number(detail::require(jr, "r_min", path + ".r_min"), path + ".r_min");
          region.r_max = detail::as_number(detail::require(jr, "r_max", path + ".r_max"), path + ".r_max");
        } else {
          throw ValidationError(path + ".kind",
                                "invalid input: unknown region kind '" + kind + "'");
        }
        region.young_modulus = jr.contains("young_modulus")
                                   ? detail::as_number(jr["young_modulus"], path + ".young_modulus")
                                   : cfg.material.young_modulus;
        region.poisson_ratio = jr.contains("poisson_ratio")
                                   ? detail::as_number(jr["poisson_ratio"], path + ".poisson_ratio")
                                   : cfg.material.poisson_ratio;
        region.density = jr.contains("density")
                             ? detail::as_number(jr["density"], path + ".density")
                             : cfg.material.density;
        cfg.material.regions.push_back(region);
        ++r;
      }
    }
  }

  {
    const Json& s = detail::require(j, "sampling", "sampling");
    cfg.integration_target = detail::as_index(
        detail::require(s, "integration_target", "sampling.integration_target"),
        "sampling.integration_target");
    cfg.kernel_count = detail::as_index(
        detail::require(s, "kernel_count", "sampling.kernel_count"),
        "sampling.kernel_count");
  }
  if (j.contains("modes"))
    cfg.mode_count = detail::as_index(
        detail::require(j["modes"], "count", "modes.count"), "modes.count");
  {
    const Json& t = detail::require(j, "time", "time");
    cfg.h = detail::as_number(detail::require(t, "h", "time.h"), "time.h");
    cfg.duration = detail::as_number(detail::require(t, "duration", "time.duration"),
                                     "time.duration");
  }
  if (j.contains("gravity")) cfg.gravity = detail::as_vec3(j["gravity"], "gravity");

  if (j.contains("boundary_conditions")) {
    Index b = 0;
    for (const Json& jb : j["boundary_conditions"]) {
      const std::string path = "boundary_conditions[" + std::to_string(b) + "]";
      BoundaryCondition bc;
      const std::string kind =
          detail::require(jb, "kind", path + ".kind").get<std::string>();
      if (kind == "fix_region" || kind == "twist_handle") {
        bc.kind = kind == "fix_region" ? BoundaryCondition::Kind::fix_region
                                       : BoundaryCondition::Kind::twist_handle;
        const Json& box = detail::require(jb, "box", path + ".box");
        bc.region.lo = detail::as_vec3(detail::require(box, "min", path + ".box.min"), path + ".box.min");
        bc.region.hi = detail::as_vec3(detail::require(box, "max", path + ".box.max"), path + ".box.max");
        if (kind == "twist_handle") {
          bc.axis = detail::as_vec3(detail::require(jb, "axis", path + ".axis"), path + ".axis");
          bc.origin = detail::as_vec3(detail::require(jb, "origin", path + ".origin"), path + ".origin");
          bc.total_angle = detail::as_number(
              detail::require(jb, "total_angle_deg", path + ".total_angle_deg"),
              path + ".total_angle_deg") *
              (EIGEN_PI / 180.0);
        }
      } else if (kind == "pull_points") {
        bc.kind = BoundaryCondition::Kind::pull_points;
        for (const Json& ji : detail::require(jb, "indices", path + ".indices"))
          bc.indices.push_back(detail::as_index(ji, path + ".indices"));
        bc.offset = detail::as_vec3(detail::require(jb, "offset", path + ".offset"), path + ".offset");
        if (jb.contains("ramp"))
          bc.ramp = detail::as_number(jb["ramp"], path + ".ramp");
      } else {
        throw ValidationError(path + ".kind",
                              "invalid input: unknown boundary condition kind '" + kind + "'");
      }
      if (jb.contains("kappa"))
        bc.kappa = detail::as_number(jb["kappa"], path + ".kappa");
      cfg.bcs.push_back(bc);
      ++b;
    }
  }

  if (j.contains("ground_plane")) {
    const Json& g = j["ground_plane"];
    GroundPlane plane;
    plane.normal = detail::as_vec3(detail::require(g, "normal", "ground_plane.normal"),
                                   "ground_plane.normal");
    plane.offset = detail::as_number(detail::require(g, "offset", "ground_plane.offset"),
                                     "ground_plane.offset");
    if (g.contains("stiffness"))
      plane.stiffness = detail::as_number(g["stiffness"], "ground_plane.stiffness");
    cfg.ground = plane;
  }

  if (j.contains("solver")) {
    const Json& s = j["solver"];
    if (s.contains("tolerance"))
      cfg.solver.newton_tol = detail::as_number(s["tolerance"], "solver.tolerance");
    if (s.contains("max_iterations"))
      cfg.solver.newton_max_iters = static_cast<int>(
          detail::as_index(s["max_iterations"], "solver.max_iterations"));
    if (s.contains("penalty_kappa"))
      cfg.solver.penalty_kappa = detail::as_number(s["penalty_kappa"], "solver.penalty_kappa");
    if (s.contains("psd_projection")) {
      if (!s["psd_projection"].is_boolean())
        throw ValidationError("solver.psd_projection",
                              "invalid input: solver.psd_projection must be a boolean");
      cfg.solver.psd_projection = s["psd_projection"].get<bool>();
    }
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  return cfg;
}

inline Json scene_to_json(const SceneConfig& cfg) {
  Json j;
  j["version"] = cfg.version;
  j["name"] = cfg.name;
  Json s;
  s["kind"] = cfg.shape.kind;
  if (cfg.shape.kind == "box") {
    s["min"] = detail::vec3_json(cfg.shape.lo);
    s["max"] = detail::vec3_json(cfg.shape.hi);
  } else if (cfg.shape.kind == "sphere") {
    s["center"] = detail::vec3_json(cfg.shape.center);
    s["radius"] = cfg.shape.radius;
  } else {
    s["path"] = cfg.shape.path;
  }
  j["shape"] = s;
  Json m;
  m["young_modulus"] = cfg.material.young_modulus;
  m["poisson_ratio"] = cfg.material.poisson_ratio;
  m["density"] = cfg.material.density;
  if (!cfg.material.regions.empty()) {
    Json regions = Json::array();
    for (const MaterialRegion& r : cfg.material.regions) {
      Json jr;
      if (r.kind == MaterialRegion::Kind::box) {
        jr["kind"] = "box";
        jr["min"] = detail::vec3_json(r.box.lo);
        jr["max"] = detail::vec3_json(r.box.hi);
      } else {
        jr["kind"] = "shell";
        jr["center"] = detail::vec3_json(r.center);
        jr["r_min"] = r.r_min;
        jr["r_max"] = r.r_max;
      }
      jr["young_modulus"] = r.young_modulus;
      jr["poisson_ratio"] = r.poisson_ratio;
      jr["density"] = r.density;
      regions.push_back(jr);
    }
    m["regions"] = regions;
  }
  j["material"] = m;
  j["sampling"] = {{"integration_target", cfg.integration_target},
                   {"kernel_count", cfg.kernel_count}};
  j["modes"] = {{"count", cfg.mode_count}};
  j["time"] = {{"h", cfg.h}, {"duration", cfg.duration}};
  j["gravity"] = detail::vec3_json(cfg.gravity);
  if (!cfg.bcs.empty()) {
    Json bcs = Json::array();
    for (const BoundaryCondition& bc : cfg.bcs) {
      Json jb;
      switch (bc.kind) {
        case BoundaryCondition::Kind::fix_region:
          jb["kind"] = "fix_region";
          jb["box"] = {{"min", detail::vec3_json(bc.region.lo)},
                       {"max", detail::vec3_json(bc.region.hi)}};
          break;
        case BoundaryCondition::Kind::twist_handle:
          jb["kind"] = "twist_handle";
          jb["box"] = {{"min", detail::vec3_json(bc.region.lo)},
                       {"max", detail::vec3_json(bc.region.hi)}};
          jb["axis"] = detail::vec3_json(bc.axis);
          jb["origin"] = detail::vec3_json(bc.origin);
          jb["total_angle_deg"] = bc.total_angle * (180.0 / EIGEN_PI);
          break;
        case BoundaryCondition::Kind::pull_points: {
          jb["kind"] = "pull_points";
          Json idx = Json::array();
          for (Index i : bc.indices) idx.push_back(i);
          jb["indices"] = idx;
          jb["offset"] = detail::vec3_json(bc.offset);
          if (bc.ramp > 0.0) jb["ramp"] = bc.ramp;
          break;
        }
      }
      if (bc.kappa > 0.0) jb["kappa"] = bc.kappa;
      bcs.push_back(jb);
    }
    j["boundary_conditions"] = bcs;
  }
  if (cfg.ground) {
    j["ground_plane"] = {{"normal", detail::vec3_json(cfg.ground->normal)},
                         {"offset", cfg.ground->offset}};
    if (cfg.ground->stiffness > 0.0)
      j["ground_plane"]["stiffness"] = cfg.ground->stiffness;
  }
  j["solver"] = {{"tolerance", cfg.solver.newton_tol},
                 {"max_iterations", cfg.solver.newton_max_iters},
                 {"psd_projection", cfg.solver.psd_projection}};
  if (cfg.solver.penalty_kappa > 0.0)
    j["solver"]["penalty_kappa"] = cfg.solver.penalty_kappa;
  j["seed"] = cfg.seed;
  return j;
}

// Cross-field checks that need the resolved shape.
inline void validate_scene(const SceneConfig& cfg, const ShapeSource& shape) {
  cfg.material.validate();
  if (!(cfg.h > 0.0))
    throw ValidationError("time.h", "invalid input: time.h must be positive");
  if (!(cfg.duration >= cfg.h))
    throw ValidationError("time.duration",
                          "invalid input: duration must be at least one step");
  if (cfg.integration_target < 8)
    throw ValidationError("sampling.integration_target",
                          "invalid input: integration target must be at least 8");
  if (cfg.kernel_count < 4)
    throw ValidationError("sampling.kernel_count",
                          "invalid input: need at least 4 kernels");
  if (cfg.mode_count + 1 > cfg.kernel_count)
    throw ValidationError("modes.count",
                          "invalid input: need mode count + 1 <= kernel count");
  const Aabb& bb = shape.bounds();
  auto boxes_overlap = [](const Aabb& a, const Aabb& b) {
    return (a.lo.array() <= b.hi.array()).all() &&
           (b.lo.array() <= a.hi.array()).all();
  };
  for (size_t r = 0; r < cfg.material.regions.size(); ++r) {
    const MaterialRegion& region = cfg.material.regions[r];
    const std::string path = "material.regions[" + std::to_string(r) + "]";
    if (region.kind == MaterialRegion::Kind::box) {
      if (!boxes_overlap(region.box, bb))
        throw ValidationError(path, "invalid input: region does not intersect the shape");
    } else {
      if (!(region.r_max > region.r_min) || region.r_min < 0.0)
        throw ValidationError(path, "invalid input: shell radii must satisfy 0 <= r_min < r_max");
      Aabb enclosing;
      enclosing.lo = region.center.array() - region.r_max;
      enclosing.hi = region.center.array() + region.r_max;
      if (!boxes_overlap(enclosing, bb))
        throw ValidationError(path, "invalid input: region does not intersect the shape");
    }
  }
  for (size_t b = 0; b < cfg.bcs.size(); ++b) {
    const BoundaryCondition& bc = cfg.bcs[b];
    const std::string path = "boundary_conditions[" + std::to_string(b) + "]";
    if (bc.kind != BoundaryCondition::Kind::pull_points &&
        !boxes_overlap(bc.region, bb))
      throw ValidationError(path + ".box",
                            "invalid input: selector does not intersect the shape");
    if (bc.kind == BoundaryCondition::Kind::pull_points && bc.indices.empty())
      throw ValidationError(path + ".indices",
                            "invalid input: selector matches no points");
  }
}

inline SceneConfig load_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("scene", "invalid input: cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ValidationError("scene", std::string("invalid input: JSON parse error: ") + e.what());
  }
  return parse_scene(j);
}

}  // namespace rksim
