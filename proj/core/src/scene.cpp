#include "c4g/scene.hpp"

#include <algorithm>
#include <cmath>

namespace c4g {

namespace {

Eigen::Vector3d rotate_z(const Eigen::Vector3d& v, double yaw) {
  double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]};
}

}  // namespace

double Primitive::sdf(const Eigen::Vector3d& world) const {
  Eigen::Vector3d q = rotate_z(world - center, -yaw);
  switch (kind) {
    case PrimitiveKind::kSphere:
      return q.norm() - size[0];
    case PrimitiveKind::kBox: {
      Eigen::Vector3d d = q.cwiseAbs() - size;
      Eigen::Vector3d dpos = d.cwiseMax(0.0);
      double inside = std::min(0.0, d.maxCoeff());
      return dpos.norm() + inside;
    }
    case PrimitiveKind::kCylinder: {
      double dr = std::hypot(q[0], q[1]) - size[0];
      double dz = std::abs(q[2]) - size[2];
      double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      double inside = std::min(0.0, std::max(dr, dz));
      return outside + inside;
    }
  }
  return 0.0;
}

Eigen::Vector3d Primitive::normal(const Eigen::Vector3d& world) const {
  const double h = 1e-6;
  Eigen::Vector3d g;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d up = world, dn = world;
    up[a] += h;
    dn[a] -= h;
    g[a] = (sdf(up) - sdf(dn)) / (2 * h);
  }
  double n = g.norm();
  return n > 1e-12 ? Eigen::Vector3d(g / n) : Eigen::Vector3d(0, 0, 1);
}

double Primitive::bounding_radius() const {
  switch (kind) {
    case PrimitiveKind::kSphere: return size[0];
    case PrimitiveKind::kCylinder: return std::hypot(size[0], size[2]);
    case PrimitiveKind::kBox: return size.norm();
  }
  return 0.0;
}

double SceneSpec::sdf(const Eigen::Vector3d& world) const {
  double best = 10.0 * workspace;  // far field for empty scenes
  for (const auto& p : primitives) best = std::min(best, p.sdf(world));
  return best;
}

int SceneSpec::closest_primitive(const Eigen::Vector3d& world) const {
  int best = -1;
  double bd = 1e18;
  for (size_t i = 0; i < primitives.size(); ++i) {
    double d = primitives[i].sdf(world);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

SceneSpec synth_scene(uint64_t seed, SceneKind kind, int object_count, double workspace) {
  C4G_CHECK_CONFIG(object_count >= 1, "object_count must be >= 1");
  SceneSpec scene;
  scene.workspace = workspace;
  scene.seed = seed;
  Rng rng(seed);

  const bool packed = kind == SceneKind::kPackedLike;
  for (int obj = 0; obj < object_count; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Primitive p;
      double kind_draw = rng.uniform();
      double s = packed ? 1.0 : 0.7;  // pile objects are smaller
      if (kind_draw < 0.45) {
        p.kind = PrimitiveKind::kBox;
        p.size = {s * rng.uniform(0.012, 0.030), s * rng.uniform(0.012, 0.030),
                  s * rng.uniform(0.025, 0.060)};
      } else if (kind_draw < 0.8) {
        p.kind = PrimitiveKind::kCylinder;
        double r = s * rng.uniform(0.012, 0.030);
        p.size = {r, r, s * rng.uniform(0.025, 0.055)};
      } else {
        p.kind = PrimitiveKind::kSphere;
        double r = s * rng.uniform(0.015, 0.032);
        p.size = {r, r, r};
      }
      p.yaw = rng.uniform(0.0, 2.0 * M_PI);
      double br = p.bounding_radius();
      double margin = br + 0.01;
      if (2 * margin >= workspace) continue;
      p.center[0] = rng.uniform(margin, workspace - margin);
      p.center[1] = rng.uniform(margin, workspace - margin);
      if (packed) {
        p.center[2] = p.size[2];  // rest on the floor (sphere: size[2] = r)
      } else {
        p.center[2] = rng.uniform(p.size[2], 0.45 * workspace);
      }
      bool collides = false;
      for (const auto& other : scene.primitives) {
        Eigen::Vector3d d = other.center - p.center;
        if (packed) d[2] = 0;  // upright objects only need planar separation
        if (d.norm() < other.bounding_radius() + br + 0.005) {
          collides = true;
          break;
        }
      }
      if (!collides) {
        scene.primitives.push_back(p);
        placed = true;
      }
    }
    C4G_CHECK(placed, ErrorKind::kPlacement,
              "could not place object " << obj << " without overlap after bounded retries");
  }
  return scene;
}

SceneSpec rotate_scene_90(const SceneSpec& scene, int k) {
  k = ((k % 4) + 4) % 4;
  SceneSpec out = scene;
  Eigen::Vector3d c = scene.center();
  for (auto& p : out.primitives) {
    Eigen::Vector3d d = p.center - c;
    for (int s = 0; s < k; ++s) d = Eigen::Vector3d(-d[1], d[0], d[2]);
    p.center = c + d;
    p.yaw += k * M_PI_2;
  }
  return out;
}

TsdfVolume tsdf_from_scene(const SceneSpec& scene, int grid, double noise_sigma,
                           uint64_t noise_seed, double truncation_voxels) {
  C4G_CHECK_CONFIG(grid >= 8, "TSDF grid must be at least 8");
  TsdfVolume vol;
  vol.grid = grid;
  vol.workspace = scene.workspace;
  vol.truncation = truncation_voxels * vol.cell();
  vol.values.resize(static_cast<size_t>(grid) * grid * grid);
  const double cell = vol.cell();
  size_t idx = 0;
  for (int z = 0; z < grid; ++z)
    for (int y = 0; y < grid; ++y)
      for (int x = 0; x < grid; ++x, ++idx) {
        Eigen::Vector3d w((x + 0.5) * cell, (y + 0.5) * cell, (z + 0.5) * cell);
        double d = scene.sdf(w) / vol.truncation;
        vol.values[idx] = static_cast<float>(std::clamp(d, -1.0, 1.0));
      }
  if (noise_sigma > 0) {
    Rng rng(noise_seed);
    for (auto& v : vol.values)
      v = static_cast<float>(std::clamp(v + noise_sigma * rng.normal(), -1.0, 1.0));
  }
  return vol;
}

namespace {

// Gripper frame from a closing axis and an approach axis (orthonormal).
Eigen::Matrix3d grasp_frame(const Eigen::Vector3d& closing, const Eigen::Vector3d& approach) {
  Eigen::Matrix3d r;
  r.col(0) = closing;
  r.col(2) = approach;
  r.col(1) = approach.cross(closing);
  return r;
}

// True when the straight-line approach to `position` along -approach is
// clear of every primitive except `self`.
bool approach_clear(const SceneSpec& scene, int self, const Eigen::Vector3d& position,
                    const Eigen::Vector3d& approach, const GripperModel& gripper) {
  for (int step = 1; step <= 8; ++step) {
    double t = gripper.finger_depth * step / 8.0 + 0.005;
    Eigen::Vector3d q = position - approach * t;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
      if (static_cast<int>(i) == self) continue;
      if (scene.primitives[i].sdf(q) < gripper.clearance) return false;
    }
  }
  return true;
}

bool inside_workspace(const SceneSpec& scene, const Eigen::Vector3d& p, double margin = 0.0) {
  for (int a = 0; a < 3; ++a)
    if (p[a] < margin || p[a] > scene.workspace - margin) return false;
  return true;
}

// Orthonormal vector perpendicular to v.
Eigen::Vector3d any_perpendicular(const Eigen::Vector3d& v) {
  Eigen::Vector3d other = std::abs(v[2]) < 0.9 ? Eigen::Vector3d(0, 0, 1) : Eigen::Vector3d(1, 0, 0);
  return v.cross(other).normalized();
}

}  // namespace

std::vector<GraspLabel> analytic_grasp_labels(const SceneSpec& scene, const GripperModel& gripper,
                                              int contacts_per_object, uint64_t seed) {
  std::vector<GraspLabel> labels;
  Rng rng(seed);
  const int approach_angles = 12;

  for (size_t oi = 0; oi < scene.primitives.size(); ++oi) {
    const auto& prim = scene.primitives[oi];
    for (int contact = 0; contact < contacts_per_object; ++contact) {
      // closing axis and required opening from the primitive's geometry
      Eigen::Vector3d closing;
      Eigen::Vector3d position = prim.center;
      double extent = 0;
      switch (prim.kind) {
        case PrimitiveKind::kBox: {
          int axis = static_cast<int>(rng.uniform_index(3));
          Eigen::Vector3d axes[3] = {rotate_z({1, 0, 0}, prim.yaw), rotate_z({0, 1, 0}, prim.yaw),
                                     {0, 0, 1}};
          closing = axes[axis];
          extent = 2 * prim.size[axis];
          // offset on the face pair's midplane, staying inside the faces
          int b = (axis + 1) % 3, c = (axis + 2) % 3;
          position += axes[b] * (rng.uniform(-0.6, 0.6) * prim.size[b]) +
                      axes[c] * (rng.uniform(-0.6, 0.6) * prim.size[c]);
          break;
        }
        case PrimitiveKind::kCylinder: {
          // sampled in the primitive's yaw frame so the full label set of a
          // rotated scene is the rotated label set, element for element
          double phi = rng.uniform(0.0, 2 * M_PI);
          closing = rotate_z({std::cos(phi), std::sin(phi), 0}, prim.yaw);
          extent = 2 * prim.size[0];
          position[2] += rng.uniform(-0.7, 0.7) * prim.size[2];
          break;
        }
        case PrimitiveKind::kSphere: {
          double phi = rng.uniform(0.0, 2 * M_PI);
          double cz = rng.uniform(-0.6, 0.6);
          double sz = std::sqrt(1 - cz * cz);
          closing = rotate_z({sz * std::cos(phi), sz * std::sin(phi), cz}, prim.yaw);
          extent = 2 * prim.size[0];
          break;
        }
      }
      double width = extent + gripper.clearance;
      bool width_ok = width <= gripper.max_width;

      // anchor the approach fan to the primitive's frame: for vertical
      // closings the axis itself carries no orientation, so the fan must
      // rotate with the yaw for label-set equivariance
      Eigen::Vector3d perp =
          rotate_z(any_perpendicular(rotate_z(closing, -prim.yaw)), prim.yaw);
      for (int j = 0; j < approach_angles; ++j) {
        double theta = 2 * M_PI * j / approach_angles;
        Eigen::Vector3d approach =
            (std::cos(theta) * perp + std::sin(theta) * closing.cross(perp)).normalized();
        GraspLabel label;
        label.position = position;
        label.rotation = matrix_to_quat(grasp_frame(closing, approach));
        label.width = width;
        bool ok = width_ok && inside_workspace(scene, position);
        // contacts on this geometry are exactly antiparallel; the cone check
        // matters for the arbitrary-pose test in grasp_succeeds
        ok = ok && approach_clear(scene, static_cast<int>(oi), position, approach, gripper);
        label.success = ok ? 1 : 0;
        labels.push_back(label);
      }
    }
  }
  return labels;
}

std::vector<OccupancySample> occupancy_samples(const SceneSpec& scene, int count, uint64_t seed,
                                               int grid_for_band) {
  C4G_CHECK_CONFIG(count >= 1, "occupancy sample count must be >= 1");
  std::vector<OccupancySample> out;
  out.reserve(count);
  Rng rng(seed);
  const double band = scene.workspace / grid_for_band;
  const int near_count = static_cast<int>(0.3 * count);
  auto uniform_point = [&]() {
    return Eigen::Vector3d(rng.uniform(0.0, scene.workspace), rng.uniform(0.0, scene.workspace),
                           rng.uniform(0.0, scene.workspace));
  };
  for (int i = 0; i < count; ++i) {
    Eigen::Vector3d p;
    if (i < near_count && !scene.primitives.empty()) {
      bool found = false;
      for (int attempt = 0; attempt < 400; ++attempt) {
        p = uniform_point();
        if (std::abs(scene.sdf(p)) <= band) {
          found = true;
          break;
        }
      }
      if (!found) p = uniform_point();
    } else {
      p = uniform_point();
    }
    OccupancySample s;
    s.point = p;
    s.occupied = scene.sdf(p) < 0 ? 1 : 0;
    out.push_back(s);
  }
  return out;
}

std::optional<int> grasp_succeeds(const SceneSpec& scene, const GripperModel& gripper,
                                  const Eigen::Vector3d& position, const Eigen::Matrix3d& rotation) {
  if (scene.primitives.empty() || !inside_workspace(scene, position)) return std::nullopt;
  const Eigen::Vector3d closing = rotation.col(0);
  const Eigen::Vector3d approach = rotation.col(2);

  // trace from the grasp center outward along +-closing to the two contacts
  auto trace = [&](const Eigen::Vector3d& dir) -> std::optional<Eigen::Vector3d> {
    double limit = gripper.max_width / 2 + 0.01;
    // the center may start inside the object (sdf < 0): walk outward in
    // fixed steps until the sign flips, then bisect
    const int steps = 64;
    double prev_d = scene.sdf(position);
    for (int i = 1; i <= steps; ++i) {
      double t = limit * i / steps;
      double d = scene.sdf(position + dir * t);
      if ((prev_d < 0) != (d < 0)) {
        double lo = limit * (i - 1) / steps, hi = t;
        for (int b = 0; b < 40; ++b) {
          double mid = (lo + hi) / 2;
          if ((scene.sdf(position + dir * mid) < 0) == (prev_d < 0))
            lo = mid;
          else
            hi = mid;
        }
        return position + dir * ((lo + hi) / 2);
      }
      prev_d = d;
    }
    return std::nullopt;
  };

  // grasp center must be inside or near the object between the fingers
  if (scene.sdf(position) > gripper.max_width / 4) return std::nullopt;
  auto c1 = trace(closing);
  auto c2 = trace(-closing);
  if (!c1 || !c2) return std::nullopt;

  int o1 = scene.closest_primitive(*c1);
  int o2 = scene.closest_primitive(*c2);
  if (o1 < 0 || o1 != o2) return std::nullopt;

  double width = (*c1 - *c2).norm();
  if (width + gripper.clearance > gripper.max_width) return std::nullopt;

  const double cone = gripper.friction_half_angle_deg * M_PI / 180.0;
  Eigen::Vector3d n1 = scene.primitives[o1].normal(*c1);
  Eigen::Vector3d n2 = scene.primitives[o2].normal(*c2);
  if (std::acos(std::clamp(n1.dot(closing), -1.0, 1.0)) > cone) return std::nullopt;
  if (std::acos(std::clamp(n2.dot(-closing), -1.0, 1.0)) > cone) return std::nullopt;

  if (!approach_clear(scene, o1, position, approach, gripper)) return std::nullopt;
  return o1;
}

}  // namespace c4g
