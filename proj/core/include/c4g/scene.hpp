// Procedural scenes with analytic signed distance functions, TSDF
// rasterization, antipodal grasp labels and occupancy sampling. Replaces the
// physics pipeline: labels come from a closed-form antipodal criterion
// instead of simulated executions, which keeps every generator a pure
// function of (seed, config) and makes label sets exactly rigid-motion
// consistent.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "c4g/error.hpp"
#include "c4g/rng.hpp"
#include "c4g/rotation.hpp"

namespace c4g {

enum class PrimitiveKind : uint8_t { kBox, kCylinder, kSphere };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kBox;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double yaw = 0.0;  // rotation about +z
  // box: half extents (x,y,z); cylinder: (radius, radius, half height);
  // sphere: (radius, radius, radius)
  Eigen::Vector3d size = Eigen::Vector3d::Zero();

  double sdf(const Eigen::Vector3d& world) const;
  // numeric SDF gradient, h = 1e-6 m
  Eigen::Vector3d normal(const Eigen::Vector3d& world) const;
  // radius of the bounding sphere
  double bounding_radius() const;
};

struct SceneSpec {
  double workspace = 0.30;  // cube edge in meters
  uint64_t seed = 0;
  std::vector<Primitive> primitives;

  double sdf(const Eigen::Vector3d& world) const;
  // index of the closest primitive, -1 for an empty scene
  int closest_primitive(const Eigen::Vector3d& world) const;
  Eigen::Vector3d center() const {
    return {workspace / 2, workspace / 2, workspace / 2};
  }
};

enum class SceneKind : uint8_t { kPackedLike, kPileLike };

// Deterministic per (seed, kind, object_count). packed_like rests upright
// primitives on the floor at non-overlapping (x,y); pile_like scatters
// smaller primitives in the lower half with 3D separation (yaw-only poses,
// no physics settling).
SceneSpec synth_scene(uint64_t seed, SceneKind kind, int object_count, double workspace = 0.30);

// Rotates every pose analytically by k*90 degrees about the vertical axis
// through the workspace center.
SceneSpec rotate_scene_90(const SceneSpec& scene, int k);

struct TsdfVolume {
  int grid = 40;
  double workspace = 0.30;
  double truncation = 0.03;       // meters
  std::vector<float> values;      // [z][y][x], normalized to [-1, 1]

  double cell() const { return workspace / grid; }
  float at(int z, int y, int x) const { return values[(z * grid + y) * grid + x]; }
};

// Per-voxel analytic signed distance, truncated at `truncation_voxels` cells
// and normalized; optional additive Gaussian noise (applied after
// normalization, then re-clamped).
TsdfVolume tsdf_from_scene(const SceneSpec& scene, int grid, double noise_sigma = 0.0,
                           uint64_t noise_seed = 0, double truncation_voxels = 4.0);

struct GripperModel {
  double max_width = 0.08;
  double clearance = 0.005;
  double friction_half_angle_deg = 10.0;
  double finger_depth = 0.05;
};

struct GraspLabel {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Quaternion rotation;  // gripper frame: col0 closing axis, col2 approach
  uint8_t success = 0;
  double width = 0.0;  // required opening in meters
};

// Antipodal candidates on opposing box faces / diametral pairs, 12 approach
// angles per contact. success = width fits (extent + clearance <= max
// opening), contact normals antiparallel within the friction cone, and the
// approach segment clear of the other primitives.
std::vector<GraspLabel> analytic_grasp_labels(const SceneSpec& scene, const GripperModel& gripper,
                                              int contacts_per_object, uint64_t seed);

struct OccupancySample {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  uint8_t occupied = 0;
};

// 70% uniform over the workspace, 30% rejection-sampled within one voxel of
// the zero level set (uniform fallback for empty scenes); labels are the
// analytic SDF sign.
std::vector<OccupancySample> occupancy_samples(const SceneSpec& scene, int count, uint64_t seed,
                                               int grid_for_band = 40);

// Analytic success test for an arbitrary grasp pose (used by the synthetic
// declutter evaluation): traces the closing axis to both contacts, checks
// the opening width, friction-cone alignment of the contact normals, and a
// clear approach. Returns the grasped primitive index on success.
std::optional<int> grasp_succeeds(const SceneSpec& scene, const GripperModel& gripper,
                                  const Eigen::Vector3d& position, const Eigen::Matrix3d& rotation);

}  // namespace c4g
