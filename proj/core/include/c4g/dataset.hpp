// Dataset container: one length-prefixed binary file per scene plus an
// index.json written last as the completion marker.
//
// Layout: scenes/NNNNNN.bin, each starting with the magic "C4GS" and a
// version byte, followed by the scene spec, the float32 TSDF grid, the grasp
// labels and the occupancy samples, all little-endian with u64 element
// counts.
#pragma once

#include <filesystem>
#include <string>

#include "c4g/scene.hpp"

namespace c4g {

struct SceneRecord {
  SceneSpec scene;
  TsdfVolume tsdf;
  std::vector<GraspLabel> grasps;
  std::vector<OccupancySample> occupancy;
};

struct DatasetConfig {
  int scene_count = 200;
  SceneKind kind = SceneKind::kPackedLike;
  int min_objects = 1;
  int max_objects = 5;
  int grid_size = 40;
  int contacts_per_object = 8;
  int occupancy_count = 2000;
  double noise_sigma = 0.0;  // --noise gaussian:sigma
  double workspace_m = 0.30;
  GripperModel gripper;
  uint64_t seed = 1;
};

void write_scene_file(const std::filesystem::path& path, const SceneRecord& record);
SceneRecord read_scene_file(const std::filesystem::path& path);

// Deterministic per (config.seed, index).
SceneRecord make_scene_record(const DatasetConfig& config, int index);

// Generates scenes/NNNNNN.bin under `dir` and writes index.json last. With
// `resume`, only missing scene files are regenerated (per-scene determinism
// makes the result identical either way). Returns the number of scene files
// written in this call.
int generate_dataset(const std::filesystem::path& dir, const DatasetConfig& config,
                     bool resume = false, int workers = 1);

struct DatasetIndex {
  int scene_count = 0;
  int grid_size = 0;
  DatasetConfig config;
  std::vector<std::filesystem::path> files;
};

DatasetIndex read_dataset_index(const std::filesystem::path& dir);

std::string dataset_config_json(const DatasetConfig& config);

}  // namespace c4g
