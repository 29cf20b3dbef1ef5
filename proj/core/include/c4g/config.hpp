// Run configuration: model kind, encoder/decoder settings, training and
// inference parameters. Serialized as JSON into config files and embedded in
// every checkpoint; the checkpoint digest is the FNV-1a hash of the
// canonical JSON, and inference refuses mismatched geometry unless forced.
#pragma once

#include <string>

#include "c4g/decoders.hpp"
#include "c4g/scene.hpp"
#include "c4g/triplane.hpp"

namespace c4g {

enum class ModelKind { kEquiGiga, kEquiIgd };

struct TrainConfig {
  int epochs = 12;
  double learning_rate = 2e-4;
  std::vector<int> decay_epochs = {9, 11};
  double decay_factor = 0.1;
  int batch_size = 1;  // scenes per optimizer step
  int grasp_samples_per_scene = 64;
  int occupancy_samples_per_scene = 64;
  int free_negatives_per_scene = 16;
  double validation_fraction = 0.1;
  uint64_t seed = 1;
};

struct InferenceConfig {
  double quality_threshold = 0.5;
  int top_k = 10;
  int rounds = 1;                  // flow sampling rounds (EquiIGD)
  double nms_radius_voxels = 3.0;  // reporting-only suppression
  int chunk = 4096;                // voxels decoded per batch
};

struct RunConfig {
  ModelKind model = ModelKind::kEquiGiga;
  EncoderConfig encoder;
  DecoderConfig decoder;
  TrainConfig train;
  InferenceConfig inference;
  GripperModel gripper;

  void validate() const {
    encoder.validate();
    decoder.validate();
    C4G_CHECK_CONFIG(train.epochs >= 1 && train.batch_size >= 1, "invalid training settings");
  }

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // FNV-1a 64 of the canonical JSON.
  uint64_t digest() const;
};

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

}  // namespace c4g
