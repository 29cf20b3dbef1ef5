#include "c4g/config.hpp"

#include <json.hpp>

#include <fstream>

namespace c4g {

namespace {

using nlohmann::json;

json encoder_to_json(const EncoderConfig& e) {
  json j;
  j["grid_size"] = e.grid_size;
  j["workspace_m"] = e.workspace_m;
  j["lift_regular_blocks"] = e.lift_regular_blocks;
  j["lift_kernel"] = e.lift_kernel;
  j["xy_regular_blocks"] = e.xy_regular_blocks;
  j["side_channels"] = e.side_channels;
  j["mode"] = e.mode == EncoderMode::kEquivariant ? "equivariant" : "conventional";
  j["side_mode"] = e.side_mode == SideMode::kMixed ? "mixed" : "reflection_invariant";
  j["s2tp"] = e.s2tp;
  j["side_dcn"] = e.side_dcn;
  j["dscn"] = e.use_dscn;
  j["dscn_max_offset"] = e.dscn_max_offset;
  return j;
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig e;
  e.grid_size = j.at("grid_size");
  e.workspace_m = j.at("workspace_m");
  e.lift_regular_blocks = j.at("lift_regular_blocks");
  e.lift_kernel = j.at("lift_kernel");
  e.xy_regular_blocks = j.at("xy_regular_blocks").get<std::vector<int>>();
  e.side_channels = j.at("side_channels").get<std::vector<int>>();
  e.mode = j.at("mode") == "conventional" ? EncoderMode::kConventional : EncoderMode::kEquivariant;
  e.side_mode =
      j.at("side_mode") == "reflection_invariant" ? SideMode::kReflectionInvariant : SideMode::kMixed;
  e.s2tp = j.at("s2tp");
  e.side_dcn = j.at("side_dcn");
  e.use_dscn = j.at("dscn");
  e.dscn_max_offset = j.at("dscn_max_offset");
  return e;
}

json decoder_to_json(const DecoderConfig& d) {
  json j;
  j["eda_offsets"] = d.eda_offsets;
  j["control_points"] = d.control_points;
  j["focal_gamma"] = d.focal_gamma;
  j["flow_steps"] = d.flow_steps;
  j["flow_time_features"] = d.flow_time_features;
  j["sampling_rounds"] = d.sampling_rounds;
  j["hidden_regular"] = d.hidden_regular;
  j["hidden_trivial"] = d.hidden_trivial;
  j["eda_offset_scale"] = d.eda_offset_scale;
  j["control_point_extent"] = d.control_point_extent;
  return j;
}

DecoderConfig decoder_from_json(const json& j) {
  DecoderConfig d;
  d.eda_offsets = j.at("eda_offsets");
  d.control_points = j.at("control_points");
  d.focal_gamma = j.at("focal_gamma");
  d.flow_steps = j.at("flow_steps");
  d.flow_time_features = j.at("flow_time_features");
  d.sampling_rounds = j.at("sampling_rounds");
  d.hidden_regular = j.at("hidden_regular");
  d.hidden_trivial = j.at("hidden_trivial");
  d.eda_offset_scale = j.at("eda_offset_scale");
  d.control_point_extent = j.at("control_point_extent");
  return d;
}

}  // namespace

const char* to_string(ModelKind kind) {
  return kind == ModelKind::kEquiGiga ? "equigiga" : "equiigd";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "equigiga") return ModelKind::kEquiGiga;
  if (name == "equiigd") return ModelKind::kEquiIgd;
  C4G_CHECK_CONFIG(false, "unknown model kind '" << name << "' (expected equigiga|equiigd)");
  return ModelKind::kEquiGiga;
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = to_string(model);
  j["encoder"] = encoder_to_json(encoder);
  j["decoder"] = decoder_to_json(decoder);
  j["train"] = {{"epochs", train.epochs},
                {"learning_rate", train.learning_rate},
                {"decay_epochs", train.decay_epochs},
                {"decay_factor", train.decay_factor},
                {"batch_size", train.batch_size},
                {"grasp_samples_per_scene", train.grasp_samples_per_scene},
                {"occupancy_samples_per_scene", train.occupancy_samples_per_scene},
                {"free_negatives_per_scene", train.free_negatives_per_scene},
                {"validation_fraction", train.validation_fraction},
                {"seed", train.seed}};
  j["inference"] = {{"quality_threshold", inference.quality_threshold},
                    {"top_k", inference.top_k},
                    {"rounds", inference.rounds},
                    {"nms_radius_voxels", inference.nms_radius_voxels},
                    {"chunk", inference.chunk}};
  j["gripper"] = {{"max_width", gripper.max_width},
                  {"clearance", gripper.clearance},
                  {"friction_half_angle_deg", gripper.friction_half_angle_deg},
                  {"finger_depth", gripper.finger_depth}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config parse failure: ") + e.what());
  }
  RunConfig c;
  c.model = model_kind_from_string(j.at("model"));
  c.encoder = encoder_from_json(j.at("encoder"));
  c.decoder = decoder_from_json(j.at("decoder"));
  const auto& t = j.at("train");
  c.train.epochs = t.at("epochs");
  c.train.learning_rate = t.at("learning_rate");
  c.train.decay_epochs = t.at("decay_epochs").get<std::vector<int>>();
  c.train.decay_factor = t.at("decay_factor");
  c.train.batch_size = t.at("batch_size");
  c.train.grasp_samples_per_scene = t.at("grasp_samples_per_scene");
  c.train.occupancy_samples_per_scene = t.at("occupancy_samples_per_scene");
  c.train.free_negatives_per_scene = t.at("free_negatives_per_scene");
  c.train.validation_fraction = t.at("validation_fraction");
  c.train.seed = t.at("seed");
  const auto& i = j.at("inference");
  c.inference.quality_threshold = i.at("quality_threshold");
  c.inference.top_k = i.at("top_k");
  c.inference.rounds = i.at("rounds");
  c.inference.nms_radius_voxels = i.at("nms_radius_voxels");
  c.inference.chunk = i.at("chunk");
  const auto& g = j.at("gripper");
  c.gripper.max_width = g.at("max_width");
  c.gripper.clearance = g.at("clearance");
  c.gripper.friction_half_angle_deg = g.at("friction_half_angle_deg");
  c.gripper.finger_depth = g.at("finger_depth");
  c.validate();
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  C4G_CHECK(is.good(), ErrorKind::kIo, "cannot open config file " << path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  C4G_CHECK(os.good(), ErrorKind::kIo, "cannot write config file " << path);
  os << to_json() << "\n";
}

uint64_t RunConfig::digest() const {
  std::string canon = to_json();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace c4g
