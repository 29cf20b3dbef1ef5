#include "c4g/dataset.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <thread>

namespace c4g {

namespace {

constexpr char kMagic[4] = {'C', '4', 'G', 'S'};
constexpr uint8_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  C4G_CHECK(static_cast<bool>(is), ErrorKind::kIo, "truncated scene file");
  return v;
}

void write_vec3(std::ostream& os, const Eigen::Vector3d& v) {
  for (int i = 0; i < 3; ++i) write_pod(os, v[i]);
}

Eigen::Vector3d read_vec3(std::istream& is) {
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = read_pod<double>(is);
  return v;
}

std::filesystem::path scene_path(const std::filesystem::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.bin", index);
  return dir / "scenes" / name;
}

}  // namespace

void write_scene_file(const std::filesystem::path& path, const SceneRecord& record) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  C4G_CHECK(os.good(), ErrorKind::kIo, "cannot open " << path << " for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);

  write_pod(os, record.scene.workspace);
  write_pod(os, record.scene.seed);
  write_pod(os, static_cast<uint64_t>(record.scene.primitives.size()));
  for (const auto& p : record.scene.primitives) {
    write_pod(os, static_cast<uint8_t>(p.kind));
    write_vec3(os, p.center);
    write_pod(os, p.yaw);
    write_vec3(os, p.size);
  }

  write_pod(os, static_cast<int32_t>(record.tsdf.grid));
  write_pod(os, record.tsdf.workspace);
  write_pod(os, record.tsdf.truncation);
  write_pod(os, static_cast<uint64_t>(record.tsdf.values.size()));
  os.write(reinterpret_cast<const char*>(record.tsdf.values.data()),
           record.tsdf.values.size() * sizeof(float));

  write_pod(os, static_cast<uint64_t>(record.grasps.size()));
  for (const auto& g : record.grasps) {
    write_vec3(os, g.position);
    write_pod(os, g.rotation.w);
    write_pod(os, g.rotation.x);
    write_pod(os, g.rotation.y);
    write_pod(os, g.rotation.z);
    write_pod(os, g.success);
    write_pod(os, g.width);
  }

  write_pod(os, static_cast<uint64_t>(record.occupancy.size()));
  for (const auto& s : record.occupancy) {
    write_vec3(os, s.point);
    write_pod(os, s.occupied);
  }
  C4G_CHECK(os.good(), ErrorKind::kIo, "failed writing " << path);
}

SceneRecord read_scene_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  C4G_CHECK(is.good(), ErrorKind::kIo, "cannot open " << path);
  char magic[4];
  is.read(magic, 4);
  C4G_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::kData,
            path << " is not a scene file");
  uint8_t version = read_pod<uint8_t>(is);
  C4G_CHECK(version == kVersion, ErrorKind::kData,
            "unsupported scene file version " << int(version));

  SceneRecord record;
  record.scene.workspace = read_pod<double>(is);
  record.scene.seed = read_pod<uint64_t>(is);
  uint64_t nprims = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < nprims; ++i) {
    Primitive p;
    p.kind = static_cast<PrimitiveKind>(read_pod<uint8_t>(is));
    p.center = read_vec3(is);
    p.yaw = read_pod<double>(is);
    p.size = read_vec3(is);
    record.scene.primitives.push_back(p);
  }

  record.tsdf.grid = read_pod<int32_t>(is);
  record.tsdf.workspace = read_pod<double>(is);
  record.tsdf.truncation = read_pod<double>(is);
  uint64_t nvox = read_pod<uint64_t>(is);
  record.tsdf.values.resize(nvox);
  is.read(reinterpret_cast<char*>(record.tsdf.values.data()), nvox * sizeof(float));

  uint64_t ngrasps = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < ngrasps; ++i) {
    GraspLabel g;
    g.position = read_vec3(is);
    g.rotation.w = read_pod<double>(is);
    g.rotation.x = read_pod<double>(is);
    g.rotation.y = read_pod<double>(is);
    g.rotation.z = read_pod<double>(is);
    g.success = read_pod<uint8_t>(is);
    g.width = read_pod<double>(is);
    record.grasps.push_back(g);
  }

  uint64_t nocc = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < nocc; ++i) {
    OccupancySample s;
    s.point = read_vec3(is);
    s.occupied = read_pod<uint8_t>(is);
    record.occupancy.push_back(s);
  }
  C4G_CHECK(static_cast<bool>(is), ErrorKind::kIo, "truncated scene file " << path);
  return record;
}

SceneRecord make_scene_record(const DatasetConfig& config, int index) {
  Rng rng = Rng::with_stream(config.seed, static_cast<uint64_t>(index));
  int span = config.max_objects - config.min_objects + 1;
  int objects = config.min_objects + static_cast<int>(rng.uniform_index(span));
  uint64_t scene_seed = rng.next_u64();
  SceneRecord record;
  record.scene = synth_scene(scene_seed, config.kind, objects, config.workspace_m);
  record.tsdf = tsdf_from_scene(record.scene, config.grid_size, config.noise_sigma,
                                scene_seed ^ 0x5eedul);
  record.grasps = analytic_grasp_labels(record.scene, config.gripper, config.contacts_per_object,
                                        scene_seed ^ 0x97a5eull);
  record.occupancy =
      occupancy_samples(record.scene, config.occupancy_count, scene_seed ^ 0x0ccull,
                        config.grid_size);
  return record;
}

std::string dataset_config_json(const DatasetConfig& c) {
  nlohmann::json j;
  j["scene_count"] = c.scene_count;
  j["kind"] = c.kind == SceneKind::kPackedLike ? "packed_like" : "pile_like";
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["grid_size"] = c.grid_size;
  j["contacts_per_object"] = c.contacts_per_object;
  j["occupancy_count"] = c.occupancy_count;
  j["noise_sigma"] = c.noise_sigma;
  j["workspace_m"] = c.workspace_m;
  j["gripper"] = {{"max_width", c.gripper.max_width},
                  {"clearance", c.gripper.clearance},
                  {"friction_half_angle_deg", c.gripper.friction_half_angle_deg},
                  {"finger_depth", c.gripper.finger_depth}};
  j["seed"] = c.seed;
  return j.dump(2);
}

namespace {

DatasetConfig config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.scene_count = j.at("scene_count");
  c.kind = j.at("kind") == "pile_like" ? SceneKind::kPileLike : SceneKind::kPackedLike;
  c.min_objects = j.at("min_objects");
  c.max_objects = j.at("max_objects");
  c.grid_size = j.at("grid_size");
  c.contacts_per_object = j.at("contacts_per_object");
  c.occupancy_count = j.at("occupancy_count");
  c.noise_sigma = j.at("noise_sigma");
  c.workspace_m = j.at("workspace_m");
  c.gripper.max_width = j.at("gripper").at("max_width");
  c.gripper.clearance = j.at("gripper").at("clearance");
  c.gripper.friction_half_angle_deg = j.at("gripper").at("friction_half_angle_deg");
  c.gripper.finger_depth = j.at("gripper").at("finger_depth");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

int generate_dataset(const std::filesystem::path& dir, const DatasetConfig& config, bool resume,
                     int workers) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scenes");
  std::vector<int> pending;
  for (int i = 0; i < config.scene_count; ++i) {
    if (resume && fs::exists(scene_path(dir, i))) continue;
    pending.push_back(i);
  }

  auto work = [&](int begin, int step) {
    for (size_t k = begin; k < pending.size(); k += step) {
      int index = pending[k];
      write_scene_file(scene_path(dir, index), make_scene_record(config, index));
    }
  };
  workers = std::max(1, workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  // index written last: its presence marks a complete dataset
  nlohmann::json j = nlohmann::json::parse(dataset_config_json(config));
  nlohmann::json index;
  index["scene_count"] = config.scene_count;
  index["grid_size"] = config.grid_size;
  index["config"] = j;
  std::ofstream os(dir / "index.json", std::ios::trunc);
  C4G_CHECK(os.good(), ErrorKind::kIo, "cannot write index.json under " << dir);
  os << index.dump(2) << "\n";
  return static_cast<int>(pending.size());
}

DatasetIndex read_dataset_index(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  C4G_CHECK(is.good(), ErrorKind::kData, "missing index.json under " << dir
                                                                     << " (incomplete dataset?)");
  nlohmann::json j;
  is >> j;
  DatasetIndex index;
  index.scene_count = j.at("scene_count");
  index.grid_size = j.at("grid_size");
  index.config = config_from_json(j.at("config"));
  for (int i = 0; i < index.scene_count; ++i) {
    auto p = scene_path(dir, i);
    C4G_CHECK(std::filesystem::exists(p), ErrorKind::kData, "missing scene file " << p);
    index.files.push_back(p);
  }
  return index;
}

}  // namespace c4g
