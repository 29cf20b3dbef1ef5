#include "c4g/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace c4g {

namespace {

constexpr char kMagic[4] = {'C', '4', 'G', 'C'};
constexpr uint8_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  C4G_CHECK(static_cast<bool>(is), ErrorKind::kIo, "truncated checkpoint");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<uint64_t>(s.size()));
  os.write(s.data(), s.size());
}

std::string read_string(std::istream& is) {
  uint64_t len = read_pod<uint64_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  C4G_CHECK(static_cast<bool>(is), ErrorKind::kIo, "truncated checkpoint string");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  C4G_CHECK(os.good(), ErrorKind::kIo, "cannot open " << path << " for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, ckpt.config_digest);
  write_string(os, ckpt.config_json);
  write_pod(os, static_cast<uint64_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    write_string(os, e.name);
    write_pod(os, static_cast<uint8_t>(e.dtype_bytes));
    write_pod(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) write_pod(os, d);
    write_pod(os, static_cast<uint64_t>(e.raw.size()));
    os.write(reinterpret_cast<const char*>(e.raw.data()), e.raw.size());
  }
  C4G_CHECK(os.good(), ErrorKind::kIo, "failed writing checkpoint " << path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  C4G_CHECK(is.good(), ErrorKind::kIo, "cannot open checkpoint " << path);
  char magic[4];
  is.read(magic, 4);
  C4G_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::kData,
            path << " is not a checkpoint file");
  uint8_t version = read_pod<uint8_t>(is);
  C4G_CHECK(version == kVersion, ErrorKind::kData, "unsupported checkpoint version " << int(version));
  Checkpoint ckpt;
  ckpt.config_digest = read_pod<uint64_t>(is);
  ckpt.config_json = read_string(is);
  uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = read_string(is);
    e.dtype_bytes = read_pod<uint8_t>(is);
    uint32_t rank = read_pod<uint32_t>(is);
    for (uint32_t d = 0; d < rank; ++d) e.shape.push_back(read_pod<int64_t>(is));
    uint64_t bytes = read_pod<uint64_t>(is);
    e.raw.resize(bytes);
    is.read(reinterpret_cast<char*>(e.raw.data()), bytes);
    C4G_CHECK(static_cast<bool>(is), ErrorKind::kIo, "truncated checkpoint payload");
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

}  // namespace c4g
