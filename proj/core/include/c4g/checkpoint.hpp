// Versioned checkpoint container: parameter name -> (dtype, shape, raw
// little-endian values), plus the full config JSON and its digest. Loading
// verifies the digest against the expected config unless forced; raw bytes
// make the roundtrip bit-exact per dtype.
#pragma once

#include <cstddef>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "c4g/error.hpp"
#include "c4g/tensor.hpp"

namespace c4g {

struct CheckpointEntry {
  std::string name;
  int dtype_bytes = 4;  // 4 = float32, 8 = float64
  Shape shape;
  std::vector<std::byte> raw;
};

struct Checkpoint {
  std::string config_json;
  uint64_t config_digest = 0;
  std::vector<CheckpointEntry> entries;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(const std::string& config_json, uint64_t digest,
                           const std::vector<Parameter<T>>& params) {
  Checkpoint ckpt;
  ckpt.config_json = config_json;
  ckpt.config_digest = digest;
  for (const auto& p : params) {
    CheckpointEntry e;
    e.name = p.name;
    e.dtype_bytes = sizeof(T);
    e.shape = p.tensor.shape();
    e.raw.resize(p.tensor.numel() * sizeof(T));
    std::memcpy(e.raw.data(), p.tensor.data(), e.raw.size());
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

// Copies checkpoint values into an existing parameter set (names, shapes and
// dtype must match). Digest verification is the caller's job so that --force
// can bypass it.
template <typename T>
void restore_parameters(const Checkpoint& ckpt, std::vector<Parameter<T>>& params) {
  C4G_CHECK(ckpt.entries.size() == params.size(), ErrorKind::kState,
            "checkpoint has " << ckpt.entries.size() << " parameters, model expects "
                              << params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = ckpt.entries[i];
    auto& p = params[i];
    C4G_CHECK(e.name == p.name, ErrorKind::kState,
              "checkpoint parameter '" << e.name << "' does not match model parameter '"
                                       << p.name << "'");
    C4G_CHECK(e.dtype_bytes == sizeof(T), ErrorKind::kState,
              "checkpoint dtype width " << e.dtype_bytes << " != model dtype width " << sizeof(T));
    C4G_CHECK(e.shape == p.tensor.shape(), ErrorKind::kState,
              "shape mismatch for parameter '" << e.name << "'");
    std::memcpy(p.tensor.mutable_data(), e.raw.data(), e.raw.size());
  }
}

}  // namespace c4g
