#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "manifest/tensor.hpp"

namespace manifest {

class NetworkBundle;
struct ArchConfig;

inline constexpr int kCheckpointFormatVersion = 1;

// Single-file archive: JSON metadata plus named float arrays.
//
// Layout (little endian):
//   "MNFSTCKP"            8-byte magic
//   u32 format_version
//   u64 metadata_bytes, then UTF-8 JSON
//   u32 tensor_count, then per tensor:
//     u32 name_bytes, name, u32 rank, i32 dims[rank], f32 data[prod(dims)]
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  void put(const std::string& name, Tensor t);
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

nlohmann::json arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

// Every bundle parameter under its name plus {format_version, arch,
// phi_seed, extractor} metadata.
Archive bundle_to_archive(const NetworkBundle& bundle);
// Copies parameters into an existing bundle; names and shapes must match.
void load_parameters(NetworkBundle& bundle, const Archive& archive);
// Rebuilds a bundle from the archive's architecture record.
std::unique_ptr<NetworkBundle> bundle_from_archive(const Archive& archive);

}  // namespace manifest
