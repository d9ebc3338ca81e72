#include "manifest/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "manifest/networks.hpp"

namespace manifest {
namespace {

constexpr char kMagic[8] = {'M', 'N', 'F', 'S', 'T', 'C', 'K', 'P'};

template <typename T>
void put_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void Archive::put(const std::string& name, Tensor t) {
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.emplace_back(name, std::move(t));
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(path.string() + ": cannot open for writing");
    os.write(kMagic, sizeof(kMagic));
    put_raw<std::uint32_t>(os, kCheckpointFormatVersion);
    const std::string meta = archive.metadata.dump();
    put_raw<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& [name, t] : archive.tensors) {
      put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put_raw<std::int32_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": " + ec.message());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open checkpoint");
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + ": not a checkpoint archive");
  }
  const auto version = get_raw<std::uint32_t>(is, path);
  if (version != kCheckpointFormatVersion) {
    throw IoError(path.string() + ": unsupported checkpoint format version " + std::to_string(version));
  }
  Archive archive;
  const auto meta_size = get_raw<std::uint64_t>(is, path);
  std::string meta(meta_size, '\0');
  if (!is.read(meta.data(), static_cast<std::streamsize>(meta_size))) throw IoError(path.string() + ": truncated metadata");
  try {
    archive.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad metadata: " + e.what());
  }
  const auto count = get_raw<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_raw<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw IoError(path.string() + ": truncated tensor name");
    const auto rank = get_raw<std::uint32_t>(is, path);
    if (rank > 8) throw IoError(path.string() + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get_raw<std::int32_t>(is, path);
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)))) {
      throw IoError(path.string() + ": truncated data for " + name);
    }
    archive.tensors.emplace_back(std::move(name), std::move(t));
  }
  return archive;
}

nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"base_width", a.base_width},   {"downsamples", a.downsamples},
          {"res_blocks", a.res_blocks},   {"style_dim", a.style_dim},
          {"style_width", a.style_width}, {"mlp_dim", a.mlp_dim},
          {"disc_width", a.disc_width},   {"num_domains", a.num_domains},
          {"patch_size", a.patch_size},   {"extractor_widths", a.extractor_widths},
          {"extractor", a.extractor},     {"seed", a.seed},
          {"phi_seed", a.phi_seed}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.base_width = j.at("base_width");
    a.downsamples = j.at("downsamples");
    a.res_blocks = j.at("res_blocks");
    a.style_dim = j.at("style_dim");
    a.style_width = j.at("style_width");
    a.mlp_dim = j.at("mlp_dim");
    a.disc_width = j.at("disc_width");
    a.num_domains = j.at("num_domains");
    a.patch_size = j.at("patch_size");
    a.extractor_widths = j.at("extractor_widths").get<std::vector<int>>();
    a.extractor = j.at("extractor");
    a.seed = j.at("seed");
    a.phi_seed = j.at("phi_seed");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint architecture record is incomplete: ") + e.what());
  }
  return a;
}

Archive bundle_to_archive(const NetworkBundle& bundle) {
  Archive archive;
  archive.metadata["format_version"] = kCheckpointFormatVersion;
  archive.metadata["arch"] = arch_to_json(bundle.arch());
  archive.metadata["phi_seed"] = bundle.arch().phi_seed;
  archive.metadata["extractor"] = bundle.extractor().id();
  for (const auto& e : bundle.params().entries()) archive.tensors.emplace_back(e.name, e.var.value());
  return archive;
}

void load_parameters(NetworkBundle& bundle, const Archive& archive) {
  for (auto& e : bundle.params().entries()) {
    const Tensor* t = archive.find(e.name);
    if (!t) throw IoError("checkpoint/architecture mismatch: missing parameter '" + e.name + "'");
    if (t->shape() != e.var.shape()) {
      throw IoError("checkpoint/architecture mismatch: '" + e.name + "' has shape " + shape_str(t->shape()) +
                    ", expected " + shape_str(e.var.shape()));
    }
    e.var.mutable_value() = *t;
  }
}

std::unique_ptr<NetworkBundle> bundle_from_archive(const Archive& archive) {
  if (!archive.metadata.contains("arch")) throw IoError("checkpoint has no architecture record");
  auto bundle = std::make_unique<NetworkBundle>(arch_from_json(archive.metadata["arch"]));
  load_parameters(*bundle, archive);
  return bundle;
}

}  // namespace manifest
