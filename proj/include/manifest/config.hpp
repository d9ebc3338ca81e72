#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "manifest/ablation.hpp"
#include "manifest/losses.hpp"
#include "manifest/networks.hpp"

namespace manifest {

struct ConfigKeyInfo {
  std::string name;
  std::string description;
};

// Every training knob. Serialized as flat `key = value` lines; see
// config_keys() for the documented key set.
struct TrainingConfig {
  std::string data_root = "data";
  std::string out_dir = "run";
  std::string resume;
  int resolution = 64;
  int batch_size = 1;
  int iterations = 2000;
  float lr_gen = 1e-4f;
  float lr_disc = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  int lr_decay_every = 0;
  float lr_decay_gamma = 0.5f;
  LossWeights weights;
  int fewshot_count = 10;
  std::vector<std::string> anchors{"id", "m"};
  double exemplar_prob = 0.5;
  int patch_count = 8;
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  double source_holdout = 0.2;
  int mean_style_samples = 16;
  std::vector<std::string> ablate;
  ArchConfig arch;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Reads `key = value` lines; '#' starts a comment. Unknown keys throw.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "config");
  void save_file(const std::filesystem::path& path) const;
  std::string to_text() const;

  // Throws ConfigError naming the offending key.
  void validate() const;

  ComponentMask mask() const { return ablation_switches(ablate); }
};

const std::vector<ConfigKeyInfo>& config_keys();

// `key = value` lines in file order; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin);

}  // namespace manifest
