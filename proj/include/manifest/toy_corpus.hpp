#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "manifest/tensor.hpp"

namespace manifest {

// Per-image global transform: out = clamp(gain_region * tint_c * base_c^gamma).
struct ToyTransform {
  std::array<float, 3> tint{1.0f, 1.0f, 1.0f};
  float gamma = 1.0f;
  float sky_gain = 1.0f;
  float ground_gain = 1.0f;
};

struct Range {
  float lo = 0.0f;
  float hi = 0.0f;
};

struct ToyCorpusSpec {
  std::uint64_t seed = 7;
  int size = 64;
  int source_count = 300;
  int anchor_count = 300;
  int fewshot_count = 10;
  // Extra images of the few-shot family, used only as evaluation references.
  int reference_count = 200;
  ToyTransform anchor{{0.75f, 0.85f, 1.15f}, 1.3f, 0.6f, 0.85f};
  std::array<Range, 3> fewshot_tint{{{1.05f, 1.35f}, {0.75f, 0.95f}, {0.45f, 0.7f}}};
  Range fewshot_gamma{0.8f, 1.6f};
  Range fewshot_sky_gain{0.6f, 1.1f};
  Range fewshot_ground_gain{0.35f, 0.75f};

  void set(const std::string& key, const std::string& value);
  void validate() const;
};

struct ToyRecord {
  std::string domain;  // source, anchor_m, fewshot or fewshot_ref
  std::string file;
  std::uint64_t scene_seed = 0;
  int horizon = 0;
  ToyTransform transform;
};

struct ToyScene {
  Tensor base;    // (3,H,W) in [0,1]
  Tensor labels;  // (H,W): 0 sky, 1 ground or building
  int horizon = 0;
};

ToyScene render_scene(int size, std::uint64_t scene_seed);
// The stored image of a record, in [-1,1] before 8-bit quantization.
Tensor render_record(const ToyRecord& record, int size);
// Region map for the consistency probe: 0 sky, 1 ground.
Tensor region_labels(const ToyRecord& record, int size);

// Writes <out>/{source,anchor_m,fewshot,fewshot_ref}/NNNN.png and
// <out>/manifest.tsv. Identical specs give identical trees.
std::vector<ToyRecord> generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_root);

void write_toy_manifest(const std::filesystem::path& path, const ToyCorpusSpec& spec,
                        const std::vector<ToyRecord>& records);
std::vector<ToyRecord> read_toy_manifest(const std::filesystem::path& path, int* size = nullptr);

}  // namespace manifest
