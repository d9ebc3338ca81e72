#pragma once

#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "manifest/tensor.hpp"

namespace manifest {

struct TrainingConfig;

enum class DomainRole { source, anchor, fewshot };

const char* to_string(DomainRole role);

// Decoded domain held in memory. Files are in lexicographic order and the
// images tensor is (N,3,R,R) in [-1,1].
struct DomainDataset {
  std::filesystem::path root;
  DomainRole role = DomainRole::source;
  int resolution = 0;
  std::vector<std::string> files;
  Tensor images;

  int size() const { return static_cast<int>(files.size()); }
  Tensor image(int i) const { return images.slice_batch(i, i + 1); }
  Tensor gather(const std::vector<int>& indices) const;
  Tensor first(int n) const { return images.slice_batch(0, std::min(n, size())); }
};

// Loads every *.png under root. For the few-shot role, `max_count` caps the
// set at the first max_count files and a warning goes to `warn`.
DomainDataset load_domain(const std::filesystem::path& root, DomainRole role, int resolution, int max_count = 0,
                          std::ostream* warn = nullptr);

DomainDataset subset(const DomainDataset& d, const std::vector<int>& indices);

// Deterministic split: the last round(fraction * N) files form the holdout.
// At least one image stays in the training part.
std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& d, double fraction);

// Uniform with replacement for the few-shot role, n distinct images
// otherwise (with replacement only once n exceeds the dataset size).
Tensor sample_batch(const DomainDataset& d, int n, std::mt19937_64& rng);

// Shuffled epochs without replacement (few-shot: uniform with replacement).
class BatchSampler {
 public:
  BatchSampler(const DomainDataset& d, std::uint64_t seed);

  Tensor next(int n);

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  void reshuffle();

  const DomainDataset* data_;
  std::mt19937_64 rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

// Directory of anchor `name`: "id" is the source directory itself.
std::filesystem::path anchor_directory(const std::filesystem::path& root, const std::string& name);

struct TrainingData {
  DomainDataset source;
  DomainDataset holdout;
  DomainDataset fewshot;
  // anchors[i] feeds anchor i; anchors[0] is the source training split.
  std::vector<DomainDataset> anchors;
};

TrainingData load_training_data(const TrainingConfig& config, std::ostream* warn = nullptr);

std::string rng_state(const std::mt19937_64& rng);
void restore_rng(std::mt19937_64& rng, const std::string& state);

}  // namespace manifest
