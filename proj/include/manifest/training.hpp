#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "manifest/config.hpp"
#include "manifest/data.hpp"
#include "manifest/germ.hpp"
#include "manifest/losses.hpp"
#include "manifest/optimizer.hpp"

namespace manifest {

struct TrainBatch {
  Tensor source;                // s, (N,3,H,W)
  std::vector<Tensor> anchors;  // a_i per anchor; entry 0 may be empty (the source is used)
  Tensor fewshot;               // t, sampled from T with replacement
};

struct TrainState {
  long step = 0;
  Adam generator;
  Adam discriminator;
  std::mt19937_64 schedule_rng;      // anchor c and GERM mode
  std::mt19937_64 conditioning_rng;  // general-mode z_r
  std::map<std::string, double> running;  // exponential averages of the report
};

class Trainer {
 public:
  Trainer(NetworkBundle& bundle, const TrainingConfig& config);

  // One discriminator update followed by one generator update.
  LossReport train_step(const TrainBatch& batch);

  const TrainState& state() const { return state_; }
  long step() const { return state_.step; }
  const ComponentMask& mask() const { return mask_; }
  NetworkBundle& bundle() { return bundle_; }
  GermMode last_mode() const { return last_mode_; }
  DomainLabel last_anchor() const { return last_anchor_; }

  // Called with "discriminator" after the discriminator update and
  // "generator" after the generator update.
  void set_phase_hook(std::function<void(const std::string&)> hook) { hook_ = std::move(hook); }

  // Bundle parameters plus optimizer moments, RNG states and step count.
  Archive to_archive() const;
  void restore(const Archive& archive);

 private:
  NetworkBundle& bundle_;
  TrainingConfig config_;
  ComponentMask mask_;
  TrainState state_;
  PatchSampler patches_;
  GermMode last_mode_ = GermMode::general;
  DomainLabel last_anchor_{0};
  std::function<void(const std::string&)> hook_;
};

// Batches used to refresh the persisted mean styles: the first
// mean_style_samples images of each anchor, or of T for anchor 1 under
// lgfs_only.
std::vector<Tensor> mean_style_references(const TrainingConfig& config, const TrainingData& data);

struct FitResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  long steps = 0;
};

// Runs train_step until config.iterations. Writes <out_dir>/config.txt,
// metrics.tsv and checkpoints/step_NNNNNN.ckpt plus final.ckpt.
FitResult fit(const TrainingConfig& config, const TrainingData& data, std::ostream* progress = nullptr);

}  // namespace manifest
