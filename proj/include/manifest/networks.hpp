#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "manifest/nn.hpp"

namespace manifest {

// Index into the anchor set. Index 0 is always the identity anchor.
struct DomainLabel {
  int index = 0;
  friend bool operator==(DomainLabel a, DomainLabel b) { return a.index == b.index; }
};

struct ArchConfig {
  int base_width = 32;
  int downsamples = 2;  // L
  int res_blocks = 2;
  int style_dim = 8;    // d_s
  int style_width = 16;
  int mlp_dim = 64;
  int disc_width = 32;
  int num_domains = 2;  // |A|
  int patch_size = 16;
  std::vector<int> extractor_widths{16, 32, 64, 128};
  std::string extractor = "random";  // "random", "identity" or "vgg:<path>"
  std::uint64_t seed = 1;
  std::uint64_t phi_seed = 7;

  int content_channels() const { return base_width << downsamples; }
  int extractor_depth() const;
  // Length of the GERM conditioning vector: 2 * sum of stage widths.
  int conditioning_dim() const;
  void validate() const;
};

// Per-stage channel means and standard deviations, batch averaged.
struct FeatureStatistics {
  std::vector<Tensor> mu;     // each (C_k)
  std::vector<Tensor> sigma;  // each (C_k)
  int depth() const { return static_cast<int>(mu.size()); }
};

// Throws DimensionError unless x is (N,3,H,W) with H, W divisible by 2^L.
void validate_images(const Tensor& x, int downsamples);

class ContentEncoder {
 public:
  ContentEncoder() = default;
  ContentEncoder(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng);
  Var operator()(const Var& images) const;

 private:
  int downsamples_ = 0;
  std::vector<Conv2d> down_;
  std::vector<std::pair<Conv2d, Conv2d>> res_;
};

// Shared convolutional trunk with one linear head per domain.
class StyleEncoder {
 public:
  StyleEncoder() = default;
  StyleEncoder(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng);
  Var operator()(const Var& images, DomainLabel domain) const;

 private:
  std::vector<Conv2d> trunk_;
  std::vector<Linear> heads_;
  int style_dim_ = 0;
};

// Residual blocks with AdaIN driven by an MLP over a conditioning vector,
// followed by upsampling stages and a tanh output.
class AdainGenerator {
 public:
  AdainGenerator() = default;
  AdainGenerator(ParameterStore& store, const std::string& name, const ArchConfig& arch, int in_channels, int width,
                 int cond_dim, bool zero_output, std::mt19937_64& rng);
  Var operator()(const Var& content, const Var& conditioning) const;
  int conditioning_dim() const { return cond_dim_; }
  int adain_params() const { return adain_params_; }

 private:
  int cond_dim_ = 0;
  int width_ = 0;
  int adain_params_ = 0;
  bool has_input_proj_ = false;
  Conv2d input_proj_;
  Mlp mlp_;
  std::vector<std::pair<Conv2d, Conv2d>> res_;
  std::vector<std::pair<Conv2d, LayerNorm>> up_;
  Conv2d out_;
};

class MultiTargetDiscriminator {
 public:
  MultiTargetDiscriminator() = default;
  MultiTargetDiscriminator(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng);
  // Per-patch realness map (N,1,h',w') from the branch of `domain`.
  Var operator()(const Var& images, DomainLabel domain) const;

 private:
  std::vector<Conv2d> trunk_;
  Conv2d head_;
  int num_domains_ = 0;
};

class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(ParameterStore& store, const ArchConfig& arch, std::mt19937_64& rng);
  // One realness score per patch, shape (N,1,1,1).
  Var operator()(const Var& patches) const;
  int patch_size() const { return patch_size_; }

 private:
  int patch_size_ = 0;
  std::vector<Conv2d> layers_;
};

// Frozen feature pyramid. Stage k's activations feed the statistics used by
// the style loss, the exemplar conditioning and the Frechet embedding.
class FeatureExtractor {
 public:
  struct Layer {
    Conv2d conv;
    bool pool_before = false;
    bool relu = true;
    bool stage_output = false;
  };

  FeatureExtractor() = default;

  // Random He-initialized conv pyramid: [pool] conv3x3 relu per stage.
  static FeatureExtractor random_pyramid(ParameterStore& store, const std::vector<int>& widths, std::uint64_t seed);
  // Single linear 1x1 identity stage on the raw image.
  static FeatureExtractor identity(ParameterStore& store);
  // VGG-19 layers up to relu4_1 with weights read from a checkpoint archive
  // holding conv{b}_{i}.weight / .bias entries.
  static FeatureExtractor vgg19(ParameterStore& store, const std::string& weights_path);

  std::vector<Var> stages(const Var& images) const;
  std::vector<int> stage_channels() const;
  int depth() const { return static_cast<int>(stage_channels().size()); }
  const std::string& id() const { return id_; }

 private:
  std::vector<Layer> layers_;
  std::string id_;
  bool imagenet_input_ = false;
};

// Differentiable statistics per stage: pairs of (1,C_k) mean and std rows.
std::vector<std::pair<Var, Var>> feature_statistics(const FeatureExtractor& phi, const Var& images);

class NetworkBundle {
 public:
  explicit NetworkBundle(const ArchConfig& arch);
  NetworkBundle(const NetworkBundle&) = delete;
  NetworkBundle& operator=(const NetworkBundle&) = delete;

  const ArchConfig& arch() const { return arch_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Var encode_content(const Var& images) const;
  Var encode_style(const Var& images, DomainLabel domain) const;
  Var decode(const Var& content, const Var& style) const;
  Var residual(const Var& content, const Var& conditioning) const;
  Var discriminate_multitarget(const Var& images, DomainLabel domain) const;
  Var discriminate_patches(const Var& patches) const;
  FeatureStatistics extract_statistics(const Tensor& images) const;

  const FeatureExtractor& extractor() const { return phi_; }
  const AdainGenerator& residual_generator() const { return residual_gen_; }

  // Learnable simplex logits and the persisted per-anchor mean styles.
  Var anchor_logits() const { return anchor_logits_; }
  Var mean_style(DomainLabel d) const;

  std::vector<Var> generator_parameters() const;
  std::vector<Var> discriminator_parameters() const;
  std::vector<Var> extractor_parameters() const;

 private:
  void check_domain(DomainLabel d) const;

  ArchConfig arch_;
  ParameterStore params_;
  ContentEncoder content_;
  StyleEncoder style_;
  AdainGenerator decoder_;
  AdainGenerator residual_gen_;
  MultiTargetDiscriminator disc_mt_;
  PatchDiscriminator disc_fs_;
  FeatureExtractor phi_;
  Var anchor_logits_;
  std::vector<Var> mean_styles_;
};

// Standalone AdaIN on plain tensors: features (N,C,H,W), targets (C) each.
Tensor adain(const Tensor& features, const Tensor& target_mu, const Tensor& target_sigma);

}  // namespace manifest
