#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "manifest/checkpoint.hpp"
#include "manifest/config.hpp"
#include "manifest/germ.hpp"

namespace manifest {

// Pooled embeddings (N,D) plus the extractor that produced them.
struct EmbeddingSet {
  Tensor matrix;
  std::string extractor;
};

// Global average of Phi's deepest stage.
EmbeddingSet embed(const NetworkBundle& bundle, const Tensor& images);

inline constexpr double kFrechetEps = 1e-6;

// |mu_x - mu_y|^2 + tr(Sx + Sy - 2 (Sx Sy)^(1/2)) with eps*I added to both
// covariances.
double frechet_distance(const Tensor& x, const Tensor& y, double eps = kFrechetEps);
double frechet_distance(const EmbeddingSet& x, const EmbeddingSet& y, double eps = kFrechetEps);

struct Fidelity {
  double matched = 0.0;
  double mismatched = 0.0;  // over pairs whose exemplar ids differ
};

// Mean style loss between output i and exemplar i, and the cross-pairing
// baseline. `ids` names the exemplar behind each pair (default: all distinct).
Fidelity exemplar_fidelity(const FeatureExtractor& phi, const Tensor& outputs, const Tensor& exemplars,
                           std::vector<int> ids = {});

// Variance of the per-pixel output/input intensity ratio within each region,
// averaged over regions and images. labels[i] is (H,W); negative = ignored.
double consistency_probe(const Tensor& inputs, const Tensor& outputs, const std::vector<Tensor>& labels);

// Per-image translations (one z_r draw per image in general mode).
Tensor translate_images(const NetworkBundle& bundle, const ComponentMask& mask, const Tensor& sources, GermMode mode,
                        const Tensor* exemplars, std::mt19937_64& rng);

struct AnchorTranslation {
  Tensor uncorrected;  // a' = G(E(G(E(a), z_id)), z_m)
  Tensor corrected;    // a' plus the residual
};

// Anchor images to T without retraining: anchor -> source via the backbone,
// re-encode, decode with the anchor style, add the residual.
AnchorTranslation anchor_based_translate(const NetworkBundle& bundle, const ComponentMask& mask, const Tensor& anchors,
                                         GermMode mode, const Tensor* exemplars, std::mt19937_64& rng,
                                         DomainLabel anchor = {1});

struct EvalData {
  Tensor sources;                    // held-out source images
  std::vector<Tensor> labels;        // region maps of the sources (may be empty)
  Tensor exemplars;                  // T
  Tensor references;                 // T-family references for Frechet
  Tensor anchor_images;              // for the anchor-based translation
  std::vector<Tensor> style_refs;    // mean-style batches for the untrained baseline
};

EvalData load_eval_data(const TrainingConfig& config, int max_sources = 0);

struct EvalOptions {
  std::uint64_t seed = 1;
  bool untrained_baseline = true;
};

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> info;
  Tensor contact_sheet;
};

EvalReport evaluate_bundle(const NetworkBundle& bundle, const ComponentMask& mask, const EvalData& data,
                           const EvalOptions& options);

// The config stored in a training checkpoint.
TrainingConfig checkpoint_config(const Archive& archive);
ComponentMask checkpoint_mask(const Archive& archive);

// Loads the checkpoint, evaluates on `data_root` (empty: the training
// root) and writes <out_dir>/metrics.txt and contact_sheet.png.
EvalReport evaluate_run(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                        const std::filesystem::path& out_dir, const EvalOptions& options, int max_sources = 0);

void write_metrics(const std::filesystem::path& path, const EvalReport& report);

}  // namespace manifest
