#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "manifest/manifold.hpp"

namespace manifest {

// sum_k ||mu_k(a) - mu_k(b)||_2 + ||sigma_k(a) - sigma_k(b)||_2
Var style_loss(const FeatureExtractor& phi, const Var& s_tilde, const Var& t);
Var style_loss(const std::vector<std::pair<Var, Var>>& stats_a, const std::vector<std::pair<Var, Var>>& stats_b);

// Random crop + rotation by a multiple of 90 degrees. Owns its RNG stream.
class PatchSampler {
 public:
  struct Placement {
    int sample = 0;
    int top = 0;
    int left = 0;
    int quarter_turns = 0;
  };

  PatchSampler(int patch_size, std::uint64_t seed);

  Placement draw(const Shape& image_shape);
  // `count` patches of every image in the batch, stacked to (N*count,C,P,P).
  Var sample(const Var& images, int count);

  int patch_size() const { return patch_size_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  int patch_size_;
  std::mt19937_64 rng_;
};

// mean over patches of (D_fs(p(s~)) - 1)^2
Var patch_loss_G(const NetworkBundle& bundle, PatchSampler& sampler, const Var& s_tilde, int count);
// mean (D_fs(p(s~)))^2 + mean (D_fs(p(t)) - 1)^2 with s~ detached.
Var patch_loss_D(const NetworkBundle& bundle, PatchSampler& sampler, const Var& s_tilde, const Var& t, int count);

struct AdversarialPair {
  Var generator;
  Var discriminator;
};

// Least-squares pair on D_mt's branch c. The discriminator term sees a
// detached copy of the fake.
AdversarialPair adv_losses_multitarget(const NetworkBundle& bundle, const Var& s_tilde_c, const Var& a_c,
                                       DomainLabel c);
Var adv_loss_G(const NetworkBundle& bundle, const Var& s_tilde_c, DomainLabel c);
Var adv_loss_D(const NetworkBundle& bundle, const Var& s_tilde_c, const Var& a_c, DomainLabel c);

struct ReconstructionTerms {
  Var image;    // || G_{Z(s)}(E(s)) - s ||_1
  Var style;    // || Z(s~_c, c) - z_c ||_1
  Var content;  // || E(s~_c) - E(s) ||_1
};

// All terms are mean absolute errors. `content` is E(s) and `s_tilde_c`
// the translation of s with style z_c; latent targets are detached.
ReconstructionTerms reconstruction_losses(const NetworkBundle& bundle, const Var& s, const Var& content,
                                          const Var& s_tilde_c, const Var& z_c, DomainLabel c);
// Convenience form that computes E(s) and s~_c itself.
ReconstructionTerms reconstruction_losses(const NetworkBundle& bundle, const Var& s, const Var& z_c, DomainLabel c);

struct LossWeights {
  float style = 1.0f;
  float patch = 1.0f;
  float adv = 1.0f;
  float recon_image = 10.0f;
  float recon_style = 1.0f;
  float recon_content = 1.0f;
};

inline const std::vector<std::string>& loss_component_names() {
  static const std::vector<std::string> names{"style",  "patch_G",     "patch_D",     "adv_G",
                                              "adv_D",  "recon_image", "recon_style", "recon_content"};
  return names;
}

struct LossReport {
  std::map<std::string, double> values;  // components plus total_G / total_D

  double at(const std::string& name) const;
  bool operator==(const LossReport&) const = default;
};

// Totals from the eight named components. Throws ConfigError for a missing
// component and NumericalError naming the first non-finite one.
LossReport assemble(const std::map<std::string, double>& components, const LossWeights& weights);

}  // namespace manifest
