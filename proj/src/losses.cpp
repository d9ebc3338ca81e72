#include "manifest/losses.hpp"

#include <cmath>

namespace manifest {

Var style_loss(const std::vector<std::pair<Var, Var>>& stats_a, const std::vector<std::pair<Var, Var>>& stats_b) {
  if (stats_a.size() != stats_b.size() || stats_a.empty()) {
    throw DimensionError("style_loss: statistics depth mismatch");
  }
  Var total;
  for (std::size_t k = 0; k < stats_a.size(); ++k) {
    Var term = op::add(op::l2_norm(op::sub(stats_a[k].first, stats_b[k].first)),
                       op::l2_norm(op::sub(stats_a[k].second, stats_b[k].second)));
    total = total.defined() ? op::add(total, term) : term;
  }
  return total;
}

Var style_loss(const FeatureExtractor& phi, const Var& s_tilde, const Var& t) {
  return style_loss(feature_statistics(phi, s_tilde), feature_statistics(phi, t));
}

PatchSampler::PatchSampler(int patch_size, std::uint64_t seed) : patch_size_(patch_size), rng_(seed) {
  if (patch_size <= 0) throw ConfigError("patch size must be positive");
}

PatchSampler::Placement PatchSampler::draw(const Shape& shape) {
  if (shape.size() != 4) throw DimensionError("patch sampling needs (N,C,H,W) images");
  if (patch_size_ > shape[2] || patch_size_ > shape[3]) {
    throw DimensionError("patch size " + std::to_string(patch_size_) + " exceeds image " + shape_str(shape));
  }
  Placement p;
  p.top = std::uniform_int_distribution<int>(0, shape[2] - patch_size_)(rng_);
  p.left = std::uniform_int_distribution<int>(0, shape[3] - patch_size_)(rng_);
  p.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng_);
  return p;
}

Var PatchSampler::sample(const Var& images, int count) {
  if (count <= 0) throw ConfigError("patch count must be positive");
  std::vector<Var> patches;
  for (int n = 0; n < images.dim(0); ++n) {
    for (int i = 0; i < count; ++i) {
      Placement p = draw(images.shape());
      p.sample = n;
      patches.push_back(op::crop_rotate(images, p.sample, p.top, p.left, patch_size_, p.quarter_turns));
    }
  }
  return op::concat_batch(patches);
}

Var patch_loss_G(const NetworkBundle& bundle, PatchSampler& sampler, const Var& s_tilde, int count) {
  return op::mse_to_constant(bundle.discriminate_patches(sampler.sample(s_tilde, count)), 1.0f);
}

Var patch_loss_D(const NetworkBundle& bundle, PatchSampler& sampler, const Var& s_tilde, const Var& t, int count) {
  const Var fake = bundle.discriminate_patches(sampler.sample(s_tilde.detach(), count));
  const Var real = bundle.discriminate_patches(sampler.sample(t.detach(), count));
  return op::add(op::mse_to_constant(fake, 0.0f), op::mse_to_constant(real, 1.0f));
}

Var adv_loss_G(const NetworkBundle& bundle, const Var& s_tilde_c, DomainLabel c) {
  return op::mse_to_constant(bundle.discriminate_multitarget(s_tilde_c, c), 1.0f);
}

Var adv_loss_D(const NetworkBundle& bundle, const Var& s_tilde_c, const Var& a_c, DomainLabel c) {
  const Var fake = bundle.discriminate_multitarget(s_tilde_c.detach(), c);
  const Var real = bundle.discriminate_multitarget(a_c.detach(), c);
  return op::add(op::mse_to_constant(fake, 0.0f), op::mse_to_constant(real, 1.0f));
}

AdversarialPair adv_losses_multitarget(const NetworkBundle& bundle, const Var& s_tilde_c, const Var& a_c,
                                       DomainLabel c) {
  return {adv_loss_G(bundle, s_tilde_c, c), adv_loss_D(bundle, s_tilde_c, a_c, c)};
}

ReconstructionTerms reconstruction_losses(const NetworkBundle& bundle, const Var& s, const Var& content,
                                          const Var& s_tilde_c, const Var& z_c, DomainLabel c) {
  ReconstructionTerms r;
  const Var own_style = bundle.encode_style(s, AnchorSet::identity());
  r.image = op::l1_mean(bundle.decode(content, own_style), s);
  r.style = op::l1_mean(bundle.encode_style(s_tilde_c, c), z_c.detach());
  r.content = op::l1_mean(bundle.encode_content(s_tilde_c), content.detach());
  return r;
}

ReconstructionTerms reconstruction_losses(const NetworkBundle& bundle, const Var& s, const Var& z_c, DomainLabel c) {
  const Var content = bundle.encode_content(s);
  const Var s_tilde_c = bundle.decode(content, broadcast_style(z_c, s.dim(0)));
  return reconstruction_losses(bundle, s, content, s_tilde_c, broadcast_style(z_c, s.dim(0)), c);
}

double LossReport::at(const std::string& name) const {
  const auto it = values.find(name);
  if (it == values.end()) throw ConfigError("loss report has no entry '" + name + "'");
  return it->second;
}

LossReport assemble(const std::map<std::string, double>& components, const LossWeights& w) {
  LossReport report;
  for (const auto& name : loss_component_names()) {
    const auto it = components.find(name);
    if (it == components.end()) throw ConfigError("loss component '" + name + "' is missing");
    if (!std::isfinite(it->second)) throw NumericalError("loss component '" + name + "' is not finite");
    report.values[name] = it->second;
  }
  const auto& v = report.values;
  report.values["total_G"] = w.style * v.at("style") + w.patch * v.at("patch_G") + w.adv * v.at("adv_G") +
                             w.recon_image * v.at("recon_image") + w.recon_style * v.at("recon_style") +
                             w.recon_content * v.at("recon_content");
  report.values["total_D"] = w.patch * v.at("patch_D") + w.adv * v.at("adv_D");
  return report;
}

}  // namespace manifest
