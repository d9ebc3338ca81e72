#include "manifest/germ.hpp"

#include <algorithm>

namespace manifest {

const char* to_string(GermMode mode) { return mode == GermMode::exemplar ? "exemplar" : "general"; }

GermMode parse_germ_mode(const std::string& s) {
  if (s == "general") return GermMode::general;
  if (s == "exemplar") return GermMode::exemplar;
  throw ConfigError("unknown translation mode '" + s + "' (expected general or exemplar)");
}

ComponentMask ablation_switches(const std::vector<std::string>& flags) {
  ComponentMask m;
  for (std::string f : flags) {
    std::replace(f.begin(), f.end(), '-', '_');
    if (f.empty()) continue;
    if (f == "no_style") {
      m.style_loss = false;
    } else if (f == "no_patch") {
      m.patch_loss = false;
    } else if (f == "no_germ") {
      m.germ = false;
    } else if (f == "no_wmi") {
      m.wmi = false;
    } else if (f == "lgfs_only") {
      m.lgfs_only = true;
    } else {
      throw ConfigError("unknown ablation flag '" + f + "'");
    }
  }
  if (m.lgfs_only) {
    if (!m.style_loss || !m.patch_loss) {
      throw ConfigError("lgfs_only keeps both few-shot losses; it cannot be combined with no_style or no_patch");
    }
    m.wmi = false;
    m.germ = false;
  }
  if (!m.style_loss && !m.patch_loss) {
    throw ConfigError("no_style together with no_patch leaves nothing pulling toward the few-shot target");
  }
  return m;
}

std::vector<std::string> ablation_flags(const ComponentMask& m) {
  if (m.lgfs_only) return {"lgfs_only"};
  std::vector<std::string> out;
  if (!m.style_loss) out.emplace_back("no_style");
  if (!m.patch_loss) out.emplace_back("no_patch");
  if (!m.germ) out.emplace_back("no_germ");
  if (!m.wmi) out.emplace_back("no_wmi");
  return out;
}

ResidualConditioning exemplar_conditioning(const NetworkBundle& bundle, const Tensor& exemplar) {
  if (exemplar.rank() != 4 || exemplar.dim(0) != 1 || exemplar.dim(1) != 3) {
    throw DimensionError("exemplar conditioning takes a single image (1,3,H,W), got " + shape_str(exemplar.shape()));
  }
  NoGradGuard guard;
  std::vector<Var> parts;
  for (auto& [mu, sigma] : feature_statistics(bundle.extractor(), Var(exemplar))) {
    parts.push_back(mu);
    parts.push_back(sigma);
  }
  return {GermMode::exemplar, op::concat_cols(parts).value()};
}

ResidualConditioning general_conditioning(int dim, std::mt19937_64& rng) {
  if (dim <= 0) throw DimensionError("conditioning dimension must be positive");
  return {GermMode::general, Tensor::randn({1, dim}, rng)};
}

Var residual(const NetworkBundle& bundle, const Var& content, const ResidualConditioning& z_r) {
  const int expect = bundle.residual_generator().conditioning_dim();
  if (z_r.vector.rank() != 2 || z_r.vector.dim(0) != 1 || z_r.vector.dim(1) != expect) {
    throw DimensionError("conditioning " + shape_str(z_r.vector.shape()) + " does not have length " +
                         std::to_string(expect));
  }
  const Var cond = op::repeat_rows(Var(z_r.vector), content.dim(0));
  return bundle.residual(content, cond);
}

Var compose(const Var& s_w, const Var& s_r) {
  if (s_w.shape() != s_r.shape()) {
    throw DimensionError("compose: shape mismatch " + shape_str(s_w.shape()) + " vs " + shape_str(s_r.shape()));
  }
  return op::clamp(op::add(s_w, s_r), -1.0f, 1.0f);
}

Translator::Translator(const NetworkBundle& bundle, ComponentMask mask) : bundle_(bundle), mask_(mask) {}

Var Translator::base(const Var& s, const Var& content) const {
  const AnchorStyleBank bank = AnchorStyleBank::persisted(bundle_);
  Var z;
  if (mask_.wmi) {
    z = interpolate_style(bank, AnchorWeights(bundle_.anchor_logits()));
  } else {
    z = select_style(bank, {1});
  }
  return bundle_.decode(content, broadcast_style(z, s.dim(0)));
}

Var Translator::translate(const Var& s, GermMode mode, const std::optional<Tensor>& exemplar,
                          std::mt19937_64& rng) const {
  if (mode == GermMode::exemplar && !exemplar) throw ConfigError("exemplar mode requires an exemplar image");
  if (mode == GermMode::exemplar && !mask_.germ) {
    throw ConfigError("exemplar mode is unavailable: the model was trained without GERM");
  }
  if (!mask_.germ) {
    const Var content = bundle_.encode_content(s);
    return base(s, content);
  }
  const ResidualConditioning z_r = mode == GermMode::exemplar
                                       ? exemplar_conditioning(bundle_, *exemplar)
                                       : general_conditioning(bundle_.arch().conditioning_dim(), rng);
  return translate(s, z_r);
}

Var Translator::translate(const Var& s, const ResidualConditioning& z_r) const {
  const Var content = bundle_.encode_content(s);
  const Var s_base = base(s, content);
  if (!mask_.germ) return s_base;
  return compose(s_base, residual(bundle_, content, z_r));
}

}  // namespace manifest
