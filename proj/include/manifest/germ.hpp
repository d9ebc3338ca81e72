#pragma once

#include <optional>
#include <random>

#include "manifest/ablation.hpp"
#include "manifest/manifold.hpp"

namespace manifest {

enum class GermMode { general, exemplar };

const char* to_string(GermMode mode);
GermMode parse_germ_mode(const std::string& s);

struct ResidualConditioning {
  GermMode mode = GermMode::general;
  Tensor vector;  // (1, d_r)
};

// (mu_k(t), sigma_k(t)) concatenated over the extractor stages for a single
// image t, computed by the same code path as the style loss.
ResidualConditioning exemplar_conditioning(const NetworkBundle& bundle, const Tensor& exemplar);
// i.i.d. N(0,1) entries of length dim.
ResidualConditioning general_conditioning(int dim, std::mt19937_64& rng);

// G^r_{z_r}(content); the conditioning row is shared by the whole batch.
Var residual(const NetworkBundle& bundle, const Var& content, const ResidualConditioning& z_r);

// Elementwise sum clamped to [-1, 1].
Var compose(const Var& s_w, const Var& s_r);

// Inference-time translation with persisted anchor styles and learned
// weights. Exemplar mode needs `exemplar`; the mask decides which
// components participate.
class Translator {
 public:
  Translator(const NetworkBundle& bundle, ComponentMask mask);

  // Manifold image before the residual: s_w, or s_c for the first
  // non-identity anchor when WMI is off, or the target style under lgfs_only.
  Var base(const Var& s, const Var& content) const;
  Var translate(const Var& s, GermMode mode, const std::optional<Tensor>& exemplar, std::mt19937_64& rng) const;
  Var translate(const Var& s, const ResidualConditioning& z_r) const;

  const ComponentMask& mask() const { return mask_; }

 private:
  const NetworkBundle& bundle_;
  ComponentMask mask_;
};

}  // namespace manifest
