#include "manifest/manifold.hpp"

#include <algorithm>

namespace manifest {

AnchorSet AnchorSet::with_count(int count) {
  if (count < 2) throw ConfigError("anchor set needs at least 2 anchors, got " + std::to_string(count));
  std::vector<std::string> names{"id"};
  if (count == 2) {
    names.emplace_back("m");
  } else {
    for (int i = 1; i < count; ++i) names.push_back("m" + std::to_string(i));
  }
  return from_names(std::move(names));
}

AnchorSet AnchorSet::from_names(std::vector<std::string> names) {
  if (names.size() < 2 || names.front() != "id") {
    throw ConfigError("anchor set must start with 'id' and contain at least one more anchor");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw ConfigError("empty anchor name");
    if (std::find(names.begin() + static_cast<std::ptrdiff_t>(i) + 1, names.end(), names[i]) != names.end()) {
      throw ConfigError("duplicate anchor name '" + names[i] + "'");
    }
  }
  AnchorSet set;
  set.names_ = std::move(names);
  return set;
}

DomainLabel AnchorSet::label(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("unknown anchor '" + name + "'");
  return {static_cast<int>(it - names_.begin())};
}

const std::string& AnchorSet::name(DomainLabel d) const {
  if (!contains(d)) throw DomainError("unknown anchor index " + std::to_string(d.index));
  return names_[static_cast<std::size_t>(d.index)];
}

AnchorWeights::AnchorWeights(Var logits) : logits_(std::move(logits)) {
  if (logits_.value().rank() != 1 || logits_.value().numel() < 2) {
    throw DimensionError("anchor logits must be a vector of length >= 2");
  }
}

AnchorWeights AnchorWeights::uniform(int count) { return AnchorWeights(Var(Tensor::zeros({count}), true)); }

Tensor AnchorWeights::weight_values() const {
  NoGradGuard guard;
  return weights().value();
}

AnchorStyleBank::AnchorStyleBank(std::vector<Var> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw DimensionError("empty style bank");
  for (const auto& c : codes_) {
    if (c.value().rank() != 2 || c.shape() != codes_.front().shape()) {
      throw DimensionError("style bank codes must share one (N,d_s) shape");
    }
  }
}

AnchorStyleBank AnchorStyleBank::encode(const NetworkBundle& bundle, const std::vector<Var>& anchor_images) {
  if (static_cast<int>(anchor_images.size()) != bundle.arch().num_domains) {
    throw DimensionError("need one image batch per anchor: " + std::to_string(anchor_images.size()) + " vs " +
                         std::to_string(bundle.arch().num_domains));
  }
  std::vector<Var> codes;
  for (std::size_t i = 0; i < anchor_images.size(); ++i) {
    codes.push_back(bundle.encode_style(anchor_images[i], {static_cast<int>(i)}));
  }
  return AnchorStyleBank(std::move(codes));
}

AnchorStyleBank AnchorStyleBank::persisted(const NetworkBundle& bundle) {
  std::vector<Var> codes;
  for (int d = 0; d < bundle.arch().num_domains; ++d) codes.push_back(bundle.mean_style({d}));
  return AnchorStyleBank(std::move(codes));
}

const Var& AnchorStyleBank::code(DomainLabel d) const {
  if (d.index < 0 || d.index >= size()) throw DomainError("unknown anchor index " + std::to_string(d.index));
  return codes_[static_cast<std::size_t>(d.index)];
}

Var select_style(const AnchorStyleBank& bank, DomainLabel c) { return bank.code(c); }

Var interpolate_style(const AnchorStyleBank& bank, const AnchorWeights& w) {
  if (bank.size() != w.size()) {
    throw DimensionError("anchor count mismatch: bank has " + std::to_string(bank.size()) + ", weights have " +
                         std::to_string(w.size()));
  }
  const Var weights = w.weights();
  Var z = op::mul_scalar(bank.code({0}), op::index(weights, 0));
  for (int i = 1; i < bank.size(); ++i) z = op::add(z, op::mul_scalar(bank.code({i}), op::index(weights, i)));
  return z;
}

Var broadcast_style(const Var& style, int n) {
  if (style.dim(0) == n) return style;
  if (style.dim(0) == 1) return op::repeat_rows(style, n);
  throw DimensionError("style batch " + std::to_string(style.dim(0)) + " does not match image batch " +
                       std::to_string(n));
}

Var translate_to_anchor(const NetworkBundle& bundle, const Var& s, const AnchorStyleBank& bank, DomainLabel c) {
  const Var z = select_style(bank, c);
  const Var content = bundle.encode_content(s);
  return bundle.decode(content, broadcast_style(z, s.dim(0)));
}

Var translate_interpolated(const NetworkBundle& bundle, const Var& s, const AnchorStyleBank& bank,
                           const AnchorWeights& w) {
  const Var z = interpolate_style(bank, w);
  const Var content = bundle.encode_content(s);
  return bundle.decode(content, broadcast_style(z, s.dim(0)));
}

void update_mean_styles(NetworkBundle& bundle, const std::vector<Tensor>& reference_batches) {
  if (static_cast<int>(reference_batches.size()) != bundle.arch().num_domains) {
    throw DimensionError("need one reference batch per anchor");
  }
  NoGradGuard guard;
  for (std::size_t i = 0; i < reference_batches.size(); ++i) {
    const DomainLabel d{static_cast<int>(i)};
    const Var codes = bundle.encode_style(Var(reference_batches[i]), d);
    bundle.mean_style(d).node()->value = op::mean_rows(codes).value();
  }
}

}  // namespace manifest
