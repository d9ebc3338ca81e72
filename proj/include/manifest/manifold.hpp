#pragma once

#include <string>
#include <vector>

#include "manifest/networks.hpp"

namespace manifest {

// Ordered anchor names; "id" is always first.
class AnchorSet {
 public:
  // {"id", "m"} for two anchors, {"id", "m1", ..., "m<n-1>"} beyond that.
  static AnchorSet with_count(int count);
  static AnchorSet from_names(std::vector<std::string> names);

  DomainLabel label(const std::string& name) const;
  const std::string& name(DomainLabel d) const;
  int size() const { return static_cast<int>(names_.size()); }
  bool contains(DomainLabel d) const { return d.index >= 0 && d.index < size(); }
  static DomainLabel identity() { return {0}; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

// Softmax-parameterized point on the anchor simplex.
class AnchorWeights {
 public:
  explicit AnchorWeights(Var logits);
  // Uniform weights (zero logits), not attached to any bundle.
  static AnchorWeights uniform(int count);

  int size() const { return static_cast<int>(logits_.value().numel()); }
  Var logits() const { return logits_; }
  Var weights() const { return op::softmax(logits_); }
  Tensor weight_values() const;

 private:
  Var logits_;
};

// One style code per anchor, each (N,d_s) or (1,d_s).
class AnchorStyleBank {
 public:
  explicit AnchorStyleBank(std::vector<Var> codes);
  // Z applied per anchor to a batch of that anchor's images.
  static AnchorStyleBank encode(const NetworkBundle& bundle, const std::vector<Var>& anchor_images);
  // The persisted mean styles of the bundle.
  static AnchorStyleBank persisted(const NetworkBundle& bundle);

  int size() const { return static_cast<int>(codes_.size()); }
  const Var& code(DomainLabel d) const;

 private:
  std::vector<Var> codes_;
};

// z_c = sum_i [c == i] z_i.
Var select_style(const AnchorStyleBank& bank, DomainLabel c);
// z_w = sum_i w_i z_i.
Var interpolate_style(const AnchorStyleBank& bank, const AnchorWeights& w);

// Repeats a single-row style to n rows; passes (n,d) through.
Var broadcast_style(const Var& style, int n);

Var translate_to_anchor(const NetworkBundle& bundle, const Var& s, const AnchorStyleBank& bank, DomainLabel c);
Var translate_interpolated(const NetworkBundle& bundle, const Var& s, const AnchorStyleBank& bank,
                           const AnchorWeights& w);

// Stores the mean of Z(images_i, i) over each reference batch as the
// bundle's persisted anchor style.
void update_mean_styles(NetworkBundle& bundle, const std::vector<Tensor>& reference_batches);

}  // namespace manifest
