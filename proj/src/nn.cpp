#include "manifest/nn.hpp"

#include <algorithm>
#include <cmath>

namespace manifest {

Var ParameterStore::create(const std::string& name, Tensor init, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Var v(std::move(init), trainable);
  entries_.push_back({name, v, trainable});
  return v;
}

Var ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::vector<Var> ParameterStore::trainable_with_prefix(const std::vector<std::string>& prefixes) const {
  std::vector<Var> out;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    for (const auto& p : prefixes) {
      if (e.name.rfind(p, 0) == 0) {
        out.push_back(e.var);
        break;
      }
    }
  }
  return out;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride_, int pad_,
               std::mt19937_64& rng, Init init, bool trainable)
    : stride(stride_), pad(pad_) {
  Tensor w({out, in, kernel, kernel});
  switch (init) {
    case Init::he_normal:
      w = Tensor::randn(w.shape(), rng, std::sqrt(2.0f / static_cast<float>(in * kernel * kernel)));
      break;
    case Init::identity:
      if (in != out) throw ConfigError("identity init needs matching channel counts for " + name);
      for (int c = 0; c < out; ++c) w.at(c, c, kernel / 2, kernel / 2) = 1.0f;
      break;
    case Init::zeros:
      break;
  }
  weight = store.create(name + ".weight", std::move(w), trainable);
  bias = store.create(name + ".bias", Tensor::zeros({out}), trainable);
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  weight = store.create(name + ".weight", Tensor::randn({out, in}, rng, std::sqrt(1.0f / static_cast<float>(in))));
  bias = store.create(name + ".bias", Tensor::zeros({out}));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, std::mt19937_64& rng) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = op::relu(h);
  }
  return h;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int channels) {
  gamma = store.create(name + ".gamma", Tensor::ones({channels}));
  beta = store.create(name + ".beta", Tensor::zeros({channels}));
}

}  // namespace manifest
