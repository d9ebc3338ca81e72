#pragma once

#include <random>
#include <string>
#include <vector>

#include "manifest/autograd.hpp"

namespace manifest {

// Named parameter registry. Names are unique and insertion ordered, which
// makes them the checkpoint keys.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable = true;
  };

  Var create(const std::string& name, Tensor init, bool trainable = true);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  // Trainable parameters whose names start with any of the prefixes.
  std::vector<Var> trainable_with_prefix(const std::vector<std::string>& prefixes) const;

 private:
  std::vector<Entry> entries_;
};

enum class Init { he_normal, zeros, identity };

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
         std::mt19937_64& rng, Init init = Init::he_normal, bool trainable = true);
  Var operator()(const Var& x) const { return op::conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return op::linear(x, weight, bias); }
};

// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, std::mt19937_64& rng);
  Var operator()(const Var& x) const;
  int out_dim() const { return layers.empty() ? 0 : layers.back().weight.dim(0); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int channels);
  Var operator()(const Var& x) const { return op::layer_norm(x, gamma, beta); }
};

}  // namespace manifest
