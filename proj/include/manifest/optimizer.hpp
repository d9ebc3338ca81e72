#pragma once

#include <string>
#include <vector>

#include "manifest/autograd.hpp"

namespace manifest {

struct Archive;

// Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Var> params, float lr, float beta1, float beta2, float eps = 1e-8f);

  void step();
  void zero_grad();

  long steps() const { return t_; }
  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }
  const std::vector<Var>& params() const { return params_; }

  // Moments stored under <prefix>.m.<i> / <prefix>.v.<i>; step count in the
  // archive metadata under <prefix>.
  void save(Archive& archive, const std::string& prefix) const;
  void load(const Archive& archive, const std::string& prefix);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  float lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace manifest
