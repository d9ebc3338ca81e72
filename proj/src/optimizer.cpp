#include "manifest/optimizer.hpp"

#include <cmath>

#include "manifest/checkpoint.hpp"

namespace manifest {

Adam::Adam(std::vector<Var> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
  const float step_size = static_cast<float>(lr_ / bc1);
  const float bc2_sqrt = static_cast<float>(std::sqrt(bc2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.has_grad()) continue;
    const Tensor& g = p.node()->grad;
    Tensor& w = p.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.numel(); ++k) {
      m[k] = beta1_ * m[k] + (1.0f - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0f - beta2_) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) / bc2_sqrt + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::save(Archive& archive, const std::string& prefix) const {
  archive.metadata[prefix] = {{"t", t_}, {"lr", lr_}};
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.put(prefix + ".m." + std::to_string(i), m_[i]);
    archive.put(prefix + ".v." + std::to_string(i), v_[i]);
  }
}

void Adam::load(const Archive& archive, const std::string& prefix) {
  if (!archive.metadata.contains(prefix)) throw IoError("checkpoint has no optimizer state '" + prefix + "'");
  t_ = archive.metadata[prefix].at("t").get<long>();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor* m = archive.find(prefix + ".m." + std::to_string(i));
    const Tensor* v = archive.find(prefix + ".v." + std::to_string(i));
    if (!m || !v || m->shape() != m_[i].shape() || v->shape() != v_[i].shape()) {
      throw IoError("checkpoint optimizer state '" + prefix + "' does not match the parameters");
    }
    m_[i] = *m;
    v_[i] = *v;
  }
}

}  // namespace manifest
