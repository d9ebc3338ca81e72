#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "manifest/config.hpp"
#include "manifest/networks.hpp"
#include "manifest/tensor.hpp"

namespace testing {

// Small enough for unit tests at 32x32.
inline manifest::ArchConfig tiny_arch() {
  manifest::ArchConfig a;
  a.base_width = 8;
  a.downsamples = 2;
  a.res_blocks = 1;
  a.style_dim = 4;
  a.style_width = 8;
  a.mlp_dim = 16;
  a.disc_width = 8;
  a.patch_size = 8;
  a.extractor_widths = {8, 8, 16, 16};
  return a;
}

inline manifest::TrainingConfig tiny_config() {
  manifest::TrainingConfig c;
  c.arch = tiny_arch();
  c.resolution = 32;
  c.patch_count = 2;
  c.iterations = 4;
  c.checkpoint_every = 0;
  c.mean_style_samples = 4;
  return c;
}

inline manifest::Tensor images(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return manifest::Tensor::uniform({n, 3, size, size}, rng, -1.0f, 1.0f);
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("manifest_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Central differences of a scalar function of one tensor.
inline manifest::Tensor numeric_grad(const std::function<double(const manifest::Tensor&)>& f, manifest::Tensor x,
                                     float h) {
  manifest::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = static_cast<float>((up - down) / (2.0 * h));
  }
  return g;
}

// ||a - b|| / max(||b||, tiny).
inline double relative_error(const manifest::Tensor& a, const manifest::Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    num += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    den += double(b[i]) * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace testing
