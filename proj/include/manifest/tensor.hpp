#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "manifest/error.hpp"

namespace manifest {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor randn(Shape shape, std::mt19937_64& rng, float stddev = 1.0f);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, float lo, float hi);

  const Shape& shape() const { return shape_; }
  int dim(int i) const;
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor (n, c, h, w).
  float& at(int n, int c, int h, int w);
  float at(int n, int c, int h, int w) const;

  Tensor reshaped(Shape shape) const;
  void fill(float v);

  // Rows [begin, end) along the leading dimension.
  Tensor slice_batch(int begin, int end) const;
  static Tensor concat_batch(std::span<const Tensor> parts);

  float max_abs() const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// FNV-1a over the raw bytes; used to detect any parameter change.
std::uint64_t checksum(const Tensor& t);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace manifest
