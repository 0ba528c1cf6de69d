#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modseg/error.hpp"
#include "modseg/rng.hpp"

namespace modseg {

// Dense row-major float tensor; last axis varies fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) { resize(std::move(shape)); }

  void resize(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t s : shape) {
      require(s > 0, "tensor axis must be positive, got ", s);
      n *= s;
    }
    shape_ = std::move(shape);
    data_.assign(static_cast<size_t>(n), 0.0f);
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0f); }

  void fill_normal(Rng& rng, double mean, double stddev) {
    for (float& v : data_) v = static_cast<float>(mean + stddev * rng.normal());
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

inline void accumulate(Tensor& dst, const Tensor& src) {
  require(dst.same_shape(src), "accumulate: shape mismatch ", dst.shape_str(), " vs ",
          src.shape_str());
  float* d = dst.data();
  const float* s = src.data();
  for (int64_t i = 0, n = dst.numel(); i < n; ++i) d[i] += s[i];
}

}  // namespace modseg
