#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modseg/rng.hpp"
#include "modseg/tensor.hpp"

namespace modseg {

enum class Mode { Train, Eval };

// A named learnable tensor. Buffers (batch-norm running statistics) are
// checkpointed but never optimized.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool buffer = false;

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
  }
};

// Unpadded 3D convolution, kernel 1^3 or 3^3. Activations are [N,C,D,H,W].
class Conv3d {
 public:
  Conv3d(int in_channels, int out_channels, int kernel);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool cache);
  // Returns grad wrt input; accumulates weight/bias grads when trainable.
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, std::vector<Param*>& out);

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int kernel() const { return k_; }

  Param weight;  // [out, in, k, k, k]
  Param bias;    // [out]

 private:
  int in_c_, out_c_, k_;
  Tensor cached_x_;
};

class BatchNorm3d {
 public:
  explicit BatchNorm3d(int channels, double eps = 1e-5, double momentum = 0.1);

  void init();
  Tensor forward(const Tensor& x, Mode mode, bool cache);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, std::vector<Param*>& out);

  Param gamma, beta;
  Param running_mean, running_var;  // buffers

 private:
  int channels_;
  double eps_, momentum_;
  Tensor cached_xhat_;
  std::vector<double> cached_inv_std_;
};

class LeakyReLU {
 public:
  explicit LeakyReLU(float slope) : slope_(slope) {}

  Tensor forward(const Tensor& x, bool cache);
  Tensor backward(const Tensor& gy) const;

  float slope() const { return slope_; }

 private:
  float slope_;
  Tensor cached_y_;
};

// 2^3 max pooling with stride 2; spatial sides must be even.
class MaxPool3d {
 public:
  Tensor forward(const Tensor& x, bool cache);
  Tensor backward(const Tensor& gy) const;

 private:
  std::vector<int64_t> argmax_;  // input-linear index per output element
  std::vector<int64_t> in_shape_;
};

// Trilinear x2 upsampling (half-voxel aligned, edges clamped).
class Upsample2x {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy) const;

 private:
  std::vector<int64_t> in_shape_;
};

// Center crop of the spatial axes to side `target` (encoder skip maps are
// cropped to the decoder resolution).
Tensor center_crop(const Tensor& x, int64_t target);
// Scatter of the cropped gradient back into a zero tensor of shape `full`.
Tensor center_crop_backward(const Tensor& gy, const std::vector<int64_t>& full_shape);

// Channel concatenation of two [N,C,D,H,W] tensors with equal spatial shape.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int64_t channels_a, Tensor& ga, Tensor& gb);

}  // namespace modseg
