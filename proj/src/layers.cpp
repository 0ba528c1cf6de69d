#include "modseg/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "modseg/error.hpp"

namespace modseg {

namespace {

// valid 3^3 convolution on one sample: x [ci,D,H,W] -> y [co,D-2,H-2,W-2]
void conv3_sample(const float* x, float* y, const float* w, const float* bias, int ci_n,
                  int co_n, int64_t D, int64_t H, int64_t W) {
  const int64_t oD = D - 2, oH = H - 2, oW = W - 2;
  for (int co = 0; co < co_n; ++co) {
    const float b = bias ? bias[co] : 0.0f;
    for (int64_t z = 0; z < oD; ++z)
      for (int64_t y0 = 0; y0 < oH; ++y0) {
        float* out = y + ((co * oD + z) * oH + y0) * oW;
        for (int64_t x0 = 0; x0 < oW; ++x0) out[x0] = b;
        for (int ci = 0; ci < ci_n; ++ci)
          for (int dz = 0; dz < 3; ++dz)
            for (int dy = 0; dy < 3; ++dy) {
              const float* wrow = w + (((co * ci_n + ci) * 3 + dz) * 3 + dy) * 3;
              const float* in = x + ((ci * D + z + dz) * H + y0 + dy) * W;
              const float w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
              for (int64_t x0 = 0; x0 < oW; ++x0)
                out[x0] += w0 * in[x0] + w1 * in[x0 + 1] + w2 * in[x0 + 2];
            }
      }
  }
}

// 1^3 convolution on one sample: x [ci,V] -> y [co,V]
void conv1_sample(const float* x, float* y, const float* w, const float* bias, int ci_n,
                  int co_n, int64_t V) {
  for (int co = 0; co < co_n; ++co) {
    float* out = y + co * V;
    const float b = bias ? bias[co] : 0.0f;
    for (int64_t v = 0; v < V; ++v) out[v] = b;
    for (int ci = 0; ci < ci_n; ++ci) {
      const float wv = w[co * ci_n + ci];
      const float* in = x + ci * V;
      for (int64_t v = 0; v < V; ++v) out[v] += wv * in[v];
    }
  }
}

// accumulates gw for the 3^3 kernel: gw[co,ci,dz,dy,dx] += sum gy[co,...] * x[ci, shifted]
void conv3_weight_grad(const float* x, const float* gy, float* gw, int ci_n, int co_n,
                       int64_t D, int64_t H, int64_t W) {
  const int64_t oD = D - 2, oH = H - 2, oW = W - 2;
  for (int co = 0; co < co_n; ++co)
    for (int ci = 0; ci < ci_n; ++ci) {
      float* gwk = gw + (co * ci_n + ci) * 27;
      for (int dz = 0; dz < 3; ++dz)
        for (int dy = 0; dy < 3; ++dy) {
          double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0;
          for (int64_t z = 0; z < oD; ++z)
            for (int64_t y0 = 0; y0 < oH; ++y0) {
              const float* g = gy + ((co * oD + z) * oH + y0) * oW;
              const float* in = x + ((ci * D + z + dz) * H + y0 + dy) * W;
              float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f;
              for (int64_t x0 = 0; x0 < oW; ++x0) {
                s0 += g[x0] * in[x0];
                s1 += g[x0] * in[x0 + 1];
                s2 += g[x0] * in[x0 + 2];
              }
              acc0 += s0;
              acc1 += s1;
              acc2 += s2;
            }
          gwk[(dz * 3 + dy) * 3 + 0] += static_cast<float>(acc0);
          gwk[(dz * 3 + dy) * 3 + 1] += static_cast<float>(acc1);
          gwk[(dz * 3 + dy) * 3 + 2] += static_cast<float>(acc2);
        }
    }
}

}  // namespace

Conv3d::Conv3d(int in_channels, int out_channels, int kernel)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel) {
  require(kernel == 1 || kernel == 3, "conv kernel must be 1 or 3, got ", kernel);
  weight.value = Tensor({out_c_, in_c_, k_, k_, k_});
  bias.value = Tensor({out_c_});
}

void Conv3d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_c_) * k_ * k_ * k_;
  weight.value.fill_normal(rng, 0.0, std::sqrt(2.0 / fan_in));
  bias.value.zero();
}

void Conv3d::collect(const std::string& prefix, std::vector<Param*>& out) {
  weight.name = prefix + ".w";
  bias.name = prefix + ".b";
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor Conv3d::forward(const Tensor& x, bool cache) {
  require(x.rank() == 5, "conv input must be [N,C,D,H,W], got ", x.shape_str());
  require(x.size(1) == in_c_, "conv expects ", in_c_, " input channels, got ", x.size(1));
  const int64_t N = x.size(0), D = x.size(2), H = x.size(3), W = x.size(4);
  const int64_t shrink = k_ - 1;
  require(D > shrink && H > shrink && W > shrink, "conv input ", x.shape_str(),
          " too small for kernel ", k_);
  Tensor y({N, out_c_, D - shrink, H - shrink, W - shrink});
  const int64_t in_sample = x.numel() / N;
  const int64_t out_sample = y.numel() / N;
  for (int64_t n = 0; n < N; ++n) {
    const float* xs = x.data() + n * in_sample;
    float* ys = y.data() + n * out_sample;
    if (k_ == 3)
      conv3_sample(xs, ys, weight.value.data(), bias.value.data(), in_c_, out_c_, D, H, W);
    else
      conv1_sample(xs, ys, weight.value.data(), bias.value.data(), in_c_, out_c_, D * H * W);
  }
  if (cache)
    cached_x_ = x;
  else
    cached_x_ = Tensor();
  return y;
}

Tensor Conv3d::backward(const Tensor& gy) {
  require(!cached_x_.empty(), "conv backward without cached forward input");
  const Tensor& x = cached_x_;
  const int64_t N = x.size(0), D = x.size(2), H = x.size(3), W = x.size(4);
  const int64_t shrink = k_ - 1;
  const int64_t oD = D - shrink, oH = H - shrink, oW = W - shrink;
  require(gy.rank() == 5 && gy.size(0) == N && gy.size(1) == out_c_ && gy.size(2) == oD &&
              gy.size(3) == oH && gy.size(4) == oW,
          "conv backward: bad grad shape ", gy.shape_str());

  weight.ensure_grad();
  bias.ensure_grad();

  // bias grad
  {
    const int64_t V = oD * oH * oW;
    for (int co = 0; co < out_c_; ++co) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const float* g = gy.data() + (n * out_c_ + co) * V;
        for (int64_t v = 0; v < V; ++v) acc += g[v];
      }
      bias.grad[co] += static_cast<float>(acc);
    }
  }

  Tensor gx(x.shape());
  const int64_t in_sample = x.numel() / N;
  const int64_t out_sample = gy.numel() / N;

  if (k_ == 1) {
    const int64_t V = D * H * W;
    // weight grad: gw[co,ci] += dot(gy[co], x[ci])
    for (int64_t n = 0; n < N; ++n) {
      const float* xs = x.data() + n * in_sample;
      const float* gs = gy.data() + n * out_sample;
      for (int co = 0; co < out_c_; ++co)
        for (int ci = 0; ci < in_c_; ++ci) {
          const float* g = gs + co * V;
          const float* in = xs + ci * V;
          double acc = 0.0;
          for (int64_t v = 0; v < V; ++v) acc += g[v] * in[v];
          weight.grad[co * in_c_ + ci] += static_cast<float>(acc);
        }
      // input grad: gx[ci] = sum_co w[co,ci] * gy[co]
      float* gxs = gx.data() + n * in_sample;
      for (int ci = 0; ci < in_c_; ++ci) {
        float* out = gxs + ci * V;
        for (int co = 0; co < out_c_; ++co) {
          const float wv = weight.value[co * in_c_ + ci];
          const float* g = gs + co * V;
          for (int64_t v = 0; v < V; ++v) out[v] += wv * g[v];
        }
      }
    }
    return gx;
  }

  // k == 3: input grad as a valid conv of the zero-padded output grad with
  // the flipped, transposed kernel.
  Tensor wt({in_c_, out_c_, 3, 3, 3});
  for (int co = 0; co < out_c_; ++co)
    for (int ci = 0; ci < in_c_; ++ci)
      for (int dz = 0; dz < 3; ++dz)
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx)
            wt[(((ci * out_c_ + co) * 3 + (2 - dz)) * 3 + (2 - dy)) * 3 + (2 - dx)] =
                weight.value[(((co * in_c_ + ci) * 3 + dz) * 3 + dy) * 3 + dx];

  const int64_t pD = oD + 4, pH = oH + 4, pW = oW + 4;
  Tensor padded({out_c_, pD, pH, pW});
  for (int64_t n = 0; n < N; ++n) {
    const float* xs = x.data() + n * in_sample;
    const float* gs = gy.data() + n * out_sample;
    if (weight.trainable) conv3_weight_grad(xs, gs, weight.grad.data(), in_c_, out_c_, D, H, W);

    padded.zero();
    for (int co = 0; co < out_c_; ++co)
      for (int64_t z = 0; z < oD; ++z)
        for (int64_t y0 = 0; y0 < oH; ++y0)
          std::memcpy(padded.data() + ((co * pD + z + 2) * pH + y0 + 2) * pW + 2,
                      gs + ((co * oD + z) * oH + y0) * oW, sizeof(float) * oW);
    conv3_sample(padded.data(), gx.data() + n * in_sample, wt.data(), nullptr, out_c_, in_c_,
                 pD, pH, pW);
  }
  return gx;
}

BatchNorm3d::BatchNorm3d(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma.value = Tensor({channels});
  beta.value = Tensor({channels});
  running_mean.value = Tensor({channels});
  running_var.value = Tensor({channels});
  running_mean.buffer = running_var.buffer = true;
  running_mean.trainable = running_var.trainable = false;
  init();
}

void BatchNorm3d::init() {
  gamma.value.fill(1.0f);
  beta.value.zero();
  running_mean.value.zero();
  running_var.value.fill(1.0f);
}

void BatchNorm3d::collect(const std::string& prefix, std::vector<Param*>& out) {
  gamma.name = prefix + ".gamma";
  beta.name = prefix + ".beta";
  running_mean.name = prefix + ".running_mean";
  running_var.name = prefix + ".running_var";
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

Tensor BatchNorm3d::forward(const Tensor& x, Mode mode, bool cache) {
  require(x.rank() == 5 && x.size(1) == channels_, "batchnorm expects [N,", channels_,
          ",D,H,W], got ", x.shape_str());
  const int64_t N = x.size(0), V = x.size(2) * x.size(3) * x.size(4);
  Tensor y(x.shape());

  if (mode == Mode::Eval) {
    for (int c = 0; c < channels_; ++c) {
      const float inv = static_cast<float>(
          1.0 / std::sqrt(static_cast<double>(running_var.value[c]) + eps_));
      const float mu = running_mean.value[c];
      const float g = gamma.value[c], b = beta.value[c];
      for (int64_t n = 0; n < N; ++n) {
        const float* in = x.data() + (n * channels_ + c) * V;
        float* out = y.data() + (n * channels_ + c) * V;
        for (int64_t v = 0; v < V; ++v) out[v] = g * (in[v] - mu) * inv + b;
      }
    }
    cached_xhat_ = Tensor();
    return y;
  }

  // training mode: population statistics over batch and voxels
  cached_inv_std_.assign(static_cast<size_t>(channels_), 0.0);
  Tensor xhat(x.shape());
  const double count = static_cast<double>(N * V);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* in = x.data() + (n * channels_ + c) * V;
      for (int64_t v = 0; v < V; ++v) sum += in[v];
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* in = x.data() + (n * channels_ + c) * V;
      for (int64_t v = 0; v < V; ++v) {
        const double d = in[v] - mean;
        ss += d * d;
      }
    }
    const double var = ss / count;
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    cached_inv_std_[static_cast<size_t>(c)] = inv_std;

    const float muf = static_cast<float>(mean);
    const float invf = static_cast<float>(inv_std);
    const float g = gamma.value[c], b = beta.value[c];
    for (int64_t n = 0; n < N; ++n) {
      const float* in = x.data() + (n * channels_ + c) * V;
      float* xh = xhat.data() + (n * channels_ + c) * V;
      float* out = y.data() + (n * channels_ + c) * V;
      for (int64_t v = 0; v < V; ++v) {
        xh[v] = (in[v] - muf) * invf;
        out[v] = g * xh[v] + b;
      }
    }
    running_mean.value[c] = static_cast<float>((1.0 - momentum_) * running_mean.value[c] +
                                               momentum_ * mean);
    running_var.value[c] =
        static_cast<float>((1.0 - momentum_) * running_var.value[c] + momentum_ * var);
  }
  if (cache)
    cached_xhat_ = std::move(xhat);
  else
    cached_xhat_ = Tensor();
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& gy) {
  require(!cached_xhat_.empty(), "batchnorm backward without cached training forward");
  const Tensor& xhat = cached_xhat_;
  require(gy.same_shape(xhat), "batchnorm backward: bad grad shape");
  const int64_t N = gy.size(0), V = gy.size(2) * gy.size(3) * gy.size(4);
  const double count = static_cast<double>(N * V);

  gamma.ensure_grad();
  beta.ensure_grad();
  Tensor gx(gy.shape());

  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* g = gy.data() + (n * channels_ + c) * V;
      const float* xh = xhat.data() + (n * channels_ + c) * V;
      for (int64_t v = 0; v < V; ++v) {
        sum_g += g[v];
        sum_gx += static_cast<double>(g[v]) * xh[v];
      }
    }
    gamma.grad[c] += static_cast<float>(sum_gx);
    beta.grad[c] += static_cast<float>(sum_g);

    const double mean_g = sum_g / count;
    const double mean_gx = sum_gx / count;
    const double scale = gamma.value[c] * cached_inv_std_[static_cast<size_t>(c)];
    for (int64_t n = 0; n < N; ++n) {
      const float* g = gy.data() + (n * channels_ + c) * V;
      const float* xh = xhat.data() + (n * channels_ + c) * V;
      float* out = gx.data() + (n * channels_ + c) * V;
      for (int64_t v = 0; v < V; ++v)
        out[v] = static_cast<float>(scale * (g[v] - mean_g - xh[v] * mean_gx));
    }
  }
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool cache) {
  Tensor y(x.shape());
  const float s = slope_;
  const float* in = x.data();
  float* out = y.data();
  for (int64_t i = 0, n = x.numel(); i < n; ++i) out[i] = in[i] >= 0.0f ? in[i] : s * in[i];
  if (cache)
    cached_y_ = y;
  else
    cached_y_ = Tensor();
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) const {
  require(!cached_y_.empty() && gy.same_shape(cached_y_), "leaky-relu backward mismatch");
  Tensor gx(gy.shape());
  const float s = slope_;
  const float* g = gy.data();
  const float* y = cached_y_.data();
  float* out = gx.data();
  for (int64_t i = 0, n = gy.numel(); i < n; ++i) out[i] = y[i] >= 0.0f ? g[i] : s * g[i];
  return gx;
}

Tensor MaxPool3d::forward(const Tensor& x, bool cache) {
  require(x.rank() == 5, "maxpool input must be [N,C,D,H,W]");
  const int64_t N = x.size(0), C = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
  require(D % 2 == 0 && H % 2 == 0 && W % 2 == 0, "maxpool input sides must be even, got ",
          x.shape_str());
  Tensor y({N, C, D / 2, H / 2, W / 2});
  if (cache) {
    argmax_.assign(static_cast<size_t>(y.numel()), 0);
    in_shape_ = x.shape();
  } else {
    argmax_.clear();
  }
  const int64_t oD = D / 2, oH = H / 2, oW = W / 2;
  int64_t oi = 0;
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* in = x.data() + nc * D * H * W;
    for (int64_t z = 0; z < oD; ++z)
      for (int64_t y0 = 0; y0 < oH; ++y0)
        for (int64_t x0 = 0; x0 < oW; ++x0, ++oi) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = 0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int64_t idx = ((2 * z + dz) * H + 2 * y0 + dy) * W + 2 * x0 + dx;
                if (in[idx] > best) {
                  best = in[idx];
                  best_idx = idx;
                }
              }
          y[oi] = best;
          if (cache) argmax_[static_cast<size_t>(oi)] = nc * D * H * W + best_idx;
        }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& gy) const {
  require(!argmax_.empty(), "maxpool backward without cached forward");
  require(gy.numel() == static_cast<int64_t>(argmax_.size()), "maxpool backward shape mismatch");
  Tensor gx(in_shape_);
  const float* g = gy.data();
  float* out = gx.data();
  for (int64_t i = 0, n = gy.numel(); i < n; ++i) out[argmax_[static_cast<size_t>(i)]] += g[i];
  return gx;
}

namespace {

struct LinearTaps {
  std::vector<int64_t> i0, i1;
  std::vector<float> w1;  // weight of i1; weight of i0 is 1 - w1
};

// x2 upsampling taps: output j samples input coordinate (j + 0.5)/2 - 0.5,
// edges clamped.
LinearTaps make_taps(int64_t in_len) {
  LinearTaps t;
  const int64_t out_len = in_len * 2;
  t.i0.resize(static_cast<size_t>(out_len));
  t.i1.resize(static_cast<size_t>(out_len));
  t.w1.resize(static_cast<size_t>(out_len));
  for (int64_t j = 0; j < out_len; ++j) {
    const double pos = (j + 0.5) / 2.0 - 0.5;
    double base = std::floor(pos);
    double frac = pos - base;
    int64_t lo = static_cast<int64_t>(base);
    int64_t hi = lo + 1;
    if (lo < 0) {
      lo = hi = 0;
      frac = 0.0;
    }
    if (hi >= in_len) {
      lo = hi = in_len - 1;
      frac = 0.0;
    }
    t.i0[static_cast<size_t>(j)] = lo;
    t.i1[static_cast<size_t>(j)] = hi;
    t.w1[static_cast<size_t>(j)] = static_cast<float>(frac);
  }
  return t;
}

}  // namespace

Tensor Upsample2x::forward(const Tensor& x) {
  require(x.rank() == 5, "upsample input must be [N,C,D,H,W]");
  in_shape_ = x.shape();
  const int64_t NC = x.size(0) * x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
  const auto tz = make_taps(D), ty = make_taps(H), tx = make_taps(W);
  Tensor y({x.size(0), x.size(1), D * 2, H * 2, W * 2});
  const int64_t oD = D * 2, oH = H * 2, oW = W * 2;
  for (int64_t nc = 0; nc < NC; ++nc) {
    const float* in = x.data() + nc * D * H * W;
    float* out = y.data() + nc * oD * oH * oW;
    for (int64_t z = 0; z < oD; ++z) {
      const int64_t z0 = tz.i0[static_cast<size_t>(z)], z1 = tz.i1[static_cast<size_t>(z)];
      const float wz1 = tz.w1[static_cast<size_t>(z)], wz0 = 1.0f - wz1;
      for (int64_t yy = 0; yy < oH; ++yy) {
        const int64_t y0 = ty.i0[static_cast<size_t>(yy)], y1 = ty.i1[static_cast<size_t>(yy)];
        const float wy1 = ty.w1[static_cast<size_t>(yy)], wy0 = 1.0f - wy1;
        const float* r00 = in + (z0 * H + y0) * W;
        const float* r01 = in + (z0 * H + y1) * W;
        const float* r10 = in + (z1 * H + y0) * W;
        const float* r11 = in + (z1 * H + y1) * W;
        float* orow = out + (z * oH + yy) * oW;
        for (int64_t xx = 0; xx < oW; ++xx) {
          const int64_t x0 = tx.i0[static_cast<size_t>(xx)],
                        x1 = tx.i1[static_cast<size_t>(xx)];
          const float wx1 = tx.w1[static_cast<size_t>(xx)], wx0 = 1.0f - wx1;
          const float v00 = wx0 * r00[x0] + wx1 * r00[x1];
          const float v01 = wx0 * r01[x0] + wx1 * r01[x1];
          const float v10 = wx0 * r10[x0] + wx1 * r10[x1];
          const float v11 = wx0 * r11[x0] + wx1 * r11[x1];
          orow[xx] = wz0 * (wy0 * v00 + wy1 * v01) + wz1 * (wy0 * v10 + wy1 * v11);
        }
      }
    }
  }
  return y;
}

Tensor Upsample2x::backward(const Tensor& gy) const {
  require(!in_shape_.empty(), "upsample backward without forward");
  const int64_t NC = in_shape_[0] * in_shape_[1], D = in_shape_[2], H = in_shape_[3],
                W = in_shape_[4];
  require(gy.rank() == 5 && gy.size(2) == D * 2 && gy.size(3) == H * 2 && gy.size(4) == W * 2,
          "upsample backward shape mismatch");
  const auto tz = make_taps(D), ty = make_taps(H), tx = make_taps(W);
  Tensor gx(in_shape_);
  const int64_t oD = D * 2, oH = H * 2, oW = W * 2;
  for (int64_t nc = 0; nc < NC; ++nc) {
    const float* g = gy.data() + nc * oD * oH * oW;
    float* out = gx.data() + nc * D * H * W;
    for (int64_t z = 0; z < oD; ++z) {
      const int64_t z0 = tz.i0[static_cast<size_t>(z)], z1 = tz.i1[static_cast<size_t>(z)];
      const float wz1 = tz.w1[static_cast<size_t>(z)], wz0 = 1.0f - wz1;
      for (int64_t yy = 0; yy < oH; ++yy) {
        const int64_t y0 = ty.i0[static_cast<size_t>(yy)], y1 = ty.i1[static_cast<size_t>(yy)];
        const float wy1 = ty.w1[static_cast<size_t>(yy)], wy0 = 1.0f - wy1;
        const float* grow = g + (z * oH + yy) * oW;
        for (int64_t xx = 0; xx < oW; ++xx) {
          const int64_t x0 = tx.i0[static_cast<size_t>(xx)],
                        x1 = tx.i1[static_cast<size_t>(xx)];
          const float wx1 = tx.w1[static_cast<size_t>(xx)], wx0 = 1.0f - wx1;
          const float gv = grow[xx];
          out[(z0 * H + y0) * W + x0] += wz0 * wy0 * wx0 * gv;
          out[(z0 * H + y0) * W + x1] += wz0 * wy0 * wx1 * gv;
          out[(z0 * H + y1) * W + x0] += wz0 * wy1 * wx0 * gv;
          out[(z0 * H + y1) * W + x1] += wz0 * wy1 * wx1 * gv;
          out[(z1 * H + y0) * W + x0] += wz1 * wy0 * wx0 * gv;
          out[(z1 * H + y0) * W + x1] += wz1 * wy0 * wx1 * gv;
          out[(z1 * H + y1) * W + x0] += wz1 * wy1 * wx0 * gv;
          out[(z1 * H + y1) * W + x1] += wz1 * wy1 * wx1 * gv;
        }
      }
    }
  }
  return gx;
}

Tensor center_crop(const Tensor& x, int64_t target) {
  require(x.rank() == 5, "center_crop input must be [N,C,D,H,W]");
  const int64_t D = x.size(2), H = x.size(3), W = x.size(4);
  require(D >= target && H >= target && W >= target, "center_crop: input ", x.shape_str(),
          " smaller than crop side ", target);
  require((D - target) % 2 == 0 && (H - target) % 2 == 0 && (W - target) % 2 == 0,
          "center_crop: asymmetric margin for crop of ", x.shape_str(), " to ", target);
  const int64_t mz = (D - target) / 2, my = (H - target) / 2, mx = (W - target) / 2;
  Tensor y({x.size(0), x.size(1), target, target, target});
  const int64_t NC = x.size(0) * x.size(1);
  for (int64_t nc = 0; nc < NC; ++nc) {
    const float* in = x.data() + nc * D * H * W;
    float* out = y.data() + nc * target * target * target;
    for (int64_t z = 0; z < target; ++z)
      for (int64_t yy = 0; yy < target; ++yy)
        std::memcpy(out + (z * target + yy) * target,
                    in + ((z + mz) * H + yy + my) * W + mx, sizeof(float) * target);
  }
  return y;
}

Tensor center_crop_backward(const Tensor& gy, const std::vector<int64_t>& full_shape) {
  Tensor gx(full_shape);
  const int64_t D = full_shape[2], H = full_shape[3], W = full_shape[4];
  const int64_t target = gy.size(2);
  const int64_t mz = (D - target) / 2, my = (H - target) / 2, mx = (W - target) / 2;
  const int64_t NC = full_shape[0] * full_shape[1];
  for (int64_t nc = 0; nc < NC; ++nc) {
    const float* g = gy.data() + nc * target * target * target;
    float* out = gx.data() + nc * D * H * W;
    for (int64_t z = 0; z < target; ++z)
      for (int64_t yy = 0; yy < target; ++yy)
        std::memcpy(out + ((z + mz) * H + yy + my) * W + mx,
                    g + (z * target + yy) * target, sizeof(float) * target);
  }
  return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == 5 && b.rank() == 5 && a.size(0) == b.size(0) && a.size(2) == b.size(2) &&
              a.size(3) == b.size(3) && a.size(4) == b.size(4),
          "concat_channels: incompatible shapes ", a.shape_str(), " vs ", b.shape_str());
  const int64_t N = a.size(0), Ca = a.size(1), Cb = b.size(1);
  const int64_t V = a.size(2) * a.size(3) * a.size(4);
  Tensor y({N, Ca + Cb, a.size(2), a.size(3), a.size(4)});
  for (int64_t n = 0; n < N; ++n) {
    std::memcpy(y.data() + n * (Ca + Cb) * V, a.data() + n * Ca * V,
                sizeof(float) * static_cast<size_t>(Ca * V));
    std::memcpy(y.data() + (n * (Ca + Cb) + Ca) * V, b.data() + n * Cb * V,
                sizeof(float) * static_cast<size_t>(Cb * V));
  }
  return y;
}

void split_channels(const Tensor& g, int64_t channels_a, Tensor& ga, Tensor& gb) {
  const int64_t N = g.size(0), C = g.size(1);
  const int64_t V = g.size(2) * g.size(3) * g.size(4);
  const int64_t Cb = C - channels_a;
  ga = Tensor({N, channels_a, g.size(2), g.size(3), g.size(4)});
  gb = Tensor({N, Cb, g.size(2), g.size(3), g.size(4)});
  for (int64_t n = 0; n < N; ++n) {
    std::memcpy(ga.data() + n * channels_a * V, g.data() + n * C * V,
                sizeof(float) * static_cast<size_t>(channels_a * V));
    std::memcpy(gb.data() + n * Cb * V, g.data() + (n * C + channels_a) * V,
                sizeof(float) * static_cast<size_t>(Cb * V));
  }
}

}  // namespace modseg
