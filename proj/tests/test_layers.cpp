#include <doctest.h>

#include <cmath>

#include "modseg/layers.hpp"
#include "test_util.hpp"

using namespace modseg;

namespace {

// Independent reference: plain nested-loop valid convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int k) {
  const int64_t N = x.size(0), Ci = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
  const int64_t Co = w.size(0);
  const int64_t oD = D - k + 1, oH = H - k + 1, oW = W - k + 1;
  Tensor y({N, Co, oD, oH, oW});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t z = 0; z < oD; ++z)
        for (int64_t yy = 0; yy < oH; ++yy)
          for (int64_t xx = 0; xx < oW; ++xx) {
            double acc = b[co];
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t dz = 0; dz < k; ++dz)
                for (int64_t dy = 0; dy < k; ++dy)
                  for (int64_t dx = 0; dx < k; ++dx)
                    acc += static_cast<double>(
                               w[((((co * Ci) + ci) * k + dz) * k + dy) * k + dx]) *
                           x[(((n * Ci + ci) * D + z + dz) * H + yy + dy) * W + xx + dx];
            y[(((n * Co + co) * oD + z) * oH + yy) * oW + xx] = static_cast<float>(acc);
          }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv3d forward matches the nested-loop oracle") {
  Rng rng(1);
  for (const int k : {1, 3}) {
    Conv3d conv(3, 2, k);
    conv.init(rng);
    // non-cubic spatial shape to exercise every stride
    Tensor x = testutil::random_tensor({2, 3, 5, 6, 7}, rng);
    const Tensor y = conv.forward(x, false);
    const Tensor ref = naive_conv(x, conv.weight.value, conv.bias.value, k);
    CHECK(y.same_shape(ref));
    CHECK(testutil::max_abs_diff(y, ref) < 1e-4);
  }
}

TEST_CASE("conv3d backward satisfies the bilinear adjoint identities") {
  Rng rng(2);
  for (const int k : {1, 3}) {
    Conv3d conv(2, 3, k);
    conv.init(rng);
    conv.bias.value.zero();  // identities below assume no bias offset
    Tensor x = testutil::random_tensor({2, 2, 5, 5, 5}, rng);
    const Tensor y = conv.forward(x, true);
    Tensor g = testutil::random_tensor(y.shape(), rng);
    conv.weight.ensure_grad();
    conv.bias.ensure_grad();
    conv.weight.grad.zero();
    conv.bias.grad.zero();
    const Tensor gx = conv.backward(g);

    const double gy_dot_y = dot(g, y);
    // y is linear in x and in w separately, so <g,y> = <dx,x> = <dw,w>
    CHECK(dot(gx, x) == doctest::Approx(gy_dot_y).epsilon(1e-3));
    CHECK(dot(conv.weight.grad, conv.weight.value) == doctest::Approx(gy_dot_y).epsilon(1e-3));
  }
}

TEST_CASE("conv3d bias gradient sums the output gradient per channel") {
  Rng rng(3);
  Conv3d conv(1, 2, 3);
  conv.init(rng);
  Tensor x = testutil::random_tensor({1, 1, 5, 5, 5}, rng);
  const Tensor y = conv.forward(x, true);
  Tensor g(y.shape());
  g.fill(1.0f);
  conv.weight.ensure_grad();
  conv.bias.ensure_grad();
  conv.weight.grad.zero();
  conv.bias.grad.zero();
  conv.backward(g);
  const auto voxels = static_cast<float>(y.numel() / y.size(1));
  CHECK(conv.bias.grad[0] == doctest::Approx(voxels).epsilon(1e-5));
  CHECK(conv.bias.grad[1] == doctest::Approx(voxels).epsilon(1e-5));
}

TEST_CASE("batchnorm normalizes per channel in training mode") {
  Rng rng(4);
  BatchNorm3d bn(3);
  Tensor x = testutil::random_tensor({2, 3, 4, 4, 4}, rng, 2.5);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] += 1.5f;
  const Tensor y = bn.forward(x, Mode::Train, true);
  const int64_t V = 64;
  for (int c = 0; c < 3; ++c) {
    double sum = 0, ss = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t v = 0; v < V; ++v) {
        const float val = y[(n * 3 + c) * V + v];
        sum += val;
        ss += static_cast<double>(val) * val;
      }
    const double mean = sum / (2 * V);
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(ss / (2 * V) - mean * mean - 1.0) < 1e-3);
  }
  // running statistics moved toward the batch statistics
  CHECK(bn.running_mean.value[0] != 0.0f);
  CHECK(bn.running_var.value[0] != 1.0f);
}

TEST_CASE("batchnorm eval mode applies running statistics and caches nothing") {
  BatchNorm3d bn(1);
  bn.running_mean.value[0] = 2.0f;
  bn.running_var.value[0] = 4.0f;
  Tensor x({1, 1, 2, 2, 2});
  x.fill(4.0f);
  const Tensor y = bn.forward(x, Mode::Eval, false);
  // (4 - 2) / sqrt(4 + eps) ~ 1
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(bn.running_mean.value[0] == 2.0f);  // unchanged by eval
  CHECK_THROWS(bn.backward(y));
}

TEST_CASE("batchnorm backward agrees with finite differences") {
  Rng rng(5);
  BatchNorm3d bn(2);
  bn.gamma.value[0] = 1.3f;
  bn.beta.value[1] = -0.4f;
  Tensor x = testutil::random_tensor({1, 2, 3, 3, 3}, rng);
  Tensor r = testutil::random_tensor({1, 2, 3, 3, 3}, rng);  // random projection

  const Tensor y = bn.forward(x, Mode::Train, true);
  bn.gamma.ensure_grad();
  bn.beta.ensure_grad();
  bn.gamma.grad.zero();
  bn.beta.grad.zero();
  const Tensor gx = bn.backward(r);

  auto loss_at = [&](Tensor probe) {
    BatchNorm3d fresh(2);
    fresh.gamma.value = bn.gamma.value;
    fresh.beta.value = bn.beta.value;
    return dot(fresh.forward(probe, Mode::Train, false), r);
  };
  const float h = 1e-2f;
  for (const int64_t idx : {0L, 13L, 27L, 53L}) {
    Tensor lo = x, hi = x;
    lo[idx] -= h;
    hi[idx] += h;
    const double fd = (loss_at(hi) - loss_at(lo)) / (2.0 * h);
    CHECK(gx[idx] == doctest::Approx(fd).epsilon(2e-2));
  }
}

TEST_CASE("leaky relu forward and backward") {
  LeakyReLU act(0.01f);
  Tensor x({1, 1, 1, 1, 4});
  x[0] = -2.0f;
  x[1] = -0.5f;
  x[2] = 0.0f;
  x[3] = 3.0f;
  const Tensor y = act.forward(x, true);
  CHECK(y[0] == doctest::Approx(-0.02));
  CHECK(y[1] == doctest::Approx(-0.005));
  CHECK(y[2] == 0.0f);
  CHECK(y[3] == 3.0f);
  Tensor g(x.shape());
  g.fill(1.0f);
  const Tensor gx = act.backward(g);
  CHECK(gx[0] == 0.01f);
  CHECK(gx[3] == 1.0f);
}

TEST_CASE("maxpool picks maxima and routes gradients to them") {
  MaxPool3d pool;
  Tensor x({1, 1, 2, 2, 4});
  for (int64_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
  x[3] = 100.0f;  // off-corner maximum in the second pooling cell
  const Tensor y = pool.forward(x, true);
  CHECK(y.shape() == std::vector<int64_t>{1, 1, 1, 1, 2});
  CHECK(y[0] == 13.0f);   // cell over x in {0,1}
  CHECK(y[1] == 100.0f);  // cell over x in {2,3}

  Tensor g(y.shape());
  g[0] = 2.0f;
  g[1] = 3.0f;
  const Tensor gx = pool.backward(g);
  CHECK(gx[13] == 2.0f);
  CHECK(gx[3] == 3.0f);
  double total = 0;
  for (int64_t i = 0; i < gx.numel(); ++i) total += gx[i];
  CHECK(total == doctest::Approx(5.0));
}

TEST_CASE("maxpool requires even sides") {
  MaxPool3d pool;
  Tensor x({1, 1, 3, 4, 4});
  CHECK_THROWS(pool.forward(x, false));
}

TEST_CASE("trilinear upsampling preserves constants and doubles sides") {
  Upsample2x up;
  Tensor x({1, 2, 3, 4, 5});
  x.fill(2.5f);
  const Tensor y = up.forward(x);
  CHECK(y.shape() == std::vector<int64_t>{1, 2, 6, 8, 10});
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("upsampling backward is the adjoint of forward") {
  Rng rng(6);
  Upsample2x up;
  Tensor x = testutil::random_tensor({1, 2, 3, 3, 3}, rng);
  const Tensor y = up.forward(x);
  Tensor g = testutil::random_tensor(y.shape(), rng);
  const Tensor gx = up.backward(g);
  CHECK(dot(g, y) == doctest::Approx(dot(gx, x)).epsilon(1e-4));
}

TEST_CASE("center crop extracts the middle window; backward zero-pads") {
  Tensor x({1, 1, 4, 4, 4});
  for (int64_t i = 0; i < 64; ++i) x[i] = static_cast<float>(i);
  const Tensor y = center_crop(x, 2);
  CHECK(y.shape() == std::vector<int64_t>{1, 1, 2, 2, 2});
  CHECK(y[0] == x[(1 * 4 + 1) * 4 + 1]);

  Rng rng(7);
  Tensor g = testutil::random_tensor(y.shape(), rng);
  const Tensor gx = center_crop_backward(g, x.shape());
  CHECK(dot(g, y) == doctest::Approx(dot(gx, x)).epsilon(1e-5));
  CHECK_THROWS(center_crop(x, 3));  // odd margin
  CHECK_THROWS(center_crop(x, 6));  // larger than input
}

TEST_CASE("concat and split are inverse") {
  Rng rng(8);
  Tensor a = testutil::random_tensor({2, 3, 2, 2, 2}, rng);
  Tensor b = testutil::random_tensor({2, 1, 2, 2, 2}, rng);
  const Tensor y = concat_channels(a, b);
  CHECK(y.shape() == std::vector<int64_t>{2, 4, 2, 2, 2});
  Tensor ga, gb;
  split_channels(y, 3, ga, gb);
  CHECK(testutil::bitwise_equal(ga, a));
  CHECK(testutil::bitwise_equal(gb, b));
}
