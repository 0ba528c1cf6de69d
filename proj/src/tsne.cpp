#include "modseg/tsne.hpp"

#include <cmath>

#include "modseg/error.hpp"
#include "modseg/rng.hpp"

namespace modseg {

std::vector<std::array<double, 2>> compute_tsne(const std::vector<std::vector<float>>& features,
                                                const TsneParams& params) {
  const auto n = static_cast<int64_t>(features.size());
  require(n >= 4, "t-SNE needs at least 4 samples, got ", n);
  require(n <= 10000, "exact t-SNE is limited to 10000 samples, got ", n,
          " (subsample the voxels)");
  require(static_cast<double>(n) >= 3.0 * params.perplexity, "t-SNE needs at least 3*perplexity=",
          3.0 * params.perplexity, " samples, got ", n);
  const auto dim = static_cast<int64_t>(features.front().size());
  for (const auto& f : features)
    require(static_cast<int64_t>(f.size()) == dim, "t-SNE: inconsistent feature widths");

  // pairwise squared distances
  std::vector<double> d2(static_cast<size_t>(n * n), 0.0);
  double max_d2 = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const float* a = features[static_cast<size_t>(i)].data();
      const float* b = features[static_cast<size_t>(j)].data();
      for (int64_t k = 0; k < dim; ++k) {
        const double d = static_cast<double>(a[k]) - b[k];
        s += d * d;
      }
      d2[static_cast<size_t>(i * n + j)] = s;
      d2[static_cast<size_t>(j * n + i)] = s;
      max_d2 = std::max(max_d2, s);
    }
  require(max_d2 > 0.0, "t-SNE: degenerate input, all feature vectors identical");

  // conditional affinities via per-point precision search
  std::vector<double> p(static_cast<size_t>(n * n), 0.0);
  const double target_entropy = std::log(params.perplexity);
  std::vector<double> row(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) {
          row[static_cast<size_t>(j)] = 0.0;
          continue;
        }
        const double w = std::exp(-beta * d2[static_cast<size_t>(i * n + j)]);
        row[static_cast<size_t>(j)] = w;
        sum += w;
        weighted += w * d2[static_cast<size_t>(i * n + j)];
      }
      if (sum <= 0.0) {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
        continue;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      const double diff = entropy - target_entropy;
      if (std::fabs(diff) < 1e-5) break;
      if (diff > 0.0) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta_lo + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
      }
    }
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) sum += row[static_cast<size_t>(j)];
    require(sum > 0.0, "t-SNE: affinity underflow at sample ", i);
    for (int64_t j = 0; j < n; ++j)
      p[static_cast<size_t>(i * n + j)] = row[static_cast<size_t>(j)] / sum;
  }
  // symmetrize
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const double v =
          (p[static_cast<size_t>(i * n + j)] + p[static_cast<size_t>(j * n + i)]) / (2.0 * n);
      const double clamped = std::max(v, 1e-12);
      p[static_cast<size_t>(i * n + j)] = clamped;
      p[static_cast<size_t>(j * n + i)] = clamped;
    }

  Rng rng(params.seed);
  std::vector<double> y(static_cast<size_t>(2 * n));
  for (auto& v : y) v = 1e-4 * rng.normal();
  std::vector<double> velocity(static_cast<size_t>(2 * n), 0.0);
  std::vector<double> gain(static_cast<size_t>(2 * n), 1.0);
  std::vector<double> q(static_cast<size_t>(n * n), 0.0);

  for (int iter = 0; iter < params.iterations; ++iter) {
    const double exaggeration = iter < params.exaggeration_iterations
                                    ? params.early_exaggeration
                                    : 1.0;
    const double momentum =
        iter < params.momentum_switch ? params.initial_momentum : params.final_momentum;

    double qsum = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) {
        const double dy0 = y[static_cast<size_t>(2 * i)] - y[static_cast<size_t>(2 * j)];
        const double dy1 = y[static_cast<size_t>(2 * i + 1)] - y[static_cast<size_t>(2 * j + 1)];
        const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
        q[static_cast<size_t>(i * n + j)] = w;
        q[static_cast<size_t>(j * n + i)] = w;
        qsum += 2.0 * w;
      }

    for (int64_t i = 0; i < n; ++i) {
      double g0 = 0.0, g1 = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = q[static_cast<size_t>(i * n + j)];
        const double coeff =
            (exaggeration * p[static_cast<size_t>(i * n + j)] - w / qsum) * w;
        g0 += coeff * (y[static_cast<size_t>(2 * i)] - y[static_cast<size_t>(2 * j)]);
        g1 += coeff * (y[static_cast<size_t>(2 * i + 1)] - y[static_cast<size_t>(2 * j + 1)]);
      }
      for (int d = 0; d < 2; ++d) {
        const double g = d == 0 ? 4.0 * g0 : 4.0 * g1;
        const size_t k = static_cast<size_t>(2 * i + d);
        gain[k] = (g > 0.0) == (velocity[k] > 0.0) ? std::max(gain[k] * 0.8, 0.01)
                                                   : gain[k] + 0.2;
        velocity[k] = momentum * velocity[k] - params.learning_rate * gain[k] * g;
      }
    }
    double mean0 = 0.0, mean1 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      y[static_cast<size_t>(2 * i)] += velocity[static_cast<size_t>(2 * i)];
      y[static_cast<size_t>(2 * i + 1)] += velocity[static_cast<size_t>(2 * i + 1)];
      mean0 += y[static_cast<size_t>(2 * i)];
      mean1 += y[static_cast<size_t>(2 * i + 1)];
    }
    mean0 /= static_cast<double>(n);
    mean1 /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      y[static_cast<size_t>(2 * i)] -= mean0;
      y[static_cast<size_t>(2 * i + 1)] -= mean1;
    }
  }

  std::vector<std::array<double, 2>> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] = {y[static_cast<size_t>(2 * i)],
                                   y[static_cast<size_t>(2 * i + 1)]};
    require(std::isfinite(out[static_cast<size_t>(i)][0]) &&
                std::isfinite(out[static_cast<size_t>(i)][1]),
            "t-SNE produced a non-finite coordinate at sample ", i);
  }
  return out;
}

}  // namespace modseg
