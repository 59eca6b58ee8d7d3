#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/reduce.hpp"
#include "automr/rng.hpp"
#include "automr/tensor.hpp"

namespace automr {

enum class Mode { train, eval };

// ---------------------------------------------------------------- batchnorm

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

template <class T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<double> inv_std;
  Mode mode = Mode::train;
};

template <class T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormCache<T> cache;
};

template <class T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Per-channel normalization over (batch, time). Train mode uses batch
// statistics and updates `state`; eval mode reads the running statistics.
template <class T>
BatchNormResult<T> batchnorm1d_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                                       BatchNormState<T>& state, Mode mode, double eps = kBatchNormEps,
                                       double momentum = kBatchNormMomentum) {
  expect_rank(input.shape(), 3, "batchnorm1d input");
  const std::size_t batch = input.dim(0), ch = input.dim(1), len = input.dim(2);
  if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch})
    throw ShapeError("batchnorm1d affine parameters: expected [" + std::to_string(ch) + "], got " +
                     shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
  if (state.running_mean.shape() != Shape{ch} || state.running_var.shape() != Shape{ch})
    throw ShapeError("batchnorm1d running statistics: channel count mismatch");
  const std::size_t n = batch * len;
  if (mode == Mode::train && n < 2)
    throw ShapeError("batchnorm1d: variance undefined for batch*length = " + std::to_string(n) + " (< 2) in train mode");

  BatchNormResult<T> r{Tensor<T>(input.shape()), {Tensor<T>(input.shape()), std::vector<double>(ch), mode}};
  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b) sum += reduce::sum(&input.at(b, c, 0), len);
      mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) ss += reduce::centered_sum_squares(&input.at(b, c, 0), len, mean);
      var = ss / static_cast<double>(n);
      const double unbiased = ss / static_cast<double>(n - 1);
      state.running_mean[c] = static_cast<T>((1.0 - momentum) * state.running_mean[c] + momentum * mean);
      state.running_var[c] = static_cast<T>((1.0 - momentum) * state.running_var[c] + momentum * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    r.cache.inv_std[c] = inv;
    const T mean_t = static_cast<T>(mean), inv_t = static_cast<T>(inv);
    const T g = gamma[c], bt = beta[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const T* x = &input.at(b, c, 0);
      T* xh = &r.cache.xhat.at(b, c, 0);
      T* y = &r.output.at(b, c, 0);
      for (std::size_t t = 0; t < len; ++t) {
        xh[t] = (x[t] - mean_t) * inv_t;
        y[t] = g * xh[t] + bt;
      }
    }
  }
  return r;
}

template <class T>
BatchNormGrads<T> batchnorm1d_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                       const Tensor<T>& grad_out) {
  if (cache.xhat.empty() || cache.inv_std.empty())
    throw InternalError("batchnorm1d_backward: forward state was not retained");
  if (grad_out.shape() != cache.xhat.shape())
    throw ShapeError("batchnorm1d_backward: upstream gradient shape mismatch");
  const std::size_t batch = grad_out.dim(0), ch = grad_out.dim(1), len = grad_out.dim(2);
  const double n = static_cast<double>(batch * len);
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({ch}), Tensor<T>({ch})};
  for (std::size_t c = 0; c < ch; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      sum_g += reduce::sum(&grad_out.at(b, c, 0), len);
      sum_gx += reduce::dot(&grad_out.at(b, c, 0), &cache.xhat.at(b, c, 0), len);
    }
    g.gamma[c] = static_cast<T>(sum_gx);
    g.beta[c] = static_cast<T>(sum_g);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    // dx = scale * (gy - mean(gy) - xhat * mean(gy * xhat)) in train mode
    const T a = static_cast<T>(scale);
    const T m_g = cache.mode == Mode::train ? static_cast<T>(sum_g / n) : T{0};
    const T m_gx = cache.mode == Mode::train ? static_cast<T>(sum_gx / n) : T{0};
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gy = &grad_out.at(b, c, 0);
      const T* xh = &cache.xhat.at(b, c, 0);
      T* dx = &g.input.at(b, c, 0);
      for (std::size_t t = 0; t < len; ++t) dx[t] = a * (gy[t] - m_g - xh[t] * m_gx);
    }
  }
  return g;
}

// --------------------------------------------------------------------- relu

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

// ------------------------------------------------------------------ dropout

// Identifies one dropout application: the mask is a pure function of it.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
};

template <class T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // per-element multiplier: 0 or 1/(1-p); empty in eval mode
};

template <class T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, DropoutKey key, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return {x, Tensor<T>()};
  const std::uint64_t base = hash_key({key.seed, key.layer, key.step});
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResult<T> r{Tensor<T>(x.shape()), Tensor<T>(x.shape())};
  // Each 64-bit draw yields two 32-bit uniforms.
  const auto threshold = static_cast<std::uint64_t>(std::ceil(rate * 4294967296.0));
  const std::size_t n = x.size();
  T* mask = r.mask.data();
  for (std::size_t i = 0; i < n; i += 2) {
    const std::uint64_t bits = splitmix64(base + static_cast<std::uint64_t>(i / 2));
    mask[i] = keep_scale * static_cast<T>((bits & 0xffffffffULL) >= threshold);
    if (i + 1 < n) mask[i + 1] = keep_scale * static_cast<T>((bits >> 32) >= threshold);
  }
  const T* in = x.data();
  T* out = r.output.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * mask[i];
  return r;
}

template <class T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out) {
  if (mask.empty()) return grad_out;
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

// ------------------------------------------------------- global average pool

// [B, C, L] -> [B, C]
template <class T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  expect_rank(x.shape(), 3, "global_avg_pool input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len == 0) throw ShapeError("global_avg_pool: empty time axis");
  Tensor<T> y({batch, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      y[b * ch + c] = static_cast<T>(reduce::sum(&x.at(b, c, 0), len) / static_cast<double>(len));
    }
  return y;
}

template <class T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  const std::size_t batch = input_shape[0], ch = input_shape[1], len = input_shape[2];
  Tensor<T> g(input_shape);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T v = static_cast<T>(grad_out[b * ch + c] * inv);
      for (std::size_t t = 0; t < len; ++t) g.at(b, c, t) = v;
    }
  return g;
}

// ------------------------------------------------------------------- linear

template <class T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

// x [B, in], weights [out, in], bias [out] (or empty) -> [B, out]
template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  expect_rank(x.shape(), 2, "linear input");
  expect_rank(weights.shape(), 2, "linear weights");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
  if (weights.dim(1) != in)
    throw ShapeError("linear: input features " + std::to_string(in) + " do not match weight columns " +
                     std::to_string(weights.dim(1)));
  if (!bias.empty() && bias.shape() != Shape{out})
    throw ShapeError("linear bias: expected [" + std::to_string(out) + "], got " + shape_str(bias.shape()));
  Tensor<T> y({batch, out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
      for (std::size_t i = 0; i < in; ++i) s += static_cast<double>(x[b * in + i]) * weights[o * in + i];
      y[b * out + o] = static_cast<T>(s);
    }
  return y;
}

template <class T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weights, bool has_bias,
                               const Tensor<T>& grad_out) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), Tensor<T>()};
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += static_cast<double>(grad_out[b * out + o]) * weights[o * in + i];
      g.input[b * in + i] = static_cast<T>(s);
    }
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += static_cast<double>(grad_out[b * out + o]) * x[b * in + i];
      g.weights[o * in + i] = static_cast<T>(s);
    }
  if (has_bias) {
    g.bias = Tensor<T>({out});
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += grad_out[b * out + o];
      g.bias[o] = static_cast<T>(s);
    }
  }
  return g;
}

// -------------------------------------------------- softmax / cross-entropy

// Row-wise softmax of [B, C] logits.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  expect_rank(logits.shape(), 2, "softmax input");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const T* z = logits.data() + b * classes;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) m = std::max(m, static_cast<double>(z[c]));
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - m);
    for (std::size_t c = 0; c < classes; ++c) p[b * classes + c] = static_cast<T>(std::exp(z[c] - m) / s);
  }
  return p;
}

template <class T>
struct CrossEntropyResult {
  double loss = 0.0;  // mean over the batch
  Tensor<T> grad_logits;
};

template <class T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  expect_rank(logits.shape(), 2, "cross-entropy logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0) throw ShapeError("cross-entropy: empty batch");
  if (targets.size() != batch)
    throw ShapeError("cross-entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                     std::to_string(batch));
  CrossEntropyResult<T> r{0.0, Tensor<T>(logits.shape())};
  const double inv_b = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = targets[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ShapeError("cross-entropy: target " + std::to_string(y) + " at row " + std::to_string(b) +
                       " outside [0, " + std::to_string(classes) + ")");
    const T* z = logits.data() + b * classes;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) m = std::max(m, static_cast<double>(z[c]));
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - m);
    const double lse = m + std::log(s);
    total += lse - z[y];
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(z[c] - lse);
      r.grad_logits[b * classes + c] = static_cast<T>((p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_b);
    }
  }
  r.loss = total * inv_b;
  return r;
}

}  // namespace automr
