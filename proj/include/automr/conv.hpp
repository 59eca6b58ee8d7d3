#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <utility>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/reduce.hpp"
#include "automr/tensor.hpp"

namespace automr {

enum class ConvMode { standard, depthwise, pointwise };

inline const char* to_string(ConvMode m) {
  switch (m) {
    case ConvMode::standard: return "standard";
    case ConvMode::depthwise: return "depthwise";
    case ConvMode::pointwise: return "pointwise";
  }
  return "?";
}

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
  ConvMode mode = ConvMode::standard;

  void validate() const {
    if (in_channels == 0 || out_channels == 0) throw ConfigError("conv: channel counts must be positive");
    if (kernel == 0) throw ConfigError("conv: kernel must be >= 1");
    if (stride == 0) throw ConfigError("conv: stride must be >= 1");
    if (dilation == 0) throw ConfigError("conv: dilation must be >= 1");
    if (mode == ConvMode::depthwise && out_channels != in_channels)
      throw ConfigError("conv: depthwise mode requires out_channels == in_channels");
    if (mode == ConvMode::pointwise && (kernel != 1 || dilation != 1))
      throw ConfigError("conv: pointwise mode requires kernel == 1 and dilation == 1");
  }

  Shape weight_shape() const {
    switch (mode) {
      case ConvMode::depthwise: return {in_channels, 1, kernel};
      case ConvMode::pointwise: return {out_channels, in_channels, 1};
      case ConvMode::standard: break;
    }
    return {out_channels, in_channels, kernel};
  }

  std::size_t weight_count() const { return shape_size(weight_shape()); }

  // Signed so that too-short inputs can be reported instead of wrapping.
  long output_length(std::size_t input_length) const {
    const long span = static_cast<long>(dilation * (kernel - 1));
    const long num = static_cast<long>(input_length + 2 * padding) - span - 1;
    if (num < 0) return 0;
    return num / static_cast<long>(stride) + 1;
  }

  // Padding that keeps length for stride 1; odd kernels only.
  static std::size_t same_padding(std::size_t kernel, std::size_t dilation) {
    if (kernel % 2 == 0) throw ConfigError("same padding requires an odd kernel, got " + std::to_string(kernel));
    return dilation * (kernel - 1) / 2;
  }
};

template <class T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;  // empty when the forward pass had no bias
};

// Forward state retained for the backward pass.
template <class T>
struct ConvContext {
  const Tensor<T>* input = nullptr;
  const Tensor<T>* weights = nullptr;
  ConvSpec spec;
  bool has_bias = false;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void check_conv_shapes(const Shape& in, const ConvSpec& spec, const Shape& w, const Shape* bias) {
  spec.validate();
  if (in.size() != 3) throw ShapeError("conv1d input: expected [batch, channels, length], got " + shape_str(in));
  if (in[1] != spec.in_channels)
    throw ShapeError("conv1d input channels: expected " + std::to_string(spec.in_channels) + ", got " +
                     std::to_string(in[1]));
  const Shape expect = spec.weight_shape();
  if (w != expect)
    throw ShapeError(std::string("conv1d weights (") + to_string(spec.mode) + "): expected " + shape_str(expect) +
                     ", got " + shape_str(w));
  if (bias && !(bias->size() == 1 && (*bias)[0] == spec.out_channels))
    throw ShapeError("conv1d bias: expected [" + std::to_string(spec.out_channels) + "], got " + shape_str(*bias));
  if (spec.output_length(in[2]) < 1)
    throw ShapeError("window too short for receptive field: input length " + std::to_string(in[2]) +
                     " with kernel " + std::to_string(spec.kernel) + ", dilation " + std::to_string(spec.dilation) +
                     ", padding " + std::to_string(spec.padding));
}

// Unfolds one batch item into [C_in * k, L_out] columns.
template <class T>
void im2col(const T* in, std::size_t channels, std::size_t length, const ConvSpec& s, std::size_t out_len, T* cols) {
  const long pad = static_cast<long>(s.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < s.kernel; ++j) {
      T* row = cols + (c * s.kernel + j) * out_len;
      const long shift = static_cast<long>(j * s.dilation) - pad;
      for (std::size_t t = 0; t < out_len; ++t) {
        const long src = static_cast<long>(t * s.stride) + shift;
        row[t] = (src >= 0 && src < static_cast<long>(length)) ? in[c * length + static_cast<std::size_t>(src)] : T{0};
      }
    }
  }
}

template <class T>
void col2im(const T* cols, std::size_t channels, std::size_t length, const ConvSpec& s, std::size_t out_len, T* in) {
  const long pad = static_cast<long>(s.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < s.kernel; ++j) {
      const T* row = cols + (c * s.kernel + j) * out_len;
      const long shift = static_cast<long>(j * s.dilation) - pad;
      for (std::size_t t = 0; t < out_len; ++t) {
        const long src = static_cast<long>(t * s.stride) + shift;
        if (src >= 0 && src < static_cast<long>(length)) in[c * length + static_cast<std::size_t>(src)] += row[t];
      }
    }
  }
}

// Output positions t with 0 <= t*stride + shift < length.
inline std::pair<std::size_t, std::size_t> valid_range(long shift, std::size_t stride, std::size_t length,
                                                       std::size_t out_len) {
  const long s = static_cast<long>(stride);
  const long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  const long last = static_cast<long>(length) - 1 - shift;
  const long hi = last < 0 ? 0 : last / s + 1;
  const long clamped_hi = std::min(hi, static_cast<long>(out_len));
  if (lo >= clamped_hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(clamped_hi)};
}

inline bool is_plain_pointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

}  // namespace detail

// Direct 1-D convolution with zero padding. `bias` may be empty.
template <class T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                         const Tensor<T>& bias) {
  const Shape bias_shape = bias.shape();
  detail::check_conv_shapes(input.shape(), spec, weights.shape(), bias.empty() ? nullptr : &bias_shape);
  const std::size_t batch = input.dim(0), cin = spec.in_channels, len = input.dim(2);
  const std::size_t cout = spec.out_channels;
  const auto out_len = static_cast<std::size_t>(spec.output_length(len));
  Tensor<T> out({batch, cout, out_len});

  if (spec.mode == ConvMode::depthwise) {
    const long pad = static_cast<long>(spec.padding);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < cin; ++c) {
        const T* x = input.data() + (b * cin + c) * len;
        T* y = out.data() + (b * cin + c) * out_len;
        const T* w = weights.data() + c * spec.kernel;
        const T b0 = bias.empty() ? T{0} : bias[c];
        for (std::size_t t = 0; t < out_len; ++t) y[t] = b0;
        for (std::size_t j = 0; j < spec.kernel; ++j) {
          const long shift = static_cast<long>(j * spec.dilation) - pad;
          const auto [lo, hi] = detail::valid_range(shift, spec.stride, len, out_len);
          const T wj = w[j];
          if (spec.stride == 1) {
            const T* xs = x + shift;
            for (std::size_t t = lo; t < hi; ++t) y[t] += wj * xs[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) y[t] += wj * x[static_cast<long>(t * spec.stride) + shift];
          }
        }
      }
    }
    return out;
  }

  using Mat = detail::RowMat<T>;
  const std::size_t rows = cin * spec.kernel;
  Eigen::Map<const Mat> w(weights.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
  std::vector<T> cols;
  const bool direct = detail::is_plain_pointwise(spec);
  if (!direct) cols.resize(rows * out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x = input.data() + b * cin * len;
    if (!direct) detail::im2col(x, cin, len, spec, out_len, cols.data());
    Eigen::Map<const Mat> c(direct ? x : cols.data(), static_cast<Eigen::Index>(rows),
                            static_cast<Eigen::Index>(out_len));
    Eigen::Map<Mat> y(out.data() + b * cout * out_len, static_cast<Eigen::Index>(cout),
                      static_cast<Eigen::Index>(out_len));
    y.noalias() = w * c;
    if (!bias.empty())
      for (std::size_t o = 0; o < cout; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }
  return out;
}

// Analytic transpose of conv1d_forward.
template <class T>
ConvGrads<T> conv1d_backward(const ConvContext<T>& ctx, const Tensor<T>& grad_out) {
  if (ctx.input == nullptr || ctx.weights == nullptr || ctx.input->empty())
    throw InternalError("conv1d_backward: forward input/weights were not retained");
  const ConvSpec& spec = ctx.spec;
  const Tensor<T>& input = *ctx.input;
  const Tensor<T>& weights = *ctx.weights;
  const std::size_t batch = input.dim(0), cin = spec.in_channels, len = input.dim(2);
  const std::size_t cout = spec.out_channels;
  const auto out_len = static_cast<std::size_t>(spec.output_length(len));
  if (grad_out.shape() != Shape{batch, cout, out_len})
    throw ShapeError("conv1d_backward: upstream gradient " + shape_str(grad_out.shape()) + " does not match output " +
                     shape_str({batch, cout, out_len}));

  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>()};
  std::vector<double> dw(weights.size(), 0.0);
  std::vector<double> db(cout, 0.0);

  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o) {
      db[o] += reduce::sum(grad_out.data() + (b * cout + o) * out_len, out_len);
    }

  if (spec.mode == ConvMode::depthwise) {
    const long pad = static_cast<long>(spec.padding);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < cin; ++c) {
        const T* x = input.data() + (b * cin + c) * len;
        const T* gy = grad_out.data() + (b * cin + c) * out_len;
        T* gx = g.input.data() + (b * cin + c) * len;
        const T* w = weights.data() + c * spec.kernel;
        for (std::size_t j = 0; j < spec.kernel; ++j) {
          const long shift = static_cast<long>(j * spec.dilation) - pad;
          const auto [lo, hi] = detail::valid_range(shift, spec.stride, len, out_len);
          const T wj = w[j];
          if (lo >= hi) continue;
          if (spec.stride == 1) {
            T* gxs = gx + shift;
            for (std::size_t t = lo; t < hi; ++t) gxs[t] += wj * gy[t];
            dw[c * spec.kernel + j] += reduce::dot(gy + lo, x + shift + static_cast<long>(lo), hi - lo);
          } else {
            double acc = 0.0;
            for (std::size_t t = lo; t < hi; ++t) {
              const long src = static_cast<long>(t * spec.stride) + shift;
              gx[src] += wj * gy[t];
              acc += static_cast<double>(gy[t]) * static_cast<double>(x[src]);
            }
            dw[c * spec.kernel + j] += acc;
          }
        }
      }
    }
  } else {
    using Mat = detail::RowMat<T>;
    const std::size_t rows = cin * spec.kernel;
    const auto R = static_cast<Eigen::Index>(rows), Co = static_cast<Eigen::Index>(cout),
               Lo = static_cast<Eigen::Index>(out_len);
    Eigen::Map<const Mat> w(weights.data(), Co, R);
    const bool direct = detail::is_plain_pointwise(spec);
    std::vector<T> cols(direct ? 0 : rows * out_len);
    std::vector<T> dcols(direct ? 0 : rows * out_len);
    Mat dw_b(Co, R);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* x = input.data() + b * cin * len;
      if (!direct) detail::im2col(x, cin, len, spec, out_len, cols.data());
      Eigen::Map<const Mat> c(direct ? x : cols.data(), R, Lo);
      Eigen::Map<const Mat> gy(grad_out.data() + b * cout * out_len, Co, Lo);
      dw_b.noalias() = gy * c.transpose();
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += static_cast<double>(dw_b.data()[i]);
      if (direct) {
        Eigen::Map<Mat> gx(g.input.data() + b * cin * len, R, Lo);
        gx.noalias() = w.transpose() * gy;
      } else {
        Eigen::Map<Mat> dc(dcols.data(), R, Lo);
        dc.noalias() = w.transpose() * gy;
        detail::col2im(dcols.data(), cin, len, spec, out_len, g.input.data() + b * cin * len);
      }
    }
  }

  for (std::size_t i = 0; i < dw.size(); ++i) g.weights[i] = static_cast<T>(dw[i]);
  if (ctx.has_bias) {
    g.bias = Tensor<T>({cout});
    for (std::size_t o = 0; o < cout; ++o) g.bias[o] = static_cast<T>(db[o]);
  }
  return g;
}

}  // namespace automr
