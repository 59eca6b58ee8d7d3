#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "automr/conv.hpp"
#include "automr/error.hpp"
#include "automr/ops.hpp"
#include "automr/rng.hpp"
#include "automr/tape.hpp"
#include "automr/tensor.hpp"

namespace automr {

struct BlockConfig {
  std::size_t cells = 1;
  std::size_t channels = 64;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  bool residual = true;
};

struct QuartzConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::vector<BlockConfig> blocks;
  std::size_t head_channels = 128;
  double dropout = 0.1;
  std::size_t stem_kernel = 5;

  void validate() const {
    if (in_channels == 0) throw ConfigError("model: in_channels must be positive");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2, got " + std::to_string(num_classes));
    if (blocks.empty()) throw ConfigError("model: at least one block is required");
    if (head_channels == 0) throw ConfigError("model: head_channels must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
    if (stem_kernel % 2 == 0) throw ConfigError("model: stem_kernel must be odd, got " + std::to_string(stem_kernel));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string where = "model: block " + std::to_string(i) + ": ";
      if (b.cells == 0) throw ConfigError(where + "cells must be >= 1");
      if (b.channels == 0) throw ConfigError(where + "channels must be positive");
      if (b.kernel == 0 || b.kernel % 2 == 0)
        throw ConfigError(where + "kernel must be odd, got " + std::to_string(b.kernel));
      if (b.dilation == 0) throw ConfigError(where + "dilation must be >= 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const BlockConfig& b) {
  j = {{"cells", b.cells}, {"channels", b.channels}, {"kernel", b.kernel}, {"dilation", b.dilation},
       {"residual", b.residual}};
}

inline void from_json(const nlohmann::json& j, BlockConfig& b) {
  b = BlockConfig{};
  j.at("channels").get_to(b.channels);
  j.at("kernel").get_to(b.kernel);
  if (j.contains("cells")) j.at("cells").get_to(b.cells);
  if (j.contains("dilation")) j.at("dilation").get_to(b.dilation);
  if (j.contains("residual")) j.at("residual").get_to(b.residual);
}

inline void to_json(nlohmann::json& j, const QuartzConfig& c) {
  j = {{"in_channels", c.in_channels}, {"num_classes", c.num_classes}, {"blocks", c.blocks},
       {"head_channels", c.head_channels}, {"dropout", c.dropout}, {"stem_kernel", c.stem_kernel}};
}

inline void from_json(const nlohmann::json& j, QuartzConfig& c) {
  c = QuartzConfig{};
  try {
    j.at("in_channels").get_to(c.in_channels);
    j.at("num_classes").get_to(c.num_classes);
    j.at("blocks").get_to(c.blocks);
    if (j.contains("head_channels")) j.at("head_channels").get_to(c.head_channels);
    if (j.contains("dropout")) j.at("dropout").get_to(c.dropout);
    if (j.contains("stem_kernel")) j.at("stem_kernel").get_to(c.stem_kernel);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

// Named architecture presets.
//   base:  3 blocks x 2 cells, channels 64/64/128, kernels 5/7/9, head 128
//   large: 5 blocks x 3 cells, channels 128/128/256/256/512,
//          kernels 5/7/9/11/13, dilations 1/1/1/2/2, head 256
inline QuartzConfig preset(const std::string& name, std::size_t in_channels, std::size_t num_classes) {
  QuartzConfig c;
  c.in_channels = in_channels;
  c.num_classes = num_classes;
  c.dropout = 0.1;
  c.stem_kernel = 5;
  if (name == "base") {
    c.head_channels = 128;
    c.blocks = {{2, 64, 5, 1, true}, {2, 64, 7, 1, true}, {2, 128, 9, 1, true}};
  } else if (name == "large") {
    c.head_channels = 256;
    c.blocks = {{3, 128, 5, 1, true}, {3, 128, 7, 1, true}, {3, 256, 9, 1, true}, {3, 256, 11, 2, true},
                {3, 512, 13, 2, true}};
  } else {
    throw ConfigError("unknown preset '" + name + "'; available presets: base, large");
  }
  return c;
}

enum class ParamInit { he_normal, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::he_normal;
  std::size_t fan_in = 1;
};

// Every trainable tensor, in the canonical order used by checkpoints.
inline std::vector<ParamSpec> parameter_layout(const QuartzConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  auto bn = [&](const std::string& p, std::size_t ch) {
    out.push_back({p + ".gamma", {ch}, ParamInit::ones, 1});
    out.push_back({p + ".beta", {ch}, ParamInit::zeros, 1});
  };
  const std::size_t stem_out = c.blocks.front().channels;
  out.push_back({"stem.conv.weight", {stem_out, c.in_channels, c.stem_kernel}, ParamInit::he_normal,
                 c.in_channels * c.stem_kernel});
  bn("stem.bn", stem_out);
  std::size_t ch = stem_out;
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    const auto& b = c.blocks[i];
    const std::string bp = "blocks." + std::to_string(i);
    std::size_t cur = ch;
    for (std::size_t j = 0; j < b.cells; ++j) {
      const std::string cp = bp + ".cells." + std::to_string(j);
      out.push_back({cp + ".dw.weight", {cur, 1, b.kernel}, ParamInit::he_normal, b.kernel});
      out.push_back({cp + ".pw.weight", {b.channels, cur, 1}, ParamInit::he_normal, cur});
      bn(cp + ".bn", b.channels);
      cur = b.channels;
    }
    if (b.residual && ch != b.channels) {
      out.push_back({bp + ".proj.weight", {b.channels, ch, 1}, ParamInit::he_normal, ch});
      bn(bp + ".proj_bn", b.channels);
    }
    ch = b.channels;
  }
  out.push_back({"head.conv.weight", {c.head_channels, ch, 1}, ParamInit::he_normal, ch});
  out.push_back({"head.conv.bias", {c.head_channels}, ParamInit::zeros, 1});
  out.push_back({"head.fc.weight", {c.num_classes, c.head_channels}, ParamInit::he_normal, c.head_channels});
  out.push_back({"head.fc.bias", {c.num_classes}, ParamInit::zeros, 1});
  return out;
}

// Names of the batch-norm layers, in the order their running statistics
// are stored.
inline std::vector<std::pair<std::string, std::size_t>> batchnorm_layout(const QuartzConfig& c) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& p : parameter_layout(c)) {
    const auto pos = p.name.rfind(".gamma");
    if (pos != std::string::npos && pos + 6 == p.name.size()) out.emplace_back(p.name.substr(0, pos), p.shape[0]);
  }
  return out;
}

inline std::size_t count_params(const QuartzConfig& c) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(c)) n += shape_size(p.shape);
  return n;
}

// 1 + sum of dilation*(kernel-1) over every convolution on the main path.
inline std::size_t receptive_field(const QuartzConfig& c) {
  std::size_t rf = 1 + (c.stem_kernel - 1);
  for (const auto& b : c.blocks) rf += b.cells * b.dilation * (b.kernel - 1);
  return rf;
}

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

// A built network: parameters plus batch-norm running statistics.
template <class T>
class ModelInstance {
 public:
  ModelInstance() = default;

  ModelInstance(QuartzConfig config, std::vector<NamedTensor<T>> params, std::vector<BatchNormState<T>> norms)
      : config_(std::move(config)), params_(std::move(params)), norms_(std::move(norms)) {
    const auto layout = parameter_layout(config_);
    if (layout.size() != params_.size())
      throw ShapeError("model: expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                       std::to_string(params_.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout[i].name != params_[i].name || layout[i].shape != params_[i].value.shape())
        throw ShapeError("model: parameter " + std::to_string(i) + " expected " + layout[i].name + " " +
                         shape_str(layout[i].shape) + ", got " + params_[i].name + " " +
                         shape_str(params_[i].value.shape()));
      index_[params_[i].name] = i;
    }
    const auto bns = batchnorm_layout(config_);
    if (bns.size() != norms_.size()) throw ShapeError("model: batch-norm state count mismatch");
    for (std::size_t i = 0; i < bns.size(); ++i) {
      if (norms_[i].running_mean.shape() != Shape{bns[i].second} ||
          norms_[i].running_var.shape() != Shape{bns[i].second})
        throw ShapeError("model: running statistics for " + bns[i].first + " have the wrong shape");
      norm_index_[bns[i].first] = i;
    }
  }

  const QuartzConfig& config() const noexcept { return config_; }
  std::vector<NamedTensor<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const noexcept { return params_; }
  std::vector<BatchNormState<T>>& norm_states() noexcept { return norms_; }
  const std::vector<BatchNormState<T>>& norm_states() const noexcept { return norms_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  const Tensor<T>& param(const std::string& name) const { return params_.at(index_.at(name)).value; }

  // Registers every parameter on `tape`, in layout order.
  std::vector<typename GradTape<T>::Id> bind(GradTape<T>& tape, bool track = true) const {
    std::vector<typename GradTape<T>::Id> ids;
    ids.reserve(params_.size());
    for (const auto& p : params_) ids.push_back(track ? tape.parameter(p.value) : tape.constant(p.value));
    return ids;
  }

  // Records the forward pass of `x` ([B, C, W]) and returns the logits node.
  // Train mode updates running statistics and applies dropout keyed by
  // (dropout_seed, layer, step).
  typename GradTape<T>::Id forward(GradTape<T>& tape, const std::vector<typename GradTape<T>::Id>& ids,
                                   typename GradTape<T>::Id x, Mode mode, std::uint64_t dropout_seed = 0,
                                   std::uint64_t step = 0) {
    return forward_impl(tape, ids, x, mode, dropout_seed, step, norms_);
  }

  // Eval-mode inference without gradient tracking.
  Tensor<T> predict(const Tensor<T>& batch) const {
    GradTape<T> tape;
    auto ids = bind(tape, false);
    const auto x = tape.constant(batch);
    auto norms = norms_;
    return tape.value(forward_impl(tape, ids, x, Mode::eval, 0, 0, norms));
  }

  template <class U>
  ModelInstance<U> cast() const {
    std::vector<NamedTensor<U>> ps;
    for (const auto& p : params_) ps.push_back({p.name, p.value.template cast<U>()});
    std::vector<BatchNormState<U>> ns;
    for (const auto& n : norms_) {
      BatchNormState<U> s;
      s.running_mean = n.running_mean.template cast<U>();
      s.running_var = n.running_var.template cast<U>();
      ns.push_back(std::move(s));
    }
    return ModelInstance<U>(config_, std::move(ps), std::move(ns));
  }

 private:
  typename GradTape<T>::Id forward_impl(GradTape<T>& tape, const std::vector<typename GradTape<T>::Id>& ids,
                                        typename GradTape<T>::Id x, Mode mode, std::uint64_t dropout_seed,
                                        std::uint64_t step, std::vector<BatchNormState<T>>& norms) const {
    using Id = typename GradTape<T>::Id;
    const Shape& in = tape.value(x).shape();
    if (in.size() != 3) throw ShapeError("model input: expected [batch, channels, window], got " + shape_str(in));
    if (in[1] != config_.in_channels)
      throw ShapeError("model input channels: expected " + std::to_string(config_.in_channels) + ", got " +
                       std::to_string(in[1]));
    auto P = [&](const std::string& n) { return ids.at(index_.at(n)); };
    auto bn = [&](Id h, const std::string& p) {
      return ag::batchnorm(tape, h, P(p + ".gamma"), P(p + ".beta"), norms.at(norm_index_.at(p)), mode);
    };
    std::uint64_t dropout_layer = 0;
    auto drop = [&](Id h) {
      return ag::dropout(tape, h, config_.dropout, DropoutKey{dropout_seed, dropout_layer++, step}, mode);
    };

    const std::size_t stem_out = config_.blocks.front().channels;
    ConvSpec stem{config_.in_channels, stem_out, config_.stem_kernel, 1, 1,
                  ConvSpec::same_padding(config_.stem_kernel, 1), ConvMode::standard};
    Id h = ag::conv1d<T>(tape, x, P("stem.conv.weight"), std::nullopt, stem);
    h = ag::relu(tape, bn(h, "stem.bn"));

    std::size_t ch = stem_out;
    for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
      const auto& b = config_.blocks[i];
      const std::string bp = "blocks." + std::to_string(i);
      const Id block_in = h;
      std::size_t cur = ch;
      for (std::size_t j = 0; j < b.cells; ++j) {
        const std::string cp = bp + ".cells." + std::to_string(j);
        ConvSpec dw{cur, cur, b.kernel, 1, b.dilation, ConvSpec::same_padding(b.kernel, b.dilation),
                    ConvMode::depthwise};
        ConvSpec pw{cur, b.channels, 1, 1, 1, 0, ConvMode::pointwise};
        h = ag::conv1d<T>(tape, h, P(cp + ".dw.weight"), std::nullopt, dw);
        h = ag::conv1d<T>(tape, h, P(cp + ".pw.weight"), std::nullopt, pw);
        h = drop(ag::relu(tape, bn(h, cp + ".bn")));
        cur = b.channels;
      }
      if (b.residual) {
        Id skip = block_in;
        if (ch != b.channels) {
          ConvSpec proj{ch, b.channels, 1, 1, 1, 0, ConvMode::pointwise};
          skip = bn(ag::conv1d<T>(tape, block_in, P(bp + ".proj.weight"), std::nullopt, proj), bp + ".proj_bn");
        }
        h = ag::add(tape, h, skip);
      }
      ch = b.channels;
    }

    ConvSpec head{ch, config_.head_channels, 1, 1, 1, 0, ConvMode::pointwise};
    h = ag::relu(tape, ag::conv1d<T>(tape, h, P("head.conv.weight"), P("head.conv.bias"), head));
    h = ag::global_avg_pool(tape, h);
    return ag::linear(tape, h, P("head.fc.weight"), P("head.fc.bias"));
  }

  QuartzConfig config_;
  std::vector<NamedTensor<T>> params_;
  std::vector<BatchNormState<T>> norms_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::size_t> norm_index_;
};

enum class WeightInit { he_normal, zeros };

// He-normal weights (std = sqrt(2 / fan_in)), zero biases, unit BN scale.
// Each tensor draws from its own stream keyed by (seed, layout index).
template <class T = float>
ModelInstance<T> build(const QuartzConfig& config, std::uint64_t seed, WeightInit init = WeightInit::he_normal) {
  const auto layout = parameter_layout(config);
  std::vector<NamedTensor<T>> params;
  params.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& spec = layout[i];
    Tensor<T> t(spec.shape);
    switch (spec.init) {
      case ParamInit::ones: t.fill(T{1}); break;
      case ParamInit::zeros: break;
      case ParamInit::he_normal:
        if (init == WeightInit::he_normal) {
          Rng rng(hash_key({seed, static_cast<std::uint64_t>(i)}));
          const double std_dev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
          for (auto& v : t.values()) v = static_cast<T>(rng.normal() * std_dev);
        }
        break;
    }
    params.push_back({spec.name, std::move(t)});
  }
  std::vector<BatchNormState<T>> norms;
  for (const auto& [name, ch] : batchnorm_layout(config)) norms.emplace_back(ch);
  return ModelInstance<T>(config, std::move(params), std::move(norms));
}

}  // namespace automr
