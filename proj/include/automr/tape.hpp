#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "automr/conv.hpp"
#include "automr/error.hpp"
#include "automr/ops.hpp"
#include "automr/tensor.hpp"

namespace automr {

// Minimal reverse-mode recorder. Every differentiable primitive executed
// through the ag:: functions appends one entry; backward() replays the
// entries in reverse order, each exactly once.
template <class T>
class GradTape {
 public:
  using Id = std::size_t;
  using Backward = std::function<void(GradTape&, const Tensor<T>& upstream)>;

  Id constant(Tensor<T> value) { return push(std::move(value), false); }
  Id parameter(Tensor<T> value) { return push(std::move(value), true); }

  const Tensor<T>& value(Id id) const { return nodes_.at(id).value; }
  bool requires_grad(Id id) const { return nodes_.at(id).requires_grad; }

  // Gradient of the last backward() root w.r.t. node `id`; zeros when no
  // path reached it.
  const Tensor<T>& grad(Id id) const {
    const Node& n = nodes_.at(id);
    if (!n.requires_grad) throw InternalError("grad requested for a node that does not track gradients");
    if (!done_) throw InternalError("grad requested before backward()");
    return n.grad;
  }

  void accumulate(Id id, const Tensor<T>& g) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return;
    if (n.grad.empty())
      n.grad = g;
    else
      add_into(n.grad, g);
  }

  // Appends an op output. The backward closure is kept only when some input
  // tracks gradients.
  Id record(Tensor<T> out, std::initializer_list<Id> inputs, Backward fn) {
    bool track = false;
    for (Id i : inputs) track = track || nodes_.at(i).requires_grad;
    const Id id = push(std::move(out), track);
    if (track) entries_.push_back({id, std::move(fn)});
    return id;
  }

  void backward(Id root) {
    if (done_) throw InternalError("backward() already ran on this tape");
    Node& r = nodes_.at(root);
    if (r.value.size() != 1) throw ShapeError("backward root must be a scalar, got " + shape_str(r.value.shape()));
    if (!r.requires_grad) throw InternalError("backward root does not depend on any parameter");
    r.grad = Tensor<T>(r.value.shape(), T{1});
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      Node& out = nodes_[it->output];
      if (out.grad.empty()) continue;
      // Upstream is released once consumed; interior gradients are transient.
      Tensor<T> upstream = std::move(out.grad);
      it->backward(*this, upstream);
      if (it->output == root) out.grad = upstream;
    }
    for (Node& n : nodes_)
      if (n.requires_grad && n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    done_ = true;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t entries() const noexcept { return entries_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
  };
  struct Entry {
    Id output;
    Backward backward;
  };

  Id push(Tensor<T> v, bool rg) {
    nodes_.push_back({std::move(v), Tensor<T>(), rg});
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
  std::vector<Entry> entries_;
  bool done_ = false;
};

// Differentiable primitives over a GradTape.
namespace ag {

template <class T>
using Id = typename GradTape<T>::Id;

template <class T>
Id<T> conv1d(GradTape<T>& tape, Id<T> x, Id<T> w, std::optional<Id<T>> b, const ConvSpec& spec) {
  static const Tensor<T> no_bias;
  Tensor<T> y = conv1d_forward(tape.value(x), spec, tape.value(w), b ? tape.value(*b) : no_bias);
  if (b)
    return tape.record(std::move(y), {x, w, *b}, [=](GradTape<T>& t, const Tensor<T>& up) {
      const ConvContext<T> ctx{&t.value(x), &t.value(w), spec, true};
      auto g = conv1d_backward(ctx, up);
      t.accumulate(x, g.input);
      t.accumulate(w, g.weights);
      t.accumulate(*b, g.bias);
    });
  return tape.record(std::move(y), {x, w}, [=](GradTape<T>& t, const Tensor<T>& up) {
    const ConvContext<T> ctx{&t.value(x), &t.value(w), spec, false};
    auto g = conv1d_backward(ctx, up);
    t.accumulate(x, g.input);
    t.accumulate(w, g.weights);
  });
}

template <class T>
Id<T> batchnorm(GradTape<T>& tape, Id<T> x, Id<T> gamma, Id<T> beta, BatchNormState<T>& state, Mode mode) {
  auto r = batchnorm1d_forward(tape.value(x), tape.value(gamma), tape.value(beta), state, mode);
  return tape.record(std::move(r.output), {x, gamma, beta},
                     [=, cache = std::move(r.cache)](GradTape<T>& t, const Tensor<T>& up) {
                       auto g = batchnorm1d_backward(cache, t.value(gamma), up);
                       t.accumulate(x, g.input);
                       t.accumulate(gamma, g.gamma);
                       t.accumulate(beta, g.beta);
                     });
}

template <class T>
Id<T> relu(GradTape<T>& tape, Id<T> x) {
  return tape.record(relu_forward(tape.value(x)), {x}, [=](GradTape<T>& t, const Tensor<T>& up) {
    t.accumulate(x, relu_backward(t.value(x), up));
  });
}

template <class T>
Id<T> dropout(GradTape<T>& tape, Id<T> x, double rate, DropoutKey key, Mode mode) {
  auto r = dropout_forward(tape.value(x), rate, key, mode);
  return tape.record(std::move(r.output), {x}, [=, mask = std::move(r.mask)](GradTape<T>& t, const Tensor<T>& up) {
    t.accumulate(x, dropout_backward(mask, up));
  });
}

template <class T>
Id<T> add(GradTape<T>& tape, Id<T> a, Id<T> b) {
  Tensor<T> y = tape.value(a);
  add_into(y, tape.value(b));
  return tape.record(std::move(y), {a, b}, [=](GradTape<T>& t, const Tensor<T>& up) {
    t.accumulate(a, up);
    t.accumulate(b, up);
  });
}

template <class T>
Id<T> global_avg_pool(GradTape<T>& tape, Id<T> x) {
  return tape.record(global_avg_pool_forward(tape.value(x)), {x}, [=](GradTape<T>& t, const Tensor<T>& up) {
    t.accumulate(x, global_avg_pool_backward(t.value(x).shape(), up));
  });
}

template <class T>
Id<T> linear(GradTape<T>& tape, Id<T> x, Id<T> w, Id<T> b) {
  return tape.record(linear_forward(tape.value(x), tape.value(w), tape.value(b)), {x, w, b},
                     [=](GradTape<T>& t, const Tensor<T>& up) {
                       auto g = linear_backward(t.value(x), t.value(w), true, up);
                       t.accumulate(x, g.input);
                       t.accumulate(w, g.weights);
                       t.accumulate(b, g.bias);
                     });
}

// Mean softmax cross-entropy; returns a scalar node. `loss_out` receives
// the 64-bit loss value.
template <class T>
Id<T> cross_entropy(GradTape<T>& tape, Id<T> logits, std::span<const int> targets, double* loss_out = nullptr) {
  auto r = softmax_cross_entropy(tape.value(logits), targets);
  if (loss_out) *loss_out = r.loss;
  return tape.record(Tensor<T>({1}, static_cast<T>(r.loss)), {logits},
                     [=, g = std::move(r.grad_logits)](GradTape<T>& t, const Tensor<T>& up) {
                       Tensor<T> scaled = g;
                       for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= up[0];
                       t.accumulate(logits, scaled);
                     });
}

}  // namespace ag
}  // namespace automr
