#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "automr/checkpoint.hpp"
#include "automr/dataset.hpp"
#include "automr/events.hpp"
#include "automr/log.hpp"
#include "automr/metrics.hpp"
#include "automr/model.hpp"
#include "automr/reduce.hpp"
#include "automr/rng.hpp"
#include "automr/tape.hpp"
#include "automr/train_state.hpp"

namespace automr {

// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping (may be non-finite).
inline double clip_global_norm(std::vector<Tensor<float>>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads) ss += reduce::centered_sum_squares(g.data(), g.size(), 0.0);
  const double norm = std::sqrt(ss);
  if (std::isfinite(norm) && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / (norm + 1e-6));
    for (auto& g : grads)
      for (auto& v : g.values()) v *= scale;
  }
  return norm;
}

// One AdamW update with decoupled weight decay.
inline void adamw_step(TrainState& s, const std::vector<Tensor<float>>& grads, const TrainConfig& cfg, double lr) {
  ++s.adam_step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.adam_step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.adam_step));
  auto& params = s.model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].value.data();
    float* m = s.adam_m[i].data();
    float* v = s.adam_v[i].data();
    const float* g = grads[i].data();
    const std::size_t n = params[i].value.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = (mk / c1) / (std::sqrt(vk / c2) + cfg.adam_eps) + cfg.weight_decay * p[k];
      p[k] = static_cast<float>(p[k] - lr * update);
    }
  }
}

// Visiting order of the training windows in `epoch`; depends only on
// (seed, epoch) so resumed runs reproduce it.
inline std::vector<std::size_t> epoch_order(std::vector<std::size_t> train_idx, std::uint64_t seed, std::size_t epoch) {
  Rng rng(hash_key({seed, 0x5bu, epoch}));
  rng.shuffle(train_idx.begin(), train_idx.end());
  return train_idx;
}

inline std::uint64_t dropout_seed(std::uint64_t seed) { return hash_key({seed, 0xd0u}); }

// Eval-mode pass over one split.
inline MetricsReport evaluate(const ModelInstance<float>& model, const WindowedDataset& ds, Split which,
                              std::size_t batch_size = 256) {
  const auto idx = ds.indices(which);
  std::vector<int> preds, labels;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    const std::span<const std::size_t> b(idx.data() + start, n);
    const auto logits = model.predict(ds.gather<float>(b));
    const auto y = ds.gather_labels(b);
    loss_sum += softmax_cross_entropy(logits, y).loss * static_cast<double>(n);
    const auto p = argmax_rows(logits);
    preds.insert(preds.end(), p.begin(), p.end());
    labels.insert(labels.end(), y.begin(), y.end());
  }
  const double loss = idx.empty() ? std::numeric_limits<double>::quiet_NaN() : loss_sum / static_cast<double>(idx.size());
  return compute_metrics(labels, preds, ds.num_classes(), loss);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  MetricsReport train;    // from the running training pass (train mode)
  MetricsReport test;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  // Stop after this many completed epochs (for checkpoint/resume); the
  // schedule still spans cfg.epochs.
  std::optional<std::size_t> until_epoch;
  EventLog* events = nullptr;
  // When set, last.amck and best.amck are kept up to date here.
  std::optional<std::filesystem::path> checkpoint_dir;
  nlohmann::json checkpoint_extra = nlohmann::json::object();
  // Called on every training batch before the forward pass (fault injection).
  std::function<void(Tensor<float>&, std::uint64_t step)> batch_hook;
};

struct TrainResult {
  TrainState last;
  TrainState best;  // state after the epoch with the highest test accuracy
  std::vector<EpochRecord> history;
  bool early_stopped = false;
};

namespace detail {

struct EpochOutcome {
  bool anomaly = false;
  std::string diagnostic;
  MetricsReport metrics;
};

inline EpochOutcome run_epoch(TrainState& s, const WindowedDataset& ds, const TrainConfig& cfg, std::size_t epoch,
                              double lr, const TrainOptions& opt) {
  const auto order = epoch_order(ds.indices(Split::train), s.seed, epoch);
  const auto dseed = dropout_seed(s.seed);
  std::vector<int> preds, labels;
  preds.reserve(order.size());
  labels.reserve(order.size());
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, order.size() - start);
    const std::span<const std::size_t> b(order.data() + start, n);
    auto x = ds.gather<float>(b);
    const auto y = ds.gather_labels(b);
    if (opt.batch_hook) opt.batch_hook(x, s.step);

    GradTape<float> tape;
    const auto ids = s.model.bind(tape, true);
    const auto xi = tape.constant(std::move(x));
    const auto logits = s.model.forward(tape, ids, xi, Mode::train, dseed, s.step);
    double loss = 0.0;
    const auto root = ag::cross_entropy(tape, logits, y, &loss);
    if (!std::isfinite(loss))
      return {true, "non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(s.step), {}};
    tape.backward(root);
    std::vector<Tensor<float>> grads;
    grads.reserve(ids.size());
    for (auto id : ids) grads.push_back(tape.grad(id));
    const double norm = clip_global_norm(grads, cfg.clip_norm);
    if (!std::isfinite(norm))
      return {true, "non-finite gradient norm at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(s.step), {}};

    const auto p = argmax_rows(tape.value(logits));
    preds.insert(preds.end(), p.begin(), p.end());
    labels.insert(labels.end(), y.begin(), y.end());
    loss_sum += loss * static_cast<double>(n);

    adamw_step(s, grads, cfg, lr);
    ++s.step;
  }
  const double mean_loss = order.empty() ? std::numeric_limits<double>::quiet_NaN() : loss_sum / static_cast<double>(order.size());
  return {false, {}, compute_metrics(labels, preds, ds.num_classes(), mean_loss)};
}

inline nlohmann::json epoch_event(std::size_t epoch, const char* split, const MetricsReport& m, double lr, double ms) {
  return {{"epoch", epoch}, {"split", split}, {"loss", json_number(m.loss)}, {"accuracy", m.accuracy},
          {"macro_f1", m.macro_f1}, {"lr", lr}, {"wall_ms", ms}};
}

}  // namespace detail

// Continues training `state` up to cfg.epochs (or opt.until_epoch). The
// dataset must already be split and normalized.
inline TrainResult train(TrainState state, const WindowedDataset& ds, const TrainConfig& cfg,
                         const TrainOptions& opt = {}) {
  cfg.validate();
  if (state.model.config().in_channels != ds.channels())
    throw ShapeError("train: model expects " + std::to_string(state.model.config().in_channels) +
                     " channels, dataset has " + std::to_string(ds.channels()));
  if (state.model.config().num_classes != ds.num_classes())
    throw ShapeError("train: model predicts " + std::to_string(state.model.config().num_classes) +
                     " classes, dataset has " + std::to_string(ds.num_classes()));
  if (ds.indices(Split::train).empty()) throw ConfigError("train: the training split is empty");
  if (state.epoch == 0) {
    const auto counts = ds.class_counts(Split::train);
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] == 0) log::warn("train: class " + std::to_string(c) + " has no training windows");
  }

  namespace fs = std::filesystem;
  auto save = [&](const TrainState& s, const char* file) {
    if (!opt.checkpoint_dir) return;
    fs::create_directories(*opt.checkpoint_dir);
    save_checkpoint(*opt.checkpoint_dir / file, Checkpoint{cfg, s, opt.checkpoint_extra});
  };

  TrainResult result;
  result.best = state;
  const std::size_t stop = std::min(cfg.epochs, opt.until_epoch.value_or(cfg.epochs));
  while (state.epoch < stop) {
    const std::size_t e = state.epoch;
    const auto t0 = std::chrono::steady_clock::now();
    TrainState snapshot = state;
    const double lr = scheduled_lr(cfg, state, e);
    auto out = detail::run_epoch(state, ds, cfg, e, lr, opt);
    if (out.anomaly) {
      if (snapshot.anomaly_retries > 0) throw AnomalyError("training diverged again after recovery: " + out.diagnostic);
      log::warn(out.diagnostic + "; restoring the epoch-start state and halving the learning rate");
      state = std::move(snapshot);
      state.lr_scale *= 0.5;
      state.anomaly_retries += 1;
      continue;
    }
    const auto test = evaluate(state.model, ds, Split::test);
    state.epoch = e + 1;

    if (cfg.scheduler.kind == SchedulerConfig::Kind::plateau) {
      if (out.metrics.loss < state.plateau_best - 1e-4) {
        state.plateau_best = out.metrics.loss;
        state.plateau_bad_epochs = 0;
      } else if (++state.plateau_bad_epochs >= cfg.scheduler.patience) {
        state.plateau_scale *= cfg.scheduler.factor;
        state.plateau_bad_epochs = 0;
      }
    }
    const bool improved = !state.has_best || test.accuracy > state.best_metric;
    if (improved) {
      state.has_best = true;
      state.best_metric = test.accuracy;
      state.best_epoch = state.epoch;
      state.epochs_since_best = 0;
    } else {
      ++state.epochs_since_best;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (opt.events) {
      opt.events->write(detail::epoch_event(state.epoch, "train", out.metrics, lr, ms));
      opt.events->write(detail::epoch_event(state.epoch, "test", test, lr, ms));
    }
    result.history.push_back({state.epoch, std::move(out.metrics), test, lr, ms});
    if (improved) {
      result.best = state;
      save(state, "best.amck");
    }
    save(state, "last.amck");
    if (cfg.early_stop_patience && state.epochs_since_best >= *cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.last = std::move(state);
  return result;
}

inline TrainResult train(ModelInstance<float> model, const WindowedDataset& ds, const TrainConfig& cfg,
                         const TrainOptions& opt = {}) {
  return train(init_state(std::move(model), cfg.seed), ds, cfg, opt);
}

}  // namespace automr
