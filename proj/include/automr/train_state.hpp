#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/model.hpp"
#include "automr/schema.hpp"

namespace automr {

struct SchedulerConfig {
  enum class Kind { cosine, plateau, none };
  Kind kind = Kind::cosine;
  double factor = 0.5;       // plateau only
  std::size_t patience = 3;  // plateau only
};

AUTOMR_JSON_ENUM(SchedulerConfig::Kind, {SchedulerConfig::Kind::cosine, "cosine"},
                 {SchedulerConfig::Kind::plateau, "plateau"}, {SchedulerConfig::Kind::none, "none"})

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::vector<std::size_t> allowed_batch_sizes = {32, 64, 128, 256};
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  SchedulerConfig scheduler;
  std::uint64_t seed = 0;
  std::optional<std::size_t> early_stop_patience;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!allowed_batch_sizes.empty() &&
        std::find(allowed_batch_sizes.begin(), allowed_batch_sizes.end(), batch_size) == allowed_batch_sizes.end()) {
      std::string s;
      for (auto b : allowed_batch_sizes) s += (s.empty() ? "" : ", ") + std::to_string(b);
      throw ConfigError("train: batch_size " + std::to_string(batch_size) + " is not in the configured set {" + s + "}");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
    if (scheduler.kind == SchedulerConfig::Kind::plateau && !(scheduler.factor > 0.0 && scheduler.factor < 1.0))
      throw ConfigError("train: plateau factor must lie in (0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"allowed_batch_sizes", c.allowed_batch_sizes},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"clip_norm", c.clip_norm},
       {"scheduler", {{"kind", c.scheduler.kind}, {"factor", c.scheduler.factor}, {"patience", c.scheduler.patience}}},
       {"seed", c.seed},
       {"early_stop_patience", c.early_stop_patience ? nlohmann::json(*c.early_stop_patience) : nlohmann::json()},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("allowed_batch_sizes")) j.at("allowed_batch_sizes").get_to(c.allowed_batch_sizes);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("scheduler")) {
      const auto& s = j.at("scheduler");
      if (s.is_string()) {
        s.get_to(c.scheduler.kind);
      } else {
        s.at("kind").get_to(c.scheduler.kind);
        c.scheduler.factor = s.value("factor", c.scheduler.factor);
        c.scheduler.patience = s.value("patience", c.scheduler.patience);
      }
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("early_stop_patience") && !j.at("early_stop_patience").is_null())
      c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  ModelInstance<float> model;
  std::vector<Tensor<float>> adam_m;
  std::vector<Tensor<float>> adam_v;
  std::uint64_t adam_step = 0;

  std::size_t epoch = 0;          // completed epochs
  std::uint64_t step = 0;         // optimizer steps taken; keys dropout masks
  std::uint64_t seed = 0;         // run seed; shuffles and masks derive from it
  double lr_scale = 1.0;          // halved by anomaly recovery
  double plateau_scale = 1.0;     // reduced by the plateau scheduler
  double plateau_best = std::numeric_limits<double>::infinity();
  std::size_t plateau_bad_epochs = 0;
  std::size_t epochs_since_best = 0;
  bool has_best = false;
  double best_metric = 0.0;       // best test accuracy so far
  std::size_t best_epoch = 0;     // 1-based epoch that produced it
  int anomaly_retries = 0;
};

inline TrainState init_state(ModelInstance<float> model, std::uint64_t seed) {
  TrainState s;
  for (const auto& p : model.parameters()) {
    s.adam_m.emplace_back(p.value.shape());
    s.adam_v.emplace_back(p.value.shape());
  }
  s.model = std::move(model);
  s.seed = seed;
  return s;
}

// Learning rate for the 0-based `epoch`. Cosine decays from the base rate
// to 0 over cfg.epochs.
inline double scheduled_lr(const TrainConfig& cfg, const TrainState& s, std::size_t epoch) {
  double lr = cfg.learning_rate * s.lr_scale;
  switch (cfg.scheduler.kind) {
    case SchedulerConfig::Kind::cosine:
      if (cfg.epochs > 0)
        lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
      break;
    case SchedulerConfig::Kind::plateau: lr *= s.plateau_scale; break;
    case SchedulerConfig::Kind::none: break;
  }
  return lr;
}

}  // namespace automr
