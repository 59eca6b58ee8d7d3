#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "automr/binio.hpp"
#include "automr/dataset.hpp"
#include "automr/error.hpp"
#include "automr/log.hpp"
#include "automr/metrics.hpp"
#include "automr/model.hpp"
#include "automr/rng.hpp"
#include "automr/trainer.hpp"
#include "automr/tune/space.hpp"
#include "automr/tune/surrogate.hpp"

namespace automr::tune {

enum class TrialStatus { ok, failed, anomaly };
AUTOMR_JSON_ENUM(TrialStatus, {TrialStatus::ok, "ok"}, {TrialStatus::failed, "failed"}, {TrialStatus::anomaly, "anomaly"})

struct TrialRecord {
  std::size_t trial = 0;
  std::string kind = "smbo";  // default | smbo | grid
  TrialConfig config;
  TrialStatus status = TrialStatus::ok;
  std::optional<double> objective;  // validation accuracy, present iff ok
  std::size_t budget = 0;           // epochs
  std::uint64_t study_seed = 0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::optional<QuartzConfig> model;
  std::optional<TrainConfig> train;
  std::optional<MetricsReport> metrics;  // validation metrics of the best epoch
  std::string error;

  // What the surrogate sees: failures count as 0.
  double score() const { return status == TrialStatus::ok && objective ? *objective : 0.0; }
};

inline void to_json(nlohmann::json& j, const TrialRecord& r) {
  j = {{"trial", r.trial},
       {"kind", r.kind},
       {"config", r.config},
       {"status", r.status},
       {"objective", r.objective ? nlohmann::json(*r.objective) : nlohmann::json()},
       {"budget", r.budget},
       {"study_seed", r.study_seed},
       {"seed", r.seed},
       {"wall_ms", r.wall_ms}};
  if (r.model) j["model"] = *r.model;
  if (r.train) j["train"] = *r.train;
  if (r.metrics) j["metrics"] = *r.metrics;
  if (!r.error.empty()) j["error"] = r.error;
}

inline void from_json(const nlohmann::json& j, TrialRecord& r) {
  r = TrialRecord{};
  j.at("trial").get_to(r.trial);
  r.kind = j.value("kind", "smbo");
  j.at("config").get_to(r.config);
  j.at("status").get_to(r.status);
  if (!j.at("objective").is_null()) r.objective = j.at("objective").get<double>();
  j.at("budget").get_to(r.budget);
  j.at("study_seed").get_to(r.study_seed);
  j.at("seed").get_to(r.seed);
  j.at("wall_ms").get_to(r.wall_ms);
  if (j.contains("model")) r.model = j.at("model").get<QuartzConfig>();
  if (j.contains("train")) r.train = j.at("train").get<TrainConfig>();
  if (j.contains("metrics")) r.metrics = j.at("metrics").get<MetricsReport>();
  r.error = j.value("error", "");
  if ((r.status == TrialStatus::ok) != r.objective.has_value())
    throw ConfigError("trial " + std::to_string(r.trial) + ": objective must be present exactly when status is ok");
}

// Index of the best ok trial; ties keep the earliest.
inline std::optional<std::size_t> incumbent(const std::vector<TrialRecord>& history) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < history.size(); ++i)
    if (history[i].status == TrialStatus::ok && (!best || *history[i].objective > *history[*best].objective)) best = i;
  return best;
}

// ------------------------------------------------------------------ suggest

struct TunerOptions {
  std::size_t n_init = 8;
  std::size_t candidates = 500;
  std::size_t random_every = 5;  // one random suggestion after this many model-based ones
  double xi = 0.01;
  bool log_gap = true;
  // Incumbent perturbations use a step (in unit coordinates) drawn
  // log-uniformly from [perturb_min, perturb_max].
  double perturb_min = 0.01;
  double perturb_max = 0.1;
  ForestOptions forest;
};

inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

// Halton point `index` shifted by a seed-derived offset (mod 1).
inline std::vector<double> shifted_halton(std::size_t index, std::size_t dims, std::uint64_t seed) {
  static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  Rng shift(hash_key({seed, 0x4a17u}));
  std::vector<double> u(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const double s = shift.uniform();
    const double h = d < std::size(primes) ? radical_inverse(index + 1, primes[d]) : Rng(hash_key({seed, index, d})).uniform();
    u[d] = std::fmod(h + s, 1.0);
  }
  return u;
}

// Next configuration to evaluate. Deterministic in (history, space, seed).
inline TrialConfig suggest(const std::vector<TrialRecord>& history, const ParamSpace& space, std::uint64_t seed,
                           const TunerOptions& opt = {}) {
  if (space.single_point()) {
    log::warn("search space has a single point; every suggestion is the same configuration");
    return space.defaults();
  }
  const std::size_t t = history.size();
  Rng rng(hash_key({seed, 0x5u, t}));
  if (t < opt.n_init) return space.from_unit(shifted_halton(t, space.size(), seed));
  const std::size_t model_round = t - opt.n_init;
  if (opt.random_every > 0 && (model_round + 1) % (opt.random_every + 1) == 0) return space.sample(rng);

  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& r : history)
    if (space.contains(r.config)) {
      X.push_back(space.encode(r.config));
      y.push_back(r.score());
    }
  const auto best = incumbent(history);
  if (X.size() < 2 || !best) return space.sample(rng);

  double y_best = history[*best].score();
  if (opt.log_gap) {
    // Fit on -log(1 + gap to the incumbent): order and the local scale at
    // the incumbent are kept, far-off losses are compressed.
    for (auto& v : y) v = -std::log1p(std::max(0.0, y_best - v));
    y_best = 0.0;
  }
  RandomForest forest(opt.forest);
  forest.fit(X, y, hash_key({seed, 0xf1u, t}));
  const auto anchor = space.to_unit(history[*best].config);

  TrialConfig chosen;
  double chosen_ei = -1.0;
  for (std::size_t c = 0; c < opt.candidates; ++c) {
    TrialConfig cand;
    if (c % 2 == 0) {
      cand = space.sample(rng);
    } else {
      auto u = anchor;
      const double step = opt.perturb_min * std::pow(opt.perturb_max / opt.perturb_min, rng.uniform());
      for (std::size_t d = 0; d < u.size(); ++d) {
        if (space.dimensions()[d].kind == Dimension::Kind::categorical) {
          if (rng.uniform() < 0.25) u[d] = rng.uniform();
        } else {
          u[d] = std::clamp(u[d] + step * rng.normal(), 0.0, 1.0);
        }
      }
      cand = space.from_unit(u);
    }
    const double ei = expected_improvement(forest.predict(space.encode(cand)), y_best, opt.xi);
    if (ei > chosen_ei) {
      chosen_ei = ei;
      chosen = std::move(cand);
    }
  }
  return chosen;
}

// Runs `n_trials` suggestions against a cheap objective (no training) and
// returns the history. Every trial comes from suggest().
template <class F>
std::vector<TrialRecord> optimize(const ParamSpace& space, F&& objective, std::size_t n_trials, std::uint64_t seed,
                                  const TunerOptions& opt = {}) {
  std::vector<TrialRecord> history;
  for (std::size_t i = 0; i < n_trials; ++i) {
    TrialRecord r;
    r.trial = i;
    r.config = suggest(history, space, seed, opt);
    r.objective = objective(r.config);
    r.study_seed = seed;
    history.push_back(std::move(r));
  }
  return history;
}

// -------------------------------------------------------------------- store

// Reads an append-only trial store. A missing file is an empty study; any
// unparsable or out-of-sequence line is a FormatError.
inline std::vector<TrialRecord> read_store(const std::filesystem::path& path) {
  std::vector<TrialRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial store " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<TrialRecord>());
    } catch (const std::exception& e) {
      throw FormatError("trial store " + path.string() + " is corrupt at line " + std::to_string(n) + ": " + e.what() +
                        " (start a fresh study to discard it)");
    }
    if (out.back().trial != out.size() - 1)
      throw FormatError("trial store " + path.string() + " is corrupt at line " + std::to_string(n) +
                        ": expected trial " + std::to_string(out.size() - 1) + ", found " +
                        std::to_string(out.back().trial) + " (start a fresh study to discard it)");
  }
  return out;
}

inline void append_store(const std::filesystem::path& path, const TrialRecord& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  out << nlohmann::json(r).dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to trial store " + path.string());
}

// -------------------------------------------------------------------- study

// Model and training settings for a trial; dimensions absent from `c` keep
// the base preset / TrainConfig defaults.
inline std::pair<QuartzConfig, TrainConfig> materialize(const TrialConfig& c, std::size_t in_channels,
                                                        std::size_t num_classes, std::size_t epochs,
                                                        std::uint64_t seed) {
  auto get = [&](const char* k, double def) {
    auto it = c.find(k);
    return it == c.end() ? def : it->second;
  };
  QuartzConfig m = preset("base", in_channels, num_classes);
  const auto blocks = static_cast<std::size_t>(get("num_blocks", static_cast<double>(m.blocks.size())));
  const auto cells = static_cast<std::size_t>(get("cells_per_block", static_cast<double>(m.blocks[0].cells)));
  const auto base_ch = static_cast<std::size_t>(get("base_channels", static_cast<double>(m.blocks[0].channels)));
  const auto k0 = static_cast<std::size_t>(get("kernel_base", static_cast<double>(m.blocks[0].kernel)));
  m.blocks.clear();
  for (std::size_t i = 0; i < blocks; ++i) m.blocks.push_back({cells, base_ch << (i / 2), k0 + 2 * i, 1, true});
  m.dropout = get("dropout", m.dropout);
  m.validate();

  TrainConfig t;
  t.epochs = epochs;
  t.learning_rate = get("learning_rate", t.learning_rate);
  t.weight_decay = get("weight_decay", t.weight_decay);
  t.batch_size = static_cast<std::size_t>(get("batch_size", static_cast<double>(t.batch_size)));
  t.allowed_batch_sizes.clear();
  t.seed = seed;
  t.validate();
  return {m, t};
}

// Holds out `fraction` of the train windows (seeded) as a validation set,
// tagged test in the returned dataset. Test windows of `ds` are dropped.
inline WindowedDataset carve_validation(const WindowedDataset& ds, double fraction, std::uint64_t seed) {
  auto train = ds.indices(Split::train);
  if (train.size() < 2) throw ConfigError("tune: need at least 2 training windows to carve a validation split");
  Rng rng(hash_key({seed, 0xca7u}));
  rng.shuffle(train.begin(), train.end());
  const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size()))),
                                             1, train.size() - 1);
  std::sort(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());
  std::vector<std::size_t> order(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());
  order.insert(order.end(), train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  auto out = ds.subset(order);
  for (std::size_t i = 0; i < out.size(); ++i) out.split[i] = i < order.size() - n_val ? Split::train : Split::test;
  return out;
}

struct StudyOptions {
  std::size_t n_trials = 12;
  std::size_t epochs_per_trial = 15;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> store;
  bool fresh = false;
  double validation_fraction = 0.2;
  std::optional<std::size_t> max_new_trials;  // stop early (interruption)
  TunerOptions tuner;
  std::function<void(const TrialRecord&)> on_trial;
};

struct StudyResult {
  std::vector<TrialRecord> trials;
  std::optional<std::size_t> best;
};

// Trains one configuration on `tuning` (train + validation-as-test).
inline TrialRecord run_trial(const WindowedDataset& tuning, const TrialConfig& config, std::size_t index,
                             const std::string& kind, const StudyOptions& opt) {
  TrialRecord r;
  r.trial = index;
  r.kind = kind;
  r.config = config;
  r.budget = opt.epochs_per_trial;
  r.study_seed = opt.seed;
  r.seed = hash_key({opt.seed, 0x7a1u, index});
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto [m, t] = materialize(config, tuning.channels(), tuning.num_classes(), opt.epochs_per_trial, r.seed);
    r.model = m;
    r.train = t;
    auto res = train(build(m, r.seed), tuning, t);
    if (res.history.empty()) throw ConfigError("trial trained for 0 epochs");
    r.objective = res.best.best_metric;
    r.metrics = res.history[res.best.best_epoch - 1].test;
    r.status = TrialStatus::ok;
  } catch (const AnomalyError& e) {
    r.status = TrialStatus::anomaly;
    r.error = e.what();
  } catch (const Error& e) {
    r.status = TrialStatus::failed;
    r.error = e.what();
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace detail {

template <class Next>
StudyResult drive(const WindowedDataset& ds, const StudyOptions& opt, std::size_t total, Next next) {
  if (total == 0) throw ConfigError("tune: need at least one trial");
  if (opt.store && opt.fresh) std::filesystem::remove(*opt.store);
  StudyResult res;
  if (opt.store) res.trials = read_store(*opt.store);
  for (const auto& r : res.trials)
    if (r.study_seed != opt.seed)
      throw ConfigError("trial store belongs to study seed " + std::to_string(r.study_seed) + ", not " +
                        std::to_string(opt.seed));
  const auto tuning = carve_validation(ds, opt.validation_fraction, opt.seed);
  std::size_t added = 0;
  while (res.trials.size() < total && (!opt.max_new_trials || added < *opt.max_new_trials)) {
    const std::size_t i = res.trials.size();
    auto [config, kind] = next(res.trials, i);
    auto rec = run_trial(tuning, config, i, kind, opt);
    if (rec.status != TrialStatus::ok) log::warn("trial " + std::to_string(i) + " " + rec.error);
    if (opt.store) append_store(*opt.store, rec);
    if (opt.on_trial) opt.on_trial(rec);
    res.trials.push_back(std::move(rec));
    ++added;
  }
  res.best = incumbent(res.trials);
  return res;
}

}  // namespace detail

// SMBO study. Trial 0 is the space defaults; later trials come from
// suggest(). Resumes from an existing store.
inline StudyResult run_study(const WindowedDataset& ds, const ParamSpace& space, const StudyOptions& opt) {
  return detail::drive(ds, opt, opt.n_trials, [&](const std::vector<TrialRecord>& h, std::size_t i) {
    if (i == 0) return std::pair<TrialConfig, std::string>{space.defaults(), "default"};
    return std::pair<TrialConfig, std::string>{suggest(h, space, opt.seed, opt.tuner), "smbo"};
  });
}

// Manual ablation: defaults everywhere except `dimension`, which walks
// `values` in order.
inline StudyResult run_grid(const WindowedDataset& ds, const ParamSpace& space, const std::string& dimension,
                            const std::vector<double>& values, StudyOptions opt) {
  const auto& dim = space.at(dimension);
  for (double v : values)
    if (!dim.contains(v)) throw ConfigError("grid value " + std::to_string(v) + " lies outside '" + dimension + "'");
  return detail::drive(ds, opt, values.size(), [&](const std::vector<TrialRecord>&, std::size_t i) {
    auto c = space.defaults();
    c[dimension] = values[i];
    return std::pair<TrialConfig, std::string>{c, "grid"};
  });
}

// Writes the incumbent as a train-ready config: {"model", "train",
// "provenance"}.
inline nlohmann::json export_best(const std::filesystem::path& store, const std::filesystem::path& out) {
  const auto trials = read_store(store);
  const auto best = incumbent(trials);
  if (!best) throw ConfigError("trial store " + store.string() + " has no successful trials to export");
  const auto& r = trials[*best];
  if (!r.model || !r.train) throw FormatError("trial " + std::to_string(r.trial) + " lacks its model/train settings");
  nlohmann::json j = {{"model", *r.model},
                      {"train", *r.train},
                      {"provenance",
                       {{"store", store.string()},
                        {"study_seed", r.study_seed},
                        {"trial", r.trial},
                        {"objective", *r.objective},
                        {"config", r.config}}}};
  binio::write_atomically(out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  return j;
}

}  // namespace automr::tune
