#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "automr/synthetic.hpp"
#include "automr/tune/tuner.hpp"

using namespace automr;
using namespace automr::tune;
namespace fs = std::filesystem;

namespace {

ParamSpace random_space(Rng& rng) {
  std::vector<Dimension> dims;
  const std::size_t n = 1 + rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "d" + std::to_string(i);
    switch (rng.below(4)) {
      case 0: {
        const double lo = std::pow(10.0, rng.uniform(-6, 0)), hi = lo * std::pow(10.0, rng.uniform(0, 4));
        dims.push_back(Dimension::log(name, lo, hi, lo));
        break;
      }
      case 1: {
        const double lo = rng.uniform(-5, 5), hi = lo + rng.uniform(0, 3);
        dims.push_back(Dimension::linear(name, lo, hi, hi));
        break;
      }
      case 2: {
        const long lo = static_cast<long>(rng.below(10)) - 5, hi = lo + static_cast<long>(rng.below(6));
        dims.push_back(Dimension::integer(name, lo, hi, lo));
        break;
      }
      default: {
        std::vector<double> choices;
        for (std::size_t k = 0, m = 1 + rng.below(4); k < m; ++k) choices.push_back(static_cast<double>(k * 7 + 1));
        dims.push_back(Dimension::categorical(name, choices, choices.front()));
      }
    }
  }
  return ParamSpace(dims);
}

TrialRecord ok_record(std::size_t i, TrialConfig c, double objective, std::uint64_t study_seed = 0) {
  TrialRecord r;
  r.trial = i;
  r.config = std::move(c);
  r.objective = objective;
  r.study_seed = study_seed;
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("automr_test_tune_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

WindowedDataset tiny_data() {
  SyntheticSpec s;
  s.channels = 2;
  s.window = 48;
  s.train_per_class = 10;
  s.test_per_class = 3;
  return make_synthetic(s, 4);
}

// Small architectures and a single fast batch size keep study tests quick.
ParamSpace tiny_space() {
  return ParamSpace({Dimension::log("learning_rate", 1e-3, 1e-2, 3e-3), Dimension::linear("dropout", 0.0, 0.3, 0.1),
                     Dimension::categorical("batch_size", {32}, 32), Dimension::integer("num_blocks", 2, 2, 2),
                     Dimension::integer("cells_per_block", 1, 1, 1), Dimension::categorical("base_channels", {8, 16}, 8),
                     Dimension::categorical("kernel_base", {3}, 3)});
}

StudyOptions quick(std::size_t trials, const fs::path& store) {
  StudyOptions o;
  o.n_trials = trials;
  o.epochs_per_trial = 1;
  o.seed = 21;
  o.store = store;
  return o;
}

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

// ------------------------------------------------------------------ space

TEST(Space, DefaultSpaceDimensions) {
  const auto s = default_space();
  ASSERT_EQ(s.size(), 8u);
  const std::vector<std::string> names = {"learning_rate", "weight_decay", "dropout",      "batch_size",
                                          "num_blocks",    "cells_per_block", "base_channels", "kernel_base"};
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(s.dimensions()[i].name, names[i]);
  EXPECT_EQ(s.at("batch_size").choices, (std::vector<double>{32, 64, 128, 256}));
  EXPECT_EQ(s.at("base_channels").choices, (std::vector<double>{32, 64, 128}));
  EXPECT_EQ(s.at("kernel_base").choices, (std::vector<double>{3, 5, 7}));
  EXPECT_EQ(s.at("learning_rate").kind, Dimension::Kind::log);
  EXPECT_DOUBLE_EQ(s.at("learning_rate").low, 1e-4);
  EXPECT_DOUBLE_EQ(s.at("learning_rate").high, 1e-2);
  EXPECT_DOUBLE_EQ(s.at("weight_decay").low, 1e-6);
  EXPECT_DOUBLE_EQ(s.at("dropout").high, 0.5);
  EXPECT_EQ(s.at("num_blocks").low, 2);
  EXPECT_EQ(s.at("num_blocks").high, 5);
  EXPECT_EQ(s.at("cells_per_block").high, 3);
  EXPECT_TRUE(s.contains(s.defaults()));
}

TEST(Space, EncodeDecodeRoundTrip) {
  Rng rng(1);
  const auto s = default_space();
  for (int i = 0; i < 300; ++i) {
    const auto c = s.sample(rng);
    ASSERT_TRUE(s.contains(c));
    const auto x = s.encode(c);
    ASSERT_EQ(x.size(), s.encoded_width());
    const auto back = s.decode(x);
    for (const auto& d : s.dimensions()) {
      if (d.kind == Dimension::Kind::log || d.kind == Dimension::Kind::linear)
        EXPECT_NEAR(back.at(d.name), c.at(d.name), 1e-12 * std::max(1.0, std::abs(c.at(d.name))));
      else
        EXPECT_EQ(back.at(d.name), c.at(d.name));
    }
  }
}

TEST(Space, CategoricalAndIntegerSamplesAreValid) {
  Rng rng(2);
  const auto s = default_space();
  std::set<double> batches;
  for (int i = 0; i < 400; ++i) {
    const auto c = s.sample(rng);
    batches.insert(c.at("batch_size"));
    EXPECT_EQ(c.at("num_blocks"), std::round(c.at("num_blocks")));
  }
  EXPECT_EQ(batches, (std::set<double>{32, 64, 128, 256}));
}

TEST(Space, ValidationAndJson) {
  EXPECT_THROW(ParamSpace({Dimension::log("a", 0.0, 1.0, 0.5)}), ConfigError);
  EXPECT_THROW(ParamSpace({Dimension::linear("a", 2.0, 1.0, 1.5)}), ConfigError);
  EXPECT_THROW(ParamSpace({Dimension::linear("a", 0, 1, 2)}), ConfigError);
  EXPECT_THROW(ParamSpace({Dimension::linear("a", 0, 1, 0), Dimension::linear("a", 0, 1, 0)}), ConfigError);
  EXPECT_THROW(ParamSpace({Dimension::categorical("a", {}, 0)}), ConfigError);
  const nlohmann::json j = default_space();
  EXPECT_EQ(nlohmann::json(j.get<ParamSpace>()), j);
}

// ---------------------------------------------------------------- suggest

TEST(Suggest, StaysInsideRandomSpaces) {
  Rng rng(3);
  log::WarningCapture quiet;
  TunerOptions opt;
  opt.candidates = 60;
  for (int trial = 0; trial < 60; ++trial) {
    const auto space = random_space(rng);
    std::vector<TrialRecord> h;
    const std::size_t n = rng.below(16);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = suggest(h, space, 5, opt);
      ASSERT_TRUE(space.contains(c)) << nlohmann::json(space).dump();
      h.push_back(ok_record(i, c, rng.uniform()));
    }
    if (space.single_point()) continue;
    ASSERT_TRUE(space.contains(suggest(h, space, 5, opt)));
  }
}

TEST(Suggest, DeterministicInHistoryAndSeed) {
  const auto space = default_space();
  std::vector<TrialRecord> h;
  Rng rng(4);
  for (std::size_t i = 0; i < 12; ++i) h.push_back(ok_record(i, space.sample(rng), rng.uniform()));
  EXPECT_EQ(suggest(h, space, 9), suggest(h, space, 9));
  EXPECT_NE(suggest(h, space, 9), suggest(h, space, 10));
  EXPECT_EQ(suggest({}, space, 9), suggest({}, space, 9));
}

TEST(Suggest, InitialDesignIsSpreadOut) {
  const ParamSpace space({Dimension::linear("x", 0, 1, 0.5)});
  std::vector<TrialRecord> h;
  for (std::size_t i = 0; i < 8; ++i) h.push_back(ok_record(i, suggest(h, space, 77), 0.0));
  std::vector<double> xs;
  for (const auto& r : h) xs.push_back(r.config.at("x"));
  std::sort(xs.begin(), xs.end());
  // A shifted van der Corput sequence leaves no gap wider than 1/4 in 8 points.
  for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_LE(xs[i] - xs[i - 1], 0.25 + 1e-12);
}

TEST(Suggest, SinglePointSpaceWarnsAndReturnsIt) {
  const ParamSpace space({Dimension::categorical("b", {64}, 64), Dimension::integer("n", 3, 3, 3)});
  std::vector<std::string> warnings;
  const auto prev = log::set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  const auto c = suggest({}, space, 0);
  log::set_warning_handler(prev);
  EXPECT_EQ(c, space.defaults());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Suggest, FailedTrialsCountAsZero) {
  TrialRecord r;
  r.status = TrialStatus::failed;
  EXPECT_EQ(r.score(), 0.0);
  r.status = TrialStatus::ok;
  r.objective = 0.7;
  EXPECT_EQ(r.score(), 0.7);
}

TEST(Suggest, IncumbentIsMonotoneOnAnalyticObjective) {
  const ParamSpace space({Dimension::log("lr", 1e-5, 1e-1, 1e-3), Dimension::linear("d", 0, 1, 0.5)});
  auto f = [](const TrialConfig& c) {
    const double a = std::log10(c.at("lr")) + 3, b = c.at("d") - 0.3;
    return -(a * a) - 4 * b * b;
  };
  const auto h = optimize(space, f, 20, 3);
  double prev = -INFINITY;
  for (std::size_t k = 1; k <= h.size(); ++k) {
    const std::vector<TrialRecord> prefix(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(k));
    const double best = *prefix[*incumbent(prefix)].objective;
    EXPECT_GE(best, prev);
    prev = best;
  }
}

TEST(Suggest, IncumbentTiesKeepEarliest) {
  std::vector<TrialRecord> h{ok_record(0, {}, 0.5), ok_record(1, {}, 0.9), ok_record(2, {}, 0.9)};
  EXPECT_EQ(incumbent(h), 1u);
  h[1].status = TrialStatus::failed;
  h[1].objective.reset();
  EXPECT_EQ(incumbent(h), 2u);
  EXPECT_FALSE(incumbent({}).has_value());
}

// -------------------------------------------------------------- surrogate

TEST(Surrogate, ExpectedImprovementClosedForm) {
  EXPECT_EQ(expected_improvement({0.5, 0.0}, 0.6, 0.01), 0.0);
  EXPECT_EQ(expected_improvement({0.6, 0.0}, 0.6, 0.01), 0.0);
  EXPECT_NEAR(expected_improvement({0.8, 0.0}, 0.6, 0.01), 0.19, 1e-15);
  // z = 0: EI = sd * phi(0)
  EXPECT_NEAR(expected_improvement({0.61, 0.04}, 0.6, 0.01), 0.2 / std::sqrt(2 * M_PI), 1e-12);
  EXPECT_GT(expected_improvement({0.5, 0.01}, 0.6, 0.01), 0.0);
}

TEST(Surrogate, VarianceNonNegativeAndFitsDistinctPoints) {
  Rng rng(6);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    X.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    y.push_back(std::sin(6 * X.back()[0]) + X.back()[1]);
  }
  RandomForest f;
  f.fit(X, y, 1);
  double err = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const auto p = f.predict(X[i]);
    EXPECT_GE(p.variance, 0.0);
    err += std::abs(p.mean - y[i]);
  }
  EXPECT_LT(err / static_cast<double>(X.size()), 0.2);
  for (int i = 0; i < 100; ++i) EXPECT_GE(f.predict({rng.uniform(), rng.uniform(), rng.uniform()}).variance, 0.0);

  RandomForest g;
  g.fit(X, y, 1);
  EXPECT_EQ(f.predict({0.3, 0.3, 0.3}).mean, g.predict({0.3, 0.3, 0.3}).mean);
}

TEST(Surrogate, ConstantTargetsGiveZeroVariance) {
  RandomForest f;
  f.fit({{0.1}, {0.5}, {0.9}}, {2.0, 2.0, 2.0}, 0);
  const auto p = f.predict({0.3});
  EXPECT_EQ(p.mean, 2.0);
  EXPECT_EQ(p.variance, 0.0);
  EXPECT_THROW(RandomForest().predict({0.0}), InternalError);
  EXPECT_THROW(f.fit({}, {}, 0), ShapeError);
}

// ------------------------------------------------------------------ store

TEST(Store, RoundTripAndMissingFile) {
  const auto dir = scratch("store");
  const auto path = dir / "trials.ndjson";
  EXPECT_TRUE(read_store(path).empty());
  auto a = ok_record(0, {{"x", 1.5}}, 0.25, 3);
  a.model = QuartzConfig{};
  a.model->blocks = {{1, 8, 3, 1, true}};
  TrialRecord b;
  b.trial = 1;
  b.status = TrialStatus::anomaly;
  b.error = "diverged";
  b.study_seed = 3;
  append_store(path, a);
  append_store(path, b);
  const auto back = read_store(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(nlohmann::json(back[0]), nlohmann::json(a));
  EXPECT_EQ(nlohmann::json(back[1]), nlohmann::json(b));
  fs::remove_all(dir);
}

TEST(Store, CorruptOrOutOfOrderStoreRefused) {
  const auto dir = scratch("corrupt");
  const auto path = dir / "trials.ndjson";
  append_store(path, ok_record(0, {}, 0.1));
  std::ofstream(path, std::ios::app) << "{\"trial\": 1, \"config\": \n";
  auto msg = error_text([&] { read_store(path); });
  EXPECT_NE(msg.find("corrupt at line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("fresh"), std::string::npos);

  fs::remove(path);
  append_store(path, ok_record(0, {}, 0.1));
  append_store(path, ok_record(2, {}, 0.1));
  EXPECT_THROW(read_store(path), FormatError);

  fs::remove(path);
  auto bad = nlohmann::json(ok_record(0, {}, 0.1));
  bad["objective"] = nullptr;
  std::ofstream(path) << bad.dump() << "\n";
  EXPECT_THROW(read_store(path), FormatError);
  fs::remove_all(dir);
}

// ------------------------------------------------------------------ study

TEST(Study, MaterializeAppliesOverrides) {
  const auto [m, t] = materialize({{"num_blocks", 4},
                                   {"cells_per_block", 3},
                                   {"base_channels", 32},
                                   {"kernel_base", 7},
                                   {"dropout", 0.25},
                                   {"learning_rate", 2e-3},
                                   {"weight_decay", 1e-5},
                                   {"batch_size", 128}},
                                  6, 4, 9, 5);
  ASSERT_EQ(m.blocks.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m.blocks[i].cells, 3u);
    EXPECT_EQ(m.blocks[i].kernel, 7 + 2 * i);
    EXPECT_EQ(m.blocks[i].channels, 32u << (i / 2));
  }
  EXPECT_EQ(m.in_channels, 6u);
  EXPECT_EQ(m.num_classes, 4u);
  EXPECT_EQ(m.dropout, 0.25);
  EXPECT_EQ(t.batch_size, 128u);
  EXPECT_EQ(t.epochs, 9u);
  EXPECT_EQ(t.learning_rate, 2e-3);
  EXPECT_EQ(t.weight_decay, 1e-5);
  EXPECT_EQ(t.seed, 5u);
}

TEST(Study, ValidationCarveNeverUsesTestWindows) {
  const auto ds = tiny_data();
  const auto v = carve_validation(ds, 0.2, 8);
  EXPECT_EQ(v.size(), ds.indices(Split::train).size());
  EXPECT_EQ(v.indices(Split::test).size(), 6u);  // round(0.2 * 30)
  // every window of the carve is a train window of the source
  std::multiset<std::uint64_t> src, got;
  for (auto i : ds.indices(Split::train)) src.insert(ds.provenance[i].start);
  for (const auto& p : v.provenance) got.insert(p.start);
  EXPECT_EQ(src, got);
  EXPECT_EQ(carve_validation(ds, 0.2, 8).split, v.split);
  EXPECT_EQ(carve_validation(ds, 0.2, 8).labels, v.labels);
}

TEST(Study, SingleTrialIsStoredAndBest) {
  const auto dir = scratch("single");
  const auto ds = tiny_data();
  const auto res = run_study(ds, tiny_space(), quick(1, dir / "t.ndjson"));
  ASSERT_EQ(res.trials.size(), 1u);
  EXPECT_EQ(res.best, 0u);
  EXPECT_EQ(res.trials[0].kind, "default");
  EXPECT_EQ(res.trials[0].config, tiny_space().defaults());
  EXPECT_EQ(read_store(dir / "t.ndjson").size(), 1u);
  ASSERT_TRUE(res.trials[0].metrics.has_value());
  EXPECT_EQ(res.trials[0].metrics->accuracy, *res.trials[0].objective);
  fs::remove_all(dir);
}

TEST(Study, InterruptedStudyResumesWithoutDuplicates) {
  const auto dir = scratch("resume");
  const auto ds = tiny_data();
  auto opt = quick(4, dir / "t.ndjson");
  opt.max_new_trials = 2;
  EXPECT_EQ(run_study(ds, tiny_space(), opt).trials.size(), 2u);
  opt.max_new_trials.reset();
  const auto res = run_study(ds, tiny_space(), opt);
  const auto stored = read_store(dir / "t.ndjson");
  ASSERT_EQ(stored.size(), 4u);
  for (std::size_t i = 0; i < stored.size(); ++i) EXPECT_EQ(stored[i].trial, i);

  // a resumed study suggests what an uninterrupted one would have
  const auto again = run_study(ds, tiny_space(), quick(4, dir / "fresh.ndjson"));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.trials[i].config, res.trials[i].config);

  opt.seed = 22;
  EXPECT_THROW(run_study(ds, tiny_space(), opt), ConfigError);
  opt.fresh = true;
  EXPECT_EQ(run_study(ds, tiny_space(), opt).trials.size(), 4u);
  fs::remove_all(dir);
}

TEST(Study, FailedTrialRecordedWithoutObjective) {
  const auto ds = carve_validation(tiny_data(), 0.2, 0);
  StudyOptions opt;
  opt.epochs_per_trial = 1;
  const auto r = run_trial(ds, {{"num_blocks", 0}}, 0, "smbo", opt);
  EXPECT_EQ(r.status, TrialStatus::failed);
  EXPECT_FALSE(r.objective.has_value());
  EXPECT_FALSE(r.error.empty());
  EXPECT_EQ(r.score(), 0.0);
}

TEST(Study, GridWalksOneDimension) {
  const auto dir = scratch("grid");
  const auto space = ParamSpace({Dimension::log("learning_rate", 1e-3, 1e-2, 3e-3),
                                 Dimension::categorical("batch_size", {8, 16, 32}, 32),
                                 Dimension::integer("num_blocks", 2, 2, 2), Dimension::categorical("base_channels", {8}, 8)});
  const auto res = run_grid(tiny_data(), space, "batch_size", {8, 16}, quick(99, dir / "g.ndjson"));
  ASSERT_EQ(res.trials.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(res.trials[i].kind, "grid");
    EXPECT_EQ(res.trials[i].train->batch_size, i ? 16u : 8u);
    EXPECT_EQ(res.trials[i].config.at("learning_rate"), 3e-3);
  }
  EXPECT_THROW(run_grid(tiny_data(), space, "batch_size", {12}, quick(1, dir / "h.ndjson")), ConfigError);
  fs::remove_all(dir);
}

TEST(Export, WritesIncumbentWithProvenance) {
  const auto dir = scratch("export");
  const auto store = dir / "t.ndjson";
  const auto res = run_study(tiny_data(), tiny_space(), quick(3, store));
  const auto j = export_best(store, dir / "best.json");
  double max_obj = -1;
  for (const auto& r : res.trials)
    if (r.objective) max_obj = std::max(max_obj, *r.objective);
  EXPECT_EQ(j.at("provenance").at("objective").get<double>(), max_obj);
  EXPECT_EQ(j.at("provenance").at("trial").get<std::size_t>(), *res.best);
  EXPECT_EQ(j.at("provenance").at("study_seed").get<std::uint64_t>(), 21u);
  std::ifstream in(dir / "best.json");
  const auto file = nlohmann::json::parse(in);
  EXPECT_NO_THROW(file.at("model").get<QuartzConfig>().validate());
  EXPECT_NO_THROW(file.at("train").get<TrainConfig>().validate());

  TrialRecord failed;
  failed.status = TrialStatus::failed;
  append_store(dir / "bad.ndjson", failed);
  EXPECT_THROW(export_best(dir / "bad.ndjson", dir / "x.json"), ConfigError);
  fs::remove_all(dir);
}
