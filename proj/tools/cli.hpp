#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "automr/automr.hpp"

namespace automr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kInput = 2, kRuntime = 3 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DataError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e))
    return kInput;
  return kRuntime;
}

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) {
  if (flag) return *flag;
  if (const char* env = std::getenv("AUTOMR_SEED"); env && *env) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("AUTOMR_SEED is not an unsigned integer: '") + env + "'");
  }
  return fallback;
}

inline json read_json_file(const fs::path& p, const std::string& what) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + what + " " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(what + " " + p.string() + ": " + e.what());
  }
}

// A file output gets "<file>.manifest.json"; a directory output gets
// "<dir>/manifest.json".
inline fs::path manifest_path_for(const fs::path& out, bool is_dir) {
  if (is_dir) return out / "manifest.json";
  auto p = out;
  p += ".manifest.json";
  return p;
}

class ManifestScope {
 public:
  ManifestScope(fs::path path, std::vector<std::string> argv) : path_(std::move(path)) {
    m_.command_line = std::move(argv);
    m_.started = utc_timestamp();
  }
  RunManifest& manifest() { return m_; }
  void begin() { write_manifest(path_, m_); }
  void finish(int code, const std::string& error = {}) {
    m_.finished = utc_timestamp();
    m_.exit_code = code;
    m_.status = code == 0 ? "ok" : "failed";
    m_.error = error;
    write_manifest(path_, m_);
  }

 private:
  fs::path path_;
  RunManifest m_;
};

struct Context {
  std::vector<std::string> argv;
  std::optional<ManifestScope> manifest;

  ManifestScope& open_manifest(const fs::path& out, bool is_dir) {
    manifest.emplace(manifest_path_for(out, is_dir), argv);
    return *manifest;
  }
};

// ---------------------------------------------------------------- commands

struct SynthArgs {
  std::string out;
  std::size_t recordings = 4;
  std::size_t length = 384;
  std::size_t classes = 3;
  std::size_t channels = 3;
  double noise = 0.1;
  std::optional<std::uint64_t> seed;
};

inline int run_synth(const SynthArgs& a, Context& ctx) {
  const auto seed = resolve_seed(a.seed);
  SyntheticSpec spec;
  spec.classes = a.classes;
  spec.channels = a.channels;
  spec.noise = a.noise;
  if (a.length < spec.window) throw ConfigError("synth: --length must be at least the window length 128");
  auto& ms = ctx.open_manifest(a.out, true);
  ms.manifest().seeds["seed"] = seed;
  ms.manifest().config = {{"recordings_per_class", a.recordings}, {"length", a.length}, {"classes", a.classes},
                          {"channels", a.channels}, {"noise", a.noise}};
  ms.manifest().artifacts = {{"schema", (fs::path(a.out) / "schema.json").string()},
                             {"recordings", (fs::path(a.out) / "recordings").string()}};
  ms.begin();
  write_synthetic_csv(a.out, spec, a.recordings, a.length, seed);
  std::cout << "wrote " << a.classes * a.recordings << " recordings to " << a.out << "\n";
  return kOk;
}

struct PrepareArgs {
  std::string raw;
  std::string schema;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int run_prepare(const PrepareArgs& a, Context& ctx) {
  const fs::path schema_path = a.schema.empty() ? fs::path(a.raw) / "schema.json" : fs::path(a.schema);
  // Either a bare schema or a dataset bundle with a "schema" section.
  const auto doc = read_json_file(schema_path, "schema");
  const auto schema = (doc.contains("schema") ? doc.at("schema") : doc).get<DatasetSchema>();
  schema.validate();
  const auto seed = resolve_seed(a.seed);
  auto& ms = ctx.open_manifest(a.out, false);
  ms.manifest().seeds["split"] = seed;
  ms.manifest().config = {{"schema", schema}, {"raw", a.raw}};
  ms.manifest().artifacts = {{"dataset", a.out}};
  ms.begin();

  SegmentationSummary summary;
  auto ds = build_windows(ingest(a.raw, schema), schema, &summary);
  if (ds.size() < 2) throw DataError("TooFewWindows", a.raw, 0, "only " + std::to_string(ds.size()) + " windows; need at least 2");
  ds = split(std::move(ds), schema.split_ratio, schema.split_mode, seed);
  ds = normalize(std::move(ds), schema.normalization);
  if (!schema.augmentation.empty()) ds = augment(std::move(ds), schema.augmentation, seed);
  write_awd(fs::path(a.out), ds);

  const auto train = ds.class_counts(Split::train), test = ds.class_counts(Split::test);
  std::cout << "recordings: " << summary.recordings << " (skipped " << summary.skipped.size() << ")\n"
            << "windows: " << ds.size() << " (train " << ds.indices(Split::train).size() << ", test "
            << ds.indices(Split::test).size() << ")\n";
  for (std::size_t c = 0; c < ds.num_classes(); ++c)
    std::cout << "  " << schema.label_names[c] << ": train " << train[c] << ", test " << test[c] << "\n";
  std::cout << "wrote " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string model;
  std::string preset = "base";
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<double> weight_decay;
  std::optional<double> clip_norm;
  std::optional<std::string> scheduler;
  std::optional<std::size_t> patience;
  std::optional<std::uint64_t> seed;
  bool resume = false;
};

inline json metrics_document(const MetricsReport& m, const WindowedDataset& ds, const char* split, std::size_t best_epoch) {
  return {{"split", split}, {"best_epoch", best_epoch}, {"label_names", ds.schema.label_names}, {"metrics", m}};
}

inline int run_train(const TrainArgs& a, Context& ctx) {
  const auto ds = read_awd(fs::path(a.data));
  const fs::path out(a.out);

  json bundle = a.config.empty() ? json::object() : read_json_file(a.config, "config");
  TrainConfig cfg = bundle.contains("train") ? bundle.at("train").get<TrainConfig>() : TrainConfig{};
  std::optional<QuartzConfig> model_cfg;
  if (!a.model.empty()) {
    const auto j = read_json_file(a.model, "model config");
    try {
      model_cfg = (j.contains("model") ? j.at("model") : j).get<QuartzConfig>();
    } catch (const json::exception& e) {
      throw ConfigError("model config " + a.model + ": " + e.what());
    }
  } else if (bundle.contains("model")) {
    model_cfg = bundle.at("model").get<QuartzConfig>();
  } else {
    model_cfg = preset(a.preset, ds.channels(), ds.num_classes());
  }

  std::optional<Checkpoint> resumed;
  if (a.resume) {
    resumed = load_checkpoint(out / "last.amck");
    cfg = resumed->train;
    model_cfg = resumed->state.model.config();
  }
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.batch) cfg.batch_size = *a.batch;
  if (a.weight_decay) cfg.weight_decay = *a.weight_decay;
  if (a.clip_norm) cfg.clip_norm = *a.clip_norm;
  if (a.scheduler) cfg.scheduler.kind = json(*a.scheduler).get<SchedulerConfig::Kind>();
  if (a.patience) cfg.early_stop_patience = *a.patience;
  cfg.seed = resumed ? resumed->state.seed : resolve_seed(a.seed, cfg.seed);
  cfg.validate();
  model_cfg->validate();
  if (model_cfg->in_channels != ds.channels() || model_cfg->num_classes != ds.num_classes())
    throw ShapeError("model expects " + std::to_string(model_cfg->in_channels) + " channels / " +
                     std::to_string(model_cfg->num_classes) + " classes; dataset has " +
                     std::to_string(ds.channels()) + " / " + std::to_string(ds.num_classes()));

  auto& ms = ctx.open_manifest(out, true);
  ms.manifest().config = {{"model", *model_cfg}, {"train", cfg}, {"data", a.data}, {"resume", a.resume}};
  ms.manifest().seeds = {{"train", cfg.seed}};
  ms.manifest().artifacts = {{"events", (out / "events.ndjson").string()},
                             {"best_checkpoint", (out / "best.amck").string()},
                             {"last_checkpoint", (out / "last.amck").string()},
                             {"metrics", (out / "metrics.json").string()},
                             {"config", (out / "config.json").string()}};
  ms.begin();
  binio::write_atomically(out / "config.json", [&](std::ostream& o) {
    o << json{{"model", *model_cfg}, {"train", cfg}}.dump(2) << '\n';
  });

  EventLog events(out / "events.ndjson", a.resume);
  TrainOptions opt;
  opt.events = &events;
  opt.checkpoint_dir = out;
  opt.checkpoint_extra = {{"label_names", ds.schema.label_names}, {"dataset", ds.schema.name}};
  TrainState state = resumed ? std::move(resumed->state) : init_state(build(*model_cfg, cfg.seed), cfg.seed);
  const auto result = train(std::move(state), ds, cfg, opt);
  for (const auto& e : result.history)
    std::cout << "epoch " << e.epoch << "  lr " << report::fmt(e.lr, 6) << "  train loss " << report::fmt(e.train.loss)
              << " acc " << report::fmt(e.train.accuracy) << "  test loss " << report::fmt(e.test.loss) << " acc "
              << report::fmt(e.test.accuracy) << "\n";

  // Final metrics come from the best checkpoint on disk.
  const auto best = fs::exists(out / "best.amck") ? load_checkpoint(out / "best.amck").state : result.best;
  const auto metrics = evaluate(best.model, ds, Split::test);
  binio::write_atomically(out / "metrics.json", [&](std::ostream& o) {
    o << metrics_document(metrics, ds, "test", best.best_epoch).dump(2) << '\n';
  });
  std::cout << "best epoch " << best.best_epoch << ": test accuracy " << report::fmt(metrics.accuracy) << ", macro F1 "
            << report::fmt(metrics.macro_f1) << "\n";
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
};

inline int run_evaluate(const EvaluateArgs& a, Context& ctx) {
  const auto ck = load_checkpoint(a.checkpoint);
  const auto ds = read_awd(fs::path(a.data));
  const Split which = a.split == "train" ? Split::train : Split::test;
  const auto& cfg = ck.state.model.config();
  if (cfg.in_channels != ds.channels() || cfg.num_classes != ds.num_classes())
    throw ShapeError("checkpoint expects " + std::to_string(cfg.in_channels) + " channels / " +
                     std::to_string(cfg.num_classes) + " classes; dataset has " + std::to_string(ds.channels()) +
                     " / " + std::to_string(ds.num_classes()));
  if (ds.indices(which).empty()) throw ConfigError("evaluate: the " + a.split + " split is empty");
  if (!a.out.empty()) {
    auto& ms = ctx.open_manifest(a.out, false);
    ms.manifest().config = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"split", a.split}};
    ms.manifest().artifacts = {{"metrics", a.out}};
    ms.begin();
  }
  const auto m = evaluate(ck.state.model, ds, which);
  const auto doc = metrics_document(m, ds, a.split == "train" ? "train" : "test", ck.state.best_epoch);
  std::cout << report::metrics_table({{a.split, m}}, "Split") << "\n"
            << report::confusion_table(m, ds.schema.label_names);
  if (!a.out.empty()) binio::write_atomically(a.out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
  return kOk;
}

struct ReportArgs {
  std::string run;
  std::vector<std::string> studies;
  std::vector<std::string> labels;
  std::string out;
};

inline std::string study_label(const std::vector<tune::TrialRecord>& trials, const fs::path& store) {
  const bool grid = !trials.empty() && std::all_of(trials.begin(), trials.end(),
                                                   [](const auto& r) { return r.kind == "grid"; });
  return (grid ? "Manual (" : "Automatic (") + store.stem().string() + ")";
}

inline int run_report(const ReportArgs& a, Context& ctx) {
  if (a.run.empty() == a.studies.empty()) throw CLI::ValidationError("report", "give exactly one of --run or --study");
  if (!a.run.empty()) {
    const fs::path out = a.out.empty() ? fs::path(a.run) / "report" : fs::path(a.out);
    auto& ms = ctx.open_manifest(out, true);
    ms.manifest().config = {{"run", a.run}};
    ms.manifest().artifacts = {{"report", (out / "report.md").string()},
                               {"loss_plot", (out / "loss.svg").string()},
                               {"accuracy_plot", (out / "accuracy.svg").string()}};
    ms.begin();
    const auto r = report::render_run(a.run, out);
    std::cout << "wrote " << r.markdown.string() << ", " << r.loss_plot.string() << ", " << r.accuracy_plot.string()
              << "\n";
    return kOk;
  }
  if (!a.labels.empty() && a.labels.size() != a.studies.size())
    throw CLI::ValidationError("report", "--label must be given once per --study");
  const fs::path out = a.out.empty() ? fs::path("comparison.md") : fs::path(a.out);
  auto& ms = ctx.open_manifest(out, false);
  ms.manifest().config = {{"studies", a.studies}, {"labels", a.labels}};
  ms.manifest().artifacts = {{"report", out.string()}};
  ms.begin();

  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::ostringstream detail;
  for (std::size_t i = 0; i < a.studies.size(); ++i) {
    const auto trials = tune::read_store(a.studies[i]);
    const auto best = tune::incumbent(trials);
    const auto label = a.labels.empty() ? study_label(trials, a.studies[i]) : a.labels[i];
    if (!best || !trials[*best].metrics)
      throw ConfigError("study " + a.studies[i] + " has no successful trial with metrics");
    rows.emplace_back(label, *trials[*best].metrics);
    detail << "### " << label << "\n\n| Trial | Kind | Status | Validation accuracy | Configuration |\n|---|---|---|---|---|\n";
    for (const auto& r : trials) {
      std::string cfg;
      for (const auto& [k, v] : r.config) cfg += (cfg.empty() ? "" : ", ") + k + "=" + json(v).dump();
      detail << "| " << r.trial << (best && r.trial == *best ? " (best)" : "") << " | " << r.kind << " | "
             << json(r.status).get<std::string>() << " | " << (r.objective ? report::fmt(*r.objective) : "n/a")
             << " | " << cfg << " |\n";
    }
    detail << "\n";
  }
  std::ostringstream md;
  md << "# Tuning comparison\n\nBest trial per study, validation split, macro averages.\n\n"
     << report::metrics_table(rows, "Tuning") << "\n## Trials\n\n" << detail.str();
  report::write_text(out, md.str());
  std::cout << report::metrics_table(rows, "Tuning") << "wrote " << out.string() << "\n";
  return kOk;
}

struct TuneArgs {
  std::string data;
  std::string store;
  std::string space;
  std::size_t trials = 12;
  std::size_t epochs = 15;
  std::optional<std::uint64_t> seed;
  bool fresh = false;
  std::string manual_grid;
  std::vector<double> grid_values;
  std::string export_path;
  double validation_fraction = 0.2;
};

inline int run_tune(const TuneArgs& a, Context& ctx) {
  const auto ds = read_awd(fs::path(a.data));
  const auto space = a.space.empty() ? tune::default_space() : read_json_file(a.space, "space").get<tune::ParamSpace>();
  tune::StudyOptions opt;
  opt.n_trials = a.trials;
  opt.epochs_per_trial = a.epochs;
  opt.seed = resolve_seed(a.seed);
  opt.store = a.store;
  opt.fresh = a.fresh;
  opt.validation_fraction = a.validation_fraction;
  opt.on_trial = [](const tune::TrialRecord& r) {
    std::cout << "trial " << r.trial << " [" << r.kind << "] " << json(r.status).get<std::string>();
    if (r.objective) std::cout << "  validation accuracy " << report::fmt(*r.objective);
    std::cout << "  (" << report::fmt(r.wall_ms / 1000.0, 1) << " s)\n";
  };

  auto& ms = ctx.open_manifest(a.store, false);
  ms.manifest().seeds = {{"study", opt.seed}};
  ms.manifest().config = {{"data", a.data},     {"space", space},       {"trials", a.trials},
                          {"epochs_per_trial", a.epochs}, {"manual_grid", a.manual_grid},
                          {"validation_fraction", a.validation_fraction}};
  ms.manifest().artifacts = {{"store", a.store}};
  if (!a.export_path.empty()) ms.manifest().artifacts["export"] = a.export_path;
  ms.begin();

  tune::StudyResult res;
  if (!a.manual_grid.empty()) {
    auto values = a.grid_values;
    if (values.empty()) values = space.at(a.manual_grid).choices;
    if (values.empty()) throw ConfigError("--manual-grid " + a.manual_grid + " needs --grid-values");
    res = tune::run_grid(ds, space, a.manual_grid, values, opt);
  } else {
    res = tune::run_study(ds, space, opt);
  }
  if (!res.best) throw AnomalyError("no trial completed successfully");
  const auto& b = res.trials[*res.best];
  std::cout << "best trial " << b.trial << ": validation accuracy " << report::fmt(*b.objective) << "\n";
  if (!a.export_path.empty()) {
    tune::export_best(a.store, a.export_path);
    std::cout << "exported " << a.export_path << "\n";
  }
  return kOk;
}

struct ExportArgs {
  std::string store;
  std::string out;
};

inline int run_export(const ExportArgs& a, Context& ctx) {
  auto& ms = ctx.open_manifest(a.out, false);
  ms.manifest().config = {{"store", a.store}};
  ms.manifest().artifacts = {{"config", a.out}};
  ms.begin();
  const auto j = tune::export_best(a.store, a.out);
  std::cout << "exported trial " << j["provenance"]["trial"] << " (objective " << j["provenance"]["objective"]
            << ") to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- dispatch

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Automated 1D-CNN pipeline for sensor time-series classification", "automr"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Context ctx;
  ctx.argv.assign(argv, argv + argc);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic sinusoid CSV dataset with its schema");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--recordings-per-class", synth.recordings, "Recordings per class")->check(CLI::PositiveNumber);
  s->add_option("--length", synth.length, "Samples per recording");
  s->add_option("--classes", synth.classes, "Number of classes")->check(CLI::Range(2, 16));
  s->add_option("--channels", synth.channels, "Number of channels")->check(CLI::Range(1, 64));
  s->add_option("--noise", synth.noise, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);
  s->add_option("--seed", synth.seed, "Seed (falls back to AUTOMR_SEED, then 0)");

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Ingest CSV recordings into a windowed, split, normalized dataset");
  p->add_option("--raw,--input", prep.raw, "Directory of CSV recordings")->required()->check(CLI::ExistingDirectory);
  p->add_option("--schema", prep.schema, "Schema JSON or dataset bundle (default: <raw>/schema.json)");
  p->add_option("--out,--output", prep.out, "Output dataset file (.awd)")->required();
  p->add_option("--seed", prep.seed, "Split/augmentation seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  t->add_option("--data", tr.data, "Prepared dataset (.awd)")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--config", tr.config, "JSON with \"model\" and/or \"train\" sections (e.g. a tuner export)");
  t->add_option("--model", tr.model, "Model config JSON");
  t->add_option("--preset", tr.preset, "Model preset when no model config is given")->check(CLI::IsMember({"base", "large"}));
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay");
  t->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip");
  t->add_option("--scheduler", tr.scheduler, "Learning-rate schedule")->check(CLI::IsMember({"cosine", "plateau", "none"}));
  t->add_option("--early-stop", tr.patience, "Stop after this many epochs without test-accuracy improvement");
  t->add_option("--seed", tr.seed, "Seed (falls back to AUTOMR_SEED, then the config)");
  t->add_flag("--resume", tr.resume, "Continue from <out>/last.amck");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint (.amck)")->required();
  e->add_option("--data", ev.data, "Prepared dataset (.awd)")->required();
  e->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "test"}));
  e->add_option("--out", ev.out, "Write metrics JSON here");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Render tables and plots for a run, or compare tuning studies");
  r->add_option("--run", rep.run, "Run directory from `automr train`");
  r->add_option("--study", rep.studies, "Trial store (repeatable)");
  r->add_option("--label", rep.labels, "Row label per --study");
  r->add_option("--out", rep.out, "Output directory (--run) or markdown file (--study)");

  TuneArgs tu;
  auto* u = app.add_subcommand("tune", "Hyperparameter search on a validation carve-out of the train split");
  u->add_option("--data", tu.data, "Prepared dataset (.awd)")->required();
  u->add_option("--store", tu.store, "Trial store (NDJSON, resumable)")->required();
  u->add_option("--trials", tu.trials, "Total trials")->check(CLI::PositiveNumber);
  u->add_option("--epochs-per-trial", tu.epochs, "Epochs per trial")->check(CLI::PositiveNumber);
  u->add_option("--space", tu.space, "Search space JSON (default: built-in space)");
  u->add_option("--seed", tu.seed, "Study seed (falls back to AUTOMR_SEED, then 0)");
  u->add_flag("--fresh", tu.fresh, "Discard an existing store and start over");
  u->add_option("--manual-grid", tu.manual_grid, "Run a manual grid over this dimension instead of SMBO");
  u->add_option("--grid-values", tu.grid_values, "Values for --manual-grid (default: the dimension's choices)")
      ->delimiter(',');
  u->add_option("--validation-fraction", tu.validation_fraction, "Share of train windows held out")
      ->check(CLI::Range(0.01, 0.99));
  u->add_option("--export", tu.export_path, "Also export the best configuration here");

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "Write the best trial of a store as a train-ready config");
  x->add_option("--store", ex.store, "Trial store")->required();
  x->add_option("--out", ex.out, "Output config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    if (code != 0 && err.get_name() != "CallForHelp") std::cerr << "\n" << app.help();
    return code == 0 ? kOk : kUsage;
  }

  int code = kOk;
  std::string message;
  try {
    if (*s) code = run_synth(synth, ctx);
    else if (*p) code = run_prepare(prep, ctx);
    else if (*t) code = run_train(tr, ctx);
    else if (*e) code = run_evaluate(ev, ctx);
    else if (*r) code = run_report(rep, ctx);
    else if (*u) code = run_tune(tu, ctx);
    else if (*x) code = run_export(ex, ctx);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    code = kUsage;
    message = err.what();
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    code = exit_code_for(err);
    message = err.what();
  }
  if (ctx.manifest) {
    try {
      ctx.manifest->finish(code, message);
    } catch (const std::exception& err) {
      std::cerr << "error: cannot finalize run manifest: " << err.what() << "\n";
      if (code == kOk) code = kRuntime;
    }
  }
  return code;
}

}  // namespace automr::cli
