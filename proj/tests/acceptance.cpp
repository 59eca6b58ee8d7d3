// Acceptance checks, one line per criterion:
//   PASS|FAIL|SKIP  <n>  <title>  <measured values>
// Usage: acceptance [criterion ...]   (default: all)
// Exit status is 1 when any criterion fails.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "automr/automr.hpp"
#include "cli.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace automr;
using namespace automr::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

Outcome judge(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

class Stopwatch {
 public:
  double wall_s() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_).count(); }
  double cpu_s() const { return static_cast<double>(std::clock() - cpu_) / CLOCKS_PER_SEC; }

 private:
  std::chrono::steady_clock::time_point wall_ = std::chrono::steady_clock::now();
  std::clock_t cpu_ = std::clock();
};

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("automr_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const fs::path kSource(AUTOMR_SOURCE_DIR);

// Runs the CLI in-process; output is kept and only shown when the command
// fails.
int cli_run(std::vector<std::string> args, std::string* log = nullptr) {
  args.insert(args.begin(), "automr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(out.rdbuf());
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (log) *log += out.str();
  if (code != 0) {
    std::cerr << "  command failed (" << code << "):";
    for (const auto& a : args) std::cerr << ' ' << a;
    std::cerr << "\n" << out.str();
  }
  return code;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// ------------------------------------------------------------- criterion 1

Outcome gradient_correctness() {
  Stopwatch clock;
  Rng rng(9001);
  auto tensor = [&](const Shape& s) { return random_tensor(s, rng); };
  // ReLU inputs are kept 0.01 away from the kink.
  auto off_kink = [&](const Shape& s) {
    Tensor<double> t(s);
    for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1 : 1) * (0.01 + std::abs(rng.normal()));
    return t;
  };
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, const GradCheck& g) { worst[name] = std::max(worst[name], g.max_rel); };

  for (int i = 0; i < 40; ++i) {
    for (int m = 0; m < 3; ++m) {
      ConvSpec s;
      s.mode = static_cast<ConvMode>(m);
      s.in_channels = 1 + rng.below(4);
      s.out_channels = s.mode == ConvMode::depthwise ? s.in_channels : 1 + rng.below(4);
      s.kernel = s.mode == ConvMode::pointwise ? 1 : 1 + rng.below(5);
      s.dilation = s.mode == ConvMode::pointwise ? 1 : 1 + rng.below(3);
      s.stride = 1 + rng.below(2);
      s.padding = rng.below(3);
      std::size_t L = 1 + rng.below(10);
      while (s.output_length(L) < 1) ++L;
      std::vector<Tensor<double>> in = {tensor({1 + rng.below(2), s.in_channels, L}), tensor(s.weight_shape()),
                                        tensor({s.out_channels})};
      const char* names[] = {"conv1d[standard]", "conv1d[depthwise]", "conv1d[pointwise]"};
      record(names[m], check_gradients(in, [&](Tape& t, const std::vector<TapeId>& id) {
               return ag::conv1d<double>(t, id[0], id[1], id[2], s);
             }, 100 + i));
    }
    const std::size_t B = 1 + rng.below(3), C = 1 + rng.below(4), L = 2 + rng.below(6);
    for (Mode mode : {Mode::train, Mode::eval}) {
      BatchNormState<double> base(C);
      for (std::size_t c = 0; c < C; ++c) {
        base.running_mean[c] = rng.normal();
        base.running_var[c] = 0.5 + rng.uniform();
      }
      record("batchnorm", check_gradients({spread_channels({B, C, L}, rng), tensor({C}), tensor({C})},
                                          [&](Tape& t, const std::vector<TapeId>& id) {
                                            auto state = base;
                                            return ag::batchnorm(t, id[0], id[1], id[2], state, mode);
                                          },
                                          200 + i));
    }
    const Shape s{B, C, L};
    record("relu", check_gradients({off_kink(s)}, [](Tape& t, const std::vector<TapeId>& id) { return ag::relu(t, id[0]); },
                                   300 + i));
    const double rate = 0.1 * static_cast<double>(rng.below(6));
    const DropoutKey key{static_cast<std::uint64_t>(i), 1, 2};
    record("dropout", check_gradients({tensor(s)}, [&](Tape& t, const std::vector<TapeId>& id) {
             return ag::dropout(t, id[0], rate, key, Mode::train);
           }, 400 + i));
    record("add", check_gradients({tensor(s), tensor(s)},
                                  [](Tape& t, const std::vector<TapeId>& id) { return ag::add(t, id[0], id[1]); }, 500 + i));
    record("global_avg_pool", check_gradients({tensor(s)}, [](Tape& t, const std::vector<TapeId>& id) {
             return ag::global_avg_pool(t, id[0]);
           }, 600 + i));
    const std::size_t F = 1 + rng.below(6), K = 2 + rng.below(4);
    record("linear", check_gradients({tensor({B, F}), tensor({K, F}), tensor({K})},
                                     [](Tape& t, const std::vector<TapeId>& id) { return ag::linear(t, id[0], id[1], id[2]); },
                                     700 + i));
    std::vector<int> y(B);
    for (auto& v : y) v = static_cast<int>(rng.below(K));
    record("cross_entropy", check_gradients({tensor({B, K})}, [&](Tape& t, const std::vector<TapeId>& id) {
             return ag::cross_entropy(t, id[0], y);
           }, 800 + i));
  }
  double prim = 0.0;
  std::string per;
  for (const auto& [name, e] : worst) {
    prim = std::max(prim, e);
    per += " " + name + "=" + num(e, 2);
  }

  auto model = build<double>(tiny_config(), 7);
  jitter_parameters(model, 99);
  Rng xr(17);
  const auto x = random_tensor({4, 2, 16}, xr);
  const auto full = check_model_gradients(model, x, {0, 1, 2, 1});
  const double secs = clock.cpu_s();
  return judge(prim < 1e-5 && full.max_rel < 1e-4 && full.checked == model.parameter_count() && secs < 60,
               "primitives max rel " + num(prim, 3) + " (< 1e-05), full model " + num(full.max_rel, 3) +
                   " over " + std::to_string(full.checked) + " parameters (< 1e-04), " + num(secs, 3) +
                   " s CPU (< 60);" + per);
}

// ------------------------------------------------------------- criterion 2

Outcome windowing_oracle() {
  Rng rng(4242);
  std::vector<std::array<std::size_t, 3>> cases = {{5, 8, 4}, {8, 8, 8}, {20, 5, 1}, {3, 3, 1}};
  while (cases.size() < 200) {
    const std::size_t W = 1 + rng.below(40), S = 1 + rng.below(W), L = rng.below(200);
    cases.push_back({L, W, S});
  }
  std::size_t ok = 0, short_cases = 0, full_stride = 0, unit_stride = 0;
  for (const auto& [L, W, S] : cases) {
    short_cases += L < W;
    full_stride += S == W;
    unit_stride += S == 1;
    const auto expect = oracle::enumerate_offsets(L, W, S);
    const auto wins = segment(oracle::ramp("r", 2, L, 3), W, S, Labeling::majority, 3);
    bool same = window_offsets(L, W, S) == expect && wins.size() == expect.size();
    for (std::size_t k = 0; same && k < wins.size(); ++k) {
      same = wins[k].offset == expect[k];
      for (std::size_t c = 0; same && c < 2; ++c)
        for (std::size_t t = 0; same && t < W; ++t) same = wins[k].data[c * W + t] == static_cast<float>(c * 1000 + expect[k] + t);
    }
    ok += same;
  }
  return judge(ok == cases.size() && short_cases && full_stride && unit_stride,
               std::to_string(ok) + "/" + std::to_string(cases.size()) + " triples exact (L<W: " +
                   std::to_string(short_cases) + ", S=W: " + std::to_string(full_stride) +
                   ", S=1: " + std::to_string(unit_stride) + ")");
}

// ------------------------------------------------------------- criterion 3

Outcome published_window_configs() {
  struct Case {
    const char* bundle;
    std::size_t W, S;
  };
  const Case cases[] = {{"mhealth", 25, 12}, {"uci_har", 128, 64}, {"opportunity", 15, 8}};
  std::string detail;
  bool all = true;
  for (const auto& c : cases) {
    const auto schema = read_json(kSource / "configs" / (std::string(c.bundle) + ".json")).at("schema").get<DatasetSchema>();
    const bool params = schema.window_length == c.W && schema.window_stride == c.S;
    const std::size_t lengths[] = {c.W - 1, c.W, c.W + 1, 2 * c.W + 3, 31, 1000, 4096};
    std::vector<LabeledRecording> recs;
    std::vector<Provenance> expect;
    for (std::size_t i = 0; i < std::size(lengths); ++i) {
      recs.push_back(oracle::ramp("rec" + std::to_string(i), schema.num_channels(), lengths[i], schema.num_classes(), 5));
      for (auto o : oracle::enumerate_offsets(lengths[i], c.W, c.S)) expect.push_back({static_cast<std::uint32_t>(i), o});
    }
    const auto ds = build_windows(std::move(recs), schema);
    const bool same = ds.provenance == expect && ds.windows.shape() == Shape{expect.size(), schema.num_channels(), c.W};
    all &= params && same;
    detail += std::string(detail.empty() ? "" : ", ") + c.bundle + " W=" + std::to_string(schema.window_length) +
              " S=" + std::to_string(schema.window_stride) + " C=" + std::to_string(schema.num_channels()) + " " +
              std::to_string(ds.size()) + " windows " + (same ? "exact" : "MISMATCH");
  }
  return judge(all, detail);
}

// ------------------------------------------------------------- criterion 4

Outcome synthetic_convergence() {
  std::size_t reached = 0;
  double worst_cpu = 0.0, min_centroid = 1.0;
  std::string accs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = make_synthetic(SyntheticSpec{}, seed);
    min_centroid = std::min(min_centroid, oracle::nearest_centroid_accuracy(ds));
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = seed;
    Stopwatch clock;
    const auto r = train(build(preset("base", ds.channels(), ds.num_classes()), seed), ds, cfg);
    worst_cpu = std::max(worst_cpu, clock.cpu_s());
    double best = 0.0;
    std::size_t first = 0;
    for (const auto& e : r.history) {
      best = std::max(best, e.test.accuracy);
      if (!first && e.test.accuracy >= 0.95) first = e.epoch;
    }
    reached += best >= 0.95;
    accs += std::string(accs.empty() ? "" : ", ") + num(best, 4) + (first ? "@" + std::to_string(first) : "");
  }
  return judge(min_centroid >= 0.9 && reached >= 4 && worst_cpu < 300,
               std::to_string(reached) + "/5 seeds reach 0.95 (need 4); best test accuracy [" + accs +
                   "]; nearest-centroid min " + num(min_centroid) + " (>= 0.90); slowest run " + num(worst_cpu, 3) +
                   " s CPU (< 300)");
}

// ------------------------------------------------------------- criterion 5

Outcome metrics_oracle() {
  Rng rng(77);
  std::size_t exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + rng.below(10), N = rng.below(1001);
    const double hit = rng.uniform();
    std::vector<int> y(N), p(N);
    for (std::size_t i = 0; i < N; ++i) {
      y[i] = static_cast<int>(rng.below(C));
      p[i] = rng.uniform() < hit ? y[i] : static_cast<int>(rng.below(C));
    }
    const auto m = compute_metrics(y, p, C);
    const auto o = oracle::count_metrics(y, p, C);
    bool same = m.confusion == o.confusion && m.accuracy == o.accuracy && m.macro_precision == o.macro_p &&
                m.macro_recall == o.macro_r && m.macro_f1 == o.macro_f1;
    for (std::size_t k = 0; k < C; ++k)
      same = same && m.per_class[k].precision == o.precision[k] && m.per_class[k].recall == o.recall[k] &&
             m.per_class[k].f1 == o.f1[k] && m.per_class[k].support == o.support[k];
    exact += same;
  }
  return judge(exact == 100, std::to_string(exact) + "/100 random cases identical (C <= 10, N <= 1000)");
}

// ------------------------------------------------------------- criterion 6

Outcome checkpoint_determinism() {
  SyntheticSpec spec;
  spec.train_per_class = 40;
  spec.test_per_class = 10;
  const auto ds = make_synthetic(spec, 3);
  QuartzConfig mc = preset("base", ds.channels(), ds.num_classes());
  mc.blocks = {{1, 16, 5, 1, true}, {1, 32, 7, 1, true}};
  mc.head_channels = 32;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 5;
  const auto model = build(mc, 5);

  const auto full = train(model, ds, cfg);
  const auto dir = scratch("resume");
  TrainOptions first;
  first.until_epoch = 5;
  first.checkpoint_dir = dir;
  train(model, ds, cfg, first);
  const auto ck = load_checkpoint(dir / "last.amck");
  const auto rest = train(ck.state, ds, ck.train);
  fs::remove_all(dir);

  const double a = full.history.back().train.loss, b = rest.history.back().train.loss;
  const double ta = full.history.back().test.loss, tb = rest.history.back().test.loss;
  char bits[96];
  std::snprintf(bits, sizeof bits, "%.17g vs %.17g", a, b);
  return judge(ck.state.epoch == 5 && a == b && ta == tb && rest.last.step == full.last.step,
               std::string("final train loss ") + bits + ", test loss " + (ta == tb ? "identical" : "differs") +
                   ", resumed from epoch " + std::to_string(ck.state.epoch));
}

// ------------------------------------------------------------- criterion 7

Outcome tuner_efficacy() {
  Stopwatch clock;
  const auto space = oracle::log_quadratic_space();
  const auto grid = oracle::log_quadratic_grid();
  const double top5 = grid[49];  // 50th best of 1000
  const double optimum = 0.0;
  constexpr std::size_t kBudget = 24, kReplicates = 25;
  std::size_t in_top = 0, beats_random = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto h = tune::optimize(space, oracle::log_quadratic, kBudget, seed);
    double best = -INFINITY;
    for (const auto& r : h) best = std::max(best, *r.objective);
    // Median final regret of equal-budget random search, over replicates.
    std::vector<double> regrets;
    for (std::uint64_t k = 0; k < kReplicates; ++k)
      regrets.push_back(optimum - oracle::random_search_best(space, oracle::log_quadratic, kBudget, hash_key({seed, 0x7a2du, k})));
    std::sort(regrets.begin(), regrets.end());
    const double median = regrets[kReplicates / 2], regret = optimum - best;
    in_top += best >= top5;
    beats_random += regret <= median;
    rows += (rows.empty() ? "" : " ") + std::to_string(seed) + ":" + num(regret, 2) + "/" + num(median, 2);
  }
  const double secs = clock.wall_s();
  return judge(in_top >= 8 && beats_random >= 7 && secs < 120,
               "top-5% of grid in " + std::to_string(in_top) + "/10 seeds (need 8); regret <= median random-search "
               "regret in " + std::to_string(beats_random) + "/10 seeds (need 7); " + num(secs, 3) +
                   " s (< 120); seed:smbo/random-median regret [" + rows + "]");
}

// ------------------------------------------------------------- criterion 8

Outcome end_to_end_smoke() {
  const auto dir = scratch("smoke");
  const auto p = [&](const char* name) { return (dir / name).string(); };
  Stopwatch clock;
  const std::vector<std::vector<std::string>> chain = {
      {"prepare", "--raw", (kSource / "data" / "synthetic").string(), "--schema", (kSource / "configs" / "synthetic.json").string(),
       "--out", p("ds.awd"), "--seed", "1"},
      {"tune", "--data", p("ds.awd"), "--store", p("study.ndjson"), "--trials", "2", "--epochs-per-trial", "2"},
      {"export", "--store", p("study.ndjson"), "--out", p("best.json")},
      {"train", "--data", p("ds.awd"), "--config", p("best.json"), "--epochs", "3", "--out", p("run")},
      {"evaluate", "--checkpoint", p("run/best.amck"), "--data", p("ds.awd"), "--out", p("eval.json")},
      {"report", "--run", p("run")},
  };
  std::string steps;
  bool ok = true;
  for (const auto& args : chain) {
    const int code = cli_run(args);
    steps += (steps.empty() ? "" : " -> ") + args[0] + "=" + std::to_string(code);
    ok &= code == 0;
    if (!ok) break;
  }
  const double secs = clock.wall_s();
  ok = ok && fs::exists(dir / "run" / "report" / "report.md") && fs::exists(dir / "run" / "report" / "loss.svg");
  fs::remove_all(dir);
  return judge(ok && secs < 120, steps + " in " + num(secs, 3) + " s (< 120)");
}

// ------------------------------------------------------------- criterion 9

Outcome real_data() {
  const char* root = std::getenv("AUTOMR_UCI_HAR_DIR");
  if (!root || !*root) return {Verdict::skip, "set AUTOMR_UCI_HAR_DIR to a UCI-HAR CSV directory to run"};
  const auto dir = scratch("uci_har");
  const auto p = [&](const char* name) { return (dir / name).string(); };
  Stopwatch clock;
  const std::vector<std::vector<std::string>> chain = {
      {"prepare", "--raw", root, "--schema", (kSource / "configs" / "uci_har.json").string(), "--out", p("ds.awd")},
      {"tune", "--data", p("ds.awd"), "--store", p("study.ndjson"), "--trials", "12", "--epochs-per-trial", "15",
       "--export", p("best.json")},
      {"train", "--data", p("ds.awd"), "--config", p("best.json"), "--out", p("run")},
  };
  for (const auto& args : chain)
    if (cli_run(args) != 0) return {Verdict::fail, args[0] + " failed"};
  const double acc = read_json(dir / "run" / "metrics.json").at("metrics").at("accuracy").get<double>();
  const double hours = clock.wall_s() / 3600.0;
  return judge(acc >= 0.90 && hours <= 2.0, "test accuracy " + num(acc) + " (>= 0.90) in " + num(hours, 3) + " h (<= 2)");
}

// ------------------------------------------------------------ criterion 10

Outcome ablation_parity() {
  const auto dir = scratch("ablation");
  const auto p = [&](const char* name) { return (dir / name).string(); };
  const std::vector<std::vector<std::string>> chain = {
      {"prepare", "--raw", (kSource / "data" / "synthetic").string(), "--out", p("ds.awd"), "--seed", "2"},
      {"tune", "--data", p("ds.awd"), "--store", p("manual.ndjson"), "--manual-grid", "batch_size", "--grid-values",
       "32,64,128,256", "--epochs-per-trial", "3"},
      {"tune", "--data", p("ds.awd"), "--store", p("auto.ndjson"), "--trials", "4", "--epochs-per-trial", "3"},
      {"report", "--study", p("auto.ndjson"), "--label", "synthetic-auto", "--study", p("manual.ndjson"), "--label",
       "synthetic-manual", "--out", p("comparison.md")},
  };
  for (const auto& args : chain)
    if (cli_run(args) != 0) return {Verdict::fail, args[0] + " failed"};
  const auto manual = tune::read_store(dir / "manual.ndjson");
  std::vector<double> batches;
  for (const auto& r : manual) batches.push_back(r.config.at("batch_size"));
  const auto autos = tune::read_store(dir / "auto.ndjson");
  std::ifstream in(dir / "comparison.md");
  const std::string md{std::istreambuf_iterator<char>(in), {}};
  const bool layout = md.find("| Tuning | Accuracy | Precision | Recall | F1-score |") != std::string::npos &&
                      md.find("| synthetic-auto | ") != std::string::npos &&
                      md.find("| synthetic-manual | ") != std::string::npos;
  fs::remove_all(dir);
  const bool grid_ok = batches == std::vector<double>{32, 64, 128, 256};
  return judge(grid_ok && autos.size() == 4 && layout,
               "manual grid " + std::to_string(manual.size()) + " trials over batch sizes " + (grid_ok ? "{32,64,128,256}" : "(wrong)") +
                   ", auto study " + std::to_string(autos.size()) + " trials, comparison table " +
                   (layout ? "has the four-metric layout" : "MISSING the four-metric layout"));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"windowing oracle", windowing_oracle},
      {"published window configurations", published_window_configs},
      {"synthetic convergence", synthetic_convergence},
      {"metrics oracle", metrics_oracle},
      {"checkpoint determinism", checkpoint_determinism},
      {"tuner efficacy", tuner_efficacy},
      {"end-to-end smoke", end_to_end_smoke},
      {"real-data integration (optional)", real_data},
      {"ablation harness parity", ablation_parity},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoul(argv[i]));
  if (selected.empty())
    for (std::size_t i = 1; i <= criteria.size(); ++i) selected.push_back(i);

  log::WarningCapture quiet;
  int failures = 0;
  for (auto n : selected) {
    if (n < 1 || n > criteria.size()) {
      std::cerr << "no criterion " << n << "\n";
      return 2;
    }
    const auto& [title, fn] = criteria[n - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("threw: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::fail;
    std::cout << tag << "  " << n << "  " << title << ": " << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
