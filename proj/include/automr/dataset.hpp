#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "automr/csv.hpp"
#include "automr/error.hpp"
#include "automr/log.hpp"
#include "automr/reduce.hpp"
#include "automr/rng.hpp"
#include "automr/schema.hpp"
#include "automr/tensor.hpp"

namespace automr {

// One continuous recording: [C, L] samples with a per-sample label stream.
struct LabeledRecording {
  std::string id;
  Tensor<float> data;
  std::vector<int> labels;

  std::size_t length() const { return data.empty() ? 0 : data.dim(1); }
};

enum class Split : std::uint8_t { train = 0, test = 1 };

struct Provenance {
  std::uint32_t recording = 0;
  std::uint64_t start = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// Per-channel affine map applied by normalize(): x' = (x - offset) * scale.
struct NormalizationState {
  bool applied = false;
  Normalization mode = Normalization::none;
  std::vector<double> offset;
  std::vector<double> scale;
};

// Canonical post-processing store: windows [N, C, W] with labels, split
// tags and provenance.
struct WindowedDataset {
  DatasetSchema schema;
  Tensor<float> windows;
  std::vector<int> labels;
  std::vector<Split> split;
  std::vector<std::string> recordings;
  std::vector<Provenance> provenance;
  NormalizationState normalization;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t channels() const { return windows.empty() ? schema.num_channels() : windows.dim(1); }
  std::size_t window_length() const { return windows.empty() ? schema.window_length : windows.dim(2); }
  std::size_t num_classes() const noexcept { return schema.num_classes(); }
  std::size_t window_stride_elems() const { return channels() * window_length(); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  std::span<const float> window(std::size_t i) const {
    return {windows.data() + i * window_stride_elems(), window_stride_elems()};
  }

  // Stacks windows `idx` into a [n, C, W] batch.
  template <class T = float>
  Tensor<T> gather(std::span<const std::size_t> idx) const {
    const std::size_t per = window_stride_elems();
    Tensor<T> out({idx.size(), channels(), window_length()});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const float* src = windows.data() + idx[k] * per;
      std::transform(src, src + per, out.data() + k * per, [](float v) { return static_cast<T>(v); });
    }
    return out;
  }

  std::vector<int> gather_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = labels[idx[k]];
    return out;
  }

  // Windows `idx` as a new dataset (same schema and recording table).
  WindowedDataset subset(std::span<const std::size_t> idx) const {
    WindowedDataset d;
    d.schema = schema;
    d.recordings = recordings;
    d.normalization = normalization;
    d.windows = gather(idx);
    d.labels = gather_labels(idx);
    for (auto i : idx) {
      d.split.push_back(split[i]);
      d.provenance.push_back(provenance[i]);
    }
    return d;
  }

  std::vector<std::size_t> class_counts(Split s) const {
    std::vector<std::size_t> c(num_classes(), 0);
    for (std::size_t i = 0; i < size(); ++i)
      if (split[i] == s) ++c.at(static_cast<std::size_t>(labels[i]));
    return c;
  }

  void validate() const {
    const std::size_t n = labels.size();
    if (split.size() != n || provenance.size() != n)
      throw FormatError("dataset: label/split/provenance lengths disagree");
    if (n > 0 && windows.shape() != Shape{n, schema.num_channels(), schema.window_length})
      throw FormatError("dataset: windows shape " + shape_str(windows.shape()) + " does not match schema");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes())
        throw FormatError("dataset: label " + std::to_string(labels[i]) + " of window " + std::to_string(i) +
                          " out of range");
      if (provenance[i].recording >= recordings.size())
        throw FormatError("dataset: provenance of window " + std::to_string(i) + " references unknown recording");
    }
  }
};

// ------------------------------------------------------------------ ingest

namespace detail {

inline std::vector<std::filesystem::path> list_csv(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("input directory not found: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

// Parses one CSV recording. The header must name every schema channel; the
// optional `label` column gives per-sample labels, otherwise
// `recording_label` (the enclosing directory name) labels the whole file.
inline LabeledRecording parse_recording(std::istream& in, const std::string& file, const std::string& id,
                                        const DatasetSchema& schema,
                                        const std::optional<std::string>& recording_label) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw DataError("EmptyFile", file, 0, "file is empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

  std::vector<std::size_t> channel_col;
  std::vector<std::string> missing;
  for (const auto& c : schema.channels) {
    auto it = col.find(c.name);
    if (it == col.end())
      missing.push_back(c.name);
    else
      channel_col.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw DataError("ChannelMismatch", file, 1,
                    "header provides " + std::to_string(channel_col.size()) + " of " +
                        std::to_string(schema.num_channels()) + " schema channels; missing: " + names);
  }
  const auto label_it = col.find("label");
  int fixed_label = -1;
  if (label_it == col.end()) {
    if (!recording_label)
      throw DataError("MissingLabel", file, 1, "no 'label' column and the file is not inside a label directory");
    fixed_label = schema.label_id(*recording_label);
    if (fixed_label < 0)
      throw DataError("UnknownLabel", file, 0, "directory label '" + *recording_label + "' is not in the schema");
  }

  const std::size_t C = schema.num_channels();
  std::vector<std::vector<float>> columns(C);
  std::vector<int> labels;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::size_t line = reader.line();
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size())
      throw DataError("MalformedRow", file, line,
                      "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
    for (std::size_t c = 0; c < C; ++c) {
      const std::string& cell = row[channel_col[c]];
      float v;
      if (!parse_float(cell, v))
        throw DataError("NonNumeric", file, line,
                        "non-numeric value '" + cell + "' in channel '" + schema.channels[c].name + "'");
      columns[c].push_back(v);
    }
    if (fixed_label >= 0) {
      labels.push_back(fixed_label);
    } else {
      const std::string& name = row[label_it->second];
      const int id_ = schema.label_id(name);
      if (id_ < 0) throw DataError("UnknownLabel", file, line, "unknown label '" + name + "'");
      labels.push_back(id_);
    }
  }
  const std::size_t L = labels.size();
  LabeledRecording rec{id, Tensor<float>({C, L}), std::move(labels)};
  for (std::size_t c = 0; c < C; ++c) std::copy(columns[c].begin(), columns[c].end(), rec.data.data() + c * L);
  return rec;
}

// Reads every *.csv under `root` (sorted by path). Recording ids are the
// paths relative to `root` without extension.
inline std::vector<LabeledRecording> ingest(const std::filesystem::path& root, const DatasetSchema& schema) {
  schema.validate();
  std::vector<LabeledRecording> out;
  for (const auto& file : detail::list_csv(root)) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    auto rel = std::filesystem::relative(file, root);
    std::optional<std::string> dir_label;
    if (rel.has_parent_path() && !rel.parent_path().empty()) dir_label = rel.parent_path().filename().string();
    out.push_back(parse_recording(in, file.string(), rel.replace_extension().generic_string(), schema, dir_label));
  }
  return out;
}

// ----------------------------------------------------------------- segment

struct Window {
  std::size_t offset = 0;
  int label = 0;
  Tensor<float> data;  // [C, W]
};

// Offsets 0, S, 2S, ... with offset + W <= L.
inline std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0 || stride > window)
    throw ConfigError("segment: need window >= 1 and 1 <= stride <= window");
  std::vector<std::size_t> out;
  if (length < window) return out;
  for (std::size_t o = 0; o + window <= length; o += stride) out.push_back(o);
  return out;
}

inline int window_label(std::span<const int> labels, Labeling policy, std::size_t num_classes) {
  if (policy == Labeling::last_sample) return labels.back();
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  // max_element returns the first maximum: ties go to the lowest class id
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

// Cuts `rec` into windows. Recordings shorter than `window` yield nothing.
inline std::vector<Window> segment(const LabeledRecording& rec, std::size_t window, std::size_t stride,
                                   Labeling labeling, std::size_t num_classes) {
  const std::size_t L = rec.length();
  const std::size_t C = rec.data.empty() ? 0 : rec.data.dim(0);
  std::vector<Window> out;
  for (std::size_t o : window_offsets(L, window, stride)) {
    Window w{o, window_label(std::span(rec.labels).subspan(o, window), labeling, num_classes),
             Tensor<float>({C, window})};
    for (std::size_t c = 0; c < C; ++c)
      std::copy_n(rec.data.data() + c * L + o, window, w.data.data() + c * window);
    out.push_back(std::move(w));
  }
  return out;
}

struct SegmentationSummary {
  std::size_t recordings = 0;
  std::size_t windows = 0;
  std::vector<std::string> skipped;  // recordings shorter than the window
};

// Segments every recording and stacks the result in canonical order
// (recording id, then offset). All windows start in the train split.
inline WindowedDataset build_windows(std::vector<LabeledRecording> recs, const DatasetSchema& schema,
                                     SegmentationSummary* summary = nullptr) {
  schema.validate();
  std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  WindowedDataset ds;
  ds.schema = schema;
  SegmentationSummary sum;
  sum.recordings = recs.size();
  std::vector<float> data;
  const std::size_t C = schema.num_channels(), W = schema.window_length;
  for (const auto& r : recs) {
    if (r.data.empty() || r.data.dim(0) != C)
      throw DataError("ChannelMismatch", r.id, 0, "recording does not have " + std::to_string(C) + " channels");
    const auto rec_index = static_cast<std::uint32_t>(ds.recordings.size());
    ds.recordings.push_back(r.id);
    if (r.length() < W) {
      sum.skipped.push_back(r.id);
      log::warn("recording '" + r.id + "' has " + std::to_string(r.length()) + " samples, fewer than window " +
                std::to_string(W) + "; skipped");
      continue;
    }
    for (auto& w : segment(r, W, schema.window_stride, schema.labeling, schema.num_classes())) {
      data.insert(data.end(), w.data.values().begin(), w.data.values().end());
      ds.labels.push_back(w.label);
      ds.split.push_back(Split::train);
      ds.provenance.push_back({rec_index, w.offset});
    }
  }
  sum.windows = ds.labels.size();
  ds.windows = Tensor<float>({ds.labels.size(), C, W}, std::move(data));
  if (summary) *summary = sum;
  return ds;
}

// ------------------------------------------------------------------- split

// Assigns train/test tags. by-window shuffles windows and puts
// round(ratio * N) in train; by-recording keeps every recording on one side.
inline WindowedDataset split(WindowedDataset ds, double ratio, SplitMode mode, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  const std::size_t n = ds.size();
  Rng rng(hash_key({seed, 0x5e11ULL}));
  if (mode == SplitMode::by_window) {
    if (n < 2) throw ConfigError("split: need at least 2 windows to produce both splits");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    for (std::size_t k = 0; k < n; ++k) ds.split[order[k]] = k < n_train ? Split::train : Split::test;
    return ds;
  }

  std::vector<std::size_t> count(ds.recordings.size(), 0);
  for (const auto& p : ds.provenance) ++count[p.recording];
  std::vector<std::uint32_t> recs;
  for (std::uint32_t r = 0; r < count.size(); ++r)
    if (count[r] > 0) recs.push_back(r);
  if (recs.size() < 2)
    throw ConfigError("split: by-recording mode cannot produce both splits from " + std::to_string(recs.size()) +
                      " recording(s)");
  rng.shuffle(recs.begin(), recs.end());
  const double target = ratio * static_cast<double>(n);
  std::vector<bool> in_train(ds.recordings.size(), false);
  std::size_t train = 0;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const std::size_t c = count[recs[k]];
    const bool must_leave_test = k + 1 == recs.size() && train > 0;
    const bool closer = std::abs(static_cast<double>(train + c) - target) <= std::abs(static_cast<double>(train) - target);
    if ((train == 0 || closer) && !must_leave_test) {
      in_train[recs[k]] = true;
      train += c;
    }
  }
  if (train == n) {
    // every recording landed in train; move the last one back
    in_train[recs.back()] = false;
    train -= count[recs.back()];
  }
  for (std::size_t i = 0; i < n; ++i) ds.split[i] = in_train[ds.provenance[i].recording] ? Split::train : Split::test;
  const double achieved = static_cast<double>(train) / static_cast<double>(n);
  if (std::abs(achieved - ratio) > 0.1)
    log::warn("by-recording split achieved train ratio " + std::to_string(achieved) + " (requested " +
              std::to_string(ratio) + "); too few recordings for a closer split");
  return ds;
}

// ---------------------------------------------------------------- normalize

inline constexpr double kNormalizeEps = 1e-8;

// Fits per-channel statistics on the train split and applies them to every
// window.
inline WindowedDataset normalize(WindowedDataset ds, Normalization mode) {
  if (ds.normalization.applied) throw ConfigError("dataset is already normalized");
  const std::size_t C = ds.channels(), W = ds.window_length();
  const auto train = ds.indices(Split::train);
  std::vector<double> offset(C, 0.0), scale(C, 1.0);
  if (mode != Normalization::none) {
    if (train.empty()) throw ConfigError("normalize: train split is empty");
    for (std::size_t c = 0; c < C; ++c) {
      double sum = 0.0, lo = INFINITY, hi = -INFINITY;
      for (auto i : train) {
        const float* x = ds.windows.data() + (i * C + c) * W;
        sum += reduce::sum(x, W);
        for (std::size_t t = 0; t < W; ++t) {
          lo = std::min(lo, static_cast<double>(x[t]));
          hi = std::max(hi, static_cast<double>(x[t]));
        }
      }
      const double cnt = static_cast<double>(train.size() * W);
      const double mean = sum / cnt;
      double ss = 0.0;
      for (auto i : train) ss += reduce::centered_sum_squares(ds.windows.data() + (i * C + c) * W, W, mean);
      const double sd = std::sqrt(ss / cnt);
      const double spread = mode == Normalization::zscore ? sd : hi - lo;
      if (spread == 0.0) {
        log::warn("channel '" + ds.schema.channels.at(c).name + "' is constant on the train split; normalized to zero");
        offset[c] = 0.0;
        scale[c] = 0.0;
      } else if (mode == Normalization::zscore) {
        offset[c] = mean;
        scale[c] = 1.0 / (sd + kNormalizeEps);
      } else {
        offset[c] = lo;
        scale[c] = 1.0 / spread;
      }
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t c = 0; c < C; ++c) {
        float* x = ds.windows.data() + (i * C + c) * W;
        for (std::size_t t = 0; t < W; ++t) x[t] = static_cast<float>((x[t] - offset[c]) * scale[c]);
      }
  }
  ds.normalization = {true, mode, std::move(offset), std::move(scale)};
  return ds;
}

// ------------------------------------------------------------------ augment

namespace detail {

inline std::vector<double> channel_std(const WindowedDataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t C = ds.channels(), W = ds.window_length();
  std::vector<double> sd(C, 0.0);
  if (idx.empty()) return sd;
  const double cnt = static_cast<double>(idx.size() * W);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (auto i : idx) sum += reduce::sum(ds.windows.data() + (i * C + c) * W, W);
    const double mean = sum / cnt;
    double ss = 0.0;
    for (auto i : idx) ss += reduce::centered_sum_squares(ds.windows.data() + (i * C + c) * W, W, mean);
    sd[c] = std::sqrt(ss / cnt);
  }
  return sd;
}

}  // namespace detail

// Train-split augmentation. jitter adds N(0, (m * sigma_c)^2) noise, scale
// multiplies a window by U[1-m, 1+m], oversample appends jittered copies of
// minority-class windows until each class holds >= ratio * (largest class).
inline WindowedDataset augment(WindowedDataset ds, std::span<const AugmentationSpec> specs, std::uint64_t seed,
                               Split target_split = Split::train) {
  if (target_split != Split::train) throw ConfigError("augmentation applies to the train split only");
  const std::size_t C = ds.channels(), W = ds.window_length(), per = C * W;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    if (!(spec.magnitude >= 0.0)) throw ConfigError("augmentation magnitude must be >= 0");
    Rng rng(hash_key({seed, 0xa06ULL, s}));
    const auto train = ds.indices(Split::train);
    const auto counts = ds.class_counts(Split::train);
    const std::size_t max_count = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    auto selected = [&](std::size_t i) {
      return spec.target == AugmentationSpec::Target::all ||
             counts[static_cast<std::size_t>(ds.labels[i])] < max_count;
    };
    const auto sd = detail::channel_std(ds, train);

    switch (spec.kind) {
      case AugmentationSpec::Kind::jitter:
        if (spec.magnitude == 0.0) break;
        for (auto i : train) {
          if (!selected(i)) continue;
          for (std::size_t c = 0; c < C; ++c) {
            float* x = ds.windows.data() + i * per + c * W;
            for (std::size_t t = 0; t < W; ++t) x[t] += static_cast<float>(rng.normal() * spec.magnitude * sd[c]);
          }
        }
        break;
      case AugmentationSpec::Kind::scale:
        if (spec.magnitude == 0.0) break;
        for (auto i : train) {
          if (!selected(i)) continue;
          const auto f = static_cast<float>(rng.uniform(1.0 - spec.magnitude, 1.0 + spec.magnitude));
          float* x = ds.windows.data() + i * per;
          for (std::size_t k = 0; k < per; ++k) x[k] *= f;
        }
        break;
      case AugmentationSpec::Kind::oversample: {
        const auto goal = static_cast<std::size_t>(std::ceil(spec.ratio * static_cast<double>(max_count)));
        std::vector<float> extra;
        for (std::size_t cls = 0; cls < counts.size(); ++cls) {
          if (counts[cls] >= goal) continue;
          if (counts[cls] == 0) {
            log::warn("oversample: class '" + ds.schema.label_names[cls] + "' has no train windows");
            continue;
          }
          std::vector<std::size_t> pool;
          for (auto i : train)
            if (static_cast<std::size_t>(ds.labels[i]) == cls) pool.push_back(i);
          for (std::size_t have = counts[cls]; have < goal; ++have) {
            const std::size_t src = pool[rng.below(pool.size())];
            const float* x = ds.windows.data() + src * per;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t t = 0; t < W; ++t)
                extra.push_back(x[c * W + t] + static_cast<float>(rng.normal() * spec.magnitude * sd[c]));
            ds.labels.push_back(ds.labels[src]);
            ds.split.push_back(Split::train);
            ds.provenance.push_back(ds.provenance[src]);
          }
        }
        if (!extra.empty()) {
          std::vector<float> all(ds.windows.storage());
          all.insert(all.end(), extra.begin(), extra.end());
          ds.windows = Tensor<float>({ds.labels.size(), C, W}, std::move(all));
        }
        break;
      }
    }
  }
  return ds;
}

}  // namespace automr
