#pragma once

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "automr/error.hpp"

namespace automr {

struct ChannelSpec {
  std::string name;
  std::string modality;
  std::string unit;
};

enum class Normalization { zscore, minmax, none };
enum class Labeling { majority, last_sample };
enum class SplitMode { by_window, by_recording };

struct AugmentationSpec {
  enum class Kind { jitter, scale, oversample };
  enum class Target { all, minority_classes };

  Kind kind = Kind::jitter;
  double magnitude = 0.0;
  Target target = Target::all;
  // Oversampling goal: every class reaches at least ratio * (largest class).
  double ratio = 0.5;
};

// Enum <-> string tables. Unknown strings are rejected rather than mapped to
// a default.
#define AUTOMR_JSON_ENUM(E, ...)                                                                 \
  inline const std::vector<std::pair<E, std::string>>& enum_table(E) {                          \
    static const std::vector<std::pair<E, std::string>> t = {__VA_ARGS__};                      \
    return t;                                                                                   \
  }                                                                                             \
  inline void to_json(nlohmann::json& j, const E& e) {                                          \
    for (const auto& [v, n] : enum_table(E{}))                                                  \
      if (v == e) j = n;                                                                        \
  }                                                                                             \
  inline void from_json(const nlohmann::json& j, E& e) {                                        \
    const auto s = j.get<std::string>();                                                        \
    std::string known;                                                                          \
    for (const auto& [v, n] : enum_table(E{})) {                                                \
      if (n == s) {                                                                             \
        e = v;                                                                                  \
        return;                                                                                 \
      }                                                                                         \
      known += (known.empty() ? "" : ", ") + n;                                                 \
    }                                                                                           \
    throw ConfigError("unknown value '" + s + "' (expected one of: " + known + ")");            \
  }

AUTOMR_JSON_ENUM(Normalization, {Normalization::zscore, "zscore"}, {Normalization::minmax, "minmax"},
                 {Normalization::none, "none"})
AUTOMR_JSON_ENUM(Labeling, {Labeling::majority, "majority"}, {Labeling::last_sample, "last-sample"})
AUTOMR_JSON_ENUM(SplitMode, {SplitMode::by_window, "by-window"}, {SplitMode::by_recording, "by-recording"})
AUTOMR_JSON_ENUM(AugmentationSpec::Kind, {AugmentationSpec::Kind::jitter, "jitter"},
                 {AugmentationSpec::Kind::scale, "scale"}, {AugmentationSpec::Kind::oversample, "oversample"})
AUTOMR_JSON_ENUM(AugmentationSpec::Target, {AugmentationSpec::Target::all, "all"},
                 {AugmentationSpec::Target::minority_classes, "minority-classes"})

// Stride for a fractional overlap, rounded down: 25 samples at 50% -> 12.
inline std::size_t stride_from_overlap(std::size_t window_length, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("window overlap must lie in [0, 1)");
  const auto s = static_cast<std::size_t>(std::floor(static_cast<double>(window_length) * (1.0 - overlap)));
  return s == 0 ? 1 : s;
}

// Declares one dataset: channels, labels and how recordings are windowed and
// split.
struct DatasetSchema {
  std::string name;
  std::vector<ChannelSpec> channels;
  double sampling_rate = 1.0;
  std::vector<std::string> label_names;
  std::size_t window_length = 1;
  std::size_t window_stride = 1;
  double split_ratio = 0.8;
  SplitMode split_mode = SplitMode::by_window;
  Normalization normalization = Normalization::zscore;
  Labeling labeling = Labeling::majority;
  std::vector<AugmentationSpec> augmentation;

  std::size_t num_channels() const noexcept { return channels.size(); }
  std::size_t num_classes() const noexcept { return label_names.size(); }

  int label_id(const std::string& label) const {
    for (std::size_t i = 0; i < label_names.size(); ++i)
      if (label_names[i] == label) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (name.empty()) throw ConfigError("schema: name is required");
    if (channels.empty()) throw ConfigError("schema '" + name + "': at least one channel is required");
    std::set<std::string> seen;
    for (const auto& c : channels) {
      if (c.name.empty()) throw ConfigError("schema '" + name + "': channel with empty name");
      if (c.name == "label") throw ConfigError("schema '" + name + "': 'label' is reserved for the label column");
      if (!seen.insert(c.name).second) throw ConfigError("schema '" + name + "': duplicate channel '" + c.name + "'");
    }
    if (label_names.empty()) throw ConfigError("schema '" + name + "': label_names must be nonempty");
    seen.clear();
    for (const auto& l : label_names)
      if (!seen.insert(l).second) throw ConfigError("schema '" + name + "': duplicate label '" + l + "'");
    if (!(sampling_rate > 0.0)) throw ConfigError("schema '" + name + "': sampling_rate must be positive");
    if (window_length == 0) throw ConfigError("schema '" + name + "': window_length must be >= 1");
    if (window_stride == 0 || window_stride > window_length)
      throw ConfigError("schema '" + name + "': window_stride must lie in [1, window_length]");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
      throw ConfigError("schema '" + name + "': split_ratio must lie in (0, 1)");
    for (const auto& a : augmentation) {
      if (!(a.magnitude >= 0.0) || !std::isfinite(a.magnitude))
        throw ConfigError("schema '" + name + "': augmentation magnitude must be a nonnegative number");
      if (a.kind == AugmentationSpec::Kind::scale && a.magnitude >= 1.0)
        throw ConfigError("schema '" + name + "': scale magnitude must be < 1");
      if (a.kind == AugmentationSpec::Kind::oversample && !(a.ratio > 0.0 && a.ratio <= 1.0))
        throw ConfigError("schema '" + name + "': oversample ratio must lie in (0, 1]");
    }
  }
};

inline void to_json(nlohmann::json& j, const ChannelSpec& c) {
  j = {{"name", c.name}, {"modality", c.modality}, {"unit", c.unit}};
}

inline void from_json(const nlohmann::json& j, ChannelSpec& c) {
  if (j.is_string()) {
    c = {j.get<std::string>(), "", ""};
    return;
  }
  j.at("name").get_to(c.name);
  c.modality = j.value("modality", "");
  c.unit = j.value("unit", "");
}

inline void to_json(nlohmann::json& j, const AugmentationSpec& a) {
  j = {{"kind", a.kind}, {"magnitude", a.magnitude}, {"target", a.target}, {"ratio", a.ratio}};
}

inline void from_json(const nlohmann::json& j, AugmentationSpec& a) {
  a = AugmentationSpec{};
  j.at("kind").get_to(a.kind);
  a.magnitude = j.value("magnitude", 0.0);
  if (j.contains("target")) j.at("target").get_to(a.target);
  a.ratio = j.value("ratio", 0.5);
}

inline void to_json(nlohmann::json& j, const DatasetSchema& s) {
  j = {{"name", s.name},
       {"channels", s.channels},
       {"sampling_rate", s.sampling_rate},
       {"label_names", s.label_names},
       {"window_length", s.window_length},
       {"window_stride", s.window_stride},
       {"split_ratio", s.split_ratio},
       {"split_mode", s.split_mode},
       {"normalization", s.normalization},
       {"labeling", s.labeling},
       {"augmentation", s.augmentation}};
}

// Accepts the stride directly ("window_stride"), as a fraction
// ("window_overlap": 0.5) or as a sample count ("window_overlap_samples": 7).
inline void from_json(const nlohmann::json& j, DatasetSchema& s) {
  s = DatasetSchema{};
  try {
    j.at("name").get_to(s.name);
    j.at("channels").get_to(s.channels);
    j.at("label_names").get_to(s.label_names);
    j.at("window_length").get_to(s.window_length);
    s.sampling_rate = j.value("sampling_rate", 1.0);
    if (j.contains("window_stride"))
      j.at("window_stride").get_to(s.window_stride);
    else if (j.contains("window_overlap"))
      s.window_stride = stride_from_overlap(s.window_length, j.at("window_overlap").get<double>());
    else if (j.contains("window_overlap_samples")) {
      const auto ov = j.at("window_overlap_samples").get<std::size_t>();
      if (ov >= s.window_length) throw ConfigError("schema: window_overlap_samples must be < window_length");
      s.window_stride = s.window_length - ov;
    } else {
      s.window_stride = s.window_length;
    }
    s.split_ratio = j.value("split_ratio", 0.8);
    if (j.contains("split_mode")) j.at("split_mode").get_to(s.split_mode);
    if (j.contains("normalization")) j.at("normalization").get_to(s.normalization);
    if (j.contains("labeling")) j.at("labeling").get_to(s.labeling);
    if (j.contains("augmentation")) j.at("augmentation").get_to(s.augmentation);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
}

}  // namespace automr
