#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <string>

#include "automr/dataset.hpp"
#include "automr/error.hpp"
#include "automr/rng.hpp"

namespace automr {

// Class k is a sinusoid at (k+1)/32 cycles per sample; channel c is shifted
// by c*pi/3. Windows taken at multiples of 32 samples share the same phase,
// so both the direct generator and CSV recordings windowed with stride 64
// produce the same class templates.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t channels = 3;
  std::size_t window = 128;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 20;
  double noise = 0.1;
};

inline double synthetic_frequency(std::size_t k) { return static_cast<double>(k + 1) / 32.0; }

inline double synthetic_signal(std::size_t k, std::size_t c, std::size_t t) {
  return std::sin(2.0 * M_PI * synthetic_frequency(k) * static_cast<double>(t) + static_cast<double>(c) * M_PI / 3.0);
}

inline DatasetSchema synthetic_schema(const SyntheticSpec& spec, std::size_t stride = 64) {
  DatasetSchema s;
  s.name = "synthetic";
  for (std::size_t c = 0; c < spec.channels; ++c) s.channels.push_back({"ch" + std::to_string(c), "synthetic", "a.u."});
  s.sampling_rate = 32.0;
  for (std::size_t k = 0; k < spec.classes; ++k) s.label_names.push_back("class" + std::to_string(k));
  s.window_length = spec.window;
  s.window_stride = std::min(stride, spec.window);
  s.split_mode = SplitMode::by_window;
  s.normalization = Normalization::none;
  return s;
}

// Windowed dataset generated directly: per class, train windows then test
// windows, classes in order. Not normalized.
inline WindowedDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2 || spec.channels == 0 || spec.window == 0 || spec.train_per_class == 0)
    throw ConfigError("synthetic: need >= 2 classes, >= 1 channel, window >= 1 and train windows");
  WindowedDataset ds;
  ds.schema = synthetic_schema(spec);
  ds.recordings = {"synthetic"};
  const std::size_t per = spec.train_per_class + spec.test_per_class;
  const std::size_t n = per * spec.classes;
  ds.windows = Tensor<float>({n, spec.channels, spec.window});
  Rng rng(hash_key({seed, 0x5e7u}));
  std::size_t i = 0;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t w = 0; w < per; ++w, ++i) {
      float* dst = ds.windows.data() + i * spec.channels * spec.window;
      for (std::size_t c = 0; c < spec.channels; ++c)
        for (std::size_t t = 0; t < spec.window; ++t)
          dst[c * spec.window + t] = static_cast<float>(synthetic_signal(k, c, t) + spec.noise * rng.normal());
      ds.labels.push_back(static_cast<int>(k));
      ds.split.push_back(w < spec.train_per_class ? Split::train : Split::test);
      ds.provenance.push_back({0, i * spec.window});
    }
  }
  ds.validate();
  return ds;
}

// Writes `recordings_per_class` CSV recordings of `length` samples per class
// under dir/recordings (with a `label` column) and dir/schema.json.
inline void write_synthetic_csv(const std::filesystem::path& dir, const SyntheticSpec& spec,
                                std::size_t recordings_per_class, std::size_t length, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const auto schema = synthetic_schema(spec);
  fs::create_directories(dir / "recordings");
  {
    std::ofstream out(dir / "schema.json");
    out << nlohmann::json(schema).dump(2) << '\n';
    if (!out) throw IoError("cannot write " + (dir / "schema.json").string());
  }
  Rng rng(hash_key({seed, 0xc5fu}));
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t r = 0; r < recordings_per_class; ++r) {
      const auto path = dir / "recordings" / (schema.label_names[k] + "_" + std::to_string(r) + ".csv");
      std::ofstream out(path);
      for (const auto& c : schema.channels) out << c.name << ',';
      out << "label\n" << std::setprecision(6) << std::fixed;
      for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t c = 0; c < spec.channels; ++c) out << synthetic_signal(k, c, t) + spec.noise * rng.normal() << ',';
        out << schema.label_names[k] << '\n';
      }
      if (!out) throw IoError("cannot write " + path.string());
    }
  }
}

}  // namespace automr
