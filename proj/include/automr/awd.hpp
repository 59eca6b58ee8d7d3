#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "automr/binio.hpp"
#include "automr/dataset.hpp"
#include "automr/error.hpp"

// .awd container (all integers little-endian):
//   magic      4 bytes  "AWD1"
//   header     u32 length + UTF-8 JSON {"schema", "recordings", "normalization"}
//   N, C, W    u64, u32, u32
//   windows    N*C*W float32, row-major [N, C, W]
//   labels     N int32
//   split      N uint8 (0 = train, 1 = test)
//   provenance N x (u32 recording index, u64 start sample)
namespace automr {

inline constexpr char kAwdMagic[4] = {'A', 'W', 'D', '1'};

inline nlohmann::json awd_header(const WindowedDataset& ds) {
  nlohmann::json norm = {{"applied", ds.normalization.applied},
                         {"mode", ds.normalization.mode},
                         {"offset", ds.normalization.offset},
                         {"scale", ds.normalization.scale}};
  return {{"schema", ds.schema}, {"recordings", ds.recordings}, {"normalization", norm}};
}

inline void write_awd(std::ostream& out, const WindowedDataset& ds) {
  ds.validate();
  binio::Writer w(out);
  w.put_bytes(std::string(kAwdMagic, 4));
  w.put_string(awd_header(ds).dump());
  const auto n = static_cast<std::uint64_t>(ds.size());
  w.put<std::uint64_t>(n);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.window_length()));
  w.put_array(ds.windows.data(), ds.windows.size());
  for (int l : ds.labels) w.put<std::int32_t>(l);
  for (Split s : ds.split) w.put<std::uint8_t>(static_cast<std::uint8_t>(s));
  for (const auto& p : ds.provenance) {
    w.put<std::uint32_t>(p.recording);
    w.put<std::uint64_t>(p.start);
  }
}

inline void write_awd(const std::filesystem::path& path, const WindowedDataset& ds) {
  binio::write_atomically(path, [&](std::ostream& out) { write_awd(out, ds); });
}

inline WindowedDataset read_awd(std::istream& in, const std::string& what = "awd") {
  binio::Reader r(in, what);
  if (r.get_bytes(4) != std::string(kAwdMagic, 4)) throw FormatError(what + ": not an AWD1 dataset (bad magic)");
  WindowedDataset ds;
  try {
    const auto header = nlohmann::json::parse(r.get_string());
    header.at("schema").get_to(ds.schema);
    header.at("recordings").get_to(ds.recordings);
    const auto& norm = header.at("normalization");
    norm.at("applied").get_to(ds.normalization.applied);
    norm.at("mode").get_to(ds.normalization.mode);
    norm.at("offset").get_to(ds.normalization.offset);
    norm.at("scale").get_to(ds.normalization.scale);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  const auto n = r.get<std::uint64_t>();
  const auto c = r.get<std::uint32_t>();
  const auto w = r.get<std::uint32_t>();
  if (c != ds.schema.num_channels() || w != ds.schema.window_length)
    throw FormatError(what + ": window shape [" + std::to_string(c) + ", " + std::to_string(w) +
                      "] disagrees with the schema");
  if (n > (std::uint64_t{1} << 40) / (std::uint64_t{c} * w + 1)) throw FormatError(what + ": implausible window count");
  std::vector<float> data(static_cast<std::size_t>(n) * c * w);
  r.get_array(data.data(), data.size());
  ds.windows = Tensor<float>({static_cast<std::size_t>(n), c, w}, std::move(data));
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.get<std::int32_t>();
  ds.split.resize(n);
  for (auto& s : ds.split) {
    const auto v = r.get<std::uint8_t>();
    if (v > 1) throw FormatError(what + ": bad split tag " + std::to_string(v));
    s = static_cast<Split>(v);
  }
  ds.provenance.resize(n);
  for (auto& p : ds.provenance) {
    p.recording = r.get<std::uint32_t>();
    p.start = r.get<std::uint64_t>();
  }
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after the last window");
  ds.validate();
  return ds;
}

inline WindowedDataset read_awd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_awd(in, path.string());
}

}  // namespace automr
