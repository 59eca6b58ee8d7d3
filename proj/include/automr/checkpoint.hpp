#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "automr/binio.hpp"
#include "automr/error.hpp"
#include "automr/metrics.hpp"
#include "automr/train_state.hpp"

namespace automr {

inline constexpr char kCheckpointMagic[4] = {'A', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

struct Checkpoint {
  TrainConfig train;
  TrainState state;
  nlohmann::json extra = nlohmann::json::object();  // caller metadata, e.g. label names
};

namespace detail {

inline nlohmann::json state_meta(const TrainState& s) {
  return {{"epoch", s.epoch},
          {"step", s.step},
          {"adam_step", s.adam_step},
          {"seed", s.seed},
          {"lr_scale", s.lr_scale},
          {"plateau_scale", s.plateau_scale},
          {"plateau_best", json_number(s.plateau_best)},
          {"plateau_bad_epochs", s.plateau_bad_epochs},
          {"epochs_since_best", s.epochs_since_best},
          {"has_best", s.has_best},
          {"best_metric", s.best_metric},
          {"best_epoch", s.best_epoch},
          {"anomaly_retries", s.anomaly_retries}};
}

inline void read_state_meta(const nlohmann::json& j, TrainState& s) {
  s.epoch = j.at("epoch").get<std::size_t>();
  s.step = j.at("step").get<std::uint64_t>();
  s.adam_step = j.at("adam_step").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.lr_scale = j.at("lr_scale").get<double>();
  s.plateau_scale = j.at("plateau_scale").get<double>();
  s.plateau_best = j.at("plateau_best").is_null() ? std::numeric_limits<double>::infinity()
                                                  : j.at("plateau_best").get<double>();
  s.plateau_bad_epochs = j.at("plateau_bad_epochs").get<std::size_t>();
  s.epochs_since_best = j.at("epochs_since_best").get<std::size_t>();
  s.has_best = j.at("has_best").get<bool>();
  s.best_metric = j.at("best_metric").get<double>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.anomaly_retries = j.at("anomaly_retries").get<int>();
}

inline void put_tensor(binio::Writer& w, const std::string& name, const Tensor<float>& t) {
  w.put_string(name);
  w.put<std::uint8_t>(kDtypeF32);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put<std::uint64_t>(d);
  w.put_array(t.data(), t.size());
}

inline Tensor<float> get_tensor(binio::Reader& r, const std::string& what, const std::string& expected_name,
                                const Shape& expected_shape) {
  const auto name = r.get_string(4096);
  if (name != expected_name) throw FormatError(what + ": expected tensor '" + expected_name + "', found '" + name + "'");
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != kDtypeF32) throw FormatError(what + ": tensor " + name + " has unsupported dtype " + std::to_string(dtype));
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw FormatError(what + ": tensor " + name + " has implausible rank");
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
  if (shape != expected_shape)
    throw FormatError(what + ": tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                      shape_str(expected_shape));
  Tensor<float> t(shape);
  r.get_array(t.data(), t.size());
  return t;
}

}  // namespace detail

// Layout: "AMCK", u32 version, u32-length JSON metadata, u32 tensor count,
// then tensors (name, dtype byte, rank, u64 dims, little-endian data) in the
// fixed order param/, buffer/, adam_m/, adam_v/.
inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const auto& s = ck.state;
  const auto& params = s.model.parameters();
  if (s.adam_m.size() != params.size() || s.adam_v.size() != params.size())
    throw InternalError("checkpoint: optimizer state does not match the parameter list");
  binio::Writer w(out);
  w.put_bytes(std::string(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  nlohmann::json meta = {{"model", s.model.config()}, {"train", ck.train}, {"state", detail::state_meta(s)},
                         {"extra", ck.extra}};
  w.put_string(meta.dump());
  const auto bns = batchnorm_layout(s.model.config());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size() * 3 + bns.size() * 2));
  for (const auto& p : params) detail::put_tensor(w, "param/" + p.name, p.value);
  for (std::size_t i = 0; i < bns.size(); ++i) {
    detail::put_tensor(w, "buffer/" + bns[i].first + ".running_mean", s.model.norm_states()[i].running_mean);
    detail::put_tensor(w, "buffer/" + bns[i].first + ".running_var", s.model.norm_states()[i].running_var);
  }
  for (std::size_t i = 0; i < params.size(); ++i) detail::put_tensor(w, "adam_m/" + params[i].name, s.adam_m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) detail::put_tensor(w, "adam_v/" + params[i].name, s.adam_v[i]);
  if (!w.good()) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  binio::write_atomically(path, [&](std::ostream& out) { write_checkpoint(out, ck); });
}

// Reads and fully validates a checkpoint before returning it; any mismatch
// raises FormatError and nothing is handed back.
inline Checkpoint read_checkpoint(std::istream& in, const std::string& what = "checkpoint") {
  binio::Reader r(in, what);
  if (r.get_bytes(4) != std::string(kCheckpointMagic, 4)) throw FormatError(what + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  QuartzConfig config;
  try {
    const auto meta = nlohmann::json::parse(r.get_string());
    config = meta.at("model").get<QuartzConfig>();
    ck.train = meta.at("train").get<TrainConfig>();
    detail::read_state_meta(meta.at("state"), ck.state);
    ck.extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  }
  const auto layout = parameter_layout(config);
  const auto bns = batchnorm_layout(config);
  const auto count = r.get<std::uint32_t>();
  if (count != layout.size() * 3 + bns.size() * 2)
    throw FormatError(what + ": tensor count " + std::to_string(count) + " does not match the model");

  std::vector<NamedTensor<float>> params;
  for (const auto& p : layout) params.push_back({p.name, detail::get_tensor(r, what, "param/" + p.name, p.shape)});
  std::vector<BatchNormState<float>> norms;
  for (const auto& [name, ch] : bns) {
    BatchNormState<float> st(ch);
    st.running_mean = detail::get_tensor(r, what, "buffer/" + name + ".running_mean", {ch});
    st.running_var = detail::get_tensor(r, what, "buffer/" + name + ".running_var", {ch});
    norms.push_back(std::move(st));
  }
  for (const auto& p : layout) ck.state.adam_m.push_back(detail::get_tensor(r, what, "adam_m/" + p.name, p.shape));
  for (const auto& p : layout) ck.state.adam_v.push_back(detail::get_tensor(r, what, "adam_v/" + p.name, p.shape));
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after tensor table");
  ck.state.model = ModelInstance<float>(std::move(config), std::move(params), std::move(norms));
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace automr
