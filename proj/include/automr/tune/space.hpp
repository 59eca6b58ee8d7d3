#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/rng.hpp"
#include "automr/schema.hpp"

namespace automr::tune {

// A configuration: dimension name -> value. Categorical values are the
// chosen number itself, not its index.
using TrialConfig = std::map<std::string, double>;

struct Dimension {
  enum class Kind { log, linear, integer, categorical };
  std::string name;
  Kind kind = Kind::linear;
  double low = 0.0;
  double high = 0.0;
  std::vector<double> choices;
  double default_value = 0.0;

  static Dimension log(std::string n, double lo, double hi, double def) { return {std::move(n), Kind::log, lo, hi, {}, def}; }
  static Dimension linear(std::string n, double lo, double hi, double def) {
    return {std::move(n), Kind::linear, lo, hi, {}, def};
  }
  static Dimension integer(std::string n, long lo, long hi, long def) {
    return {std::move(n), Kind::integer, static_cast<double>(lo), static_cast<double>(hi), {}, static_cast<double>(def)};
  }
  static Dimension categorical(std::string n, std::vector<double> c, double def) {
    return {std::move(n), Kind::categorical, 0.0, 0.0, std::move(c), def};
  }

  std::size_t encoded_width() const { return kind == Kind::categorical ? choices.size() : 1; }
  bool degenerate() const { return kind == Kind::categorical ? choices.size() == 1 : low == high; }

  bool contains(double v) const {
    switch (kind) {
      case Kind::categorical: return std::find(choices.begin(), choices.end(), v) != choices.end();
      case Kind::integer: return v >= low && v <= high && v == std::round(v);
      default: return v >= low && v <= high;
    }
  }

  std::size_t choice_index(double v) const {
    auto it = std::find(choices.begin(), choices.end(), v);
    if (it == choices.end()) throw ConfigError("space: " + std::to_string(v) + " is not a choice of '" + name + "'");
    return static_cast<std::size_t>(it - choices.begin());
  }

  // Unit-interval coordinate <-> value. Categorical choices own equal bins.
  double from_unit(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (kind) {
      case Kind::log: return std::clamp(std::exp(std::log(low) + u * (std::log(high) - std::log(low))), low, high);
      case Kind::linear: return std::clamp(low + u * (high - low), low, high);
      case Kind::integer: return std::clamp(std::round(low - 0.5 + u * (high - low + 1.0)), low, high);
      case Kind::categorical:
        return choices[std::min(choices.size() - 1, static_cast<std::size_t>(u * static_cast<double>(choices.size())))];
    }
    return low;
  }

  double to_unit(double v) const {
    switch (kind) {
      case Kind::log: return high == low ? 0.0 : (std::log(v) - std::log(low)) / (std::log(high) - std::log(low));
      case Kind::linear: return high == low ? 0.0 : (v - low) / (high - low);
      case Kind::integer: return (v - low + 0.5) / (high - low + 1.0);
      case Kind::categorical:
        return (static_cast<double>(choice_index(v)) + 0.5) / static_cast<double>(choices.size());
    }
    return 0.0;
  }
};

AUTOMR_JSON_ENUM(Dimension::Kind, {Dimension::Kind::log, "log"}, {Dimension::Kind::linear, "linear"},
                 {Dimension::Kind::integer, "integer"}, {Dimension::Kind::categorical, "categorical"})

class ParamSpace {
 public:
  ParamSpace() = default;
  explicit ParamSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) { validate(); }

  const std::vector<Dimension>& dimensions() const noexcept { return dims_; }
  std::size_t size() const noexcept { return dims_.size(); }

  const Dimension& at(const std::string& name) const {
    for (const auto& d : dims_)
      if (d.name == name) return d;
    throw ConfigError("space: no dimension '" + name + "'");
  }
  bool has(const std::string& name) const {
    return std::any_of(dims_.begin(), dims_.end(), [&](const Dimension& d) { return d.name == name; });
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& d : dims_) {
      if (d.name.empty() || !seen.insert(d.name).second) throw ConfigError("space: dimension names must be unique and nonempty");
      switch (d.kind) {
        case Dimension::Kind::log:
          if (!(d.low > 0.0)) throw ConfigError("space: log dimension '" + d.name + "' must be strictly positive");
          [[fallthrough]];
        case Dimension::Kind::linear:
        case Dimension::Kind::integer:
          if (!(d.low <= d.high) || !std::isfinite(d.low) || !std::isfinite(d.high))
            throw ConfigError("space: dimension '" + d.name + "' needs finite low <= high");
          if (d.kind == Dimension::Kind::integer && (d.low != std::round(d.low) || d.high != std::round(d.high)))
            throw ConfigError("space: integer dimension '" + d.name + "' needs integer bounds");
          break;
        case Dimension::Kind::categorical:
          if (d.choices.empty()) throw ConfigError("space: categorical dimension '" + d.name + "' has no choices");
          break;
      }
      if (!d.contains(d.default_value)) throw ConfigError("space: default of '" + d.name + "' lies outside its range");
    }
  }

  bool single_point() const {
    return std::all_of(dims_.begin(), dims_.end(), [](const Dimension& d) { return d.degenerate(); });
  }

  bool contains(const TrialConfig& c) const {
    if (c.size() != dims_.size()) return false;
    for (const auto& d : dims_) {
      auto it = c.find(d.name);
      if (it == c.end() || !d.contains(it->second)) return false;
    }
    return true;
  }

  TrialConfig defaults() const {
    TrialConfig c;
    for (const auto& d : dims_) c[d.name] = d.default_value;
    return c;
  }

  TrialConfig from_unit(const std::vector<double>& u) const {
    TrialConfig c;
    for (std::size_t i = 0; i < dims_.size(); ++i) c[dims_[i].name] = dims_[i].from_unit(u.at(i));
    return c;
  }

  std::vector<double> to_unit(const TrialConfig& c) const {
    std::vector<double> u;
    for (const auto& d : dims_) u.push_back(d.to_unit(c.at(d.name)));
    return u;
  }

  TrialConfig sample(Rng& rng) const {
    std::vector<double> u(dims_.size());
    for (auto& x : u) x = rng.uniform();
    return from_unit(u);
  }

  std::size_t encoded_width() const {
    std::size_t w = 0;
    for (const auto& d : dims_) w += d.encoded_width();
    return w;
  }

  // Surrogate features: log/linear/integer scaled to [0, 1], categorical
  // one-hot.
  std::vector<double> encode(const TrialConfig& c) const {
    std::vector<double> x;
    x.reserve(encoded_width());
    for (const auto& d : dims_) {
      const double v = c.at(d.name);
      switch (d.kind) {
        case Dimension::Kind::log:
        case Dimension::Kind::linear: x.push_back(d.to_unit(v)); break;
        case Dimension::Kind::integer: x.push_back(d.high == d.low ? 0.0 : (v - d.low) / (d.high - d.low)); break;
        case Dimension::Kind::categorical: {
          const auto k = d.choice_index(v);
          for (std::size_t i = 0; i < d.choices.size(); ++i) x.push_back(i == k ? 1.0 : 0.0);
          break;
        }
      }
    }
    return x;
  }

  TrialConfig decode(const std::vector<double>& x) const {
    if (x.size() != encoded_width()) throw ShapeError("space: encoded vector has the wrong width");
    TrialConfig c;
    std::size_t p = 0;
    for (const auto& d : dims_) {
      switch (d.kind) {
        case Dimension::Kind::log:
        case Dimension::Kind::linear: c[d.name] = d.from_unit(x[p++]); break;
        case Dimension::Kind::integer:
          c[d.name] = std::clamp(std::round(d.low + std::clamp(x[p++], 0.0, 1.0) * (d.high - d.low)), d.low, d.high);
          break;
        case Dimension::Kind::categorical: {
          std::size_t best = 0;
          for (std::size_t i = 1; i < d.choices.size(); ++i)
            if (x[p + i] > x[p + best]) best = i;
          c[d.name] = d.choices[best];
          p += d.choices.size();
          break;
        }
      }
    }
    return c;
  }

 private:
  std::vector<Dimension> dims_;
};

inline void to_json(nlohmann::json& j, const Dimension& d) {
  j = {{"name", d.name}, {"kind", d.kind}, {"default", d.default_value}};
  if (d.kind == Dimension::Kind::categorical)
    j["choices"] = d.choices;
  else
    j["low"] = d.low, j["high"] = d.high;
}

inline void from_json(const nlohmann::json& j, Dimension& d) {
  d = Dimension{};
  j.at("name").get_to(d.name);
  j.at("kind").get_to(d.kind);
  if (d.kind == Dimension::Kind::categorical) {
    j.at("choices").get_to(d.choices);
    d.default_value = j.value("default", d.choices.empty() ? 0.0 : d.choices.front());
  } else {
    j.at("low").get_to(d.low);
    j.at("high").get_to(d.high);
    d.default_value = j.value("default", d.low);
  }
}

inline void to_json(nlohmann::json& j, const ParamSpace& s) { j = {{"dimensions", s.dimensions()}}; }

inline void from_json(const nlohmann::json& j, ParamSpace& s) {
  try {
    s = ParamSpace(j.at("dimensions").get<std::vector<Dimension>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
}

// The eight tuned dimensions; defaults reproduce the base preset.
inline ParamSpace default_space() {
  return ParamSpace({
      Dimension::log("learning_rate", 1e-4, 1e-2, 1e-3),
      Dimension::log("weight_decay", 1e-6, 1e-2, 1e-4),
      Dimension::linear("dropout", 0.0, 0.5, 0.1),
      Dimension::categorical("batch_size", {32, 64, 128, 256}, 32),
      Dimension::integer("num_blocks", 2, 5, 3),
      Dimension::integer("cells_per_block", 1, 3, 2),
      Dimension::categorical("base_channels", {32, 64, 128}, 64),
      Dimension::categorical("kernel_base", {3, 5, 7}, 5),
  });
}

}  // namespace automr::tune
