#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "automr/log.hpp"

namespace automr {

// Newline-delimited JSON sink. A write failure is reported once through the
// warning handler; later records are dropped and training carries on.
class EventLog {
 public:
  EventLog() = default;

  explicit EventLog(const std::filesystem::path& path, bool append = false)
      : file_(std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc)), out_(file_.get()),
        name_(path.string()) {
    if (!*file_) fail();
  }

  explicit EventLog(std::ostream& out, std::string name = "event stream") : out_(&out), name_(std::move(name)) {}

  void write(const nlohmann::json& record) {
    if (!out_ || failed_) return;
    *out_ << record.dump() << '\n';
    out_->flush();
    if (!*out_) fail();
  }

  bool enabled() const noexcept { return out_ != nullptr; }
  bool failed() const noexcept { return failed_; }

 private:
  void fail() {
    if (!failed_) log::warn("cannot write events to " + name_ + "; further records are dropped");
    failed_ = true;
  }

  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_ = nullptr;
  std::string name_;
  bool failed_ = false;
};

}  // namespace automr
