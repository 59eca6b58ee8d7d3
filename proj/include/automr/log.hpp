#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace automr::log {

using Handler = std::function<void(const std::string&)>;

namespace detail {
inline Handler& handler() {
  static Handler h = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Replaces the process-wide warning handler; returns the previous one.
inline Handler set_warning_handler(Handler h) {
  std::lock_guard lock(detail::mutex());
  return std::exchange(detail::handler(), std::move(h));
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::mutex());
  if (detail::handler()) detail::handler()(msg);
}

// Collects warnings for the lifetime of the object (tests, summaries).
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = set_warning_handler([this](const std::string& m) { messages_.push_back(m); });
  }
  ~WarningCapture() { set_warning_handler(std::move(previous_)); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  Handler previous_;
  std::vector<std::string> messages_;
};

}  // namespace automr::log
