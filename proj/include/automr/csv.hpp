#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <string>
#include <vector>

namespace automr {

// RFC-4180-ish reader: comma separated, optional double-quoted fields,
// surrounding whitespace trimmed from unquoted fields.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Reads the next record; false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (line_ == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::string field;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0;; ++i) {
      if (i == line.size()) {
        if (quoted) {  // embedded newline inside quotes
          std::string more;
          if (!std::getline(in_, more)) break;
          ++line_;
          line += "\n" + more;
        } else {
          break;
        }
      }
      const char ch = line[i];
      if (quoted) {
        if (ch == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += ch;
        }
      } else if (ch == '"') {
        quoted = was_quoted = true;
      } else if (ch == ',') {
        fields.push_back(finish(field, was_quoted));
        field.clear();
        was_quoted = false;
      } else if (ch != '\r') {
        field += ch;
      }
    }
    fields.push_back(finish(field, was_quoted));
    return true;
  }

  // 1-based line number of the last record read.
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string finish(const std::string& f, bool quoted) {
    if (quoted) return f;
    const auto b = f.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = f.find_last_not_of(" \t");
    return f.substr(b, e - b + 1);
  }

  std::istream& in_;
  std::size_t line_ = 0;
};

// Strict float parse: the whole field must be a finite number.
inline bool parse_float(const std::string& s, float& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return false;
  out = static_cast<float>(v);
  return true;
}

}  // namespace automr
