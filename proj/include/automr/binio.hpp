#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "automr/error.hpp"

// Little-endian primitives shared by the .awd and .amck containers.
namespace automr::binio {

template <class T>
T byteswap_if_needed(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class T>
  void put(T v) {
    v = byteswap_if_needed(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <class T>
  void put_array(const T* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
      out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    } else {
      for (std::size_t i = 0; i < n; ++i) put(data[i]);
    }
  }

  void put_bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  // u32 length followed by the bytes.
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }

  bool good() const { return out_.good(); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <class T>
  T get() {
    T v;
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return byteswap_if_needed(v);
  }

  template <class T>
  void get_array(T* data, std::size_t n) {
    read(reinterpret_cast<char*>(data), n * sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1)
      for (std::size_t i = 0; i < n; ++i) data[i] = byteswap_if_needed(data[i]);
  }

  std::string get_bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::string get_string(std::size_t max_len = std::size_t{1} << 30) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) throw FormatError(what_ + ": string length " + std::to_string(n) + " exceeds limit");
    return get_bytes(n);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(what_ + ": unexpected end of file");
  }

  std::istream& in_;
  std::string what_;
};

// Writes via a temporary sibling and renames, so readers never observe a
// half-written file.
template <class Fn>
void write_atomically(const std::filesystem::path& path, Fn&& fn) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    fn(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace automr::binio
