#pragma once

#include <cstddef>

// 64-bit reductions over contiguous runs. Eight independent accumulators
// let the compiler vectorize without reassociating a single running sum;
// the combine order is fixed, so results are deterministic.
namespace automr::reduce {

namespace detail {
inline double combine(const double (&acc)[8]) {
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}
}  // namespace detail

template <class T>
double sum(const T* p, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(p[i + k]);
  double s = detail::combine(acc);
  for (; i < n; ++i) s += static_cast<double>(p[i]);
  return s;
}

template <class T>
double dot(const T* a, const T* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(a[i + k]) * static_cast<double>(b[i + k]);
  double s = detail::combine(acc);
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <class T>
double centered_sum_squares(const T* p, std::size_t n, double mean) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) {
      const double d = static_cast<double>(p[i + k]) - mean;
      acc[k] += d * d;
    }
  double s = detail::combine(acc);
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - mean;
    s += d * d;
  }
  return s;
}

}  // namespace automr::reduce
