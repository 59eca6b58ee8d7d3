#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace automr {

// Activations are multi-megabyte buffers allocated and freed every step.
// glibc serves those with fresh mmap()s by default, so each step pays for
// page faults; keeping them on the heap lets freed blocks be reused.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace automr
