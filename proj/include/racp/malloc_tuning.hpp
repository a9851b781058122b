#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace racp {

/// Keeps freed graph buffers in the heap instead of returning them to the OS between steps (glibc only).
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace racp
