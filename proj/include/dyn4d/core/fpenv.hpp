#pragma once

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#define DYN4D_HAS_MXCSR 1
#else
#define DYN4D_HAS_MXCSR 0
#endif

namespace dyn4d {

/// Control word of the calling thread's SSE unit, or 0 where there is none.
inline unsigned current_fp_mode() {
#if DYN4D_HAS_MXCSR
  return _mm_getcsr();
#else
  return 0;
#endif
}

inline void set_fp_mode([[maybe_unused]] unsigned mode) {
#if DYN4D_HAS_MXCSR
  _mm_setcsr(mode);
#endif
}

/// Flush-to-zero and denormals-are-zero while alive; the previous mode comes back on exit.
/// Adam moments of rarely touched hash entries decay into the denormal range, and arithmetic
/// on them roughly doubled the cost of late training iterations.
class FlushDenormals {
 public:
  FlushDenormals() : saved_(current_fp_mode()) { set_fp_mode(saved_ | 0x8040u); }
  ~FlushDenormals() { set_fp_mode(saved_); }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_;
};

}  // namespace dyn4d
