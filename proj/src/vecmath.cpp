#include "vecmath.hpp"

#include <algorithm>
#include <cmath>

#if defined(DIFW_HAVE_MVEC)
#include <immintrin.h>

// glibc vector math variants (libmvec).
#if defined(__AVX512F__)
extern "C" __m512d _ZGVeN8v_log1p(__m512d);
extern "C" __m512d _ZGVeN8v_expm1(__m512d);
#define DIFW_VLOG1P _ZGVeN8v_log1p
#define DIFW_VEXPM1 _ZGVeN8v_expm1
#define DIFW_VLOAD _mm512_loadu_pd
#define DIFW_VSTORE _mm512_storeu_pd
constexpr std::size_t kLanes = 8;
#elif defined(__AVX2__)
extern "C" __m256d _ZGVdN4v_log1p(__m256d);
extern "C" __m256d _ZGVdN4v_expm1(__m256d);
#define DIFW_VLOG1P _ZGVdN4v_log1p
#define DIFW_VEXPM1 _ZGVdN4v_expm1
#define DIFW_VLOAD _mm256_loadu_pd
#define DIFW_VSTORE _mm256_storeu_pd
constexpr std::size_t kLanes = 4;
#else
extern "C" __m128d _ZGVbN2v_log1p(__m128d);
extern "C" __m128d _ZGVbN2v_expm1(__m128d);
#define DIFW_VLOG1P _ZGVbN2v_log1p
#define DIFW_VEXPM1 _ZGVbN2v_expm1
#define DIFW_VLOAD _mm_loadu_pd
#define DIFW_VSTORE _mm_storeu_pd
constexpr std::size_t kLanes = 2;
#endif

namespace difw::detail {

namespace {

template <class Fn>
void apply(Fn fn, const double* in, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) DIFW_VSTORE(out + i, fn(DIFW_VLOAD(in + i)));
  if (i < n) {
    // Pad the tail so it runs through the same vector routine.
    double buf[kLanes] = {};
    std::copy(in + i, in + n, buf);
    DIFW_VSTORE(buf, fn(DIFW_VLOAD(buf)));
    std::copy(buf, buf + (n - i), out + i);
  }
}

}  // namespace

void log1p_n(const double* in, double* out, std::size_t n) {
  apply([](auto v) { return DIFW_VLOG1P(v); }, in, out, n);
}

void expm1_n(const double* in, double* out, std::size_t n) {
  apply([](auto v) { return DIFW_VEXPM1(v); }, in, out, n);
}

}  // namespace difw::detail

#else

namespace difw::detail {

void log1p_n(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log1p(in[i]);
}

void expm1_n(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::expm1(in[i]);
}

}  // namespace difw::detail

#endif
