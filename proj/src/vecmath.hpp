#pragma once

#include <cstddef>

namespace difw::detail {

// Elementwise log1p / expm1 over arrays. Every element goes through the same
// routine whatever its position, so results are reproducible per value (the
// integrator relies on this for batch/pointwise equality).
void log1p_n(const double* in, double* out, std::size_t n);
void expm1_n(const double* in, double* out, std::size_t n);

}  // namespace difw::detail
