#pragma once

#include <cstddef>

// Vectorized elementwise kernels. Every code path that needs sin/cos of a
// block (plain network evaluation, tape nodes, fused jet layers) goes through
// these so that the results agree bit-for-bit.
namespace metapde::ad::vmath {

/// out[i] = sin(scale * in[i])
void sin(const double* in, double* out, std::size_t n, double scale = 1.0);
/// out[i] = cos(scale * in[i])
void cos(const double* in, double* out, std::size_t n, double scale = 1.0);

}  // namespace metapde::ad::vmath
