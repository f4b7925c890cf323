#pragma once
#include <cmath>
#include <cstdint>

namespace sfxb {

// Shared fixed-point grid used by the encryption plugins and, deliberately, by
// every trainer path: gradients are snapped to this grid before any histogram
// is accumulated. Sums of grid values up to a few thousand terms are exact in
// double arithmetic, so plaintext, passthrough and homomorphic accumulation
// all yield bitwise-identical histograms.

inline std::int64_t fixed_encode_ll(double x, unsigned scale_bits) {
    return std::llround(std::ldexp(x, static_cast<int>(scale_bits)));
}

inline double fixed_decode_ll(std::int64_t q, unsigned scale_bits) {
    return std::ldexp(static_cast<double>(q), -static_cast<int>(scale_bits));
}

// Round to the nearest multiple of 2^-scale_bits.
inline double fixed_round(double x, unsigned scale_bits) {
    return fixed_decode_ll(fixed_encode_ll(x, scale_bits), scale_bits);
}

} // namespace sfxb
