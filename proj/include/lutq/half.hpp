#pragma once

// IEEE 754 binary16 conversion, round-to-nearest-even.

#include <bit>
#include <cmath>
#include <cstdint>

namespace lutq {

inline std::uint16_t double_to_half(double value) noexcept {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);
    const auto exp = static_cast<int>((bits >> 52) & 0x7ffu);
    std::uint64_t mant = bits & ((std::uint64_t{1} << 52) - 1);

    if (exp == 0x7ff) {
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
    }
    const int e = exp - 1023 + 15;
    if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);

    if (e <= 0) {
        // subnormal half (or zero)
        if (exp == 0) return sign;
        const int shift = 43 - e;
        if (shift > 63) return sign;
        mant |= std::uint64_t{1} << 52;
        std::uint64_t h = mant >> shift;
        const std::uint64_t rem = mant & ((std::uint64_t{1} << shift) - 1);
        const std::uint64_t half = std::uint64_t{1} << (shift - 1);
        if (rem > half || (rem == half && (h & 1u))) ++h;
        return static_cast<std::uint16_t>(sign | h);
    }

    std::uint32_t h = (static_cast<std::uint32_t>(e) << 10) | static_cast<std::uint32_t>(mant >> 42);
    const std::uint64_t rem = mant & ((std::uint64_t{1} << 42) - 1);
    const std::uint64_t half = std::uint64_t{1} << 41;
    if (rem > half || (rem == half && (h & 1u))) ++h;  // a carry into the exponent may yield inf
    return static_cast<std::uint16_t>(sign | h);
}

inline double half_to_double(std::uint16_t h) noexcept {
    const double sign = (h & 0x8000u) ? -1.0 : 1.0;
    const int exp = (h >> 10) & 0x1f;
    const int mant = h & 0x3ff;
    if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
    if (exp == 31) return mant ? std::nan("") : sign * INFINITY;
    return sign * std::ldexp(static_cast<double>(mant | 0x400), exp - 25);
}

inline double round_to_half(double v) noexcept { return half_to_double(double_to_half(v)); }

}  // namespace lutq
