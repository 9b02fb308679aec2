#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "accel/error.hpp"

namespace accel {

// Signed 8-bit Q-format. Values are stored as raw two's-complement codes,
// value = code * 2^-frac_bits.
struct FixedPointFormat {
    int total_bits = 8;
    int frac_bits = 0;

    constexpr int64_t min_code() const { return -(int64_t{1} << (total_bits - 1)); }
    constexpr int64_t max_code() const { return (int64_t{1} << (total_bits - 1)) - 1; }
    double step() const { return std::ldexp(1.0, -frac_bits); }
    double min_value() const { return double(min_code()) * step(); }
    double max_value() const { return double(max_code()) * step(); }

    constexpr bool valid() const {
        return total_bits >= 2 && frac_bits >= 1 && frac_bits < total_bits;
    }
    constexpr bool operator==(const FixedPointFormat&) const = default;
};

// Q2.5: network coefficients. Q3.4: layer outputs.
inline constexpr FixedPointFormat kWeightFormat{8, 5};
inline constexpr FixedPointFormat kActFormat{8, 4};

// Fractional bits carried by the wide accumulator (product of a weight and an
// activation lands here without rounding).
inline constexpr int kAccFracBits = kWeightFormat.frac_bits + kActFormat.frac_bits;

using fixed8 = int8_t;
using acc_t = int32_t;

inline double fixed_to_real(fixed8 code, const FixedPointFormat& fmt) {
    return double(code) * fmt.step();
}

// Nearest representable value, ties to even, saturating at the range ends.
inline fixed8 quantize(double value, const FixedPointFormat& fmt) {
    assert(fmt.valid());
    const double scaled = std::ldexp(value, fmt.frac_bits);
    // rint honours the current rounding mode; the default (to-nearest) breaks
    // ties to even, which is exactly the contract here.
    double r = std::rint(scaled);
    if (r < double(fmt.min_code())) r = double(fmt.min_code());
    if (r > double(fmt.max_code())) r = double(fmt.max_code());
    return static_cast<fixed8>(r);
}

inline double quantize_value(double value, const FixedPointFormat& fmt) {
    return fixed_to_real(quantize(value, fmt), fmt);
}

// acc' = acc + a*b, exact. Operands are raw codes; the product carries
// kAccFracBits fractional bits. Overflow means a mis-sized layer and is a
// hard fault.
inline acc_t macc(fixed8 weight, fixed8 act, acc_t acc) {
    const int64_t wide = int64_t{acc} + int64_t{weight} * int64_t{act};
    if (wide > INT32_MAX || wide < INT32_MIN)
        throw Error("accumulator overflow: layer exceeds the 32-bit accumulate path");
    return static_cast<acc_t>(wide);
}

// Promote a raw code with `frac` fractional bits into accumulator units.
inline acc_t to_accumulator(fixed8 code, int frac) {
    assert(frac <= kAccFracBits);
    return acc_t{code} << (kAccFracBits - frac);
}

// Shift from kAccFracBits down to out.frac_bits with round-half-to-even,
// then saturate to the output format.
inline fixed8 requantize_accumulator(acc_t acc, const FixedPointFormat& out) {
    assert(out.valid() && out.frac_bits <= kAccFracBits);
    const int shift = kAccFracBits - out.frac_bits;
    int64_t q = acc >> shift; // arithmetic shift: floor
    if (shift > 0) {
        const int64_t rem = acc - (q << shift);
        const int64_t half = int64_t{1} << (shift - 1);
        if (rem > half || (rem == half && (q & 1)))
            ++q;
    }
    if (q < out.min_code()) q = out.min_code();
    if (q > out.max_code()) q = out.max_code();
    return static_cast<fixed8>(q);
}

} // namespace accel
