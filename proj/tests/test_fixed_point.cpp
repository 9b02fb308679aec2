#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "accel/fixed_point.hpp"

using namespace accel;

namespace {

// Independent rounding oracle: round x = num / 2^shift to the nearest
// integer, ties to even, using only integer arithmetic.
int64_t round_half_even(int64_t num, int shift) {
    if (shift == 0) return num;
    const int64_t den = int64_t{1} << shift;
    int64_t q = num >> shift; // floor for two's complement
    const int64_t rem = num - q * den;
    if (2 * rem > den || (2 * rem == den && (q % 2 != 0))) ++q;
    return q;
}

int64_t clamp_code(int64_t q, const FixedPointFormat& fmt) {
    if (q < fmt.min_code()) return fmt.min_code();
    if (q > fmt.max_code()) return fmt.max_code();
    return q;
}

} // namespace

TEST_CASE("format ranges and steps") {
    CHECK(kWeightFormat.step() == 0.03125);
    CHECK(kWeightFormat.min_value() == -4.0);
    CHECK(kWeightFormat.max_value() == 3.96875);
    CHECK(kActFormat.step() == 0.0625);
    CHECK(kActFormat.min_value() == -8.0);
    CHECK(kActFormat.max_value() == 7.9375);
    CHECK(kAccFracBits == 9);
}

TEST_CASE("every code round-trips exactly, both formats") {
    for (const FixedPointFormat& fmt : {kWeightFormat, kActFormat}) {
        for (int code = -128; code <= 127; ++code) {
            const double v = double(code) * fmt.step();
            CHECK(fixed_to_real(fixed8(code), fmt) == v);
            CHECK(quantize(v, fmt) == fixed8(code));
        }
    }
}

TEST_CASE("quantize examples") {
    CHECK(quantize_value(0.0, kWeightFormat) == 0.0);
    CHECK(quantize_value(4.0, kWeightFormat) == 3.96875); // saturates at max code
    CHECK(quantize_value(0.50, kActFormat) == 0.5);
    CHECK(quantize_value(0.01, kWeightFormat) == 0.0); // below half-step
    CHECK(quantize(-100.0, kActFormat) == -128);
    CHECK(quantize(100.0, kActFormat) == 127);
}

TEST_CASE("quantize ties go to even") {
    // 0.03125 is exactly half a Q3.4 step; nearest even code is 0
    CHECK(quantize(0.03125, kActFormat) == 0);
    // 0.09375 = 1.5 steps; rounds up to even code 2
    CHECK(quantize(0.09375, kActFormat) == 2);
    CHECK(quantize(-0.03125, kActFormat) == 0);
    CHECK(quantize(-0.09375, kActFormat) == -2);
}

TEST_CASE("quantize matches exhaustive nearest-code search") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (const FixedPointFormat& fmt : {kWeightFormat, kActFormat}) {
        for (int trial = 0; trial < 2000; ++trial) {
            const double v = dist(rng);
            int best = -128;
            double best_err = 1e18;
            for (int code = -128; code <= 127; ++code) {
                const double err = std::abs(v - double(code) * fmt.step());
                // prefer the even code on exact ties
                if (err < best_err || (err == best_err && (code % 2 == 0))) {
                    best_err = err;
                    best = code;
                }
            }
            CAPTURE(v, fmt.frac_bits);
            CHECK(quantize(v, fmt) == fixed8(best));
        }
    }
}

TEST_CASE("macc basics") {
    CHECK(macc(0, 13, 42) == 42);
    // 1.0 (code 32) * 1.0 (code 16) = 512 accumulator units = 1.0
    CHECK(macc(32, 16, 0) == 512);
    CHECK(requantize_accumulator(512, kActFormat) == 16);

    // nine accumulations of 0.25 * 0.5 give exactly 1.125
    acc_t acc = 0;
    const fixed8 w = quantize(0.25, kWeightFormat);
    const fixed8 a = quantize(0.5, kActFormat);
    for (int i = 0; i < 9; ++i) acc = macc(w, a, acc);
    const fixed8 out = requantize_accumulator(acc, kActFormat);
    CHECK(fixed_to_real(out, kActFormat) == 1.125);
}

TEST_CASE("macc overflow is a hard fault") {
    acc_t acc = INT32_MAX - 100;
    CHECK_THROWS_AS(macc(127, 127, acc), Error);
    acc = INT32_MIN + 100;
    CHECK_THROWS_AS(macc(-128, 127, acc), Error);
}

TEST_CASE("to_accumulator promotes codes") {
    CHECK(to_accumulator(1, kWeightFormat.frac_bits) == 16);
    CHECK(to_accumulator(1, kActFormat.frac_bits) == 32);
    CHECK(to_accumulator(-3, kAccFracBits) == -3);
}

TEST_CASE("requantize rounds half to even and saturates") {
    // accumulator value 1.0 stays 1.0
    CHECK(requantize_accumulator(512, kActFormat) == 16);
    // 9.0 saturates at the Q3.4 maximum 7.9375
    CHECK(requantize_accumulator(9 * 512, kActFormat) == 127);
    CHECK(fixed_to_real(127, kActFormat) == 7.9375);
    // one Q2.5 LSB times 1.0 is exactly half a Q3.4 step; rounds to even 0
    CHECK(requantize_accumulator(16, kActFormat) == 0);
    CHECK(requantize_accumulator(-16, kActFormat) == 0);
    // 1.5 steps rounds away to the even code 2
    CHECK(requantize_accumulator(48, kActFormat) == 2);
    CHECK(requantize_accumulator(-48, kActFormat) == -2);
    CHECK(requantize_accumulator(INT32_MIN, kActFormat) == -128);
}

TEST_CASE("requantize agrees with the integer oracle on all 32-bit shifts") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<acc_t> dist(INT32_MIN / 2, INT32_MAX / 2);
    const int shift = kAccFracBits - kActFormat.frac_bits;
    for (int trial = 0; trial < 20000; ++trial) {
        const acc_t acc = dist(rng);
        const int64_t expect = clamp_code(round_half_even(acc, shift), kActFormat);
        CAPTURE(acc);
        CHECK(requantize_accumulator(acc, kActFormat) == fixed8(expect));
    }
}

TEST_CASE("macc chains match a rational-arithmetic oracle") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> code(-128, 127);
    std::uniform_int_distribution<int> len(1, 64);
    for (int chain = 0; chain < 1000; ++chain) {
        const int n = len(rng);
        acc_t acc = 0;
        int64_t oracle = 0; // exact sum of products in 2^-9 units
        bool overflowed = false;
        for (int i = 0; i < n && !overflowed; ++i) {
            const fixed8 w = fixed8(code(rng));
            const fixed8 a = fixed8(code(rng));
            oracle += int64_t{w} * int64_t{a};
            if (oracle > INT32_MAX || oracle < INT32_MIN) {
                CHECK_THROWS_AS(macc(w, a, acc), Error);
                overflowed = true;
            } else {
                acc = macc(w, a, acc);
            }
        }
        if (overflowed) continue;
        CHECK(int64_t{acc} == oracle);
        const int shift = kAccFracBits - kActFormat.frac_bits;
        const int64_t expect = clamp_code(round_half_even(oracle, shift), kActFormat);
        CHECK(requantize_accumulator(acc, kActFormat) == fixed8(expect));
    }
}
