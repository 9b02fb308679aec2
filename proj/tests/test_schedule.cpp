#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "accel/reference.hpp"
#include "accel/schedule.hpp"

using namespace accel;

namespace {

Tensor3 random_tensor(int sx, int sy, int ch, std::mt19937_64& rng) {
    Tensor3 t(sx, sy, ch);
    std::uniform_int_distribution<int> code(-128, 127);
    for (auto& v : t.data) v = fixed8(code(rng));
    return t;
}

Tensor4 random_kernels(int k, int in, int out, std::mt19937_64& rng) {
    Tensor4 t(k, k, in, out);
    std::uniform_int_distribution<int> code(-128, 127);
    for (auto& v : t.data) v = fixed8(code(rng));
    return t;
}

BiasVector random_bias(int n, std::mt19937_64& rng) {
    BiasVector b(size_t(n), 0);
    std::uniform_int_distribution<int> code(-128, 127);
    for (auto& v : b) v = fixed8(code(rng));
    return b;
}

} // namespace

TEST_CASE("sys_array_eval basics") {
    const std::vector<fixed8> zeros(9, 0);
    std::vector<fixed8> patch(12);
    for (size_t i = 0; i < patch.size(); ++i) patch[i] = fixed8(i + 1);
    const auto [z1, z2] = sys_array_eval(patch.data(), 4, zeros.data(), 3, 1, 7, -5);
    CHECK(z1 == 7);
    CHECK(z2 == -5);

    const std::vector<fixed8> ones_p(12, 1);
    const std::vector<fixed8> ones_k(9, 1);
    const auto [o1, o2] = sys_array_eval(ones_p.data(), 4, ones_k.data(), 3, 1, 0, 0);
    CHECK(o1 == 9);
    CHECK(o2 == 9);

    CHECK_THROWS_AS(sys_array_eval(patch.data(), 4, ones_k.data(), 3, 2, 0, 0), ShapeError);
}

TEST_CASE("sys_array_eval equals two direct dot products") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> code(-128, 127);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<fixed8> patch(12), kernel(9);
        for (auto& v : patch) v = fixed8(code(rng));
        for (auto& v : kernel) v = fixed8(code(rng));
        acc_t d1 = 0, d2 = 0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                d1 += acc_t{kernel[r * 3 + c]} * patch[r * 4 + c];
                d2 += acc_t{kernel[r * 3 + c]} * patch[r * 4 + c + 1];
            }
        const auto [o1, o2] = sys_array_eval(patch.data(), 4, kernel.data(), 3, 1, 0, 0);
        CHECK(o1 == d1);
        CHECK(o2 == d2);
    }
}

TEST_CASE("dispatch stream counts and flags") {
    // 34x34x1, k=3, s=1, one filter on one lane: 32 rows of 16 pairs
    const ConvGeometry g1{34, 1, 1, 3, 1, 1};
    const DispatchStream s1 = schedule_conv(g1);
    CHECK(s1.pair_count() == 512);
    for (const ParallelStep& st : s1.steps) {
        CHECK(st.seed_bias);
        CHECK(st.write_out);
    }
    CHECK(s1.steps.front().row_start);
    CHECK_FALSE(s1.steps[1].row_start);

    // the worked-example layer: 12 channels, 12 filters on 12 lanes
    const ConvGeometry g2{34, 12, 12, 3, 1, 12};
    const DispatchStream s2 = schedule_conv(g2);
    CHECK(s2.pair_count() == 512 * 12);
    CHECK(s2.geom.filter_blocks() == 1);

    // channel order: g sweeps inside one filter block
    CHECK(s2.steps[0].g == 0);
    CHECK(s2.steps[512].g == 1);
    CHECK(s2.steps[0].seed_bias);
    CHECK_FALSE(s2.steps[0].write_out);
    CHECK_FALSE(s2.steps[511].write_out);
    CHECK(s2.steps.back().write_out);
}

TEST_CASE("schedule is deterministic") {
    const ConvGeometry g{10, 3, 4, 3, 1, 2};
    const DispatchStream a = schedule_conv(g);
    const DispatchStream b = schedule_conv(g);
    REQUIRE(a.pair_count() == b.pair_count());
    std::ostringstream ta, tb;
    dump_trace(a, ta);
    dump_trace(b, tb);
    const std::string trace = ta.str();
    CHECK(trace == tb.str());
    CHECK(size_t(std::count(trace.begin(), trace.end(), '\n')) == a.pair_count());
}

TEST_CASE("geometry mapping errors") {
    LayerSpec l{"c", LayerKind::conv, {"in"}, "out", 3, 1, 0, 2, 5};
    AccelConfig cfg;
    cfg.n_cu = 2;
    CHECK_THROWS_AS(make_geometry(l, 8, cfg), ScheduleError);
    CHECK_NOTHROW(make_geometry(l, 8, cfg, true));
    l.kernel = 9;
    CHECK_THROWS_AS(make_geometry(l, 8, cfg, true), ScheduleError);
}

TEST_CASE("scheduled execution equals the reference on random layers") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> pick_k(0, 2);
    std::uniform_int_distribution<int> pick_s(1, 2);
    std::uniform_int_distribution<int> pick_size(1, 16);
    std::uniform_int_distribution<int> pick_ch(1, 8);
    std::uniform_int_distribution<int> pick_ncu(0, 2);
    std::uniform_int_distribution<int> pick_pad(0, 1);
    const int kk[] = {1, 3, 5};
    const int ncus[] = {1, 2, 4};

    int done = 0;
    while (done < 30) {
        const int k = kk[pick_k(rng)];
        const int s = pick_s(rng);
        const int size = pick_size(rng);
        const int pad = pick_pad(rng);
        const int padded = size + 2 * pad;
        if (padded < k) continue;
        const int n_if = pick_ch(rng);
        const int n_of = pick_ch(rng);
        const int n_cu = ncus[pick_ncu(rng)];

        const Tensor3 input = random_tensor(size, size, n_if, rng);
        const Tensor4 kernels = random_kernels(k, n_if, n_of, rng);
        const BiasVector bias = random_bias(n_of, rng);

        const ConvGeometry geom{padded, n_if, n_of, k, s, n_cu};
        const Tensor3 got =
            execute_schedule(pad_tensor(input, pad), kernels, bias, schedule_conv(geom));
        const Tensor3 expect = conv2d_reference(input, kernels, bias, s, pad);

        CAPTURE(k, s, size, pad, n_if, n_of, n_cu);
        REQUIRE(got.same_shape(expect));
        CHECK(got.data == expect.data);
        ++done;
    }
}

TEST_CASE("worked-example layer matches the reference") {
    std::mt19937_64 rng(43);
    const Tensor3 input = random_tensor(32, 32, 12, rng);
    const Tensor4 kernels = random_kernels(3, 12, 12, rng);
    const BiasVector bias = random_bias(12, rng);
    const ConvGeometry geom{34, 12, 12, 3, 1, 12};
    const Tensor3 got =
        execute_schedule(pad_tensor(input, 1), kernels, bias, schedule_conv(geom));
    const Tensor3 expect = conv2d_reference(input, kernels, bias, 1, 1);
    CHECK(got.data == expect.data);
}

TEST_CASE("all-zero weights reproduce the bias plane through the schedule") {
    std::mt19937_64 rng(47);
    const Tensor3 input = random_tensor(6, 6, 3, rng);
    const Tensor4 kernels(3, 3, 3, 4);
    const BiasVector bias = random_bias(4, rng);
    const ConvGeometry geom{6, 3, 4, 3, 1, 2};
    const Tensor3 got = execute_schedule(input, kernels, bias, schedule_conv(geom));
    const Tensor3 expect = conv2d_reference(input, kernels, bias, 1, 0);
    CHECK(got.data == expect.data);
}

TEST_CASE("execute_schedule validates shapes") {
    std::mt19937_64 rng(53);
    const ConvGeometry geom{6, 3, 4, 3, 1, 2};
    const DispatchStream stream = schedule_conv(geom);
    const Tensor4 kernels(3, 3, 3, 4);
    CHECK_THROWS_AS(execute_schedule(Tensor3(5, 5, 3), kernels, {}, stream), ShapeError);
    CHECK_THROWS_AS(execute_schedule(Tensor3(6, 6, 2), kernels, {}, stream), ShapeError);
    CHECK_THROWS_AS(execute_schedule(Tensor3(6, 6, 3), kernels, BiasVector(3), stream),
                    ShapeError);
}
