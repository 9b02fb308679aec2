#pragma once

#include <algorithm>
#include <ostream>
#include <vector>

#include "accel/fixed_point.hpp"
#include "accel/network.hpp"
#include "accel/tensor.hpp"

namespace accel {

// One computation-units matrix retires a pair of outputs every kNValid cycles.
inline constexpr int kNValid = 4;

// Hardware parameterization of the matrix block.
struct AccelConfig {
    int n_cu = 1;  // computation-unit matrices in parallel
    int cu_x = 2;
    int cu_y = 3;
    int fifo_depth_data = 8;  // dispatch run-ahead, in steps
    int fifo_depth_out = 8;   // write-back buffer, in elements
    bool dsb_enabled = false;
    double clock_mhz = 100.0;

    int cu_h() const { return cu_x + cu_y - 1; }
};

inline constexpr int kUnboundedFifo = 1 << 28;

// Static description of one conv layer mapped onto a config. All sizes are
// post-padding.
struct ConvGeometry {
    int n_i = 0;   // padded square input size
    int n_if = 0;
    int n_of = 0;
    int k = 0;
    int s = 1;
    int n_cu = 1;

    int out() const { return (n_i - k) / s + 1; }       // output rows = columns
    int pairs_per_row() const { return (out() + 1) / 2; }
    int filter_blocks() const { return (n_of + n_cu - 1) / n_cu; }
    bool padded_channels() const { return n_of % n_cu != 0; }
    int lanes_active(int f_base) const {
        return std::min(n_cu, n_of - f_base);
    }
};

inline ConvGeometry make_geometry(const LayerSpec& layer, int padded_input_size,
                                  const AccelConfig& cfg, bool allow_channel_padding = false) {
    if (layer.kind != LayerKind::conv)
        throw ScheduleError("layer '" + layer.name + "' is not a convolution");
    ConvGeometry g{padded_input_size, layer.in_channels, layer.out_channels,
                   layer.kernel, layer.stride, cfg.n_cu};
    if (g.n_i < g.k)
        throw ScheduleError("layer '" + layer.name + "': kernel larger than input");
    if (g.padded_channels() && !allow_channel_padding)
        throw ScheduleError("layer '" + layer.name + "': output channels " +
                            std::to_string(g.n_of) + " not a multiple of n_cu " +
                            std::to_string(g.n_cu));
    return g;
}

// One dispatch tick: all n_cu lanes process the same input patch against
// their own kernels and produce the output pair (p, q) / (p, q2).
struct ParallelStep {
    int f_base;     // first filter of the lane group (multiple of n_cu)
    int g;          // input channel
    int i, j;       // top-left input coordinate of the patch
    int p;          // output row
    int q, q2;      // output columns; q2 == q when clamped at the edge
    bool seed_bias; // g == 0: presums come from the bias
    bool write_out; // g == n_if - 1: results go to their final location
    bool row_start; // first step of a row sweep
};

struct DispatchStream {
    ConvGeometry geom;
    std::vector<ParallelStep> steps;

    // Step count at the granularity the cycle model works in (one slot of
    // simultaneously processed pairs per kNValid cycles) is derived by
    // perf_sim; `steps` here is the functional pair-level sequence.
    size_t pair_count() const { return steps.size(); }
};

// Exact dispatch order: f (by n_cu) -> g -> row -> column pair.
inline DispatchStream schedule_conv(const ConvGeometry& geom) {
    DispatchStream stream;
    stream.geom = geom;
    const int out = geom.out();
    const int pairs = geom.pairs_per_row();
    stream.steps.reserve(size_t(geom.filter_blocks()) * geom.n_if * out * pairs);
    for (int fb = 0; fb < geom.filter_blocks(); ++fb) {
        const int f_base = fb * geom.n_cu;
        for (int g = 0; g < geom.n_if; ++g) {
            for (int p = 0; p < out; ++p) {
                for (int m = 0; m < pairs; ++m) {
                    const int q = 2 * m;
                    const int q2 = std::min(q + 1, out - 1);
                    stream.steps.push_back({f_base, g, p * geom.s, q * geom.s, p, q, q2,
                                            g == 0, g == geom.n_if - 1, m == 0});
                }
            }
        }
    }
    return stream;
}

inline DispatchStream schedule_conv(const LayerSpec& layer, int padded_input_size,
                                    const AccelConfig& cfg,
                                    bool allow_channel_padding = false) {
    return schedule_conv(make_geometry(layer, padded_input_size, cfg, allow_channel_padding));
}

// Functional model of one computation-units matrix pass: two dot products
// over a patch that spans a pair of horizontally adjacent kernel windows.
// `patch` is k rows by patch_cols columns, row-major; the second window
// starts `col_offset2` columns in. Exact accumulator arithmetic.
inline std::pair<acc_t, acc_t> sys_array_eval(const fixed8* patch, int patch_cols,
                                              const fixed8* kernel, int k,
                                              int col_offset2, acc_t presum1,
                                              acc_t presum2) {
    if (col_offset2 + k > patch_cols)
        throw ShapeError("sys_array_eval: patch too narrow for the second window");
    acc_t out1 = 0, out2 = 0;
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
            const fixed8 w = kernel[r * k + c];
            out1 = macc(w, patch[r * patch_cols + c], out1);
            out2 = macc(w, patch[r * patch_cols + c + col_offset2], out2);
        }
    const int64_t r1 = int64_t{out1} + presum1;
    const int64_t r2 = int64_t{out2} + presum2;
    if (r1 > INT32_MAX || r1 < INT32_MIN || r2 > INT32_MAX || r2 < INT32_MIN)
        throw Error("accumulator overflow in sys_array_eval");
    return {static_cast<acc_t>(r1), static_cast<acc_t>(r2)};
}

// Consumes the dispatch stream, maintaining the temporal matrix of partial
// sums, and requantizes to the activation format only at the final write.
// Bit-identical to conv2d_reference on the same padded input.
inline Tensor3 execute_schedule(const Tensor3& padded_input, const Tensor4& kernels,
                                const BiasVector& bias, const DispatchStream& stream) {
    const ConvGeometry& geom = stream.geom;
    if (padded_input.size_x != geom.n_i || padded_input.size_y != geom.n_i)
        throw ShapeError("execute_schedule: input is not the padded square size");
    if (padded_input.channels != geom.n_if || kernels.in_channels != geom.n_if ||
        kernels.out_channels != geom.n_of || kernels.k_x != geom.k)
        throw ShapeError("execute_schedule: kernel/input shape mismatch");
    if (!bias.empty() && int(bias.size()) != geom.n_of)
        throw ShapeError("execute_schedule: bias length mismatch");

    const int out = geom.out();
    const int k = geom.k;
    Tensor3 result(out, out, geom.n_of);

    // Partial sums, one plane per in-flight lane.
    std::vector<acc_t> temporal(size_t(out) * out * geom.n_cu * 2, 0);
    auto tslot = [&](int p, int q, int cu, int half) -> acc_t& {
        return temporal[((size_t(p) * out + q) * geom.n_cu + cu) * 2 + half];
    };

    std::vector<fixed8> patch;
    std::vector<fixed8> kernel(size_t(k) * k);
    for (const ParallelStep& st : stream.steps) {
        const int col_off = (st.q2 - st.q) * geom.s;
        const int patch_cols = k + col_off;
        patch.resize(size_t(k) * patch_cols);
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < patch_cols; ++c)
                patch[r * patch_cols + c] = padded_input.at(st.i + r, st.j + c, st.g);

        const int lanes = geom.lanes_active(st.f_base);
        for (int cu = 0; cu < lanes; ++cu) {
            const int f_cu = st.f_base + cu;
            for (int r = 0; r < k; ++r)
                for (int c = 0; c < k; ++c)
                    kernel[r * k + c] = kernels.at(r, c, st.g, f_cu);

            acc_t p1, p2;
            if (st.seed_bias) {
                const acc_t b = bias.empty() ? 0
                                             : to_accumulator(bias[f_cu], kWeightFormat.frac_bits);
                p1 = p2 = b;
            } else {
                p1 = tslot(st.p, st.q, cu, 0);
                p2 = tslot(st.p, st.q2, cu, 1);
            }
            const auto [o1, o2] =
                sys_array_eval(patch.data(), patch_cols, kernel.data(), k, col_off, p1, p2);
            if (st.write_out) {
                result.at(st.p, st.q, f_cu) = requantize_accumulator(o1, kActFormat);
                result.at(st.p, st.q2, f_cu) = requantize_accumulator(o2, kActFormat);
            } else {
                tslot(st.p, st.q, cu, 0) = o1;
                tslot(st.p, st.q2, cu, 1) = o2;
            }
        }
    }
    return result;
}

// One text record per step, for schedule diffing.
inline void dump_trace(const DispatchStream& stream, std::ostream& os) {
    for (const ParallelStep& st : stream.steps)
        os << st.f_base << ' ' << st.g << ' ' << st.i << ' ' << st.j << ' '
           << (st.write_out ? "output" : "temporal") << '\n';
}

} // namespace accel
