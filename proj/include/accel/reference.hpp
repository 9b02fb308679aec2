#pragma once

#include <algorithm>
#include <map>
#include <string>

#include "accel/fixed_point.hpp"
#include "accel/network.hpp"
#include "accel/tensor.hpp"

namespace accel {

// Plain nested-loop convolution. Bit-exact ground truth for the scheduled
// execution path: every accumulation goes through macc, the output is
// requantized to the activation format once per element.
inline Tensor3 conv2d_reference(const Tensor3& input, const Tensor4& kernels,
                                const BiasVector& bias, int stride, int padding) {
    if (input.channels != kernels.in_channels)
        throw ShapeError("conv2d_reference: channel mismatch");
    if (!bias.empty() && int(bias.size()) != kernels.out_channels)
        throw ShapeError("conv2d_reference: bias length mismatch");
    const Tensor3 padded = pad_tensor(input, padding);
    const int k = kernels.k_x;
    if (kernels.k_y != k) throw ShapeError("conv2d_reference: non-square kernel");
    if (padded.size_x < k || padded.size_y < k)
        throw ShapeError("conv2d_reference: kernel larger than padded input");
    const int out_x = (padded.size_x - k) / stride + 1;
    const int out_y = (padded.size_y - k) / stride + 1;

    Tensor3 out(out_x, out_y, kernels.out_channels);
    for (int f = 0; f < kernels.out_channels; ++f) {
        const acc_t seed = bias.empty() ? 0 : to_accumulator(bias[f], kWeightFormat.frac_bits);
        for (int io = 0; io < out_x; ++io) {
            const int i = io * stride;
            for (int jo = 0; jo < out_y; ++jo) {
                const int j = jo * stride;
                acc_t acc = seed;
                for (int g = 0; g < padded.channels; ++g)
                    for (int ik = 0; ik < k; ++ik)
                        for (int jk = 0; jk < k; ++jk)
                            acc = macc(kernels.at(ik, jk, g, f), padded.at(i + ik, j + jk, g), acc);
                out.at(io, jo, f) = requantize_accumulator(acc, kActFormat);
            }
        }
    }
    return out;
}

// Max or average pooling. Average uses the same round-half-to-even rule as
// the accumulator requantization, applied to the code-unit sum.
inline Tensor3 pool(const Tensor3& input, int window, int stride, PoolMode mode) {
    if (window < 1 || stride < 1) throw ShapeError("pool: bad window/stride");
    if ((input.size_x - window) % stride != 0 || (input.size_y - window) % stride != 0)
        throw ShapeError("pool: window does not tile the input evenly");
    const int out_x = (input.size_x - window) / stride + 1;
    const int out_y = (input.size_y - window) / stride + 1;
    const int n = window * window;

    Tensor3 out(out_x, out_y, input.channels);
    for (int io = 0; io < out_x; ++io)
        for (int jo = 0; jo < out_y; ++jo)
            for (int c = 0; c < input.channels; ++c) {
                if (mode == PoolMode::max) {
                    fixed8 best = input.at(io * stride, jo * stride, c);
                    for (int wx = 0; wx < window; ++wx)
                        for (int wy = 0; wy < window; ++wy)
                            best = std::max(best, input.at(io * stride + wx, jo * stride + wy, c));
                    out.at(io, jo, c) = best;
                } else {
                    int64_t sum = 0;
                    for (int wx = 0; wx < window; ++wx)
                        for (int wy = 0; wy < window; ++wy)
                            sum += input.at(io * stride + wx, jo * stride + wy, c);
                    // round half to even on sum/n, in code units
                    int64_t q = sum >= 0 ? sum / n : -((-sum + n - 1) / n); // floor
                    const int64_t rem2 = 2 * (sum - q * n);                 // in [0, 2n)
                    if (rem2 > n || (rem2 == n && (q & 1))) ++q;
                    out.at(io, jo, c) = static_cast<fixed8>(
                        std::clamp<int64_t>(q, kActFormat.min_code(), kActFormat.max_code()));
                }
            }
    return out;
}

// Saturating elementwise add in the activation format.
inline Tensor3 add_elementwise(const Tensor3& a, const Tensor3& b) {
    if (!a.same_shape(b)) throw ShapeError("add_elementwise: shape mismatch");
    Tensor3 out = a;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const int sum = int(a.data[i]) + int(b.data[i]);
        out.data[i] = static_cast<fixed8>(
            std::clamp<int>(sum, int(kActFormat.min_code()), int(kActFormat.max_code())));
    }
    return out;
}

inline Tensor3 activate(const Tensor3& input, ActMode mode) {
    if (mode == ActMode::identity) return input;
    Tensor3 out = input;
    for (auto& v : out.data) v = std::max<fixed8>(v, 0);
    return out;
}

// Topological execution of the whole graph. Deterministic.
inline Tensor3 run_network(const NetworkSpec& net, const ModelWeights& weights,
                           const Tensor3& input) {
    net.validate();
    if (input.size_x != net.input_shape.x || input.size_y != net.input_shape.y ||
        input.channels != net.input_shape.channels)
        throw ShapeError("run_network: input does not match the declared shape");

    std::map<std::string, Tensor3> tensors;
    tensors[net.input_name] = input;
    for (const LayerSpec& l : net.layers) {
        const Tensor3& in = tensors.at(l.inputs[0]);
        switch (l.kind) {
        case LayerKind::conv: {
            const ConvWeights& w = weights.at(l.name);
            if (w.kernels.k_x != l.kernel || w.kernels.in_channels != l.in_channels ||
                w.kernels.out_channels != l.out_channels)
                throw ShapeError("run_network: weight shape mismatch at '" + l.name + "'");
            tensors[l.output] = conv2d_reference(
                in, w.kernels, l.has_bias ? w.bias : BiasVector{}, l.stride, l.padding);
            break;
        }
        case LayerKind::add:
            tensors[l.output] = add_elementwise(in, tensors.at(l.inputs[1]));
            break;
        case LayerKind::pool:
            tensors[l.output] = pool(in, l.window, l.pool_stride, l.pool_mode);
            break;
        case LayerKind::activation:
            tensors[l.output] = activate(in, l.act_mode);
            break;
        }
    }
    return tensors.at(net.output_name);
}

// Operation counting. Convention: a MACC is 2 operations (multiply + add);
// elementwise add is 1 operation per output element; pooling is 1 operation
// per output element; activations are free.
struct OperationCount {
    long long conv_ops = 0;
    long long add_ops = 0;
    long long pool_ops = 0;

    long long total() const { return conv_ops + add_ops + pool_ops; }
    double gop() const { return double(total()) * 1e-9; }

    static const char* convention() {
        return "2 ops per conv MACC, 1 op per add/pool output element, activations free";
    }
};

inline OperationCount count_operations(const NetworkSpec& net) {
    const auto shapes = net.infer_shapes();
    OperationCount c;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const TensorShape& out = shapes[i].out;
        const long long elems = 1LL * out.x * out.y * out.channels;
        switch (l.kind) {
        case LayerKind::conv:
            c.conv_ops += 2LL * elems * l.kernel * l.kernel * l.in_channels;
            break;
        case LayerKind::add: c.add_ops += elems; break;
        case LayerKind::pool: c.pool_ops += elems; break;
        case LayerKind::activation: break;
        }
    }
    return c;
}

} // namespace accel
