#pragma once

#include <map>
#include <string>
#include <vector>

#include "accel/error.hpp"
#include "accel/tensor.hpp"

namespace accel {

enum class LayerKind { conv, add, pool, activation };
enum class PoolMode { max, average };
enum class ActMode { relu, identity };

struct TensorShape {
    int x = 0, y = 0, channels = 0;
    bool operator==(const TensorShape&) const = default;
};

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    std::vector<std::string> inputs; // one name, or two for add
    std::string output;

    // conv
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    int in_channels = 0;
    int out_channels = 0;
    bool has_bias = true;

    // pool
    int window = 0;
    int pool_stride = 0;
    PoolMode pool_mode = PoolMode::max;

    // activation
    ActMode act_mode = ActMode::relu;
};

struct LayerShapes {
    TensorShape in;  // first input
    TensorShape out;
};

// Ordered DAG of layers with named tensors. Exactly one network input and
// one output; layers are listed in a valid topological order.
struct NetworkSpec {
    std::string name;
    std::string input_name;
    TensorShape input_shape;
    std::string output_name;
    std::vector<LayerSpec> layers;

    std::vector<size_t> conv_layer_indices() const {
        std::vector<size_t> out;
        for (size_t i = 0; i < layers.size(); ++i)
            if (layers[i].kind == LayerKind::conv) out.push_back(i);
        return out;
    }

    // Propagates shapes through the graph, checking consistency. Returns
    // per-layer input/output shapes, indexed like `layers`.
    std::vector<LayerShapes> infer_shapes() const {
        std::map<std::string, TensorShape> shapes;
        shapes[input_name] = input_shape;
        std::vector<LayerShapes> result(layers.size());
        for (size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& l = layers[i];
            if (l.inputs.empty())
                throw ShapeError("layer '" + l.name + "' has no inputs");
            for (const auto& in : l.inputs)
                if (!shapes.count(in))
                    throw ShapeError("layer '" + l.name + "' reads undefined tensor '" +
                                     in + "' (graph not topologically ordered?)");
            if (shapes.count(l.output))
                throw ShapeError("tensor '" + l.output + "' defined twice");
            TensorShape in = shapes.at(l.inputs[0]);
            TensorShape out;
            switch (l.kind) {
            case LayerKind::conv: {
                if (l.inputs.size() != 1) throw ShapeError("conv takes one input");
                if (in.channels != l.in_channels)
                    throw ShapeError("layer '" + l.name + "': input channels " +
                                     std::to_string(in.channels) + " != " +
                                     std::to_string(l.in_channels));
                if (l.kernel < 1 || l.stride < 1 || l.padding < 0)
                    throw ShapeError("layer '" + l.name + "': bad conv parameters");
                if (in.x != in.y)
                    throw ShapeError("layer '" + l.name + "': non-square input");
                const int padded = in.x + 2 * l.padding;
                if (padded < l.kernel)
                    throw ShapeError("layer '" + l.name + "': kernel larger than input");
                const int o = (padded - l.kernel) / l.stride + 1;
                out = {o, o, l.out_channels};
                break;
            }
            case LayerKind::add: {
                if (l.inputs.size() != 2) throw ShapeError("add takes two inputs");
                const TensorShape b = shapes.at(l.inputs[1]);
                if (!(in == b))
                    throw ShapeError("layer '" + l.name + "': mismatched add inputs");
                out = in;
                break;
            }
            case LayerKind::pool: {
                if (l.inputs.size() != 1) throw ShapeError("pool takes one input");
                if (l.window < 1 || l.pool_stride < 1)
                    throw ShapeError("layer '" + l.name + "': bad pool parameters");
                if ((in.x - l.window) % l.pool_stride != 0 ||
                    (in.y - l.window) % l.pool_stride != 0)
                    throw ShapeError("layer '" + l.name +
                                     "': window does not tile the input evenly");
                out = {(in.x - l.window) / l.pool_stride + 1,
                       (in.y - l.window) / l.pool_stride + 1, in.channels};
                break;
            }
            case LayerKind::activation:
                if (l.inputs.size() != 1) throw ShapeError("activation takes one input");
                out = in;
                break;
            }
            shapes[l.output] = out;
            result[i] = {in, out};
        }
        if (!shapes.count(output_name))
            throw ShapeError("network output '" + output_name + "' never produced");
        return result;
    }

    void validate() const { (void)infer_shapes(); }
};

// Kernel bank plus bias for one conv layer.
struct ConvWeights {
    Tensor4 kernels;
    BiasVector bias;
};

// All conv-layer weights of a model, keyed by layer name.
struct ModelWeights {
    std::map<std::string, ConvWeights> conv;

    const ConvWeights& at(const std::string& layer) const {
        auto it = conv.find(layer);
        if (it == conv.end()) throw Error("missing weights for layer '" + layer + "'");
        return it->second;
    }
    ConvWeights& at(const std::string& layer) {
        auto it = conv.find(layer);
        if (it == conv.end()) throw Error("missing weights for layer '" + layer + "'");
        return it->second;
    }
};

// Binary masks congruent to each conv layer's kernel tensor (1 = keep).
// Biases are never masked.
struct WeightMasks {
    std::map<std::string, std::vector<uint8_t>> kernel_mask;

    bool empty() const { return kernel_mask.empty(); }
};

inline void apply_masks(ModelWeights& weights, const WeightMasks& masks) {
    for (const auto& [layer, mask] : masks.kernel_mask) {
        auto& w = weights.at(layer).kernels;
        if (mask.size() != w.size())
            throw ShapeError("mask size mismatch for layer '" + layer + "'");
        for (size_t i = 0; i < mask.size(); ++i)
            if (!mask[i]) w.data[i] = 0;
    }
}

} // namespace accel
