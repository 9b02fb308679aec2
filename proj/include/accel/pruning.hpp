#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "accel/network.hpp"
#include "accel/schedule.hpp"

namespace accel {

// Smallest prunable unit: the n_cu k*k kernels one dispatch pass reads for
// input channel g and filter block `block`. Zeroing a whole group lets the
// bypass logic skip that pass entirely.
struct KernelGroup {
    int layer_id = 0; // index into net.layers
    std::string layer;
    int g = 0;
    int block = 0;

    bool operator==(const KernelGroup&) const = default;
};

inline std::vector<KernelGroup> enumerate_groups(const NetworkSpec& net,
                                                 const AccelConfig& cfg) {
    std::vector<KernelGroup> groups;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (l.kind != LayerKind::conv) continue;
        const int blocks = (l.out_channels + cfg.n_cu - 1) / cfg.n_cu;
        for (int g = 0; g < l.in_channels; ++g)
            for (int b = 0; b < blocks; ++b)
                groups.push_back({int(i), l.name, g, b});
    }
    return groups;
}

// Saliency: sum of |code| over every weight the group covers.
inline long long score_group(const NetworkSpec& net, const ModelWeights& weights,
                             const AccelConfig& cfg, const KernelGroup& gr) {
    const LayerSpec& l = net.layers[size_t(gr.layer_id)];
    const Tensor4& w = weights.at(gr.layer).kernels;
    const int f0 = gr.block * cfg.n_cu;
    const int f1 = std::min(l.out_channels, f0 + cfg.n_cu);
    long long s = 0;
    for (int r = 0; r < l.kernel; ++r)
        for (int c = 0; c < l.kernel; ++c)
            for (int f = f0; f < f1; ++f)
                s += std::abs(int(w.at(r, c, gr.g, f)));
    return s;
}

struct PruningPlan {
    double target = 0.0;
    int epochs = 1;
    std::vector<std::vector<KernelGroup>> per_epoch; // groups pruned each epoch
    size_t total_groups = 0;

    size_t pruned_groups() const {
        size_t n = 0;
        for (const auto& e : per_epoch) n += e.size();
        return n;
    }
};

// Optional weight-update step run between pruning epochs. Must return
// weights with the same layer set and shapes; masks are re-applied after.
using RetrainHook = std::function<ModelWeights(const ModelWeights&)>;

namespace detail {

inline void check_congruent(const ModelWeights& before, const ModelWeights& after) {
    if (before.conv.size() != after.conv.size())
        throw ShapeError("retrain hook changed the layer set");
    for (const auto& [name, w] : before.conv) {
        auto it = after.conv.find(name);
        if (it == after.conv.end())
            throw ShapeError("retrain hook dropped layer '" + name + "'");
        if (!w.kernels.same_shape(it->second.kernels) ||
            w.bias.size() != it->second.bias.size())
            throw ShapeError("retrain hook changed shapes at layer '" + name + "'");
    }
}

inline void mask_group(const NetworkSpec& net, const AccelConfig& cfg,
                       const KernelGroup& gr, WeightMasks& masks) {
    const LayerSpec& l = net.layers[size_t(gr.layer_id)];
    auto& mask = masks.kernel_mask[gr.layer];
    const Tensor4 shape(l.kernel, l.kernel, l.in_channels, l.out_channels);
    if (mask.empty()) mask.assign(shape.size(), 1);
    const int f0 = gr.block * cfg.n_cu;
    const int f1 = std::min(l.out_channels, f0 + cfg.n_cu);
    for (int r = 0; r < l.kernel; ++r)
        for (int c = 0; c < l.kernel; ++c)
            for (int f = f0; f < f1; ++f)
                mask[shape.index(r, c, gr.g, f)] = 0;
}

} // namespace detail

struct PruneResult {
    ModelWeights weights;
    WeightMasks masks;
    PruningPlan plan;
};

// Epoch-wise structured pruning. Each epoch the lowest-saliency groups not
// yet pruned are zeroed, globally across layers, until floor(target * N)
// groups are gone after the last epoch. Masks only ever grow.
inline PruneResult run_hapm(const NetworkSpec& net, const ModelWeights& initial,
                            const AccelConfig& cfg, double target, int epochs,
                            const RetrainHook& retrain = nullptr) {
    if (target < 0.0 || target > 1.0) throw Error("prune target must be in [0, 1]");
    if (epochs < 1) throw Error("epochs must be positive");
    net.validate();

    PruneResult res;
    res.weights = initial;
    res.plan.target = target;
    res.plan.epochs = epochs;

    const auto groups = enumerate_groups(net, cfg);
    res.plan.total_groups = groups.size();
    const size_t total_quota = size_t(target * double(groups.size()));
    const size_t per_epoch = total_quota / size_t(epochs);

    std::vector<uint8_t> pruned(groups.size(), 0);
    for (int e = 0; e < epochs; ++e) {
        const size_t quota =
            e == epochs - 1 ? total_quota - per_epoch * size_t(epochs - 1) : per_epoch;

        std::vector<std::pair<long long, size_t>> candidates;
        for (size_t gi = 0; gi < groups.size(); ++gi)
            if (!pruned[gi])
                candidates.push_back({score_group(net, res.weights, cfg, groups[gi]), gi});
        std::sort(candidates.begin(), candidates.end(),
                  [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      const KernelGroup& x = groups[a.second];
                      const KernelGroup& y = groups[b.second];
                      return std::tie(x.layer_id, x.g, x.block) <
                             std::tie(y.layer_id, y.g, y.block);
                  });

        std::vector<KernelGroup> chosen;
        for (size_t c = 0; c < quota && c < candidates.size(); ++c) {
            const size_t gi = candidates[c].second;
            pruned[gi] = 1;
            chosen.push_back(groups[gi]);
            detail::mask_group(net, cfg, groups[gi], res.masks);
        }
        res.plan.per_epoch.push_back(std::move(chosen));
        apply_masks(res.weights, res.masks);

        if (retrain) {
            ModelWeights updated = retrain(res.weights);
            detail::check_congruent(res.weights, updated);
            res.weights = std::move(updated);
            apply_masks(res.weights, res.masks);
        }
    }
    return res;
}

// Unstructured baseline: per layer, per epoch, zero the smallest-magnitude
// weights until ceil(target * (e+1) / epochs * n) of that layer's weights
// are masked. Ties break on flat index.
inline PruneResult uniform_prune(const NetworkSpec& net, const ModelWeights& initial,
                                 double target, int epochs,
                                 const RetrainHook& retrain = nullptr) {
    if (target < 0.0 || target > 1.0) throw Error("prune target must be in [0, 1]");
    if (epochs < 1) throw Error("epochs must be positive");
    net.validate();

    PruneResult res;
    res.weights = initial;
    res.plan.target = target;
    res.plan.epochs = epochs;

    for (int e = 0; e < epochs; ++e) {
        for (const LayerSpec& l : net.layers) {
            if (l.kind != LayerKind::conv) continue;
            const Tensor4& w = res.weights.at(l.name).kernels;
            auto& mask = res.masks.kernel_mask[l.name];
            if (mask.empty()) mask.assign(w.size(), 1);

            const double frac = target * double(e + 1) / double(epochs);
            const size_t want = size_t(std::ceil(frac * double(w.size())));
            size_t have = 0;
            for (uint8_t m : mask) have += !m;
            if (want <= have) continue;

            std::vector<size_t> alive;
            for (size_t i = 0; i < mask.size(); ++i)
                if (mask[i]) alive.push_back(i);
            std::sort(alive.begin(), alive.end(), [&](size_t a, size_t b) {
                const int ma = std::abs(int(w.data[a])), mb = std::abs(int(w.data[b]));
                return ma != mb ? ma < mb : a < b;
            });
            for (size_t i = 0; i < want - have && i < alive.size(); ++i)
                mask[alive[i]] = 0;
        }
        apply_masks(res.weights, res.masks);

        if (retrain) {
            ModelWeights updated = retrain(res.weights);
            detail::check_congruent(res.weights, updated);
            res.weights = std::move(updated);
            apply_masks(res.weights, res.masks);
        }
    }
    return res;
}

struct SparsityRow {
    std::string layer;
    double weight_sparsity = 0.0; // fraction of zero kernel weights
    double group_sparsity = 0.0;  // fraction of all-zero kernel groups
};

inline std::vector<SparsityRow> sparsity_report(const NetworkSpec& net,
                                                const ModelWeights& weights,
                                                const AccelConfig& cfg) {
    std::vector<SparsityRow> rows;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (l.kind != LayerKind::conv) continue;
        const Tensor4& w = weights.at(l.name).kernels;

        size_t zeros = 0;
        for (fixed8 v : w.data) zeros += v == 0;

        const int blocks = (l.out_channels + cfg.n_cu - 1) / cfg.n_cu;
        int zero_groups = 0;
        for (int g = 0; g < l.in_channels; ++g)
            for (int b = 0; b < blocks; ++b)
                if (score_group(net, weights, cfg, {int(i), l.name, g, b}) == 0)
                    ++zero_groups;

        rows.push_back({l.name, double(zeros) / double(w.size()),
                        double(zero_groups) / double(l.in_channels * blocks)});
    }
    return rows;
}

} // namespace accel
