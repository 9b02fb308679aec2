#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <tuple>

#include "accel/pruning.hpp"
#include "accel/reference.hpp"
#include "accel/schedule.hpp"

using namespace accel;

namespace {

NetworkSpec one_conv_net(int size, int n_if, int n_of, int k) {
    NetworkSpec net;
    net.input_name = "in";
    net.input_shape = {size, size, n_if};
    net.output_name = "out";
    net.layers = {LayerSpec{"c", LayerKind::conv, {"in"}, "out", k, 1, 1, n_if, n_of}};
    return net;
}

ModelWeights random_model(const NetworkSpec& net, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 0.5);
    ModelWeights w;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        ConvWeights cw;
        cw.kernels = Tensor4(l.kernel, l.kernel, l.in_channels, l.out_channels);
        for (auto& v : cw.kernels.data) v = quantize(dist(rng), kWeightFormat);
        cw.bias.assign(size_t(l.out_channels), 0);
        w.conv[l.name] = std::move(cw);
    }
    return w;
}

} // namespace

TEST_CASE("group enumeration partitions the conv weights") {
    AccelConfig cfg;
    cfg.n_cu = 12;
    const NetworkSpec net = one_conv_net(8, 12, 12, 3);
    const auto groups = enumerate_groups(net, cfg);
    CHECK(groups.size() == 12); // one per input channel

    cfg.n_cu = 1;
    CHECK(enumerate_groups(net, cfg).size() == 12 * 12);

    NetworkSpec two = net;
    LayerSpec c2 = two.layers[0];
    c2.name = "c2";
    c2.inputs = {"out"};
    c2.output = "out2";
    two.layers.push_back(c2);
    two.output_name = "out2";
    cfg.n_cu = 4;
    const auto both = enumerate_groups(two, cfg);
    CHECK(both.size() == 2 * 12 * 3);
    // disjoint by layer, each (g, block) exactly once
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& g : both) seen.insert({g.layer_id, g.g, g.block});
    CHECK(seen.size() == both.size());
}

TEST_CASE("group score sums absolute codes") {
    AccelConfig cfg;
    cfg.n_cu = 2;
    const NetworkSpec net = one_conv_net(8, 1, 2, 3);
    ModelWeights w;
    w.conv["c"] = {Tensor4(3, 3, 1, 2), BiasVector(2, 0)};

    CHECK(score_group(net, w, cfg, {0, "c", 0, 0}) == 0);

    // every weight = one LSB (0.03125): 18 weights sum to 0.5625
    for (auto& v : w.conv["c"].kernels.data) v = 1;
    const long long s = score_group(net, w, cfg, {0, "c", 0, 0});
    CHECK(s == 18);
    CHECK(double(s) * kWeightFormat.step() == 0.5625);

    // sign flips do not change the score
    w.conv["c"].kernels.at(1, 1, 0, 0) = -1;
    CHECK(score_group(net, w, cfg, {0, "c", 0, 0}) == 18);
}

TEST_CASE("hapm prunes lowest scores first, evenly across epochs") {
    AccelConfig cfg;
    cfg.n_cu = 2;
    const NetworkSpec net = one_conv_net(8, 10, 2, 3); // 10 groups
    ModelWeights w;
    w.conv["c"] = {Tensor4(3, 3, 10, 2), BiasVector(2, 0)};
    // group g gets score 18 * (10 - g): ascending saliency is g = 9, 8, ...
    for (int g = 0; g < 10; ++g)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                for (int f = 0; f < 2; ++f) w.conv["c"].kernels.at(r, c, g, f) = fixed8(10 - g);

    const PruneResult res = run_hapm(net, w, cfg, 0.5, 5);
    CHECK(res.plan.total_groups == 10);
    CHECK(res.plan.pruned_groups() == 5);
    for (const auto& epoch : res.plan.per_epoch) CHECK(epoch.size() == 1);
    // lowest-score groups go first
    CHECK(res.plan.per_epoch[0][0].g == 9);
    CHECK(res.plan.per_epoch[1][0].g == 8);
    CHECK(res.plan.per_epoch[4][0].g == 5);
    // pruned channels are fully zero, the rest untouched
    for (int g = 5; g < 10; ++g)
        for (int f = 0; f < 2; ++f) CHECK(res.weights.at("c").kernels.at(1, 1, g, f) == 0);
    CHECK(res.weights.at("c").kernels.at(1, 1, 0, 0) == 10);
}

TEST_CASE("hapm tie-break is lowest (layer, g, block) first") {
    AccelConfig cfg;
    cfg.n_cu = 1;
    const NetworkSpec net = one_conv_net(8, 2, 2, 3); // 4 equal groups
    ModelWeights w;
    w.conv["c"] = {Tensor4(3, 3, 2, 2), BiasVector(2, 0)};
    for (auto& v : w.conv["c"].kernels.data) v = 3;

    const PruneResult res = run_hapm(net, w, cfg, 0.5, 1);
    REQUIRE(res.plan.per_epoch.size() == 1);
    REQUIRE(res.plan.per_epoch[0].size() == 2);
    CHECK(res.plan.per_epoch[0][0].g == 0);
    CHECK(res.plan.per_epoch[0][0].block == 0);
    CHECK(res.plan.per_epoch[0][1].g == 0);
    CHECK(res.plan.per_epoch[0][1].block == 1);
}

TEST_CASE("retrain hooks cannot resurrect pruned weights") {
    AccelConfig cfg;
    cfg.n_cu = 2;
    const NetworkSpec net = one_conv_net(8, 6, 2, 3);
    const ModelWeights w = random_model(net, 19);

    int calls = 0;
    const RetrainHook rerandomize = [&](const ModelWeights& cur) {
        ++calls;
        ModelWeights next = cur;
        std::mt19937_64 rng(100 + calls);
        std::uniform_int_distribution<int> code(-60, 60);
        for (auto& v : next.at("c").kernels.data) v = fixed8(code(rng));
        return next;
    };

    const PruneResult res = run_hapm(net, w, cfg, 0.5, 3, rerandomize);
    CHECK(calls == 3);
    CHECK(res.plan.pruned_groups() == 3);
    for (const auto& epoch : res.plan.per_epoch)
        for (const KernelGroup& gr : epoch)
            CHECK(score_group(net, res.weights, cfg, gr) == 0);

    // shape-changing hooks are rejected
    const RetrainHook bad = [](const ModelWeights&) {
        ModelWeights m;
        m.conv["c"] = {Tensor4(1, 1, 1, 1), {}};
        return m;
    };
    CHECK_THROWS_AS(run_hapm(net, w, cfg, 0.5, 1, bad), ShapeError);
}

TEST_CASE("uniform pruning zeroes the smallest magnitudes per layer") {
    const NetworkSpec net = one_conv_net(8, 2, 2, 3);
    ModelWeights w;
    w.conv["c"] = {Tensor4(3, 3, 2, 2), BiasVector(2, 0)};
    for (size_t i = 0; i < w.conv["c"].kernels.size(); ++i)
        w.conv["c"].kernels.data[i] = fixed8(int(i % 50) - 25);

    const PruneResult res = uniform_prune(net, w, 0.8, 1);
    const size_t n = w.conv["c"].kernels.size();
    size_t zeros = 0;
    for (auto v : res.weights.at("c").kernels.data) zeros += v == 0;
    CHECK(zeros >= size_t(std::ceil(0.8 * double(n))));

    // kept weights are at least as large as every dropped one
    int max_dropped = 0, min_kept = 127;
    const auto& mask = res.masks.kernel_mask.at("c");
    for (size_t i = 0; i < n; ++i) {
        const int m = std::abs(int(w.conv["c"].kernels.data[i]));
        if (mask[i]) min_kept = std::min(min_kept, m);
        else max_dropped = std::max(max_dropped, m);
    }
    CHECK(max_dropped <= min_kept);

    const PruneResult none = uniform_prune(net, w, 0.0, 3);
    CHECK(none.weights.at("c").kernels.data == w.conv["c"].kernels.data);
}

TEST_CASE("gradual uniform schedule reaches the same endpoint") {
    const NetworkSpec net = one_conv_net(8, 4, 4, 3);
    const ModelWeights w = random_model(net, 23);
    const PruneResult one = uniform_prune(net, w, 0.6, 1);
    const PruneResult five = uniform_prune(net, w, 0.6, 5);
    size_t z1 = 0, z5 = 0;
    for (auto v : one.masks.kernel_mask.at("c")) z1 += !v;
    for (auto v : five.masks.kernel_mask.at("c")) z5 += !v;
    CHECK(z1 == z5);
}

TEST_CASE("sparsity report distinguishes weight and group sparsity") {
    AccelConfig cfg;
    cfg.n_cu = 12;
    const NetworkSpec net = one_conv_net(8, 12, 12, 3);
    const ModelWeights dense = random_model(net, 29);
    const auto rows = sparsity_report(net, dense, cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].weight_sparsity < 0.10); // a few random draws land on zero
    CHECK(rows[0].group_sparsity == 0.0);

    const PruneResult half = run_hapm(net, dense, cfg, 0.5, 1);
    const auto hrows = sparsity_report(net, half.weights, cfg);
    CHECK(hrows[0].group_sparsity == 0.5);
    CHECK(hrows[0].weight_sparsity >= 0.5); // pruned half plus incidental zeros

    ModelWeights zero = dense;
    for (auto& v : zero.at("c").kernels.data) v = 0;
    const auto zrows = sparsity_report(net, zero, cfg);
    CHECK(zrows[0].weight_sparsity == 1.0);
    CHECK(zrows[0].group_sparsity == 1.0);
}

TEST_CASE("pruned models still execute bit-exactly through the schedule") {
    AccelConfig cfg;
    cfg.n_cu = 2;
    const NetworkSpec net = one_conv_net(8, 4, 4, 3);
    const ModelWeights w = random_model(net, 31);
    const PruneResult res = run_hapm(net, w, cfg, 0.5, 2);

    std::mt19937_64 rng(37);
    std::uniform_int_distribution<int> code(-128, 127);
    Tensor3 in(8, 8, 4);
    for (auto& v : in.data) v = fixed8(code(rng));

    const ConvWeights& cw = res.weights.at("c");
    const ConvGeometry geom{10, 4, 4, 3, 1, 2};
    const Tensor3 got = execute_schedule(pad_tensor(in, 1), cw.kernels, cw.bias,
                                         schedule_conv(geom));
    const Tensor3 expect = conv2d_reference(in, cw.kernels, cw.bias, 1, 1);
    CHECK(got.data == expect.data);
}
