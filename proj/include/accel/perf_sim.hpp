#pragma once

#include <string>
#include <utility>
#include <vector>

#include "accel/cycle_model.hpp"
#include "accel/network.hpp"
#include "accel/reference.hpp"
#include "accel/schedule.hpp"

namespace accel {

struct SimConfig {
    AccelConfig accel;
    int writeback_ports = 1;  // simultaneous SRAM writes per cycle
    int dsb_check_cost = 1;   // cycles to recognize and bypass a zero pass
    int pipeline_fill = -1;   // cycles to fill the array, once per layer; <0 = cu_x + cu_y
    int row_setup_cycles = 2; // dispatcher address-setup pause at each row start

    int fill() const { return pipeline_fill >= 0 ? pipeline_fill : accel.cu_x + accel.cu_y; }
};

struct LayerCycles {
    std::string layer;
    LayerKind kind = LayerKind::conv;
    long long cycles = 0;
    long long steps = 0; // dispatch slots, kNValid cycles each at full rate
    long long dsb_skipped_lanes = 0;
    long long stall_cycles_fifo = 0;
    long long stall_cycles_writeback = 0;
};

struct CycleReport {
    std::vector<LayerCycles> layers;
    int images = 0;
    double clock_mhz = 100.0;
    long long total_ops = 0; // over all images

    long long total_cycles() const {
        long long t = 0;
        for (const auto& l : layers) t += l.cycles;
        return t;
    }
    double seconds() const { return double(total_cycles()) / (clock_mhz * 1e6); }
    double mean_ms_per_image() const {
        return images > 0 ? seconds() * 1e3 / images : 0.0;
    }
    double gops() const {
        const double s = seconds();
        return s > 0 ? double(total_ops) * 1e-9 / s : 0.0;
    }
};

namespace detail {

// Nonzero-count prefix sums per channel over a padded input, so any patch
// can be tested for all-zero in O(1).
struct ZeroMap {
    int n = 0, channels = 0;
    std::vector<int> prefix; // (n+1) x (n+1) per channel

    explicit ZeroMap(const Tensor3& t) : n(t.size_x), channels(t.channels) {
        prefix.assign(size_t(channels) * (n + 1) * (n + 1), 0);
        for (int c = 0; c < channels; ++c) {
            int* p = prefix.data() + size_t(c) * (n + 1) * (n + 1);
            for (int x = 0; x < n; ++x)
                for (int y = 0; y < n; ++y)
                    p[(x + 1) * (n + 1) + (y + 1)] = (t.at(x, y, c) != 0) +
                                                     p[x * (n + 1) + (y + 1)] +
                                                     p[(x + 1) * (n + 1) + y] -
                                                     p[x * (n + 1) + y];
        }
    }
    bool all_zero(int c, int x0, int y0, int rows, int cols) const {
        const int* p = prefix.data() + size_t(c) * (n + 1) * (n + 1);
        const int x1 = x0 + rows, y1 = y0 + cols;
        return p[x1 * (n + 1) + y1] - p[x0 * (n + 1) + y1] - p[x1 * (n + 1) + y0] +
                   p[x0 * (n + 1) + y0] ==
               0;
    }
};

inline long long ceil_div(long long a, long long b) { return (a + b - 1) / b; }

// Elementwise layers stream one element per compute unit per cycle.
inline long long elementwise_cycles(size_t elements, int n_cu) {
    return ceil_div(static_cast<long long>(elements), std::max(n_cu, 1));
}

} // namespace detail

// Event-level simulation of one conv layer. The dispatch stream is grouped
// into the cycle model's slots (p_y per row sweep); a slot costs kNValid
// unless DSB bypasses every lane of every pair in it. The dispatcher issues
// one slot per cycle, pauses row_setup_cycles at row starts, and may run at
// most fifo_depth_data slots ahead of the array. Final writes drain through
// the output FIFO at writeback_ports elements per cycle.
inline LayerCycles simulate_layer(const DispatchStream& stream, const Tensor4& kernels,
                                  const Tensor3& padded_input, const SimConfig& cfg) {
    const ConvGeometry& geom = stream.geom;
    const LayerGeometry lg{geom.n_i, geom.n_if, geom.n_of, geom.k, geom.s};
    const CycleEstimate est = min_cycles(lg, cfg.accel);
    if (!est.feasible) throw ScheduleError("simulate_layer: " + est.note);

    const int out = geom.out();
    const int pairs = geom.pairs_per_row();
    const int p_y = est.p_y;
    const int chunk = int(detail::ceil_div(pairs, p_y));
    const long long total_slots = 1LL * geom.filter_blocks() * geom.n_if * out * p_y;

    const bool dsb = cfg.accel.dsb_enabled;
    std::vector<uint8_t> kernel_zero;
    detail::ZeroMap* zmap = nullptr;
    detail::ZeroMap zmap_storage{Tensor3{}};
    if (dsb) {
        kernel_zero.assign(size_t(geom.n_if) * geom.n_of, 1);
        for (int g = 0; g < geom.n_if; ++g)
            for (int f = 0; f < geom.n_of; ++f) {
                uint8_t z = 1;
                for (int r = 0; r < geom.k && z; ++r)
                    for (int c = 0; c < geom.k; ++c)
                        if (kernels.at(r, c, g, f) != 0) { z = 0; break; }
                kernel_zero[size_t(g) * geom.n_of + f] = z;
            }
        zmap_storage = detail::ZeroMap(padded_input);
        zmap = &zmap_storage;
    }

    LayerCycles lc;
    lc.kind = LayerKind::conv;
    lc.steps = total_slots;

    const int d = cfg.accel.fifo_depth_data;
    const bool fifo_bounded = d < kUnboundedFifo;
    const int depth_out = cfg.accel.fifo_depth_out;
    const bool out_bounded = depth_out < kUnboundedFifo;
    const int ports = cfg.writeback_ports;

    std::vector<long long> finish;
    if (fifo_bounded) finish.assign(size_t(total_slots), 0);

    long long t_disp = 0;
    long long t_comp = cfg.fill();
    long long prev_finish = t_comp;
    long long backlog = 0;
    long long slot_idx = 0;

    for (int fb = 0; fb < geom.filter_blocks(); ++fb) {
        const int f_base = fb * geom.n_cu;
        const int lanes = geom.lanes_active(f_base);
        for (int g = 0; g < geom.n_if; ++g) {
            const bool final_pass = g == geom.n_if - 1;
            for (int p = 0; p < out; ++p) {
                const size_t row_base =
                    ((size_t(fb) * geom.n_if + g) * out + p) * pairs;
                for (int sl = 0; sl < p_y; ++sl) {
                    const int m0 = sl * chunk;
                    const int m1 = std::min(m0 + chunk, pairs);

                    // cost: max over the pairs processed in this slot
                    int cost = (m0 >= m1) ? kNValid : 0;
                    long long writes = 0;
                    for (int m = m0; m < m1; ++m) {
                        const ParallelStep& st = stream.steps[row_base + m];
                        int pair_cost = kNValid;
                        if (dsb) {
                            const int col_span = geom.k + (st.q2 - st.q) * geom.s;
                            if (zmap->all_zero(st.g, st.i, st.j, geom.k, col_span)) {
                                pair_cost = cfg.dsb_check_cost;
                                lc.dsb_skipped_lanes += lanes;
                            } else {
                                int zl = 0;
                                for (int cu = 0; cu < lanes; ++cu)
                                    zl += kernel_zero[size_t(st.g) * geom.n_of + f_base + cu];
                                lc.dsb_skipped_lanes += zl;
                                if (zl == lanes) pair_cost = cfg.dsb_check_cost;
                            }
                        }
                        cost = std::max(cost, pair_cost);
                        if (final_pass) writes += lanes;
                    }
                    if (m0 >= m1) cost = kNValid; // model-mandated dead slot

                    // dispatch: one cycle per slot, setup at row starts,
                    // bounded run-ahead
                    t_disp += (sl == 0 && m0 == 0 ? cfg.row_setup_cycles : 0) + 1;
                    if (fifo_bounded && slot_idx >= d)
                        t_disp = std::max(t_disp, finish[size_t(slot_idx - d)]);

                    const long long start = std::max(t_comp, t_disp);
                    lc.stall_cycles_fifo += std::max(0LL, t_disp - t_comp);
                    long long fin = start + cost;

                    // write-back drain, concurrent with compute
                    const long long cap = ports * (fin - prev_finish);
                    long long pool = backlog + writes;
                    pool -= std::min(pool, cap);
                    if (out_bounded && pool > depth_out) {
                        const long long stall = detail::ceil_div(pool - depth_out, ports);
                        fin += stall;
                        lc.stall_cycles_writeback += stall;
                        pool = std::max(0LL, pool - ports * stall);
                    }
                    backlog = pool;

                    prev_finish = fin;
                    t_comp = fin;
                    if (fifo_bounded) finish[size_t(slot_idx)] = fin;
                    ++slot_idx;
                }
            }
        }
    }
    // remaining writes must land before the next layer can start
    lc.cycles = t_comp + detail::ceil_div(backlog, ports);
    return lc;
}

// Simulates a whole network over a set of input images. Conv layers go
// through the event-level model with the actual inter-layer activations;
// add and pool cost one cycle per output element; activations ride along
// with the conv write-back and cost nothing.
inline CycleReport simulate_network(const NetworkSpec& net, const ModelWeights& weights,
                                    const std::vector<Tensor3>& images,
                                    const SimConfig& cfg) {
    net.validate();
    const auto shapes = net.infer_shapes();

    // per-layer streams are image-independent
    std::vector<DispatchStream> streams(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].kind == LayerKind::conv)
            streams[i] = schedule_conv(net.layers[i], shapes[i].in.x + 2 * net.layers[i].padding,
                                       cfg.accel, /*allow_channel_padding=*/true);

    CycleReport report;
    report.clock_mhz = cfg.accel.clock_mhz;
    report.images = int(images.size());
    report.total_ops = count_operations(net).total() * static_cast<long long>(images.size());
    report.layers.resize(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        report.layers[i].layer = net.layers[i].name;
        report.layers[i].kind = net.layers[i].kind;
    }

    for (const Tensor3& image : images) {
        std::map<std::string, Tensor3> tensors;
        tensors[net.input_name] = image;
        for (size_t i = 0; i < net.layers.size(); ++i) {
            const LayerSpec& l = net.layers[i];
            const Tensor3& in = tensors.at(l.inputs[0]);
            LayerCycles& agg = report.layers[i];
            switch (l.kind) {
            case LayerKind::conv: {
                const ConvWeights& w = weights.at(l.name);
                const Tensor3 padded = pad_tensor(in, l.padding);
                const LayerCycles lc = simulate_layer(streams[i], w.kernels, padded, cfg);
                agg.cycles += lc.cycles;
                agg.steps += lc.steps;
                agg.dsb_skipped_lanes += lc.dsb_skipped_lanes;
                agg.stall_cycles_fifo += lc.stall_cycles_fifo;
                agg.stall_cycles_writeback += lc.stall_cycles_writeback;
                tensors[l.output] = conv2d_reference(
                    in, w.kernels, l.has_bias ? w.bias : BiasVector{}, l.stride, l.padding);
                break;
            }
            case LayerKind::add:
                tensors[l.output] = add_elementwise(in, tensors.at(l.inputs[1]));
                agg.cycles += detail::elementwise_cycles(tensors[l.output].size(),
                                                         cfg.accel.n_cu);
                break;
            case LayerKind::pool:
                tensors[l.output] = pool(in, l.window, l.pool_stride, l.pool_mode);
                agg.cycles += detail::elementwise_cycles(tensors[l.output].size(),
                                                         cfg.accel.n_cu);
                break;
            case LayerKind::activation:
                tensors[l.output] = activate(in, l.act_mode);
                break;
            }
        }
    }
    return report;
}

struct RunComparison {
    std::string label;
    double mean_ms = 0.0;
    double gops = 0.0;
    double speedup = 1.0; // mean-time speedup vs the first run
};

inline std::vector<RunComparison> compare_runs(
    const std::vector<std::pair<std::string, CycleReport>>& runs) {
    if (runs.size() < 2) throw Error("compare_runs: need at least two labeled reports");
    std::vector<RunComparison> rows;
    const double base_ms = runs.front().second.mean_ms_per_image();
    for (const auto& [label, rep] : runs) {
        RunComparison r;
        r.label = label;
        r.mean_ms = rep.mean_ms_per_image();
        r.gops = rep.gops();
        r.speedup = r.mean_ms > 0 ? base_ms / r.mean_ms : 1.0;
        rows.push_back(r);
    }
    return rows;
}

} // namespace accel
