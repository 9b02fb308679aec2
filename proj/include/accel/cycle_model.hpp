#pragma once

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "accel/network.hpp"
#include "accel/reference.hpp"
#include "accel/schedule.hpp"

namespace accel {

// Conv layer parameters as the closed-form model sees them. n_i is the
// padded square input size.
struct LayerGeometry {
    int n_i = 0;
    int n_if = 0;
    int n_of = 0;
    int k = 0;
    int s = 1;
};

struct CycleEstimate {
    bool feasible = false;
    long long min_cycles = 0;
    // intermediates, exposed for testability
    int k_o = 0;
    int p_x = 0;
    int p_y = 0;
    int g_cu = 0;
    int g_ky = 0;
    int ratio = 0;
    bool padded_n_of = false; // n_of rounded up to a multiple of n_cu
    bool inexact_p_x = false; // (n_i - k_o) not divisible by s, floored
    std::string note;
};

// Theoretical minimum cycles for one conv layer on one matrix-block config.
// Infeasible geometries (array too short for the kernel/stride) are reported,
// not thrown.
inline CycleEstimate min_cycles(const LayerGeometry& geom, const AccelConfig& cfg) {
    CycleEstimate e;
    e.k_o = std::max(std::abs(geom.k - geom.s), 1);
    const int cu_h = cfg.cu_h();
    e.g_cu = (cu_h - e.k_o) / geom.s;
    if (e.g_cu <= 0) {
        e.note = "array too short: cu_h=" + std::to_string(cu_h) +
                 " cannot cover k=" + std::to_string(geom.k) +
                 " at stride " + std::to_string(geom.s);
        return e;
    }
    e.inexact_p_x = (geom.n_i - e.k_o) % geom.s != 0;
    e.p_x = std::max((geom.n_i - e.k_o) / geom.s, 1); // degenerate 1x1 layers still sweep once
    e.g_ky = std::max(geom.n_i / e.k_o - geom.s, 1);
    e.p_y = (e.g_ky + e.g_cu - 1) / e.g_cu;
    e.padded_n_of = geom.n_of % cfg.n_cu != 0;
    e.ratio = (geom.n_of + cfg.n_cu - 1) / cfg.n_cu;
    e.min_cycles = 1LL * kNValid * e.p_x * e.p_y * geom.n_if * e.ratio;
    e.feasible = true;
    if (e.inexact_p_x) e.note = "p_x floored: (n_i - k_o) not divisible by stride";
    if (e.padded_n_of) e.note += std::string(e.note.empty() ? "" : "; ") +
                                 "n_of padded to a multiple of n_cu";
    return e;
}

struct LayerCycleRow {
    std::string layer;
    LayerGeometry geom;
    CycleEstimate estimate;
};

// Per-conv-layer analytical cycles for a whole network. Non-conv layers cost
// nothing in the theoretical model.
inline std::vector<LayerCycleRow> network_min_cycles(const NetworkSpec& net,
                                                     const AccelConfig& cfg) {
    const auto shapes = net.infer_shapes();
    std::vector<LayerCycleRow> rows;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (l.kind != LayerKind::conv) continue;
        const int padded = shapes[i].in.x + 2 * l.padding;
        LayerGeometry g{padded, l.in_channels, l.out_channels, l.kernel, l.stride};
        rows.push_back({l.name, g, min_cycles(g, cfg)});
    }
    return rows;
}

// Peak throughput of a config on a network, in GOPs at the config's clock.
// Throws if any conv layer is infeasible under cfg.
inline double theoretical_gops(const NetworkSpec& net, const AccelConfig& cfg) {
    long long total_cycles = 0;
    for (const auto& row : network_min_cycles(net, cfg)) {
        if (!row.estimate.feasible)
            throw ScheduleError("layer '" + row.layer + "' infeasible: " + row.estimate.note);
        total_cycles += row.estimate.min_cycles;
    }
    const double seconds = double(total_cycles) / (cfg.clock_mhz * 1e6);
    return count_operations(net).gop() / seconds;
}

struct ExploreRow {
    AccelConfig cfg;
    int dsps = 0; // n_cu * cu_x * cu_y, one DSP per PE
    bool feasible = false;
    long long total_cycles = 0;
    double gops = 0.0;
    std::string note;
};

// Sweep the design space; one row per config, lexicographic by
// (n_cu, cu_x, cu_y, clock). Infeasible configs are flagged, not dropped.
inline std::vector<ExploreRow> explore(const NetworkSpec& net,
                                       const std::vector<int>& n_cu_list,
                                       const std::vector<int>& cu_x_list,
                                       const std::vector<int>& cu_y_list,
                                       const std::vector<double>& clock_list) {
    std::vector<ExploreRow> rows;
    for (int n_cu : n_cu_list)
        for (int cu_x : cu_x_list)
            for (int cu_y : cu_y_list)
                for (double clock : clock_list) {
                    ExploreRow row;
                    row.cfg = AccelConfig{n_cu, cu_x, cu_y};
                    row.cfg.clock_mhz = clock;
                    row.dsps = n_cu * cu_x * cu_y;
                    row.feasible = true;
                    for (const auto& lr : network_min_cycles(net, row.cfg)) {
                        if (!lr.estimate.feasible) {
                            row.feasible = false;
                            row.note = lr.layer + ": " + lr.estimate.note;
                            break;
                        }
                        if (lr.estimate.padded_n_of) row.note = "n_of padded on some layers";
                        row.total_cycles += lr.estimate.min_cycles;
                    }
                    if (row.feasible) {
                        const double seconds = double(row.total_cycles) / (clock * 1e6);
                        row.gops = count_operations(net).gop() / seconds;
                    }
                    rows.push_back(row);
                }
    return rows;
}

} // namespace accel
