#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "accel/cycle_model.hpp"
#include "accel/network.hpp"
#include "accel/perf_sim.hpp"
#include "accel/pruning.hpp"

namespace accel {

inline constexpr int kManifestFormatVersion = 1;

// ---- network <-> json ----

inline nlohmann::json network_to_json(const NetworkSpec& net) {
    nlohmann::json j;
    j["name"] = net.name;
    j["input"] = {{"name", net.input_name},
                  {"shape", {net.input_shape.x, net.input_shape.y, net.input_shape.channels}}};
    j["output"] = net.output_name;
    j["layers"] = nlohmann::json::array();
    for (const LayerSpec& l : net.layers) {
        nlohmann::json lj;
        lj["name"] = l.name;
        lj["inputs"] = l.inputs;
        lj["output"] = l.output;
        switch (l.kind) {
        case LayerKind::conv:
            lj["kind"] = "conv";
            lj["kernel"] = l.kernel;
            lj["stride"] = l.stride;
            lj["padding"] = l.padding;
            lj["in_channels"] = l.in_channels;
            lj["out_channels"] = l.out_channels;
            lj["bias"] = l.has_bias;
            break;
        case LayerKind::add: lj["kind"] = "add"; break;
        case LayerKind::pool:
            lj["kind"] = "pool";
            lj["mode"] = l.pool_mode == PoolMode::max ? "max" : "average";
            lj["window"] = l.window;
            lj["stride"] = l.pool_stride;
            break;
        case LayerKind::activation:
            lj["kind"] = "activation";
            lj["mode"] = l.act_mode == ActMode::relu ? "relu" : "identity";
            break;
        }
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
    try {
        NetworkSpec net;
        net.name = j.value("name", "");
        net.input_name = j.at("input").at("name").get<std::string>();
        const auto& sh = j.at("input").at("shape");
        net.input_shape = {sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()};
        net.output_name = j.at("output").get<std::string>();
        for (const auto& lj : j.at("layers")) {
            LayerSpec l;
            l.name = lj.at("name").get<std::string>();
            l.inputs = lj.at("inputs").get<std::vector<std::string>>();
            l.output = lj.at("output").get<std::string>();
            const std::string kind = lj.at("kind").get<std::string>();
            if (kind == "conv") {
                l.kind = LayerKind::conv;
                l.kernel = lj.at("kernel").get<int>();
                l.stride = lj.value("stride", 1);
                l.padding = lj.value("padding", 0);
                l.in_channels = lj.at("in_channels").get<int>();
                l.out_channels = lj.at("out_channels").get<int>();
                l.has_bias = lj.value("bias", true);
            } else if (kind == "add") {
                l.kind = LayerKind::add;
            } else if (kind == "pool") {
                l.kind = LayerKind::pool;
                const std::string mode = lj.at("mode").get<std::string>();
                if (mode != "max" && mode != "average")
                    throw IoError("unknown pool mode '" + mode + "'");
                l.pool_mode = mode == "max" ? PoolMode::max : PoolMode::average;
                l.window = lj.at("window").get<int>();
                l.pool_stride = lj.at("stride").get<int>();
            } else if (kind == "activation") {
                l.kind = LayerKind::activation;
                const std::string mode = lj.value("mode", "relu");
                if (mode != "relu" && mode != "identity")
                    throw IoError("unknown activation mode '" + mode + "'");
                l.act_mode = mode == "relu" ? ActMode::relu : ActMode::identity;
            } else {
                throw IoError("unknown layer kind '" + kind + "' at layer '" + l.name + "'");
            }
            net.layers.push_back(std::move(l));
        }
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed network description: ") + e.what());
    }
}

inline NetworkSpec load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    return network_from_json(j);
}

inline void save_network(const NetworkSpec& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write network file '" + path + "'");
    out << network_to_json(net).dump(2) << '\n';
}

// ---- weight / mask blobs ----
// Layout: for each conv layer in network order, the kernel tensor in its
// storage order, then the bias vector if the layer has one. Raw int8 codes.

inline std::vector<int8_t> pack_weights(const NetworkSpec& net, const ModelWeights& weights) {
    std::vector<int8_t> blob;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        const ConvWeights& w = weights.at(l.name);
        const Tensor4 shape(l.kernel, l.kernel, l.in_channels, l.out_channels);
        if (!w.kernels.same_shape(shape))
            throw IoError("layer '" + l.name + "': kernel tensor does not match the network description");
        if (l.has_bias && int(w.bias.size()) != l.out_channels)
            throw IoError("layer '" + l.name + "': bias length mismatch");
        blob.insert(blob.end(), w.kernels.data.begin(), w.kernels.data.end());
        if (l.has_bias) blob.insert(blob.end(), w.bias.begin(), w.bias.end());
    }
    return blob;
}

inline ModelWeights unpack_weights(const NetworkSpec& net, const std::vector<int8_t>& blob) {
    ModelWeights weights;
    size_t off = 0;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        ConvWeights w;
        w.kernels = Tensor4(l.kernel, l.kernel, l.in_channels, l.out_channels);
        const size_t kn = w.kernels.size();
        const size_t bn = l.has_bias ? size_t(l.out_channels) : 0;
        if (off + kn + bn > blob.size())
            throw IoError("weight blob truncated at layer '" + l.name + "': need " +
                          std::to_string(kn + bn) + " bytes at offset " + std::to_string(off) +
                          ", blob has " + std::to_string(blob.size()));
        std::copy(blob.begin() + off, blob.begin() + off + kn, w.kernels.data.begin());
        off += kn;
        if (l.has_bias) {
            w.bias.assign(blob.begin() + off, blob.begin() + off + bn);
            off += bn;
        }
        weights.conv[l.name] = std::move(w);
    }
    if (off != blob.size())
        throw IoError("weight blob has " + std::to_string(blob.size() - off) +
                      " trailing bytes past offset " + std::to_string(off));
    return weights;
}

inline std::vector<uint8_t> pack_masks(const NetworkSpec& net, const WeightMasks& masks) {
    std::vector<uint8_t> blob;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        const size_t kn = size_t(l.kernel) * l.kernel * l.in_channels * l.out_channels;
        auto it = masks.kernel_mask.find(l.name);
        if (it == masks.kernel_mask.end()) {
            blob.insert(blob.end(), kn, uint8_t{1});
        } else {
            if (it->second.size() != kn)
                throw IoError("layer '" + l.name + "': mask size mismatch");
            blob.insert(blob.end(), it->second.begin(), it->second.end());
        }
    }
    return blob;
}

inline WeightMasks unpack_masks(const NetworkSpec& net, const std::vector<uint8_t>& blob) {
    WeightMasks masks;
    size_t off = 0;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        const size_t kn = size_t(l.kernel) * l.kernel * l.in_channels * l.out_channels;
        if (off + kn > blob.size())
            throw IoError("mask blob truncated at layer '" + l.name + "': need " +
                          std::to_string(kn) + " bytes at offset " + std::to_string(off));
        masks.kernel_mask[l.name].assign(blob.begin() + off, blob.begin() + off + kn);
        off += kn;
    }
    if (off != blob.size())
        throw IoError("mask blob has trailing bytes past offset " + std::to_string(off));
    return masks;
}

namespace detail {

template <typename Byte>
inline std::vector<Byte> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<Byte> bytes;
    in.seekg(0, std::ios::end);
    bytes.resize(size_t(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in) throw IoError("short read on '" + path + "'");
    return bytes;
}

template <typename Byte>
inline void write_bytes(const std::string& path, const std::vector<Byte>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write on '" + path + "'");
}

inline void put_u32(std::ostream& os, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("truncated header in '" + path + "'");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

} // namespace detail

// ---- model bundles ----

struct LoadedModel {
    NetworkSpec net;
    ModelWeights weights; // masks already applied
    WeightMasks masks;    // empty when the bundle carries none
};

// Writes <manifest>, <stem>.weights.bin and, when masks are present,
// <stem>.masks.bin next to it. The network is embedded in the manifest.
inline void save_model(const std::string& manifest_path, const NetworkSpec& net,
                       const ModelWeights& weights, const WeightMasks& masks = {}) {
    namespace fs = std::filesystem;
    const fs::path mp(manifest_path);
    const std::string stem = mp.stem().string();
    const std::string weight_name = stem + ".weights.bin";
    const std::string mask_name = stem + ".masks.bin";
    const fs::path dir = mp.parent_path();

    nlohmann::json j;
    j["format_version"] = kManifestFormatVersion;
    j["network"] = network_to_json(net);
    j["quantization"] = {
        {"weights", {{"total_bits", kWeightFormat.total_bits}, {"frac_bits", kWeightFormat.frac_bits}}},
        {"activations", {{"total_bits", kActFormat.total_bits}, {"frac_bits", kActFormat.frac_bits}}}};
    j["weight_blob"] = weight_name;
    detail::write_bytes((dir / weight_name).string(), pack_weights(net, weights));
    if (!masks.empty()) {
        j["mask_blob"] = mask_name;
        detail::write_bytes((dir / mask_name).string(), pack_masks(net, masks));
    }

    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write manifest '" + manifest_path + "'");
    out << j.dump(2) << '\n';
}

inline LoadedModel load_model(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse manifest '" + manifest_path + "': " + e.what());
    }

    try {
        const int ver = j.at("format_version").get<int>();
        if (ver != kManifestFormatVersion)
            throw IoError("manifest '" + manifest_path + "' has format_version " +
                          std::to_string(ver) + ", expected " +
                          std::to_string(kManifestFormatVersion));

        const fs::path dir = fs::path(manifest_path).parent_path();
        LoadedModel model;
        if (j.contains("network"))
            model.net = network_from_json(j.at("network"));
        else if (j.contains("network_file"))
            model.net = load_network((dir / j.at("network_file").get<std::string>()).string());
        else
            throw IoError("manifest '" + manifest_path + "' carries no network");

        const auto& q = j.at("quantization");
        const FixedPointFormat wf{q.at("weights").at("total_bits").get<int>(),
                                  q.at("weights").at("frac_bits").get<int>()};
        const FixedPointFormat af{q.at("activations").at("total_bits").get<int>(),
                                  q.at("activations").at("frac_bits").get<int>()};
        if (!(wf == kWeightFormat) || !(af == kActFormat))
            throw IoError("manifest '" + manifest_path +
                          "' declares an unsupported quantization scheme");

        const std::string wname = j.at("weight_blob").get<std::string>();
        model.weights = unpack_weights(
            model.net, detail::read_bytes<int8_t>((dir / wname).string()));
        if (j.contains("mask_blob")) {
            const std::string mname = j.at("mask_blob").get<std::string>();
            model.masks = unpack_masks(
                model.net, detail::read_bytes<uint8_t>((dir / mname).string()));
            apply_masks(model.weights, model.masks);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + manifest_path + "': " + e.what());
    }
}

// ---- image records ----
// Binary file: magic "IMG1", u32 count/width/height/channels, u8 has_labels,
// then count images of width*height*channels int8 codes in tensor storage
// order, then count u8 labels when present. All integers little endian.

struct ImageSet {
    std::vector<Tensor3> images;
    std::vector<uint8_t> labels; // empty when the file has none
};

inline void save_images(const std::string& path, const ImageSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file '" + path + "'");
    const bool labelled = !set.labels.empty();
    if (labelled && set.labels.size() != set.images.size())
        throw IoError("label count does not match image count");
    const Tensor3& first = set.images.empty() ? Tensor3{} : set.images.front();
    out.write("IMG1", 4);
    detail::put_u32(out, uint32_t(set.images.size()));
    detail::put_u32(out, uint32_t(first.size_x));
    detail::put_u32(out, uint32_t(first.size_y));
    detail::put_u32(out, uint32_t(first.channels));
    out.put(labelled ? 1 : 0);
    for (const Tensor3& img : set.images) {
        if (!img.same_shape(first)) throw IoError("images in a set must share one shape");
        out.write(reinterpret_cast<const char*>(img.data.data()),
                  std::streamsize(img.data.size()));
    }
    if (labelled)
        out.write(reinterpret_cast<const char*>(set.labels.data()),
                  std::streamsize(set.labels.size()));
    if (!out) throw IoError("short write on '" + path + "'");
}

// Loads [first, first + count) from the file; count < 0 means "to the end".
inline ImageSet load_images(const std::string& path, int first = 0, int count = -1) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "IMG1")
        throw IoError("'" + path + "' is not an image record file");
    const uint32_t total = detail::get_u32(in, path);
    const uint32_t w = detail::get_u32(in, path);
    const uint32_t h = detail::get_u32(in, path);
    const uint32_t c = detail::get_u32(in, path);
    const int labelled = in.get();
    if (labelled != 0 && labelled != 1)
        throw IoError("corrupt header in '" + path + "'");
    if (first < 0 || uint32_t(first) > total)
        throw IoError("image range starts past the end of '" + path + "'");
    const uint32_t n = count < 0 ? total - uint32_t(first)
                                 : std::min<uint32_t>(uint32_t(count), total - uint32_t(first));

    const size_t img_bytes = size_t(w) * h * c;
    ImageSet set;
    in.seekg(std::streamoff(21 + size_t(first) * img_bytes));
    for (uint32_t i = 0; i < n; ++i) {
        Tensor3 img{int(w), int(h), int(c)};
        in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img_bytes));
        if (!in)
            throw IoError("image file '" + path + "' truncated at image " +
                          std::to_string(first + int(i)));
        set.images.push_back(std::move(img));
    }
    if (labelled) {
        in.seekg(std::streamoff(21 + size_t(total) * img_bytes + size_t(first)));
        set.labels.resize(n);
        in.read(reinterpret_cast<char*>(set.labels.data()), std::streamsize(n));
        if (!in) throw IoError("image file '" + path + "' truncated in the label block");
    }
    return set;
}

// ---- csv ----

inline void write_cycle_report_csv(std::ostream& os, const CycleReport& rep) {
    os << "layer,kind,cycles,steps,dsb_skipped_lanes,stall_cycles_fifo,stall_cycles_writeback\n";
    const auto kind_name = [](LayerKind k) {
        switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::add: return "add";
        case LayerKind::pool: return "pool";
        default: return "activation";
        }
    };
    for (const LayerCycles& l : rep.layers)
        os << l.layer << ',' << kind_name(l.kind) << ',' << l.cycles << ',' << l.steps << ','
           << l.dsb_skipped_lanes << ',' << l.stall_cycles_fifo << ','
           << l.stall_cycles_writeback << '\n';
    os << "images," << rep.images << '\n';
    os << "clock_mhz," << rep.clock_mhz << '\n';
    os << "total_ops," << rep.total_ops << '\n';
    os << "total_cycles," << rep.total_cycles() << '\n';
    os << std::setprecision(9) << "seconds," << rep.seconds() << '\n';
    os << "mean_ms_per_image," << rep.mean_ms_per_image() << '\n';
    os << "gops," << rep.gops() << '\n';
}

// Parses a file produced by write_cycle_report_csv. The derived summary
// lines are recomputed, not trusted.
inline CycleReport read_cycle_report_csv(std::istream& is, const std::string& name) {
    CycleReport rep;
    std::string line;
    if (!std::getline(is, line) || line.rfind("layer,kind,", 0) != 0)
        throw IoError("'" + name + "' is not a cycle report");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        try {
            if (f.size() == 7) {
                LayerCycles l;
                l.layer = f[0];
                l.kind = f[1] == "conv"   ? LayerKind::conv
                         : f[1] == "add"  ? LayerKind::add
                         : f[1] == "pool" ? LayerKind::pool
                                          : LayerKind::activation;
                l.cycles = std::stoll(f[2]);
                l.steps = std::stoll(f[3]);
                l.dsb_skipped_lanes = std::stoll(f[4]);
                l.stall_cycles_fifo = std::stoll(f[5]);
                l.stall_cycles_writeback = std::stoll(f[6]);
                rep.layers.push_back(std::move(l));
            } else if (f.size() == 2) {
                if (f[0] == "images") rep.images = std::stoi(f[1]);
                else if (f[0] == "clock_mhz") rep.clock_mhz = std::stod(f[1]);
                else if (f[0] == "total_ops") rep.total_ops = std::stoll(f[1]);
                // derived rows are ignored
            } else {
                throw IoError("'" + name + "': unrecognized row '" + line + "'");
            }
        } catch (const std::logic_error&) {
            throw IoError("'" + name + "': bad number in row '" + line + "'");
        }
    }
    return rep;
}

inline void write_explore_csv(std::ostream& os, const std::vector<ExploreRow>& rows) {
    os << "n_cu,cu_x,cu_y,dsps,clock_mhz,feasible,total_cycles,gops,note\n";
    for (const ExploreRow& r : rows)
        os << r.cfg.n_cu << ',' << r.cfg.cu_x << ',' << r.cfg.cu_y << ',' << r.dsps << ','
           << r.cfg.clock_mhz << ',' << (r.feasible ? 1 : 0) << ',' << r.total_cycles << ','
           << std::setprecision(9) << r.gops << ',' << r.note << '\n';
}

inline void write_sparsity_csv(std::ostream& os, const std::vector<SparsityRow>& rows) {
    os << "layer,weight_sparsity,group_sparsity\n";
    for (const SparsityRow& r : rows)
        os << r.layer << ',' << std::setprecision(6) << r.weight_sparsity << ','
           << r.group_sparsity << '\n';
}

} // namespace accel
