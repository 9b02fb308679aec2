// accel: operator front end. Subcommands: verify, cycles, explore, simulate,
// prune, quantize, report. Exit codes: 0 ok, 1 verification failure, 2 usage,
// 3 I/O. Data goes to stdout or --out files; logs go to stderr.

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "accel/accel.hpp"

namespace {

using namespace accel;

// "2,4,6" or "2..16", or a mix of comma-separated ranges
std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dots = part.find("..");
        if (dots != std::string::npos) {
            const int lo = std::stoi(part.substr(0, dots));
            const int hi = std::stoi(part.substr(dots + 2));
            for (int v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(std::stoi(part));
        }
    }
    if (out.empty()) throw CLI::ValidationError("empty integer list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
    if (out.empty()) throw CLI::ValidationError("empty list");
    return out;
}

// A model argument is either a manifest (weights included) or a bare network
// description (weights default to zero).
LoadedModel load_model_arg(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    if (j.contains("format_version")) return load_model(path);
    LoadedModel m;
    m.net = network_from_json(j);
    return m;
}

ModelWeights random_weights(const NetworkSpec& net, uint64_t seed, double sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    ModelWeights w;
    for (const LayerSpec& l : net.layers) {
        if (l.kind != LayerKind::conv) continue;
        ConvWeights cw;
        cw.kernels = Tensor4(l.kernel, l.kernel, l.in_channels, l.out_channels);
        for (auto& v : cw.kernels.data) v = quantize(dist(rng), kWeightFormat);
        if (l.has_bias) {
            cw.bias.resize(size_t(l.out_channels));
            for (auto& v : cw.bias) v = quantize(dist(rng), kWeightFormat);
        }
        w.conv[l.name] = std::move(cw);
    }
    return w;
}

std::vector<Tensor3> synthetic_images(const TensorShape& shape, int count, uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Tensor3> images;
    for (int i = 0; i < count; ++i) {
        Tensor3 img(shape.x, shape.y, shape.channels);
        for (auto& v : img.data) v = quantize(dist(rng), kActFormat);
        images.push_back(std::move(img));
    }
    return images;
}

std::vector<Tensor3> resolve_images(const std::string& images_path, int first, int count,
                                    const NetworkSpec& net, uint64_t seed) {
    if (!images_path.empty()) {
        ImageSet set = load_images(images_path, first, count);
        for (const Tensor3& img : set.images)
            if (img.size_x != net.input_shape.x || img.size_y != net.input_shape.y ||
                img.channels != net.input_shape.channels)
                throw IoError("image shape does not match the network input");
        return std::move(set.images);
    }
    return synthetic_images(net.input_shape, count, seed);
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw IoError("cannot write '" + path + "'");
    return file;
}

int cmd_verify(const LoadedModel& model, const std::string& images_path, int first,
               int count, uint64_t seed, const AccelConfig& cfg) {
    const auto images = resolve_images(images_path, first, count, model.net, seed);
    if (images.empty()) {
        std::cout << "0 images, nothing to verify\n";
        return 0;
    }
    const auto shapes = model.net.infer_shapes();
    long long checked = 0;
    for (size_t n = 0; n < images.size(); ++n) {
        std::map<std::string, Tensor3> tensors;
        tensors[model.net.input_name] = images[n];
        for (size_t i = 0; i < model.net.layers.size(); ++i) {
            const LayerSpec& l = model.net.layers[i];
            const Tensor3& in = tensors.at(l.inputs[0]);
            switch (l.kind) {
            case LayerKind::conv: {
                const ConvWeights& w = model.weights.at(l.name);
                const BiasVector& bias = l.has_bias ? w.bias : BiasVector{};
                const Tensor3 expected = conv2d_reference(in, w.kernels, bias, l.stride, l.padding);
                const auto stream = schedule_conv(l, shapes[i].in.x + 2 * l.padding, cfg, true);
                const Tensor3 got =
                    execute_schedule(pad_tensor(in, l.padding), w.kernels, bias, stream);
                for (int x = 0; x < expected.size_x; ++x)
                    for (int y = 0; y < expected.size_y; ++y)
                        for (int c = 0; c < expected.channels; ++c)
                            if (expected.at(x, y, c) != got.at(x, y, c)) {
                                std::cout << "MISMATCH image " << n << " layer " << l.name
                                          << " at (" << x << ',' << y << ',' << c
                                          << "): scheduled " << int(got.at(x, y, c))
                                          << " reference " << int(expected.at(x, y, c)) << '\n';
                                return 1;
                            }
                tensors[l.output] = expected;
                ++checked;
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
    }
    std::cout << "OK: " << checked << " conv layer executions bit-identical over "
              << images.size() << " images\n";
    return 0;
}

int cmd_cycles(const NetworkSpec& net, const AccelConfig& cfg) {
    const auto rows = network_min_cycles(net, cfg);
    std::cout << "layer,n_i,k,s,k_o,p_x,p_y,ratio,min_cycles,note\n";
    long long total = 0;
    bool all_feasible = true;
    for (const auto& r : rows) {
        std::cout << r.layer << ',' << r.geom.n_i << ',' << r.geom.k << ',' << r.geom.s << ',';
        if (r.estimate.feasible) {
            std::cout << r.estimate.k_o << ',' << r.estimate.p_x << ',' << r.estimate.p_y << ','
                      << r.estimate.ratio << ',' << r.estimate.min_cycles << ',' << r.estimate.note
                      << '\n';
            total += r.estimate.min_cycles;
        } else {
            std::cout << ",,,,infeasible," << r.estimate.note << '\n';
            all_feasible = false;
        }
    }
    std::cout << "total_cycles," << total << '\n';
    if (!all_feasible) {
        std::cerr << "some layers cannot be mapped onto this configuration\n";
        return 1;
    }
    const double seconds = double(total) / (cfg.clock_mhz * 1e6);
    std::cout << "gops," << count_operations(net).gop() / seconds << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    using namespace accel;
    CLI::App app{"fixed-point CNN accelerator model: schedules, cycle models, pruning"};
    app.require_subcommand(1);

    std::string model_path, images_path, out_path, net_path, float_blob;
    int count = 1, first = 0, epochs = 5;
    uint64_t seed = 0;
    double sparsity = 0.5, sigma = 0.5;
    AccelConfig cfg;
    cfg.n_cu = 12;
    std::string dsb = "off", method = "hapm";
    std::string ncu_list = "12", cux_list = "2", cuy_list = "3", clock_list = "100";
    int wb_ports = 1;
    std::vector<std::string> report_files;

    const auto add_grid = [&](CLI::App* c) {
        c->add_option("--ncu", cfg.n_cu, "parallel computation-unit matrices");
        c->add_option("--cux", cfg.cu_x, "array width");
        c->add_option("--cuy", cfg.cu_y, "array height");
        c->add_option("--clock", cfg.clock_mhz, "clock in MHz");
    };

    auto* verify = app.add_subcommand("verify", "scheduled execution vs reference, bit exact");
    verify->add_option("--model", model_path)->required();
    verify->add_option("--images", images_path, "image record file; omit for synthetic inputs");
    verify->add_option("--count", count);
    verify->add_option("--first", first);
    verify->add_option("--seed", seed);
    add_grid(verify);

    auto* cycles = app.add_subcommand("cycles", "closed-form per-layer cycle table");
    cycles->add_option("--model", model_path)->required();
    add_grid(cycles);

    auto* explore_cmd = app.add_subcommand("explore", "design-space sweep to CSV");
    explore_cmd->add_option("--model", model_path)->required();
    explore_cmd->add_option("--ncu", ncu_list, "list/range, e.g. 2..16 or 2,4,8");
    explore_cmd->add_option("--cux", cux_list);
    explore_cmd->add_option("--cuy", cuy_list);
    explore_cmd->add_option("--clock", clock_list);
    explore_cmd->add_option("--out", out_path);

    auto* simulate = app.add_subcommand("simulate", "event-level cycle simulation to CSV");
    simulate->add_option("--model", model_path)->required();
    simulate->add_option("--images", images_path);
    simulate->add_option("--count", count);
    simulate->add_option("--first", first);
    simulate->add_option("--seed", seed);
    simulate->add_option("--dsb", dsb)->check(CLI::IsMember({"on", "off"}));
    simulate->add_option("--fifo-depth", cfg.fifo_depth_data);
    simulate->add_option("--fifo-depth-out", cfg.fifo_depth_out);
    simulate->add_option("--writeback-ports", wb_ports);
    simulate->add_option("--out", out_path);
    add_grid(simulate);

    auto* prune = app.add_subcommand("prune", "prune a model, write a new manifest");
    prune->add_option("--model", model_path)->required();
    prune->add_option("--method", method)->check(CLI::IsMember({"hapm", "uniform"}));
    prune->add_option("--sparsity", sparsity, "target fraction");
    prune->add_option("--epochs", epochs);
    prune->add_option("--ncu", cfg.n_cu, "group width for structured pruning");
    prune->add_option("--out", out_path)->required();

    auto* quantize_cmd = app.add_subcommand("quantize", "build a quantized model manifest");
    quantize_cmd->add_option("--net", net_path, "network description")->required();
    quantize_cmd->add_option("--float-blob", float_blob,
                             "float32 LE weights in blob order; omit for random init");
    quantize_cmd->add_option("--sigma", sigma, "stddev for random init");
    quantize_cmd->add_option("--seed", seed);
    quantize_cmd->add_option("--out", out_path)->required();

    auto* report = app.add_subcommand("report", "compare simulation CSVs");
    report->add_option("files", report_files, "two or more cycle-report CSVs")
        ->required()
        ->expected(2, -1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*verify || *cycles || *simulate) {
            cfg.dsb_enabled = dsb == "on";
            std::cerr << "config: n_cu=" << cfg.n_cu << " cu_x=" << cfg.cu_x
                      << " cu_y=" << cfg.cu_y << " clock=" << cfg.clock_mhz
                      << "MHz dsb=" << dsb << " fifo=" << cfg.fifo_depth_data << '/'
                      << cfg.fifo_depth_out << " ports=" << wb_ports << " seed=" << seed
                      << '\n';
        }

        if (*verify) {
            const LoadedModel model = load_model_arg(model_path);
            return cmd_verify(model, images_path, first, count, seed, cfg);
        }
        if (*cycles) {
            return cmd_cycles(load_model_arg(model_path).net, cfg);
        }
        if (*explore_cmd) {
            std::cerr << "config: ncu={" << ncu_list << "} cux={" << cux_list << "} cuy={"
                      << cuy_list << "} clock={" << clock_list << "}\n";
            const NetworkSpec net = load_model_arg(model_path).net;
            const auto rows = explore(net, parse_int_list(ncu_list), parse_int_list(cux_list),
                                      parse_int_list(cuy_list), parse_double_list(clock_list));
            std::ofstream file;
            write_explore_csv(open_out(out_path, file), rows);
            return 0;
        }
        if (*simulate) {
            const LoadedModel model = load_model_arg(model_path);
            const auto images = resolve_images(images_path, first, count, model.net, seed);
            SimConfig sim;
            sim.accel = cfg;
            sim.writeback_ports = wb_ports;
            const CycleReport rep = simulate_network(model.net, model.weights, images, sim);
            std::ofstream file;
            write_cycle_report_csv(open_out(out_path, file), rep);
            std::cerr << "total_cycles=" << rep.total_cycles() << " mean_ms="
                      << rep.mean_ms_per_image() << " gops=" << rep.gops() << '\n';
            return 0;
        }
        if (*prune) {
            std::cerr << "config: method=" << method << " sparsity=" << sparsity
                      << " epochs=" << epochs << " n_cu=" << cfg.n_cu << '\n';
            const LoadedModel model = load_model_arg(model_path);
            const PruneResult res =
                method == "hapm"
                    ? run_hapm(model.net, model.weights, cfg, sparsity, epochs)
                    : uniform_prune(model.net, model.weights, sparsity, epochs);
            save_model(out_path, model.net, res.weights, res.masks);
            write_sparsity_csv(std::cerr, sparsity_report(model.net, res.weights, cfg));
            std::cerr << "wrote " << out_path << '\n';
            return 0;
        }
        if (*quantize_cmd) {
            std::cerr << "config: net=" << net_path << " seed=" << seed
                      << " init=" << (float_blob.empty() ? "random" : float_blob) << '\n';
            const NetworkSpec net = load_network(net_path);
            ModelWeights w;
            if (float_blob.empty()) {
                w = random_weights(net, seed, sigma);
            } else {
                std::ifstream in(float_blob, std::ios::binary);
                if (!in) throw IoError("cannot open '" + float_blob + "'");
                std::vector<float> floats;
                float v;
                while (in.read(reinterpret_cast<char*>(&v), sizeof v)) floats.push_back(v);
                size_t off = 0;
                const auto take = [&](size_t n, const std::string& layer) {
                    if (off + n > floats.size())
                        throw IoError("float blob truncated at layer '" + layer + "'");
                    const size_t s = off;
                    off += n;
                    return s;
                };
                for (const LayerSpec& l : net.layers) {
                    if (l.kind != LayerKind::conv) continue;
                    ConvWeights cw;
                    cw.kernels = Tensor4(l.kernel, l.kernel, l.in_channels, l.out_channels);
                    size_t s = take(cw.kernels.size(), l.name);
                    for (size_t i = 0; i < cw.kernels.size(); ++i)
                        cw.kernels.data[i] = quantize(floats[s + i], kWeightFormat);
                    if (l.has_bias) {
                        s = take(size_t(l.out_channels), l.name);
                        cw.bias.resize(size_t(l.out_channels));
                        for (size_t i = 0; i < cw.bias.size(); ++i)
                            cw.bias[i] = quantize(floats[s + i], kWeightFormat);
                    }
                    w.conv[l.name] = std::move(cw);
                }
                if (off != floats.size())
                    throw IoError("float blob has trailing values past offset " +
                                  std::to_string(off));
            }
            save_model(out_path, net, w);
            std::cerr << "wrote " << out_path << '\n';
            return 0;
        }
        if (*report) {
            std::vector<std::pair<std::string, CycleReport>> runs;
            for (const std::string& f : report_files) {
                std::ifstream in(f);
                if (!in) throw IoError("cannot open '" + f + "'");
                runs.push_back({std::filesystem::path(f).stem().string(),
                                read_cycle_report_csv(in, f)});
            }
            std::cout << "label,mean_ms_per_image,gops,speedup\n";
            for (const RunComparison& r : compare_runs(runs))
                std::cout << r.label << ',' << r.mean_ms << ',' << r.gops << ',' << r.speedup
                          << '\n';
            return 0;
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
