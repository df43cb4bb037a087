#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "twostream/nn.hpp"
#include "twostream/rng.hpp"
#include "twostream/schedule.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

// Layer descriptors are symbolic: they size toy networks, drive the forward
// and backward engine, and feed the communication model's byte counting.

struct ConvLayer {
    std::size_t in_ch, out_ch, kernel;
    std::size_t stride = 1, pad = 0;
};
struct PoolLayer {
    std::size_t window, stride;
};
struct ReluLayer {};
struct DropoutLayer {
    double ratio;
};
struct LinearLayer {
    std::size_t in_dim, out_dim;
};
struct SoftmaxLayer {};

using LayerDesc =
    std::variant<ConvLayer, PoolLayer, ReluLayer, DropoutLayer, LinearLayer, SoftmaxLayer>;

struct LayerLayout {
    std::vector<LayerDesc> layers;
};

inline std::size_t layer_param_count(const LayerDesc& d) {
    if (const auto* c = std::get_if<ConvLayer>(&d)) {
        return c->kernel * c->kernel * c->in_ch * c->out_ch + c->out_ch;
    }
    if (const auto* l = std::get_if<LinearLayer>(&d)) {
        return l->in_dim * l->out_dim + l->out_dim;
    }
    return 0;
}

struct ParamCounts {
    std::vector<std::size_t> per_layer;
    std::size_t total = 0;
    std::size_t conv = 0;
    std::size_t linear = 0;
};

inline ParamCounts param_count(const LayerLayout& layout) {
    ParamCounts counts;
    for (const LayerDesc& d : layout.layers) {
        std::size_t n = layer_param_count(d);
        counts.per_layer.push_back(n);
        counts.total += n;
        if (std::holds_alternative<ConvLayer>(d)) counts.conv += n;
        if (std::holds_alternative<LinearLayer>(d)) counts.linear += n;
    }
    return counts;
}

// Walks (C, H, W) activations through the layout and rejects the first layer
// whose dims do not chain; returns the flattened dim feeding each linear.
inline std::size_t validate_layout(const LayerLayout& layout, std::size_t in_ch,
                                   std::size_t in_h, std::size_t in_w) {
    std::size_t c = in_ch, h = in_h, w = in_w;
    bool flattened = false;
    std::size_t flat = 0;
    for (std::size_t i = 0; i < layout.layers.size(); ++i) {
        const LayerDesc& d = layout.layers[i];
        auto fail = [&](const std::string& why) {
            throw ShapeError("layout broken at layer " + std::to_string(i) + ": " + why);
        };
        if (const auto* conv = std::get_if<ConvLayer>(&d)) {
            if (flattened) fail("conv after flatten");
            if (conv->in_ch != c) {
                fail("conv expects " + std::to_string(conv->in_ch) + " channels, gets " +
                     std::to_string(c));
            }
            std::size_t ph = h + 2 * conv->pad, pw = w + 2 * conv->pad;
            if (ph < conv->kernel || pw < conv->kernel) fail("kernel larger than input");
            h = (ph - conv->kernel) / conv->stride + 1;
            w = (pw - conv->kernel) / conv->stride + 1;
            c = conv->out_ch;
        } else if (const auto* pool = std::get_if<PoolLayer>(&d)) {
            if (flattened) fail("pool after flatten");
            if (pool->window > h || pool->window > w) fail("pool window larger than input");
            h = (h - pool->window) / pool->stride + 1;
            w = (w - pool->window) / pool->stride + 1;
        } else if (const auto* lin = std::get_if<LinearLayer>(&d)) {
            std::size_t feed = flattened ? flat : c * h * w;
            if (lin->in_dim != feed) {
                fail("linear expects " + std::to_string(lin->in_dim) + " inputs, gets " +
                     std::to_string(feed));
            }
            flattened = true;
            flat = lin->out_dim;
        } else if (std::holds_alternative<DropoutLayer>(d)) {
            double r = std::get<DropoutLayer>(d).ratio;
            if (r < 0.0 || r >= 1.0) fail("dropout ratio out of [0, 1)");
        }
        // relu and softmax are shape-preserving
    }
    return flattened ? flat : c * h * w;
}

// Standard VGG-16 geometry (13 convs, 3 fcs) at symbolic scale; used only
// for parameter counting in the communication model.
inline LayerLayout vgg16_layout(std::size_t num_classes) {
    LayerLayout layout;
    auto conv = [&](std::size_t in, std::size_t out) {
        layout.layers.push_back(ConvLayer{in, out, 3, 1, 1});
        layout.layers.push_back(ReluLayer{});
    };
    auto pool = [&] { layout.layers.push_back(PoolLayer{2, 2}); };
    conv(3, 64); conv(64, 64); pool();
    conv(64, 128); conv(128, 128); pool();
    conv(128, 256); conv(256, 256); conv(256, 256); pool();
    conv(256, 512); conv(512, 512); conv(512, 512); pool();
    conv(512, 512); conv(512, 512); conv(512, 512); pool();
    layout.layers.push_back(DropoutLayer{0.9});
    layout.layers.push_back(LinearLayer{25088, 4096});
    layout.layers.push_back(ReluLayer{});
    layout.layers.push_back(DropoutLayer{0.9});
    layout.layers.push_back(LinearLayer{4096, 4096});
    layout.layers.push_back(ReluLayer{});
    layout.layers.push_back(LinearLayer{4096, num_classes});
    layout.layers.push_back(SoftmaxLayer{});
    return layout;
}

struct ToyDims {
    std::size_t conv1_ch = 8;
    std::size_t conv2_ch = 16;
    std::size_t hidden_dim = 64;
};

// Desk-scale stand-in for the full architectures:
// conv-relu-pool2-conv-relu-pool2-flatten-dropout-linear-relu-dropout-linear.
// Dropout ratios default to the per-stream pairs (spatial 0.9/0.9,
// temporal 0.9/0.8).
inline LayerLayout toy_layout(std::size_t in_channels, std::size_t input_hw,
                              std::size_t num_classes, double drop1, double drop2,
                              const ToyDims& dims = {}) {
    if (input_hw < 4) throw ValueError("toy layout needs input size >= 4");
    LayerLayout layout;
    layout.layers.push_back(ConvLayer{in_channels, dims.conv1_ch, 3, 1, 1});
    layout.layers.push_back(ReluLayer{});
    layout.layers.push_back(PoolLayer{2, 2});
    layout.layers.push_back(ConvLayer{dims.conv1_ch, dims.conv2_ch, 3, 1, 1});
    layout.layers.push_back(ReluLayer{});
    layout.layers.push_back(PoolLayer{2, 2});
    std::size_t side = input_hw / 2 / 2;
    std::size_t flat = dims.conv2_ch * side * side;
    layout.layers.push_back(DropoutLayer{drop1});
    layout.layers.push_back(LinearLayer{flat, dims.hidden_dim});
    layout.layers.push_back(ReluLayer{});
    layout.layers.push_back(DropoutLayer{drop2});
    layout.layers.push_back(LinearLayer{dims.hidden_dim, num_classes});
    return layout;
}

inline std::pair<double, double> default_dropout_ratios(Stream stream) {
    return stream == Stream::temporal ? std::pair{0.9, 0.8} : std::pair{0.9, 0.9};
}

struct ModelConfig {
    Stream stream = Stream::spatial;
    std::size_t in_channels = 3;
    std::size_t num_classes = 101;
    std::size_t input_hw = 224;
    LayerLayout layout;
    std::uint64_t seed = 0;

    void validate() const {
        std::size_t expect = stream == Stream::spatial ? 3 : 20;
        if (in_channels != expect) {
            throw ValueError(std::string("stream ") + stream_name(stream) + " requires " +
                             std::to_string(expect) + " input channels, got " +
                             std::to_string(in_channels));
        }
        if (num_classes == 0) throw ValueError("num_classes must be positive");
    }
};

inline ModelConfig toy_config(Stream stream, std::size_t num_classes, std::size_t input_hw,
                              std::uint64_t seed, double drop1 = -1.0, double drop2 = -1.0,
                              const ToyDims& dims = {}) {
    auto [d1, d2] = default_dropout_ratios(stream);
    if (drop1 >= 0.0) d1 = drop1;
    if (drop2 >= 0.0) d2 = drop2;
    ModelConfig cfg;
    cfg.stream = stream;
    cfg.in_channels = stream == Stream::spatial ? 3 : 20;
    cfg.num_classes = num_classes;
    cfg.input_hw = input_hw;
    cfg.layout = toy_layout(cfg.in_channels, input_hw, num_classes, d1, d2, dims);
    cfg.seed = seed;
    return cfg;
}

struct LayerParams {
    Tensor weights;
    Tensor bias;
    bool has_params() const { return weights.size() > 0; }
};

struct ToyModel {
    ModelConfig cfg;
    std::vector<LayerParams> params;   // parallel to cfg.layout.layers
};

// Seeded scaled-normal initialization, std = sqrt(2 / fan_in); biases zero.
inline ToyModel build_toy_model(const ModelConfig& cfg) {
    cfg.validate();
    validate_layout(cfg.layout, cfg.in_channels, cfg.input_hw, cfg.input_hw);
    ToyModel model{cfg, {}};
    model.params.resize(cfg.layout.layers.size());
    for (std::size_t i = 0; i < cfg.layout.layers.size(); ++i) {
        const LayerDesc& d = cfg.layout.layers[i];
        CounterRng rng(derive_key(cfg.seed, 0x6d6f64656cull, i));  // per-layer stream
        if (const auto* conv = std::get_if<ConvLayer>(&d)) {
            double std_dev = std::sqrt(2.0 / static_cast<double>(conv->in_ch * conv->kernel *
                                                                 conv->kernel));
            Tensor w({conv->out_ch, conv->in_ch, conv->kernel, conv->kernel});
            for (std::size_t j = 0; j < w.size(); ++j) w[j] = std_dev * rng.next_normal();
            model.params[i] = {std::move(w), Tensor({conv->out_ch})};
        } else if (const auto* lin = std::get_if<LinearLayer>(&d)) {
            double std_dev = std::sqrt(2.0 / static_cast<double>(lin->in_dim));
            Tensor w({lin->in_dim, lin->out_dim});
            for (std::size_t j = 0; j < w.size(); ++j) w[j] = std_dev * rng.next_normal();
            model.params[i] = {std::move(w), Tensor({lin->out_dim})};
        }
    }
    return model;
}

// Average the first-layer filters across their input channels and replicate
// the mean target_channels times. No magnitude rescaling: responses to a
// constant input scale by T/C, surfaced by a property test.
inline Tensor adapt_first_layer(const Tensor& weights, std::size_t target_channels) {
    if (weights.rank() != 4) {
        throw ShapeError("adapt_first_layer expects K x C x h x w, got " +
                         shape_str(weights.shape()));
    }
    if (target_channels == 0) throw ValueError("target_channels must be >= 1");
    std::size_t k = weights.extent(0), c = weights.extent(1), h = weights.extent(2),
                w = weights.extent(3);
    Tensor out({k, target_channels, h, w});
    for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double mean = 0.0;
                for (std::size_t ci = 0; ci < c; ++ci) mean += weights.at(ki, ci, y, x);
                mean /= static_cast<double>(c);
                for (std::size_t ti = 0; ti < target_channels; ++ti)
                    out.at(ki, ti, y, x) = mean;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Forward / backward engine over a layout. No tape: the per-layer caches in
// ForwardTrace are exactly what the analytic backward needs.
// ---------------------------------------------------------------------------

struct DropoutPlan {
    bool train = false;
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    // First global batch row held by this activation; keys dropout masks so
    // workers reproduce the single-process masks for their shard.
    std::size_t global_row_offset = 0;
};

struct ForwardTrace {
    std::vector<Tensor> inputs;                      // per layer, as consumed
    std::vector<Shape> out_shapes;                   // per layer, before any flatten
    std::vector<std::vector<std::size_t>> pool_idx;  // per layer (pool only)
    std::vector<DropoutState> dropout;               // per layer (dropout only)
    Tensor logits;                                   // N x num_classes
};

inline ForwardTrace model_forward(const ToyModel& model, const Tensor& batch,
                                  const DropoutPlan& plan = {}) {
    if (batch.rank() != 4) {
        throw ShapeError("model_forward expects NCHW batch, got " + shape_str(batch.shape()));
    }
    std::size_t layer_count = model.cfg.layout.layers.size();
    ForwardTrace trace;
    trace.inputs.resize(layer_count);
    trace.out_shapes.resize(layer_count);
    trace.pool_idx.resize(layer_count);
    trace.dropout.resize(layer_count);
    Tensor act = batch;
    for (std::size_t i = 0; i < layer_count; ++i) {
        const LayerDesc& d = model.cfg.layout.layers[i];
        if (std::holds_alternative<LinearLayer>(d) || std::holds_alternative<DropoutLayer>(d)) {
            if (act.rank() == 4) {
                act = act.reshaped({act.extent(0), act.size() / act.extent(0)});
            }
        }
        trace.inputs[i] = act;
        if (const auto* conv = std::get_if<ConvLayer>(&d)) {
            ConvParams p{model.params[i].weights, model.params[i].bias, conv->stride,
                         conv->pad};
            act = conv2d_forward(act, p);
        } else if (const auto* pool = std::get_if<PoolLayer>(&d)) {
            PoolResult r = maxpool_forward(act, pool->window, pool->stride);
            trace.pool_idx[i] = std::move(r.argmax);
            act = std::move(r.output);
        } else if (std::holds_alternative<ReluLayer>(d)) {
            act = relu(act);
        } else if (const auto* drop = std::get_if<DropoutLayer>(&d)) {
            DropoutState st;
            st.ratio = drop->ratio;
            st.mode = plan.train ? DropoutMode::train : DropoutMode::inference;
            st.key = derive_key(plan.seed, i, plan.iteration);
            std::size_t row_size = act.size() / act.extent(0);
            st.element_offset = plan.global_row_offset * row_size;
            act = dropout_apply(act, st);
            trace.dropout[i] = std::move(st);
        } else if (std::holds_alternative<LinearLayer>(d)) {
            act = linear_forward(act, model.params[i].weights, model.params[i].bias);
        } else {
            act = softmax_rows(act);
        }
        trace.out_shapes[i] = act.shape();
    }
    trace.logits = std::move(act);
    return trace;
}

struct GradSet {
    std::vector<LayerParams> grads;   // parallel to layers; empty where no params
};

inline GradSet model_backward(const ToyModel& model, const ForwardTrace& trace,
                              const Tensor& grad_logits) {
    std::size_t layer_count = model.cfg.layout.layers.size();
    GradSet gs;
    gs.grads.resize(layer_count);
    Tensor grad = grad_logits;
    for (std::size_t ri = layer_count; ri-- > 0;) {
        const LayerDesc& d = model.cfg.layout.layers[ri];
        const Tensor& input = trace.inputs[ri];
        // Undo the implicit flatten of the layer below.
        if (grad.shape() != trace.out_shapes[ri]) grad = grad.reshaped(trace.out_shapes[ri]);
        if (const auto* conv = std::get_if<ConvLayer>(&d)) {
            ConvParams p{model.params[ri].weights, model.params[ri].bias, conv->stride,
                         conv->pad};
            ConvGrads g = conv2d_backward(input, p, grad);
            gs.grads[ri] = {std::move(g.grad_weights), std::move(g.grad_bias)};
            grad = std::move(g.grad_input);
        } else if (std::holds_alternative<PoolLayer>(d)) {
            grad = maxpool_backward(input.shape(), trace.pool_idx[ri], grad);
        } else if (std::holds_alternative<ReluLayer>(d)) {
            grad = relu_backward(input, grad);
        } else if (std::holds_alternative<DropoutLayer>(d)) {
            grad = dropout_backward(grad, trace.dropout[ri]);
        } else if (std::holds_alternative<LinearLayer>(d)) {
            LinearGrads g = linear_backward(input, model.params[ri].weights, grad);
            gs.grads[ri] = {std::move(g.grad_weights), std::move(g.grad_bias)};
            grad = std::move(g.grad_input);
        } else {
            throw ValueError("softmax layer has no analytic backward here; train on logits");
        }
    }
    return gs;
}

// Canonical input transforms, shared by the trainer and the evaluator.
inline Tensor normalize_rgb(const Tensor& frame) {
    Tensor out = frame;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= 0.5;
    return out;
}

inline Tensor normalize_flow_stack(const Tensor& stack) {
    Tensor out = stack;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - 128.0) / 128.0;
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory of TSR1 files plus manifest.txt listing layer
// order and the model dims needed to rebuild.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string layer_desc_line(const LayerDesc& d) {
    std::ostringstream os;
    if (const auto* c = std::get_if<ConvLayer>(&d)) {
        os << "conv in=" << c->in_ch << " out=" << c->out_ch << " k=" << c->kernel
           << " stride=" << c->stride << " pad=" << c->pad;
    } else if (const auto* p = std::get_if<PoolLayer>(&d)) {
        os << "pool window=" << p->window << " stride=" << p->stride;
    } else if (std::holds_alternative<ReluLayer>(d)) {
        os << "relu";
    } else if (const auto* dr = std::get_if<DropoutLayer>(&d)) {
        os << "dropout ratio=" << dr->ratio;
    } else if (const auto* l = std::get_if<LinearLayer>(&d)) {
        os << "linear in=" << l->in_dim << " out=" << l->out_dim;
    } else {
        os << "softmax";
    }
    return os.str();
}

inline std::map<std::string, std::string> parse_kv_tokens(std::istringstream& is) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("bad manifest token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

inline LayerDesc layer_desc_from_line(const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    auto kv = parse_kv_tokens(is);
    if (kind == "conv") {
        return ConvLayer{std::stoul(kv.at("in")), std::stoul(kv.at("out")),
                         std::stoul(kv.at("k")), std::stoul(kv.at("stride")),
                         std::stoul(kv.at("pad"))};
    }
    if (kind == "pool") return PoolLayer{std::stoul(kv.at("window")), std::stoul(kv.at("stride"))};
    if (kind == "relu") return ReluLayer{};
    if (kind == "dropout") return DropoutLayer{std::stod(kv.at("ratio"))};
    if (kind == "linear") return LinearLayer{std::stoul(kv.at("in")), std::stoul(kv.at("out"))};
    if (kind == "softmax") return SoftmaxLayer{};
    throw IoError("unknown layer kind '" + kind + "' in checkpoint manifest");
}

}  // namespace detail

inline void save_model(const ToyModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "stream=" << stream_name(model.cfg.stream) << "\n";
    manifest << "in_channels=" << model.cfg.in_channels << "\n";
    manifest << "num_classes=" << model.cfg.num_classes << "\n";
    manifest << "input_hw=" << model.cfg.input_hw << "\n";
    manifest << "seed=" << model.cfg.seed << "\n";
    manifest << "layers=" << model.cfg.layout.layers.size() << "\n";
    for (std::size_t i = 0; i < model.cfg.layout.layers.size(); ++i) {
        manifest << "layer " << i << " "
                 << detail::layer_desc_line(model.cfg.layout.layers[i]) << "\n";
        if (model.params[i].has_params()) {
            char wname[32], bname[32];
            std::snprintf(wname, sizeof wname, "layer%02zu_w.tsr", i);
            std::snprintf(bname, sizeof bname, "layer%02zu_b.tsr", i);
            write_tsr1(dir / wname, model.params[i].weights);
            write_tsr1(dir / bname, model.params[i].bias);
        }
    }
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
    out << manifest.str();
}

inline ToyModel load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw IoError("cannot open checkpoint manifest in " + dir.string());
    ModelConfig cfg;
    std::size_t layer_count = 0;
    std::string line;
    std::vector<std::string> layer_lines;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("layer ", 0) == 0) {
            layer_lines.push_back(line.substr(6));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad checkpoint manifest line: " + line);
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "stream") cfg.stream = parse_stream(value);
        else if (key == "in_channels") cfg.in_channels = std::stoul(value);
        else if (key == "num_classes") cfg.num_classes = std::stoul(value);
        else if (key == "input_hw") cfg.input_hw = std::stoul(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "layers") layer_count = std::stoul(value);
        else throw IoError("unknown checkpoint manifest key '" + key + "'");
    }
    if (layer_lines.size() != layer_count) {
        throw IoError("checkpoint manifest lists " + std::to_string(layer_lines.size()) +
                      " layers, header says " + std::to_string(layer_count));
    }
    for (const std::string& ll : layer_lines) {
        std::istringstream is(ll);
        std::size_t idx;
        is >> idx;
        std::string rest;
        std::getline(is, rest);
        cfg.layout.layers.push_back(detail::layer_desc_from_line(rest));
    }
    ToyModel model{cfg, {}};
    model.params.resize(layer_count);
    for (std::size_t i = 0; i < layer_count; ++i) {
        if (layer_param_count(cfg.layout.layers[i]) == 0) continue;
        char wname[32], bname[32];
        std::snprintf(wname, sizeof wname, "layer%02zu_w.tsr", i);
        std::snprintf(bname, sizeof bname, "layer%02zu_b.tsr", i);
        model.params[i] = {read_tsr1(dir / wname), read_tsr1(dir / bname)};
    }
    return model;
}

}  // namespace twostream
