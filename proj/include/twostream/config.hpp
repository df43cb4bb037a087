#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "twostream/augment.hpp"
#include "twostream/error.hpp"
#include "twostream/flow.hpp"
#include "twostream/model.hpp"
#include "twostream/schedule.hpp"

namespace twostream {

enum class SyncMode { full_param_sync, activation_gather };

inline SyncMode parse_sync_mode(const std::string& s) {
    if (s == "full_param_sync") return SyncMode::full_param_sync;
    if (s == "activation_gather") return SyncMode::activation_gather;
    throw ConfigError("unknown sync_mode '" + s +
                      "' (expected full_param_sync or activation_gather)");
}

inline const char* sync_mode_name(SyncMode m) {
    return m == SyncMode::full_param_sync ? "full_param_sync" : "activation_gather";
}

// Flat key=value run configuration. Unknown keys are rejected and every value
// is checked against its module's invariants before any command does work.
struct RunConfig {
    Stream stream = Stream::spatial;
    std::size_t num_classes = 101;
    std::uint64_t seed = 0;
    std::size_t batch = 32;
    unsigned workers = 1;
    SyncMode sync_mode = SyncMode::full_param_sync;

    StepSchedule schedule;     // defaults to the per-stream preset
    double dropout1 = 0.9;     // defaults to the per-stream paper pair
    double dropout2 = 0.9;

    double flow_bound = kDefaultFlowBound;
    std::size_t canvas_w = 340;
    std::size_t canvas_h = 256;
    std::vector<std::size_t> scale_set = {256, 224, 192, 168};
    std::size_t out_size = 224;
    bool augment_flow = true;  // apply multi-scale jitter to flow stacks too

    double fusion_spatial = 1.0;
    double fusion_temporal = 2.0;
    bool post_softmax = true;

    double momentum = 0.9;
    double weight_decay = 0.0;
    ToyDims toy_dims;

    CanvasSpec canvas_spec() const {
        return CanvasSpec{canvas_w, canvas_h, scale_set, out_size};
    }

    ModelConfig model_config() const {
        return toy_config(stream, num_classes, out_size, seed, dropout1, dropout2, toy_dims);
    }

    void validate() const {
        if (num_classes == 0) throw ConfigError("num_classes must be positive");
        if (batch == 0) throw ConfigError("batch must be positive");
        if (workers == 0) throw ConfigError("workers must be positive");
        if (batch % workers != 0) {
            throw ConfigError("batch " + std::to_string(batch) +
                              " is not divisible by workers " + std::to_string(workers));
        }
        try {
            if (schedule.stop_iter > 0) schedule.validate();
            canvas_spec().validate();
        } catch (const ValueError& e) {
            throw ConfigError(e.what());
        }
        if (dropout1 < 0.0 || dropout1 >= 1.0 || dropout2 < 0.0 || dropout2 >= 1.0) {
            throw ConfigError("dropout ratios must be in [0, 1)");
        }
        if (!(flow_bound > 0.0)) throw ConfigError("flow_bound must be positive");
        if (out_size < 4) throw ConfigError("out_size must be >= 4 for the two pool stages");
        if (fusion_spatial < 0.0 || fusion_temporal < 0.0 ||
            (fusion_spatial == 0.0 && fusion_temporal == 0.0)) {
            throw ConfigError("fusion weights must be non-negative and not both zero");
        }
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        if (toy_dims.conv1_ch == 0 || toy_dims.conv2_ch == 0 || toy_dims.hidden_dim == 0) {
            throw ConfigError("toy model dims must be positive");
        }
    }
};

// Every key accepted in a config file; the CLI mirrors each one as a flag.
inline const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {
        "stream",       "num_classes",  "seed",           "batch",
        "workers",      "sync_mode",    "base_lr",        "lr_step",
        "lr_stop",      "lr_decay",     "dropout1",       "dropout2",
        "flow_bound",   "canvas_w",     "canvas_h",       "scale_set",
        "out_size",     "fusion_spatial", "fusion_temporal", "post_softmax",
        "momentum",     "weight_decay", "conv1_ch",       "conv2_ch",
        "hidden_dim",   "augment_flow"};
    return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": '" + value + "'");
    }
}

inline double parse_f64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw ConfigError("bad flag for " + key + ": '" + value + "' (expected on/off)");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key,
                                                const std::string& value) {
    std::vector<std::size_t> out;
    std::istringstream is(value);
    std::string item;
    while (std::getline(is, item, ',')) {
        out.push_back(parse_u64(key, trim(item)));
    }
    if (out.empty()) throw ConfigError(key + " must list at least one value");
    return out;
}

}  // namespace detail

// Parses "key=value" lines ('#' starts a comment) into a raw map; duplicate
// and unknown keys are rejected.
inline std::map<std::string, std::string> parse_config_pairs(const std::string& text) {
    std::map<std::string, std::string> pairs;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    const auto& keys = run_config_keys();
    while (std::getline(is, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key=value: '" + line + "'");
        }
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (pairs.count(key)) throw ConfigError("duplicate config key '" + key + "'");
        pairs[key] = value;
    }
    return pairs;
}

// Later maps win; used for flag-over-file precedence.
inline RunConfig make_run_config(const std::map<std::string, std::string>& file_pairs,
                                 const std::map<std::string, std::string>& overrides = {}) {
    std::map<std::string, std::string> pairs = file_pairs;
    const auto& keys = run_config_keys();
    for (const auto& [k, v] : overrides) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw ConfigError("unknown config key '" + k + "'");
        }
        pairs[k] = v;
    }

    RunConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = pairs.find(key);
        return it == pairs.end() ? nullptr : &it->second;
    };

    if (const auto* v = get("stream")) {
        try {
            cfg.stream = parse_stream(*v);
        } catch (const ValueError& e) {
            throw ConfigError(e.what());
        }
    }
    // Stream-dependent defaults come before explicit keys.
    cfg.schedule = preset_schedule(cfg.stream);
    auto pair = default_dropout_ratios(cfg.stream);
    cfg.dropout1 = pair.first;
    cfg.dropout2 = pair.second;

    if (const auto* v = get("num_classes")) cfg.num_classes = detail::parse_u64("num_classes", *v);
    if (const auto* v = get("seed")) cfg.seed = detail::parse_u64("seed", *v);
    if (const auto* v = get("batch")) cfg.batch = detail::parse_u64("batch", *v);
    if (const auto* v = get("workers"))
        cfg.workers = static_cast<unsigned>(detail::parse_u64("workers", *v));
    if (const auto* v = get("sync_mode")) cfg.sync_mode = parse_sync_mode(*v);
    if (const auto* v = get("base_lr")) cfg.schedule.base_lr = detail::parse_f64("base_lr", *v);
    if (const auto* v = get("lr_step")) cfg.schedule.step_iters = detail::parse_u64("lr_step", *v);
    if (const auto* v = get("lr_stop")) cfg.schedule.stop_iter = detail::parse_u64("lr_stop", *v);
    if (const auto* v = get("lr_decay"))
        cfg.schedule.decay_factor = detail::parse_f64("lr_decay", *v);
    if (const auto* v = get("dropout1")) cfg.dropout1 = detail::parse_f64("dropout1", *v);
    if (const auto* v = get("dropout2")) cfg.dropout2 = detail::parse_f64("dropout2", *v);
    if (const auto* v = get("flow_bound")) cfg.flow_bound = detail::parse_f64("flow_bound", *v);
    if (const auto* v = get("canvas_w")) cfg.canvas_w = detail::parse_u64("canvas_w", *v);
    if (const auto* v = get("canvas_h")) cfg.canvas_h = detail::parse_u64("canvas_h", *v);
    if (const auto* v = get("scale_set")) cfg.scale_set = detail::parse_size_list("scale_set", *v);
    if (const auto* v = get("out_size")) cfg.out_size = detail::parse_u64("out_size", *v);
    if (const auto* v = get("fusion_spatial"))
        cfg.fusion_spatial = detail::parse_f64("fusion_spatial", *v);
    if (const auto* v = get("fusion_temporal"))
        cfg.fusion_temporal = detail::parse_f64("fusion_temporal", *v);
    if (const auto* v = get("post_softmax")) cfg.post_softmax = detail::parse_bool("post_softmax", *v);
    if (const auto* v = get("momentum")) cfg.momentum = detail::parse_f64("momentum", *v);
    if (const auto* v = get("weight_decay"))
        cfg.weight_decay = detail::parse_f64("weight_decay", *v);
    if (const auto* v = get("conv1_ch")) cfg.toy_dims.conv1_ch = detail::parse_u64("conv1_ch", *v);
    if (const auto* v = get("conv2_ch")) cfg.toy_dims.conv2_ch = detail::parse_u64("conv2_ch", *v);
    if (const auto* v = get("hidden_dim"))
        cfg.toy_dims.hidden_dim = detail::parse_u64("hidden_dim", *v);
    if (const auto* v = get("augment_flow")) cfg.augment_flow = detail::parse_bool("augment_flow", *v);

    cfg.validate();
    return cfg;
}

inline RunConfig parse_run_config(const std::string& text,
                                  const std::map<std::string, std::string>& overrides = {}) {
    return make_run_config(parse_config_pairs(text), overrides);
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const std::map<std::string, std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text, overrides);
}

inline std::string run_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "stream=" << stream_name(cfg.stream) << "\n";
    os << "num_classes=" << cfg.num_classes << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "batch=" << cfg.batch << "\n";
    os << "workers=" << cfg.workers << "\n";
    os << "sync_mode=" << sync_mode_name(cfg.sync_mode) << "\n";
    os << "base_lr=" << cfg.schedule.base_lr << "\n";
    os << "lr_step=" << cfg.schedule.step_iters << "\n";
    os << "lr_stop=" << cfg.schedule.stop_iter << "\n";
    os << "lr_decay=" << cfg.schedule.decay_factor << "\n";
    os << "dropout1=" << cfg.dropout1 << "\n";
    os << "dropout2=" << cfg.dropout2 << "\n";
    os << "flow_bound=" << cfg.flow_bound << "\n";
    os << "canvas_w=" << cfg.canvas_w << "\n";
    os << "canvas_h=" << cfg.canvas_h << "\n";
    os << "scale_set=";
    for (std::size_t i = 0; i < cfg.scale_set.size(); ++i) {
        if (i) os << ",";
        os << cfg.scale_set[i];
    }
    os << "\n";
    os << "out_size=" << cfg.out_size << "\n";
    os << "fusion_spatial=" << cfg.fusion_spatial << "\n";
    os << "fusion_temporal=" << cfg.fusion_temporal << "\n";
    os << "post_softmax=" << (cfg.post_softmax ? "on" : "off") << "\n";
    os << "momentum=" << cfg.momentum << "\n";
    os << "weight_decay=" << cfg.weight_decay << "\n";
    os << "conv1_ch=" << cfg.toy_dims.conv1_ch << "\n";
    os << "conv2_ch=" << cfg.toy_dims.conv2_ch << "\n";
    os << "hidden_dim=" << cfg.toy_dims.hidden_dim << "\n";
    os << "augment_flow=" << (cfg.augment_flow ? "on" : "off") << "\n";
    return os.str();
}

}  // namespace twostream
