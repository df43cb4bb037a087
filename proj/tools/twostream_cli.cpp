#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "twostream/commands.hpp"
#include "twostream/config.hpp"

namespace fs = std::filesystem;
using namespace twostream;

namespace {

struct ConfigArgs {
    std::string config_path;
    std::map<std::string, std::string> overrides;

    RunConfig resolve() const {
        std::map<std::string, std::string> file_pairs;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw IoError("cannot open config: " + config_path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            file_pairs = parse_config_pairs(text);
        }
        return make_run_config(file_pairs, overrides);
    }
};

// Every config key is mirrored as a flag; flags win over the file.
void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "run config file (key=value lines)");
    for (const std::string& key : run_config_keys()) {
        cmd->add_option_function<std::string>(
            "--" + key,
            [&args, key](const std::string& value) { args.overrides[key] = value; },
            "override config key " + key);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale two-stream action recognition toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic moving-bar dataset");
    std::string synth_out;
    SynthSpec synth_spec;
    std::string synth_mode = "joint";
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", synth_spec.classes, "number of classes");
    synth->add_option("--videos-per-class", synth_spec.videos_per_class, "videos per class");
    synth->add_option("--frames", synth_spec.frames, "frames per video");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_option("--mode", synth_mode, "joint | complementary");
    synth->add_option("--canvas-w", synth_spec.canvas_w, "canvas width");
    synth->add_option("--canvas-h", synth_spec.canvas_h, "canvas height");

    // flow-encode
    auto* encode = app.add_subcommand("flow-encode", "quantize flow fields to 8-bit TSR1");
    std::string enc_in, enc_out;
    double enc_bound = kDefaultFlowBound;
    std::int64_t enc_stack_start = -1;
    encode->add_option("--in", enc_in, "flow field file or per-frame directory")->required();
    encode->add_option("--out", enc_out, "output TSR1 path")->required();
    encode->add_option("--bound", enc_bound, "saturation bound B in pixels");
    encode->add_option("--stack-start", enc_stack_start,
                       "starting field index for a 20-channel stack (directory input)");

    // adapt
    auto* adapt = app.add_subcommand("adapt", "cross-modality first-layer adaptation");
    std::string adapt_in, adapt_out;
    std::size_t adapt_channels = 20;
    adapt->add_option("--in", adapt_in, "input weights TSR1 (K x C x h x w)")->required();
    adapt->add_option("--out", adapt_out, "output weights TSR1")->required();
    adapt->add_option("--target-channels", adapt_channels, "replicated channel count");

    // augment-preview
    auto* preview = app.add_subcommand("augment-preview", "dump sampled crops and specs");
    ConfigArgs preview_cfg;
    std::size_t preview_n = 10;
    std::string preview_out, preview_image;
    add_config_options(preview, preview_cfg);
    preview->add_option("--n", preview_n, "number of crops to sample");
    preview->add_option("--out", preview_out, "output directory")->required();
    preview->add_option("--image", preview_image, "optional canvas-sized TSR1 image");

    // train
    auto* train = app.add_subcommand("train", "train one stream on a manifest");
    ConfigArgs train_cfg;
    std::string train_manifest, train_out;
    add_config_options(train, train_cfg);
    train->add_option("--manifest", train_manifest, "dataset manifest")->required();
    train->add_option("--out", train_out, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "25-frame / 10-crop two-stream evaluation");
    ConfigArgs eval_cfg;
    std::string eval_manifest, eval_spatial, eval_temporal, eval_report, eval_dump;
    add_config_options(eval_cmd, eval_cfg);
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();
    eval_cmd->add_option("--spatial", eval_spatial, "spatial checkpoint directory")->required();
    eval_cmd->add_option("--temporal", eval_temporal, "temporal checkpoint directory")
        ->required();
    eval_cmd->add_option("--report", eval_report, "write JSONL report here");
    eval_cmd->add_option("--dump-scores", eval_dump, "write per-video score TSR1s here");

    // comm-report
    auto* comm = app.add_subcommand("comm-report", "communication volume model table");
    ConfigArgs comm_cfg;
    add_config_options(comm, comm_cfg);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            synth_spec.mode = parse_synth_mode(synth_mode);
            auto entries = cmd_synth(synth_out, synth_spec);
            std::cout << "wrote " << entries.size() << " videos and manifest.tsv under "
                      << synth_out << "\n";
        } else if (*encode) {
            std::optional<std::size_t> start;
            if (enc_stack_start >= 0) start = static_cast<std::size_t>(enc_stack_start);
            cmd_flow_encode(enc_in, enc_out, enc_bound, start);
            std::cout << "wrote " << enc_out << "\n";
        } else if (*adapt) {
            cmd_adapt(adapt_in, adapt_out, adapt_channels);
            std::cout << "wrote " << adapt_out << "\n";
        } else if (*preview) {
            RunConfig cfg = preview_cfg.resolve();
            std::optional<fs::path> image;
            if (!preview_image.empty()) image = preview_image;
            auto specs = cmd_augment_preview(cfg, preview_n, preview_out, image);
            std::cout << "wrote " << specs.size() << " crops under " << preview_out << "\n";
        } else if (*train) {
            RunConfig cfg = train_cfg.resolve();
            TrainResult result = cmd_train(cfg, train_manifest, train_out);
            double final_loss = result.records.empty() ? 0.0 : result.records.back().loss;
            std::cout << "trained " << stream_name(cfg.stream) << " stream for "
                      << result.records.size() << " iterations, final loss " << final_loss
                      << "\n";
        } else if (*eval_cmd) {
            RunConfig cfg = eval_cfg.resolve();
            EvalPaths paths;
            if (!eval_report.empty()) paths.report = eval_report;
            if (!eval_dump.empty()) paths.score_dump = eval_dump;
            EvalReport report = cmd_eval(cfg, eval_manifest, eval_spatial, eval_temporal, paths);
            std::cout << "spatial_acc=" << report.spatial_acc
                      << " temporal_acc=" << report.temporal_acc
                      << " fused_acc=" << report.fused_acc
                      << " failures=" << report.failures << "\n";
        } else if (*comm) {
            cmd_comm_report(comm_cfg.resolve(), std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 1;
    } catch (const ManifestError& e) {
        std::cerr << "error: manifest: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "error: shape: " << e.what() << "\n";
        return 1;
    } catch (const ValueError& e) {
        std::cerr << "error: value: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
