#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostream/augment.hpp"
#include "twostream/config.hpp"
#include "twostream/eval.hpp"
#include "twostream/flow.hpp"
#include "twostream/manifest.hpp"
#include "twostream/model.hpp"
#include "twostream/synth.hpp"
#include "twostream/trainer.hpp"

namespace twostream {

constexpr std::uint64_t kStreamPreview = 0x5052ull;

// synth: moving-bar dataset plus manifest.tsv under out_dir.
inline std::vector<ManifestEntry> cmd_synth(const std::filesystem::path& out_dir,
                                            const SynthSpec& spec) {
    auto entries = synth_dataset(spec, out_dir);
    write_manifest(out_dir / "manifest.tsv", entries);
    return entries;
}

// flow-encode: quantize one 2 x H x W field file, or assemble a 20-channel
// stack from a directory of per-frame fields starting at stack_start.
inline void cmd_flow_encode(const std::filesystem::path& in, const std::filesystem::path& out,
                            double bound, std::optional<std::size_t> stack_start = {}) {
    if (std::filesystem::is_directory(in)) {
        if (!stack_start) {
            throw ValueError("flow-encode on a directory needs --stack-start");
        }
        std::vector<FlowField> fields;
        for (std::size_t i = 0; i < kStackFrames; ++i) {
            auto path = detail::numbered_file(in, "flow", *stack_start + i);
            if (!std::filesystem::exists(path)) {
                throw IoError("missing flow field " + path.string() +
                              " (10 consecutive fields needed)");
            }
            fields.push_back(flow_field_from_tensor(read_tsr1(path)));
        }
        FlowStack stack = build_stack(fields, bound, *stack_start);
        write_tsr1(out, stack.data, DType::u8);
        return;
    }
    FlowField field = flow_field_from_tensor(read_tsr1(in));
    FlowField q = quantize_flow(field, bound);
    write_tsr1(out, flow_field_tensor(q), DType::u8);
}

// adapt: cross-modality first-layer conversion, K x C x h x w -> K x T x h x w.
inline void cmd_adapt(const std::filesystem::path& in, const std::filesystem::path& out,
                      std::size_t target_channels) {
    write_tsr1(out, adapt_first_layer(read_tsr1(in), target_channels));
}

// Deterministic preview canvas: smooth gradients plus a diagonal stripe so
// crops and flips are visually distinguishable.
inline Tensor preview_canvas(const CanvasSpec& canvas) {
    Tensor img({3, canvas.height, canvas.width});
    for (std::size_t y = 0; y < canvas.height; ++y)
        for (std::size_t x = 0; x < canvas.width; ++x) {
            double fx = static_cast<double>(x) / static_cast<double>(canvas.width - 1);
            double fy = static_cast<double>(y) / static_cast<double>(canvas.height - 1);
            img.at(0, y, x) = fx;
            img.at(1, y, x) = fy;
            img.at(2, y, x) = (x + y) % 16 < 8 ? 0.25 : 0.75;
        }
    return img;
}

// augment-preview: dump n sampled CropSpecs (one "w,h,position,flip" line
// each) and the cropped TSR1s.
inline std::vector<CropSpec> cmd_augment_preview(const RunConfig& cfg, std::size_t n,
                                                 const std::filesystem::path& out_dir,
                                                 std::optional<std::filesystem::path> image = {}) {
    cfg.validate();
    CanvasSpec canvas = cfg.canvas_spec();
    Tensor img = image ? read_tsr1(*image) : preview_canvas(canvas);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());
    std::ofstream specs(out_dir / "cropspecs.txt", std::ios::trunc);
    if (!specs) throw IoError("cannot write cropspecs.txt in " + out_dir.string());
    std::vector<CropSpec> result;
    for (std::size_t i = 0; i < n; ++i) {
        CropSpec cs = sample_crop(canvas, derive_key(cfg.seed, kStreamPreview, i));
        specs << cs.to_record() << "\n";
        write_tsr1(out_dir / (std::string("crop_") + std::to_string(i) + ".tsr"),
                   apply_crop(img, cs, canvas, FlipKind::rgb));
        result.push_back(cs);
    }
    return result;
}

inline nlohmann::ordered_json record_json(const TrainRecord& rec) {
    nlohmann::ordered_json j;
    j["iter"] = rec.iteration;
    j["loss"] = rec.loss;
    j["lr"] = rec.lr;
    j["synced_bytes"] = rec.synced_bytes;
    j["elapsed_ms"] = rec.elapsed_ms;
    return j;
}

// train: metrics.jsonl (one record per iteration), checkpoint/ directory,
// and an echo of the effective config.
inline TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& manifest_path,
                             const std::filesystem::path& out_dir) {
    cfg.validate();
    auto entries = read_manifest(manifest_path, cfg.num_classes);
    DatasetCache data = load_dataset(entries, manifest_path.parent_path(), cfg.stream);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());
    std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics.jsonl in " + out_dir.string());
    TrainResult result = run_training(cfg, data, [&](const TrainRecord& rec) {
        metrics << record_json(rec).dump() << "\n";
    });
    save_model(result.state.model, out_dir / "checkpoint");
    std::ofstream cfg_echo(out_dir / "config.txt", std::ios::trunc);
    cfg_echo << run_config_text(cfg);
    return result;
}

struct EvalPaths {
    std::optional<std::filesystem::path> report;      // JSONL report
    std::optional<std::filesystem::path> score_dump;  // per-video TSR1 scores
};

// eval: 25-frame / 10-crop / weighted-fusion protocol over a manifest.
inline EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& manifest_path,
                           const std::filesystem::path& spatial_ckpt,
                           const std::filesystem::path& temporal_ckpt,
                           const EvalPaths& paths = {}) {
    cfg.validate();
    ToyModel spatial = load_model(spatial_ckpt);
    ToyModel temporal = load_model(temporal_ckpt);
    if (spatial.cfg.stream != Stream::spatial || temporal.cfg.stream != Stream::temporal) {
        throw ValueError("checkpoint streams do not match eval roles");
    }
    auto entries = read_manifest(manifest_path, cfg.num_classes);
    EvalOptions opts{kEvalFrames, cfg.out_size, {cfg.fusion_spatial, cfg.fusion_temporal},
                     cfg.flow_bound, cfg.post_softmax};
    EvalReport report = evaluate(model_score_fn(spatial), model_score_fn(temporal), entries,
                                 manifest_path.parent_path(), opts);

    if (paths.report) {
        std::ofstream out(*paths.report, std::ios::trunc);
        if (!out) throw IoError("cannot write report " + paths.report->string());
        for (const VideoEval& ve : report.videos) {
            nlohmann::ordered_json j;
            j["video"] = ve.index;
            j["label"] = ve.label;
            if (ve.failed) {
                j["failed"] = true;
                j["error"] = ve.error;
            } else {
                j["pred_spatial"] = argmax_class(ve.spatial);
                j["pred_temporal"] = argmax_class(ve.temporal);
                j["pred_fused"] = argmax_class(ve.fused);
            }
            out << j.dump() << "\n";
        }
        nlohmann::ordered_json summary;
        summary["spatial_acc"] = report.spatial_acc;
        summary["temporal_acc"] = report.temporal_acc;
        summary["fused_acc"] = report.fused_acc;
        summary["failures"] = report.failures;
        out << summary.dump() << "\n";
    }
    if (paths.score_dump) {
        std::error_code ec;
        std::filesystem::create_directories(*paths.score_dump, ec);
        if (ec) throw IoError("cannot create " + paths.score_dump->string());
        for (const VideoEval& ve : report.videos) {
            if (ve.failed) continue;
            auto dump = [&](const char* tag, const std::vector<double>& scores) {
                Tensor t({scores.size()}, scores);
                write_tsr1(*paths.score_dump /
                               ("video_" + std::to_string(ve.index) + "_" + tag + ".tsr"),
                           t);
            };
            dump("spatial", ve.spatial);
            dump("temporal", ve.temporal);
            dump("fused", ve.fused);
        }
    }
    return report;
}

struct CommReportRow {
    unsigned workers = 1;
    SyncMode mode = SyncMode::full_param_sync;
    std::size_t batch_per_worker = 1;
    CommVolume volume;
};

// K sweeps {1, 2, 4, 8} with the global batch split per worker.
inline std::vector<CommReportRow> comm_report_rows(const RunConfig& cfg) {
    LayerLayout layout = vgg16_layout(cfg.num_classes);
    std::size_t fc_dim = first_linear_in_dim(layout);
    std::vector<CommReportRow> rows;
    for (unsigned k : {1u, 2u, 4u, 8u}) {
        std::size_t bpw = std::max<std::size_t>(1, cfg.batch / k);
        for (SyncMode mode : {SyncMode::full_param_sync, SyncMode::activation_gather}) {
            rows.push_back({k, mode, bpw, comm_volume(layout, k, SyncPolicy{mode}, bpw, fc_dim)});
        }
    }
    return rows;
}

inline void cmd_comm_report(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    LayerLayout layout = vgg16_layout(cfg.num_classes);
    ParamCounts counts = param_count(layout);
    std::size_t fc_dim = first_linear_in_dim(layout);
    out << "vgg16-layout, " << cfg.num_classes << " classes: " << counts.total
        << " params (conv " << counts.conv << ", fc " << counts.linear << ", fc fraction "
        << std::fixed << std::setprecision(4)
        << static_cast<double>(counts.linear) / static_cast<double>(counts.total) << ")\n";
    out << "K  mode               batch/worker  grad_sync_bytes  activation_bytes  total_bytes\n";
    for (const CommReportRow& row : comm_report_rows(cfg)) {
        out << row.workers << "  " << std::left << std::setw(18)
            << sync_mode_name(row.mode) << std::right << "  " << std::setw(12)
            << row.batch_per_worker << "  " << std::setw(15) << row.volume.param_sync_bytes
            << "  " << std::setw(16) << row.volume.activation_bytes << "  " << std::setw(11)
            << row.volume.total_bytes << "\n";
    }
    for (unsigned k : {2u, 4u, 8u}) {
        out << "break-even batch/worker at K=" << k << ": "
            << break_even_batch_per_worker(layout, k, fc_dim) << "\n";
    }
}

}  // namespace twostream
