#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "twostream/augment.hpp"
#include "twostream/flow.hpp"
#include "twostream/manifest.hpp"
#include "twostream/model.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

// Test protocol: 25 sampled frames per video, 10 crops per frame, score
// averaging, and weighted two-stream fusion.

constexpr std::size_t kEvalFrames = 25;

struct FusionWeights {
    double w_spatial = 1.0;
    double w_temporal = 2.0;

    void validate() const {
        if (w_spatial < 0.0 || w_temporal < 0.0 || (w_spatial == 0.0 && w_temporal == 0.0)) {
            throw ValueError("fusion weights must be non-negative and not both zero");
        }
    }
};

// index_k = floor(k * total / n); non-decreasing, duplicates when total < n.
inline std::vector<std::size_t> sample_frames(std::size_t total, std::size_t n = kEvalFrames) {
    if (total == 0) throw ValueError("cannot sample frames from an empty video");
    if (n == 0) throw ValueError("sample count must be positive");
    std::vector<std::size_t> idx(n);
    for (std::size_t k = 0; k < n; ++k) idx[k] = k * total / n;
    return idx;
}

// Fixed order [TL, TR, BL, BR, C, TL', TR', BL', BR', C'] where ' marks the
// horizontal flip. Crop size is out_size; no multi-scale at test time.
inline std::vector<Tensor> ten_crop(const Tensor& input, FlipKind kind, std::size_t out_size) {
    if (input.rank() != 3) {
        throw ShapeError("ten_crop expects C x H x W, got " + shape_str(input.shape()));
    }
    std::size_t h = input.extent(1), w = input.extent(2);
    auto offsets = corner_offsets(w, h, out_size, out_size);
    std::vector<Tensor> crops;
    crops.reserve(10);
    for (const Offset& at : offsets) crops.push_back(extract_window(input, at, out_size, out_size));
    for (std::size_t i = 0; i < 5; ++i) crops.push_back(flip_input(crops[i], kind));
    return crops;
}

// Raw crop -> class scores (logits). Softmax happens in video_score when
// configured for probability-space averaging.
using ScoreFn = std::function<std::vector<double>(const Tensor&)>;

inline ScoreFn model_score_fn(const ToyModel& model, std::uint64_t* forward_counter = nullptr) {
    Stream stream = model.cfg.stream;
    return [&model, stream, forward_counter](const Tensor& crop) {
        Tensor input = stream == Stream::spatial ? normalize_rgb(crop)
                                                 : normalize_flow_stack(crop);
        Shape s = input.shape();
        ForwardTrace trace =
            model_forward(model, input.reshaped({1, s[0], s[1], s[2]}), DropoutPlan{});
        if (forward_counter) ++*forward_counter;
        return std::vector<double>(trace.logits.data(),
                                   trace.logits.data() + trace.logits.size());
    };
}

inline std::vector<double> softmax_scores(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// Mean of the n x 10 per-crop score vectors.
inline std::vector<double> video_score(const ScoreFn& fn,
                                       const std::vector<Tensor>& sampled_inputs,
                                       FlipKind kind, std::size_t out_size,
                                       bool post_softmax = true) {
    if (sampled_inputs.empty()) throw ValueError("video_score needs at least one input");
    std::vector<double> mean;
    std::size_t count = 0;
    for (const Tensor& canvas_input : sampled_inputs) {
        for (const Tensor& crop : ten_crop(canvas_input, kind, out_size)) {
            std::vector<double> s = fn(crop);
            if (post_softmax) s = softmax_scores(s);
            if (mean.empty()) mean.assign(s.size(), 0.0);
            if (s.size() != mean.size()) {
                throw ShapeError("score length changed between crops");
            }
            for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
            ++count;
        }
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

// fused_c = w_spatial * s_c + w_temporal * t_c, unnormalized.
inline std::vector<double> fuse(const std::vector<double>& spatial,
                                const std::vector<double>& temporal,
                                const FusionWeights& weights) {
    weights.validate();
    if (spatial.size() != temporal.size()) {
        throw ShapeError("fuse: spatial has " + std::to_string(spatial.size()) +
                         " classes, temporal has " + std::to_string(temporal.size()));
    }
    std::vector<double> fused(spatial.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        fused[i] = weights.w_spatial * spatial[i] + weights.w_temporal * temporal[i];
    }
    return fused;
}

// Lowest index wins ties.
inline std::size_t argmax_class(const std::vector<double>& scores) {
    return static_cast<std::size_t>(
        std::max_element(scores.begin(), scores.end()) - scores.begin());
}

struct EvalOptions {
    std::size_t n_frames = kEvalFrames;
    std::size_t out_size = 224;
    FusionWeights weights;
    double flow_bound = kDefaultFlowBound;
    bool post_softmax = true;
};

struct VideoEval {
    std::size_t index = 0;
    std::size_t label = 0;
    std::vector<double> spatial;
    std::vector<double> temporal;
    std::vector<double> fused;
    bool failed = false;
    std::string error;
};

struct EvalReport {
    double spatial_acc = 0.0;
    double temporal_acc = 0.0;
    double fused_acc = 0.0;
    std::size_t evaluated = 0;
    std::size_t failures = 0;
    std::uint64_t spatial_forwards = 0;
    std::uint64_t temporal_forwards = 0;
    std::vector<VideoEval> videos;
};

inline std::vector<Tensor> spatial_eval_inputs(const VideoData& video, std::size_t n) {
    if (video.frames.empty()) throw ValueError("video has no frames");
    std::vector<Tensor> inputs;
    for (std::size_t idx : sample_frames(video.frames.size(), n)) {
        inputs.push_back(video.frames[idx]);
    }
    return inputs;
}

// Each sampled position anchors the start of a 10-field window; the final
// starts clamp to F - 10.
inline std::vector<Tensor> temporal_eval_inputs(const VideoData& video, std::size_t n,
                                                double flow_bound) {
    if (video.flows.size() < kStackFrames) {
        throw ValueError("video has " + std::to_string(video.flows.size()) +
                         " flow fields, needs " + std::to_string(kStackFrames));
    }
    std::vector<Tensor> inputs;
    for (std::size_t start : sample_frames(video.flows.size(), n)) {
        start = std::min(start, video.flows.size() - kStackFrames);
        std::vector<FlowField> window(
            video.flows.begin() + static_cast<std::ptrdiff_t>(start),
            video.flows.begin() + static_cast<std::ptrdiff_t>(start + kStackFrames));
        inputs.push_back(build_stack(window, flow_bound, start).data);
    }
    return inputs;
}

// Full two-stream evaluation over a manifest. Unreadable entries are counted
// as failures and skipped; accuracies are over the evaluated videos.
inline EvalReport evaluate(const ScoreFn& spatial_fn, const ScoreFn& temporal_fn,
                           const std::vector<ManifestEntry>& entries,
                           const std::filesystem::path& root, const EvalOptions& opts) {
    if (entries.empty()) throw ValueError("empty manifest");
    opts.weights.validate();
    EvalReport report;
    std::size_t spatial_ok = 0, temporal_ok = 0, fused_ok = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        VideoEval ve;
        ve.index = i;
        ve.label = entries[i].label;
        try {
            VideoData video = load_video(entries[i], root, true, true);
            auto count_spatial = [&](const Tensor& crop) {
                ++report.spatial_forwards;
                return spatial_fn(crop);
            };
            auto count_temporal = [&](const Tensor& crop) {
                ++report.temporal_forwards;
                return temporal_fn(crop);
            };
            ve.spatial = video_score(count_spatial, spatial_eval_inputs(video, opts.n_frames),
                                     FlipKind::rgb, opts.out_size, opts.post_softmax);
            ve.temporal = video_score(
                count_temporal, temporal_eval_inputs(video, opts.n_frames, opts.flow_bound),
                FlipKind::flow_stack, opts.out_size, opts.post_softmax);
            ve.fused = fuse(ve.spatial, ve.temporal, opts.weights);
        } catch (const std::exception& e) {
            ve.failed = true;
            ve.error = e.what();
            ++report.failures;
            report.videos.push_back(std::move(ve));
            continue;
        }
        ++report.evaluated;
        if (argmax_class(ve.spatial) == ve.label) ++spatial_ok;
        if (argmax_class(ve.temporal) == ve.label) ++temporal_ok;
        if (argmax_class(ve.fused) == ve.label) ++fused_ok;
        report.videos.push_back(std::move(ve));
    }
    if (report.evaluated == 0) {
        throw ValueError("no manifest entry could be evaluated (" +
                         std::to_string(report.failures) + " failures)");
    }
    auto d = static_cast<double>(report.evaluated);
    report.spatial_acc = static_cast<double>(spatial_ok) / d;
    report.temporal_acc = static_cast<double>(temporal_ok) / d;
    report.fused_acc = static_cast<double>(fused_ok) / d;
    return report;
}

}  // namespace twostream
