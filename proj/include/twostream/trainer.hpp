#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twostream/augment.hpp"
#include "twostream/config.hpp"
#include "twostream/flow.hpp"
#include "twostream/manifest.hpp"
#include "twostream/model.hpp"
#include "twostream/nn.hpp"
#include "twostream/rng.hpp"
#include "twostream/schedule.hpp"

namespace twostream {

// Named randomness streams under the run seed.
constexpr std::uint64_t kStreamShuffle = 0x5348ull;   // epoch reshuffle
constexpr std::uint64_t kStreamSample = 0x5341ull;    // per-iteration batch assembly
constexpr std::uint64_t kStreamDropout = 0x4452ull;   // dropout masks

struct TrainState {
    ToyModel model;
    std::vector<LayerParams> velocity;   // parallel to model.params, zero-initialized
    double momentum = 0.9;
    double weight_decay = 0.0;
};

inline TrainState init_train_state(ToyModel model, double momentum, double weight_decay) {
    TrainState st{std::move(model), {}, momentum, weight_decay};
    st.velocity.resize(st.model.params.size());
    for (std::size_t i = 0; i < st.model.params.size(); ++i) {
        if (st.model.params[i].has_params()) {
            st.velocity[i] = {Tensor(st.model.params[i].weights.shape()),
                              Tensor(st.model.params[i].bias.shape())};
        }
    }
    return st;
}

struct WorkerGrad {
    GradSet grads;
    double loss = 0.0;
};

inline WorkerGrad compute_worker_grad(const ToyModel& model, const Tensor& batch,
                                      const std::vector<std::size_t>& labels,
                                      std::uint64_t dropout_seed, std::uint64_t iteration,
                                      std::size_t global_row_offset) {
    DropoutPlan plan{true, dropout_seed, iteration, global_row_offset};
    ForwardTrace trace = model_forward(model, batch, plan);
    SoftmaxLoss loss = softmax_cross_entropy(trace.logits, labels);
    WorkerGrad wg{model_backward(model, trace, loss.grad_logits), loss.loss};
    return wg;
}

inline void apply_sgd(TrainState& state, const GradSet& grads, double lr) {
    for (std::size_t i = 0; i < state.model.params.size(); ++i) {
        if (!state.model.params[i].has_params()) continue;
        sgd_step(state.model.params[i].weights, grads.grads[i].weights, lr, state.momentum,
                 state.weight_decay, state.velocity[i].weights);
        sgd_step(state.model.params[i].bias, grads.grads[i].bias, lr, state.momentum,
                 state.weight_decay, state.velocity[i].bias);
    }
}

// One SGD step on the full batch; dropout keyed by (seed, layer, iter).
inline double train_step(TrainState& state, const Tensor& batch,
                         const std::vector<std::size_t>& labels, double lr,
                         std::uint64_t seed, std::uint64_t iteration) {
    if (batch.extent(0) == 0) throw ValueError("empty batch");
    WorkerGrad wg = compute_worker_grad(state.model, batch, labels, seed, iteration, 0);
    if (!std::isfinite(wg.loss)) {
        throw ValueError("non-finite loss at iteration " + std::to_string(iteration) +
                         " (divergence)");
    }
    apply_sgd(state, wg.grads, lr);
    return wg.loss;
}

// ---------------------------------------------------------------------------
// Simulated data-parallel training. Workers are sequential stand-ins for the
// multi-GPU processes: each computes gradients on its shard from the shared
// parameters, and the reduction runs pairwise in worker-id order regardless
// of execution order, so results never depend on completion order.
// ---------------------------------------------------------------------------

struct WorkerShard {
    unsigned worker_id = 0;
    std::uint64_t iteration = 0;
    Tensor batch;                        // n x C x H x W slice of the global batch
    std::vector<std::size_t> labels;
    std::size_t global_row_offset = 0;   // worker_id * shard_size
};

inline std::vector<WorkerShard> make_shards(const Tensor& batch,
                                            const std::vector<std::size_t>& labels,
                                            unsigned workers, std::uint64_t iteration) {
    std::size_t n = batch.extent(0);
    if (workers == 0 || n % workers != 0) {
        throw ValueError("batch of " + std::to_string(n) + " does not split into " +
                         std::to_string(workers) + " equal shards");
    }
    std::size_t per = n / workers;
    std::vector<WorkerShard> shards;
    for (unsigned w = 0; w < workers; ++w) {
        WorkerShard s;
        s.worker_id = w;
        s.iteration = iteration;
        s.batch = slice_leading(batch, w * per, per);
        s.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(w * per),
                        labels.begin() + static_cast<std::ptrdiff_t>((w + 1) * per));
        s.global_row_offset = w * per;
        shards.push_back(std::move(s));
    }
    return shards;
}

struct SyncPolicy {
    SyncMode mode = SyncMode::full_param_sync;
};

// Ring all-reduce moves 2(K-1)/K of the payload per participant.
inline std::uint64_t ring_all_reduce_bytes(std::uint64_t payload_bytes, unsigned workers) {
    if (workers <= 1) return 0;
    double factor = 2.0 * static_cast<double>(workers - 1) / static_cast<double>(workers);
    return static_cast<std::uint64_t>(
        std::llround(factor * static_cast<double>(payload_bytes)));
}

// Transfer accounting uses 4-byte elements, matching the modeled training
// precision rather than the 64-bit desk-scale substrate.
constexpr std::uint64_t kWireElementBytes = 4;

struct CommVolume {
    std::uint64_t total_bytes = 0;
    std::uint64_t param_sync_bytes = 0;       // gradient all-reduce traffic
    std::uint64_t activation_bytes = 0;       // fc-input gather + gradient scatter
    std::uint64_t synced_param_count = 0;     // parameters whose gradients are synced
    std::uint64_t fc_param_sync_bytes = 0;    // what syncing the fc block would cost
};

inline std::size_t first_linear_in_dim(const LayerLayout& layout) {
    for (const LayerDesc& d : layout.layers) {
        if (const auto* lin = std::get_if<LinearLayer>(&d)) return lin->in_dim;
    }
    throw ValueError("layout has no linear layer");
}

inline CommVolume comm_volume(const LayerLayout& layout, unsigned workers,
                              const SyncPolicy& policy, std::size_t batch_per_worker,
                              std::size_t fc_input_dim) {
    if (fc_input_dim != first_linear_in_dim(layout)) {
        throw ValueError("fc_input_dim " + std::to_string(fc_input_dim) +
                         " does not match the first linear layer's input dim " +
                         std::to_string(first_linear_in_dim(layout)));
    }
    ParamCounts counts = param_count(layout);
    CommVolume v;
    v.fc_param_sync_bytes = ring_all_reduce_bytes(counts.linear * kWireElementBytes, workers);
    if (workers <= 1) return v;   // a single worker moves nothing
    if (policy.mode == SyncMode::full_param_sync) {
        v.synced_param_count = counts.total;
        v.param_sync_bytes = ring_all_reduce_bytes(counts.total * kWireElementBytes, workers);
    } else {
        v.synced_param_count = counts.conv;
        v.param_sync_bytes = ring_all_reduce_bytes(counts.conv * kWireElementBytes, workers);
        // fc inputs gathered from every worker, fc input gradients scattered back
        v.activation_bytes = 2ull * workers * batch_per_worker * fc_input_dim *
                             kWireElementBytes;
    }
    v.total_bytes = v.param_sync_bytes + v.activation_bytes;
    return v;
}

// Smallest batch_per_worker at which activation traffic reaches the fc
// parameter sync it replaces; gather wins strictly below this point.
inline std::uint64_t break_even_batch_per_worker(const LayerLayout& layout, unsigned workers,
                                                 std::size_t fc_input_dim) {
    if (workers < 2) throw ValueError("break-even needs at least 2 workers");
    ParamCounts counts = param_count(layout);
    std::uint64_t fc_sync = ring_all_reduce_bytes(counts.linear * kWireElementBytes, workers);
    std::uint64_t per_sample = 2ull * workers * fc_input_dim * kWireElementBytes;
    return (fc_sync + per_sample - 1) / per_sample;
}

struct StepResult {
    double loss = 0.0;
    std::uint64_t synced_bytes = 0;
};

inline StepResult data_parallel_step(TrainState& state, const std::vector<WorkerShard>& shards,
                                     double lr, const SyncPolicy& policy, std::uint64_t seed,
                                     std::uint64_t iteration,
                                     const std::vector<unsigned>& exec_order = {}) {
    if (shards.empty()) throw ValueError("no worker shards");
    std::size_t per = shards[0].batch.extent(0);
    for (std::size_t w = 0; w < shards.size(); ++w) {
        if (shards[w].worker_id != w) {
            throw ValueError("shards must be ordered by worker_id");
        }
        if (shards[w].iteration != iteration) {
            throw ValueError("shard iteration mismatch at worker " + std::to_string(w));
        }
        if (shards[w].batch.extent(0) != per) {
            throw ValueError("unequal shard sizes: worker " + std::to_string(w) + " has " +
                             std::to_string(shards[w].batch.extent(0)) + ", worker 0 has " +
                             std::to_string(per));
        }
    }
    auto workers = static_cast<unsigned>(shards.size());

    std::vector<unsigned> order = exec_order;
    if (order.empty()) {
        for (unsigned w = 0; w < workers; ++w) order.push_back(w);
    }
    if (order.size() != workers) throw ValueError("exec_order must list every worker once");

    // Gradients land in slots indexed by worker_id no matter when they run.
    std::vector<WorkerGrad> per_worker(workers);
    std::vector<bool> done(workers, false);
    for (unsigned w : order) {
        if (w >= workers || done[w]) throw ValueError("exec_order must list every worker once");
        per_worker[w] = compute_worker_grad(state.model, shards[w].batch, shards[w].labels,
                                            seed, iteration, shards[w].global_row_offset);
        done[w] = true;
    }

    // Pairwise tree reduction in ascending worker_id order, then the exact
    // 1/K scale (K is a power of two in all bundled configs, and the scale
    // is applied identically in the single-process oracle path).
    for (unsigned stride = 1; stride < workers; stride *= 2) {
        for (unsigned i = 0; i + stride < workers; i += 2 * stride) {
            GradSet& a = per_worker[i].grads;
            const GradSet& b = per_worker[i + stride].grads;
            for (std::size_t l = 0; l < a.grads.size(); ++l) {
                if (!state.model.params[l].has_params()) continue;
                for (std::size_t j = 0; j < a.grads[l].weights.size(); ++j) {
                    a.grads[l].weights[j] += b.grads[l].weights[j];
                }
                for (std::size_t j = 0; j < a.grads[l].bias.size(); ++j) {
                    a.grads[l].bias[j] += b.grads[l].bias[j];
                }
            }
            per_worker[i].loss += per_worker[i + stride].loss;
        }
    }
    GradSet& reduced = per_worker[0].grads;
    double scale = 1.0 / static_cast<double>(workers);
    for (std::size_t l = 0; l < reduced.grads.size(); ++l) {
        if (!state.model.params[l].has_params()) continue;
        for (std::size_t j = 0; j < reduced.grads[l].weights.size(); ++j) {
            reduced.grads[l].weights[j] *= scale;
        }
        for (std::size_t j = 0; j < reduced.grads[l].bias.size(); ++j) {
            reduced.grads[l].bias[j] *= scale;
        }
    }
    double loss = per_worker[0].loss * scale;
    if (!std::isfinite(loss)) {
        throw ValueError("non-finite loss at iteration " + std::to_string(iteration) +
                         " (divergence)");
    }
    apply_sgd(state, reduced, lr);

    CommVolume vol = comm_volume(state.model.cfg.layout, workers, policy, per,
                                 first_linear_in_dim(state.model.cfg.layout));
    return {loss, vol.total_bytes};
}

// ---------------------------------------------------------------------------
// Seeded batch assembly over a loaded dataset: cycles with per-epoch
// reshuffle; per-slot frame/window choice and crop sampling are keyed by
// (seed, iteration, slot) so the batch is identical for any worker count.
// ---------------------------------------------------------------------------

class BatchSampler {
public:
    BatchSampler(const DatasetCache& data, const RunConfig& cfg)
        : data_(&data), cfg_(cfg), canvas_(cfg.canvas_spec()) {
        if (data.videos.empty()) throw ValueError("dataset is empty");
        for (const VideoData& v : data.videos) {
            if (cfg.stream == Stream::spatial && v.frames.empty()) {
                throw ValueError("video has no frames");
            }
            if (cfg.stream == Stream::temporal && v.flows.size() < kStackFrames) {
                throw ValueError("video has fewer than " + std::to_string(kStackFrames) +
                                 " flow fields");
            }
        }
        reshuffle();
    }

    struct Batch {
        Tensor inputs;
        std::vector<std::size_t> labels;
    };

    Batch next(std::uint64_t iteration) {
        std::vector<Tensor> inputs;
        std::vector<std::size_t> labels;
        std::uint64_t iter_key = derive_key(cfg_.seed, kStreamSample, iteration);
        for (std::size_t slot = 0; slot < cfg_.batch; ++slot) {
            const VideoData& video = data_->videos[next_index()];
            CounterRng rng(derive_key(iter_key, slot));
            inputs.push_back(sample_input(video, rng));
            labels.push_back(video.label);
        }
        return {stack_leading(inputs), std::move(labels)};
    }

private:
    std::size_t next_index() {
        if (cursor_ == order_.size()) {
            ++epoch_;
            reshuffle();
        }
        return order_[cursor_++];
    }

    void reshuffle() {
        order_.resize(data_->videos.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        CounterRng rng(derive_key(cfg_.seed, kStreamShuffle, epoch_));
        shuffle(order_, rng);
        cursor_ = 0;
    }

    Tensor sample_input(const VideoData& video, CounterRng& rng) {
        if (cfg_.stream == Stream::spatial) {
            const Tensor& frame = video.frames[rng.next_below(video.frames.size())];
            CropSpec cs = sample_crop(canvas_, rng.next_u64());
            return normalize_rgb(apply_crop(frame, cs, canvas_, FlipKind::rgb));
        }
        std::size_t start = rng.next_below(video.flows.size() - kStackFrames + 1);
        std::vector<FlowField> window(video.flows.begin() + static_cast<std::ptrdiff_t>(start),
                                      video.flows.begin() +
                                          static_cast<std::ptrdiff_t>(start + kStackFrames));
        FlowStack stack = build_stack(window, cfg_.flow_bound, start);
        CropSpec cs = sample_crop(canvas_, rng.next_u64());
        if (!cfg_.augment_flow) {
            // corner cropping and flips stay; only the multi-scale jitter is
            // disabled for flow stacks
            cs.crop_w = cfg_.out_size;
            cs.crop_h = cfg_.out_size;
        }
        return normalize_flow_stack(apply_crop(stack.data, cs, canvas_, FlipKind::flow_stack));
    }

    const DatasetCache* data_;
    RunConfig cfg_;
    CanvasSpec canvas_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
};

struct TrainRecord {
    std::uint64_t iteration = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::uint64_t synced_bytes = 0;
    double elapsed_ms = 0.0;
};

struct TrainResult {
    std::vector<TrainRecord> records;
    TrainState state;
};

using RecordSink = std::function<void(const TrainRecord&)>;

// Runs data_parallel_step until the schedule stops; emits one record per
// iteration.
inline TrainResult run_training(const RunConfig& cfg, const DatasetCache& data,
                                const RecordSink& sink = {}) {
    cfg.validate();
    ToyModel model = build_toy_model(cfg.model_config());
    TrainState state = init_train_state(std::move(model), cfg.momentum, cfg.weight_decay);
    SyncPolicy policy{cfg.sync_mode};
    std::uint64_t dropout_seed = derive_key(cfg.seed, kStreamDropout);
    BatchSampler sampler(data, cfg);

    TrainResult result{{}, std::move(state)};
    for (std::uint64_t iter = 0;; ++iter) {
        std::optional<double> lr = lr_at(cfg.schedule, iter);
        if (!lr) break;
        auto t0 = std::chrono::steady_clock::now();
        BatchSampler::Batch batch = sampler.next(iter);
        auto shards = make_shards(batch.inputs, batch.labels, cfg.workers, iter);
        StepResult step = data_parallel_step(result.state, shards, *lr, policy, dropout_seed,
                                             iter);
        auto t1 = std::chrono::steady_clock::now();
        TrainRecord rec{iter, step.loss, *lr, step.synced_bytes,
                        std::chrono::duration<double, std::milli>(t1 - t0).count()};
        if (sink) sink(rec);
        result.records.push_back(rec);
    }
    return result;
}

// Deterministic center-crop accuracy over the whole dataset: middle frame
// for the spatial stream, middle 10-field window for the temporal one.
inline double dataset_accuracy(const ToyModel& model, const DatasetCache& data,
                               const RunConfig& cfg) {
    if (data.videos.empty()) throw ValueError("dataset is empty");
    CanvasSpec canvas = cfg.canvas_spec();
    CropSpec center{cfg.out_size, cfg.out_size, CropPosition::center, false};
    std::size_t correct = 0;
    for (const VideoData& video : data.videos) {
        Tensor input;
        if (cfg.stream == Stream::spatial) {
            const Tensor& frame = video.frames[video.frames.size() / 2];
            input = normalize_rgb(apply_crop(frame, center, canvas, FlipKind::rgb));
        } else {
            std::size_t start = (video.flows.size() - kStackFrames) / 2;
            std::vector<FlowField> window(
                video.flows.begin() + static_cast<std::ptrdiff_t>(start),
                video.flows.begin() + static_cast<std::ptrdiff_t>(start + kStackFrames));
            FlowStack stack = build_stack(window, cfg.flow_bound, start);
            input = normalize_flow_stack(
                apply_crop(stack.data, center, canvas, FlipKind::flow_stack));
        }
        Shape s = input.shape();
        ForwardTrace trace = model_forward(
            model, input.reshaped({1, s[0], s[1], s[2]}), DropoutPlan{});
        const Tensor& logits = trace.logits;
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.extent(1); ++j) {
            if (logits.at(0, j) > logits.at(0, best)) best = j;
        }
        if (best == video.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.videos.size());
}

}  // namespace twostream
