#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "twostream/manifest.hpp"
#include "twostream/rng.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

// Synthetic "moving bar" videos: a textured rectangle drifts over a plain
// background with wrap-around. Appearance (texture + color) carries the
// spatial signal, motion direction/speed carries the temporal one, and the
// emitted flow fields are the exact bar velocity over bar pixels.
//
// joint mode: every class has a unique texture AND a unique vertical
// velocity, so either stream alone can separate the data.
//
// complementary mode (even class count): the first half of the classes have
// unique textures but share an uninformative horizontal drift of random
// sign; the second half share one texture and differ only in vertical
// velocity. Each stream alone is ambiguous on half the classes; fusion is
// not. Class-informative velocities are vertical throughout so horizontal
// flipping never relabels a video.

enum class SynthMode { joint, complementary };

inline SynthMode parse_synth_mode(const std::string& s) {
    if (s == "joint") return SynthMode::joint;
    if (s == "complementary") return SynthMode::complementary;
    throw ValueError("unknown synth mode '" + s + "' (expected joint or complementary)");
}

struct SynthSpec {
    std::size_t classes = 2;
    std::size_t videos_per_class = 10;
    std::size_t frames = 30;
    std::size_t canvas_w = 64;
    std::size_t canvas_h = 48;
    SynthMode mode = SynthMode::joint;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes == 0 || classes > 8) {
            throw ValueError("synth supports 1..8 classes, got " + std::to_string(classes));
        }
        if (mode == SynthMode::complementary && classes % 2 != 0) {
            throw ValueError("complementary mode needs an even class count");
        }
        if (videos_per_class == 0) throw ValueError("videos_per_class must be positive");
        if (frames < 2) throw ValueError("need at least 2 frames to emit flow");
        if (canvas_w < 12 || canvas_h < 12) throw ValueError("canvas must be at least 12x12");
    }
};

namespace synth_detail {

struct Velocity {
    double vx = 0.0, vy = 0.0;
};

// Class-distinctive velocities, vertical only.
inline Velocity vertical_velocity(std::size_t id) {
    static const double speeds[] = {2.0, -2.0, 1.0, -1.0, 3.0, -3.0, 4.0, -4.0};
    return {0.0, speeds[id % 8]};
}

struct Rgb {
    double r, g, b;
};

inline Rgb palette(std::size_t id) {
    static const Rgb colors[] = {
        {0.90, 0.20, 0.20}, {0.20, 0.90, 0.20}, {0.20, 0.20, 0.90},
        {0.90, 0.90, 0.20}, {0.90, 0.20, 0.90}, {0.20, 0.90, 0.90},
        {0.75, 0.55, 0.30}, {0.55, 0.30, 0.75}, {0.85, 0.65, 0.65},
    };
    return colors[id % 9];
}

// Stripe/checker intensity in bar-local coordinates; all patterns are stable
// under horizontal flips up to a phase shift.
inline double pattern(std::size_t id, std::size_t lx, std::size_t ly) {
    if (id % 3 == 0) return (ly / 2) % 2 == 0 ? 1.0 : 0.45;
    if (id % 3 == 1) return ((lx / 2) + (ly / 2)) % 2 == 0 ? 1.0 : 0.45;
    return 0.85;
}

struct VideoParams {
    std::size_t texture_id = 0;
    Velocity velocity;
    std::size_t x0 = 0, y0 = 0;   // bar origin at frame 0
    std::size_t bar_w = 0, bar_h = 0;
};

inline VideoParams video_params(const SynthSpec& spec, std::size_t cls, std::size_t idx) {
    VideoParams p;
    p.bar_w = std::max<std::size_t>(6, spec.canvas_w / 3);
    p.bar_h = std::max<std::size_t>(6, spec.canvas_h / 3);
    CounterRng rng(derive_key(spec.seed, cls, idx));
    p.x0 = rng.next_below(spec.canvas_w);
    p.y0 = rng.next_below(spec.canvas_h);
    if (spec.mode == SynthMode::joint) {
        p.texture_id = cls;
        p.velocity = vertical_velocity(cls);
    } else {
        std::size_t half = spec.classes / 2;
        if (cls < half) {
            // Appearance class: unique texture; horizontal drift alternates
            // sign by video index, so motion carries no label information.
            p.texture_id = cls;
            p.velocity = {idx % 2 == 0 ? 2.0 : -2.0, 0.0};
        } else {
            // Motion class: shared texture, unique vertical velocity.
            p.texture_id = half;
            p.velocity = vertical_velocity(cls - half);
        }
    }
    return p;
}

constexpr double kBackground = 0.08;

inline bool in_bar(const VideoParams& p, std::size_t canvas_w, std::size_t canvas_h,
                   std::size_t frame, std::size_t x, std::size_t y, std::size_t* lx,
                   std::size_t* ly) {
    auto w = static_cast<long long>(canvas_w);
    auto h = static_cast<long long>(canvas_h);
    long long bx = (static_cast<long long>(p.x0) +
                    llround(p.velocity.vx * static_cast<double>(frame))) % w;
    long long by = (static_cast<long long>(p.y0) +
                    llround(p.velocity.vy * static_cast<double>(frame))) % h;
    if (bx < 0) bx += w;
    if (by < 0) by += h;
    long long dx = (static_cast<long long>(x) - bx % w + w) % w;
    long long dy = (static_cast<long long>(y) - by % h + h) % h;
    if (dx < static_cast<long long>(p.bar_w) && dy < static_cast<long long>(p.bar_h)) {
        *lx = static_cast<std::size_t>(dx);
        *ly = static_cast<std::size_t>(dy);
        return true;
    }
    return false;
}

inline Tensor render_frame(const SynthSpec& spec, const VideoParams& p, std::size_t frame) {
    Tensor img = Tensor::full({3, spec.canvas_h, spec.canvas_w}, kBackground);
    Rgb base = palette(p.texture_id);
    for (std::size_t y = 0; y < spec.canvas_h; ++y)
        for (std::size_t x = 0; x < spec.canvas_w; ++x) {
            std::size_t lx, ly;
            if (!in_bar(p, spec.canvas_w, spec.canvas_h, frame, x, y, &lx, &ly)) continue;
            double k = pattern(p.texture_id, lx, ly);
            img.at(0, y, x) = base.r * k;
            img.at(1, y, x) = base.g * k;
            img.at(2, y, x) = base.b * k;
        }
    return img;
}

// Forward flow from frame to frame+1: bar velocity over bar pixels, zero
// elsewhere.
inline FlowField render_flow(const SynthSpec& spec, const VideoParams& p, std::size_t frame) {
    FlowField f{Tensor({spec.canvas_h, spec.canvas_w}), Tensor({spec.canvas_h, spec.canvas_w})};
    for (std::size_t y = 0; y < spec.canvas_h; ++y)
        for (std::size_t x = 0; x < spec.canvas_w; ++x) {
            std::size_t lx, ly;
            if (!in_bar(p, spec.canvas_w, spec.canvas_h, frame, x, y, &lx, &ly)) continue;
            f.u.at(y, x) = p.velocity.vx;
            f.v.at(y, x) = p.velocity.vy;
        }
    return f;
}

}  // namespace synth_detail

// Generates the dataset under out_dir and returns manifest entries with
// paths relative to out_dir. The caller writes the manifest file.
inline std::vector<ManifestEntry> synth_dataset(const SynthSpec& spec,
                                                const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string());
    }
    std::vector<ManifestEntry> entries;
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
        for (std::size_t idx = 0; idx < spec.videos_per_class; ++idx) {
            auto params = synth_detail::video_params(spec, cls, idx);
            std::string name = "class" + std::to_string(cls) + "_vid" + std::to_string(idx);
            auto dir = out_dir / name;
            std::filesystem::create_directories(dir, ec);
            if (ec) throw IoError("cannot create video directory " + dir.string());
            for (std::size_t t = 0; t < spec.frames; ++t) {
                write_tsr1(detail::numbered_file(dir, "frame", t),
                           synth_detail::render_frame(spec, params, t));
            }
            for (std::size_t t = 0; t + 1 < spec.frames; ++t) {
                write_tsr1(detail::numbered_file(dir, "flow", t),
                           flow_field_tensor(synth_detail::render_flow(spec, params, t)));
            }
            entries.push_back({std::filesystem::path(name), cls, spec.frames, MediaKind::rgb});
        }
    }
    return entries;
}

}  // namespace twostream
