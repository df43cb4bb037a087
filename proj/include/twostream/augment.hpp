#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "twostream/rng.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

// Training-time crop sampling: corner-constrained positions, multi-scale size
// jitter from a fixed scale set (width and height drawn independently, which
// is what produces the aspect-ratio variation), and horizontal flipping.

struct CanvasSpec {
    std::size_t width = 340;
    std::size_t height = 256;
    std::vector<std::size_t> scale_set = {256, 224, 192, 168};
    std::size_t out_size = 224;

    void validate() const {
        if (width == 0 || height == 0) throw ValueError("canvas dims must be positive");
        if (out_size == 0) throw ValueError("out_size must be >= 1");
        if (scale_set.empty()) throw ValueError("scale_set must be non-empty");
        for (std::size_t s : scale_set) {
            if (s == 0 || s > std::min(width, height)) {
                throw ValueError("scale " + std::to_string(s) + " does not fit canvas " +
                                 std::to_string(width) + "x" + std::to_string(height));
            }
        }
    }
};

enum class CropPosition : std::uint8_t {
    top_left = 0,
    top_right = 1,
    bottom_left = 2,
    bottom_right = 3,
    center = 4
};

inline const char* crop_position_name(CropPosition p) {
    switch (p) {
        case CropPosition::top_left: return "tl";
        case CropPosition::top_right: return "tr";
        case CropPosition::bottom_left: return "bl";
        case CropPosition::bottom_right: return "br";
        case CropPosition::center: return "c";
    }
    throw ValueError("invalid crop position");
}

inline CropPosition parse_crop_position(const std::string& s) {
    if (s == "tl") return CropPosition::top_left;
    if (s == "tr") return CropPosition::top_right;
    if (s == "bl") return CropPosition::bottom_left;
    if (s == "br") return CropPosition::bottom_right;
    if (s == "c") return CropPosition::center;
    throw ValueError("unknown crop position '" + s + "'");
}

struct CropSpec {
    std::size_t crop_w = 0;
    std::size_t crop_h = 0;
    CropPosition position = CropPosition::center;
    bool flip = false;

    bool operator==(const CropSpec&) const = default;

    // Single-line record "w,h,position,flip" for augmentation-preview dumps.
    std::string to_record() const {
        std::ostringstream os;
        os << crop_w << "," << crop_h << "," << crop_position_name(position) << ","
           << (flip ? 1 : 0);
        return os.str();
    }

    static CropSpec from_record(const std::string& line) {
        std::istringstream is(line);
        std::string w, h, pos, flip;
        if (!std::getline(is, w, ',') || !std::getline(is, h, ',') ||
            !std::getline(is, pos, ',') || !std::getline(is, flip)) {
            throw ValueError("malformed CropSpec record '" + line + "'");
        }
        CropSpec cs;
        cs.crop_w = std::stoul(w);
        cs.crop_h = std::stoul(h);
        cs.position = parse_crop_position(pos);
        cs.flip = flip == "1";
        return cs;
    }
};

struct Offset {
    std::size_t x = 0;
    std::size_t y = 0;
    bool operator==(const Offset&) const = default;
};

// Fixed order [TL, TR, BL, BR, C].
inline std::array<Offset, 5> corner_offsets(std::size_t canvas_w, std::size_t canvas_h,
                                            std::size_t crop_w, std::size_t crop_h) {
    if (crop_w > canvas_w || crop_h > canvas_h) {
        throw ShapeError("crop " + std::to_string(crop_w) + "x" + std::to_string(crop_h) +
                         " larger than canvas " + std::to_string(canvas_w) + "x" +
                         std::to_string(canvas_h));
    }
    std::size_t dx = canvas_w - crop_w;
    std::size_t dy = canvas_h - crop_h;
    return {Offset{0, 0}, Offset{dx, 0}, Offset{0, dy}, Offset{dx, dy},
            Offset{dx / 2, dy / 2}};
}

// Width, height, position and flip drawn in that fixed order so identical
// seeds give identical specs.
inline CropSpec sample_crop(const CanvasSpec& spec, std::uint64_t rng_seed) {
    spec.validate();
    CounterRng rng(rng_seed);
    CropSpec cs;
    cs.crop_w = spec.scale_set[rng.next_below(spec.scale_set.size())];
    cs.crop_h = spec.scale_set[rng.next_below(spec.scale_set.size())];
    cs.position = static_cast<CropPosition>(rng.next_below(5));
    cs.flip = rng.next_bool();
    return cs;
}

enum class FlipKind { rgb, flow_stack };

// Reverse the W axis for every channel. Flow stacks additionally remap each
// u-channel (even channel index) value q -> 255 - q, the image of a negated
// horizontal displacement under the symmetric quantizer.
inline Tensor flip_input(const Tensor& input, FlipKind kind) {
    if (input.rank() != 3) {
        throw ShapeError("flip_input expects C x H x W, got " + shape_str(input.shape()));
    }
    std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (kind == FlipKind::flow_stack && c % 2 != 0) {
        throw ShapeError("flow stack must have an even channel count, got " +
                         std::to_string(c));
    }
    Tensor out(input.shape());
    for (std::size_t ci = 0; ci < c; ++ci) {
        bool is_u = kind == FlipKind::flow_stack && ci % 2 == 0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double v = input.at(ci, y, w - 1 - x);
                out.at(ci, y, x) = is_u ? 255.0 - v : v;
            }
    }
    return out;
}

// Bilinear resize with half-pixel-center mapping and clamp-at-border. An
// identity when source and destination sizes agree.
inline Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 3) {
        throw ShapeError("bilinear_resize expects C x H x W, got " + shape_str(input.shape()));
    }
    std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (out_h == 0 || out_w == 0) throw ValueError("resize target must be positive");
    Tensor out({c, out_h, out_w});
    double sy = static_cast<double>(h) / static_cast<double>(out_h);
    double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        double cy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        auto y0 = static_cast<std::size_t>(cy);
        std::size_t y1 = std::min(y0 + 1, h - 1);
        double wy = cy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            double cx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            auto x0 = static_cast<std::size_t>(cx);
            std::size_t x1 = std::min(x0 + 1, w - 1);
            double wx = cx - static_cast<double>(x0);
            for (std::size_t ci = 0; ci < c; ++ci) {
                double top = (1.0 - wx) * input.at(ci, y0, x0) + wx * input.at(ci, y0, x1);
                double bot = (1.0 - wx) * input.at(ci, y1, x0) + wx * input.at(ci, y1, x1);
                out.at(ci, y, x) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

inline Tensor extract_window(const Tensor& image, Offset at, std::size_t crop_w,
                             std::size_t crop_h) {
    std::size_t c = image.extent(0);
    Tensor out({c, crop_h, crop_w});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < crop_h; ++y)
            for (std::size_t x = 0; x < crop_w; ++x)
                out.at(ci, y, x) = image.at(ci, at.y + y, at.x + x);
    return out;
}

// Extract the window named by the CropSpec, resize to out_size x out_size,
// then flip if requested.
inline Tensor apply_crop(const Tensor& image, const CropSpec& cs, const CanvasSpec& spec,
                         FlipKind kind = FlipKind::rgb) {
    spec.validate();
    if (image.rank() != 3 || image.extent(1) != spec.height || image.extent(2) != spec.width) {
        throw ShapeError("image " + shape_str(image.shape()) + " does not match canvas " +
                         std::to_string(spec.width) + "x" + std::to_string(spec.height));
    }
    auto offsets = corner_offsets(spec.width, spec.height, cs.crop_w, cs.crop_h);
    Offset at = offsets[static_cast<std::size_t>(cs.position)];
    Tensor window = extract_window(image, at, cs.crop_w, cs.crop_h);
    Tensor resized = (cs.crop_w == spec.out_size && cs.crop_h == spec.out_size)
                         ? std::move(window)
                         : bilinear_resize(window, spec.out_size, spec.out_size);
    return cs.flip ? flip_input(resized, kind) : resized;
}

}  // namespace twostream
