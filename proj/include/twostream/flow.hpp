#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "twostream/tensor.hpp"

namespace twostream {

// 8-bit optical-flow codec: q = clamp(round((val + B) * 255 / (2B)), 0, 255)
// with half-away-from-zero rounding, plus assembly of 10-frame, 20-channel
// temporal-net input stacks.

struct FlowField {
    Tensor u;   // H x W horizontal displacement, pixels/frame
    Tensor v;   // H x W vertical displacement

    void validate() const {
        if (u.rank() != 2 || v.rank() != 2 || !u.same_shape(v)) {
            throw ShapeError("flow field planes must be equal 2-D shapes, got " +
                             shape_str(u.shape()) + " and " + shape_str(v.shape()));
        }
    }
};

constexpr std::size_t kStackFrames = 10;
constexpr double kDefaultFlowBound = 20.0;

struct FlowStack {
    Tensor data;                 // 20 x H x W, integral values in [0, 255]
    double bound = kDefaultFlowBound;
    std::size_t frame_span = 0;  // starting frame index t
};

inline double quantize_flow_value(double val, double bound) {
    double q = std::round((val + bound) * 255.0 / (2.0 * bound));
    return std::clamp(q, 0.0, 255.0);
}

inline double dequantize_flow_value(double q, double bound) {
    return q * (2.0 * bound) / 255.0 - bound;
}

inline Tensor quantize_plane(const Tensor& plane, double bound) {
    if (!(bound > 0.0)) throw ValueError("flow bound must be positive");
    Tensor out(plane.shape());
    for (std::size_t i = 0; i < plane.size(); ++i) {
        out[i] = quantize_flow_value(plane[i], bound);
    }
    return out;
}

inline FlowField quantize_flow(const FlowField& f, double bound) {
    f.validate();
    return {quantize_plane(f.u, bound), quantize_plane(f.v, bound)};
}

inline Tensor dequantize_plane(const Tensor& q, double bound) {
    Tensor out(q.shape());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = dequantize_flow_value(q[i], bound);
    return out;
}

inline FlowField dequantize_flow(const FlowField& q, double bound) {
    return {dequantize_plane(q.u, bound), dequantize_plane(q.v, bound)};
}

// Channel order [u_t, v_t, u_{t+1}, v_{t+1}, ..., u_{t+9}, v_{t+9}].
inline FlowStack build_stack(const std::vector<FlowField>& fields, double bound,
                             std::size_t t) {
    if (!(bound > 0.0)) throw ValueError("flow bound must be positive");
    if (fields.size() != kStackFrames) {
        throw ShapeError("build_stack needs exactly " + std::to_string(kStackFrames) +
                         " fields, got " + std::to_string(fields.size()));
    }
    for (const FlowField& f : fields) {
        f.validate();
        if (!f.u.same_shape(fields[0].u)) {
            throw ShapeError("flow fields disagree on dims: " + shape_str(f.u.shape()) +
                             " vs " + shape_str(fields[0].u.shape()));
        }
    }
    std::size_t h = fields[0].u.extent(0), w = fields[0].u.extent(1);
    FlowStack stack{Tensor({2 * kStackFrames, h, w}), bound, t};
    for (std::size_t k = 0; k < kStackFrames; ++k) {
        Tensor qu = quantize_plane(fields[k].u, bound);
        Tensor qv = quantize_plane(fields[k].v, bound);
        std::copy(qu.data(), qu.data() + qu.size(), stack.data.data() + (2 * k) * h * w);
        std::copy(qv.data(), qv.data() + qv.size(), stack.data.data() + (2 * k + 1) * h * w);
    }
    return stack;
}

// TSR1 shapes used on disk: real-valued fields f64 2 x H x W, quantized
// stacks u8 20 x H x W.
inline Tensor flow_field_tensor(const FlowField& f) {
    f.validate();
    return stack_leading({f.u, f.v});
}

inline FlowField flow_field_from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.extent(0) != 2) {
        throw ShapeError("flow field tensor must be 2 x H x W, got " + shape_str(t.shape()));
    }
    return {slice_leading(t, 0, 1).reshaped({t.extent(1), t.extent(2)}),
            slice_leading(t, 1, 1).reshaped({t.extent(1), t.extent(2)})};
}

}  // namespace twostream
