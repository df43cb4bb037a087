#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "twostream/rng.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

// Direct-summation layer math on NCHW tensors, forward plus exact analytic
// backward for every operation. Deterministic given inputs and seeds.

struct ConvParams {
    Tensor weights;      // (out_ch, in_ch, kh, kw)
    Tensor bias;         // (out_ch)
    std::size_t stride = 1;
    std::size_t pad = 0;

    std::size_t out_ch() const { return weights.extent(0); }
    std::size_t in_ch() const { return weights.extent(1); }
    std::size_t kh() const { return weights.extent(2); }
    std::size_t kw() const { return weights.extent(3); }

    void validate() const {
        if (weights.rank() != 4) {
            throw ShapeError("conv weights must be 4-D, got " + shape_str(weights.shape()));
        }
        if (bias.rank() != 1 || bias.extent(0) != out_ch()) {
            throw ShapeError("conv bias shape " + shape_str(bias.shape()) +
                             " does not match out_ch " + std::to_string(out_ch()));
        }
        if (stride == 0) throw ValueError("conv stride must be >= 1");
    }
};

namespace detail {

struct ConvDims {
    std::size_t n, ci, h, w, co, kh, kw, oh, ow;
};

inline ConvDims conv_dims(const Tensor& input, const ConvParams& p) {
    p.validate();
    if (input.rank() != 4) {
        throw ShapeError("conv input must be NCHW, got " + shape_str(input.shape()));
    }
    ConvDims d{input.extent(0), input.extent(1), input.extent(2), input.extent(3),
               p.out_ch(),      p.kh(),          p.kw(),          0,
               0};
    if (d.ci != p.in_ch()) {
        throw ShapeError("conv input channels do not match kernel: input " +
                         shape_str(input.shape()) + " vs weights " +
                         shape_str(p.weights.shape()));
    }
    std::size_t padded_h = d.h + 2 * p.pad;
    std::size_t padded_w = d.w + 2 * p.pad;
    if (padded_h < d.kh || padded_w < d.kw) {
        throw ShapeError("conv kernel " + shape_str(p.weights.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
    }
    if ((padded_h - d.kh) % p.stride != 0 || (padded_w - d.kw) % p.stride != 0) {
        throw ShapeError("conv output dims are not integral for input " +
                         shape_str(input.shape()) + ", kernel " +
                         shape_str(p.weights.shape()) + ", stride " +
                         std::to_string(p.stride) + ", pad " + std::to_string(p.pad));
    }
    d.oh = (padded_h - d.kh) / p.stride + 1;
    d.ow = (padded_w - d.kw) / p.stride + 1;
    return d;
}

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& input, const ConvParams& p) {
    auto d = detail::conv_dims(input, p);
    Tensor out({d.n, d.co, d.oh, d.ow});
    const auto pad = static_cast<std::ptrdiff_t>(p.pad);
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t o = 0; o < d.co; ++o)
            for (std::size_t y = 0; y < d.oh; ++y)
                for (std::size_t x = 0; x < d.ow; ++x) {
                    double acc = p.bias[o];
                    for (std::size_t c = 0; c < d.ci; ++c)
                        for (std::size_t ky = 0; ky < d.kh; ++ky) {
                            auto iy = static_cast<std::ptrdiff_t>(y * p.stride + ky) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                            for (std::size_t kx = 0; kx < d.kw; ++kx) {
                                auto ix = static_cast<std::ptrdiff_t>(x * p.stride + kx) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                                acc += input.at(n, c, static_cast<std::size_t>(iy),
                                                static_cast<std::size_t>(ix)) *
                                       p.weights.at(o, c, ky, kx);
                            }
                        }
                    out.at(n, o, y, x) = acc;
                }
    return out;
}

struct ConvGrads {
    Tensor grad_input;
    Tensor grad_weights;
    Tensor grad_bias;
};

inline ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p,
                                 const Tensor& grad_out) {
    auto d = detail::conv_dims(input, p);
    Shape expect{d.n, d.co, d.oh, d.ow};
    if (grad_out.shape() != expect) {
        throw ShapeError("conv grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match forward output " + shape_str(expect));
    }
    ConvGrads g{Tensor(input.shape()), Tensor(p.weights.shape()), Tensor(p.bias.shape())};
    const auto pad = static_cast<std::ptrdiff_t>(p.pad);
    for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t o = 0; o < d.co; ++o)
            for (std::size_t y = 0; y < d.oh; ++y)
                for (std::size_t x = 0; x < d.ow; ++x) {
                    double go = grad_out.at(n, o, y, x);
                    g.grad_bias[o] += go;
                    for (std::size_t c = 0; c < d.ci; ++c)
                        for (std::size_t ky = 0; ky < d.kh; ++ky) {
                            auto iy = static_cast<std::ptrdiff_t>(y * p.stride + ky) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                            for (std::size_t kx = 0; kx < d.kw; ++kx) {
                                auto ix = static_cast<std::ptrdiff_t>(x * p.stride + kx) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                                auto uy = static_cast<std::size_t>(iy);
                                auto ux = static_cast<std::size_t>(ix);
                                g.grad_weights.at(o, c, ky, kx) += input.at(n, c, uy, ux) * go;
                                g.grad_input.at(n, c, uy, ux) += p.weights.at(o, c, ky, kx) * go;
                            }
                        }
                }
    return g;
}

// Max pooling with floor-truncated output dims; windows overrunning the
// edge are dropped. Ties go to the first element in row-major scan order.
struct PoolResult {
    Tensor output;                     // (N, C, OH, OW)
    std::vector<std::size_t> argmax;   // flat index into the input, per output cell
};

inline PoolResult maxpool_forward(const Tensor& input, std::size_t window,
                                  std::size_t stride) {
    if (input.rank() != 4) {
        throw ShapeError("maxpool input must be NCHW, got " + shape_str(input.shape()));
    }
    if (window == 0 || stride == 0) throw ValueError("maxpool window and stride must be >= 1");
    std::size_t n = input.extent(0), c = input.extent(1), h = input.extent(2),
                w = input.extent(3);
    if (window > h || window > w) {
        throw ShapeError("maxpool window " + std::to_string(window) +
                         " larger than input " + shape_str(input.shape()));
    }
    std::size_t oh = (h - window) / stride + 1;
    std::size_t ow = (w - window) / stride + 1;
    PoolResult r{Tensor({n, c, oh, ow}), {}};
    r.argmax.resize(r.output.size());
    std::size_t cell = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x, ++cell) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            std::size_t iy = y * stride + ky;
                            std::size_t ix = x * stride + kx;
                            double v = input.at(ni, ci, iy, ix);
                            if (v > best) {
                                best = v;
                                best_idx = ((ni * c + ci) * h + iy) * w + ix;
                            }
                        }
                    r.output[cell] = best;
                    r.argmax[cell] = best_idx;
                }
    return r;
}

inline Tensor maxpool_backward(const Shape& input_shape,
                               const std::vector<std::size_t>& argmax,
                               const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("maxpool grad_out size " + std::to_string(grad_out.size()) +
                         " does not match recorded argmax count " +
                         std::to_string(argmax.size()));
    }
    Tensor grad_input(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
    return grad_input;
}

inline Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 2 || weights.rank() != 2) {
        throw ShapeError("linear expects 2-D input and weights, got " +
                         shape_str(input.shape()) + " and " + shape_str(weights.shape()));
    }
    std::size_t n = input.extent(0), d = input.extent(1);
    std::size_t dw = weights.extent(0), m = weights.extent(1);
    if (d != dw) {
        throw ShapeError("linear inner dims do not match: input " + shape_str(input.shape()) +
                         " vs weights " + shape_str(weights.shape()));
    }
    if (bias.rank() != 1 || bias.extent(0) != m) {
        throw ShapeError("linear bias shape " + shape_str(bias.shape()) +
                         " does not match out dim " + std::to_string(m));
    }
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = bias[j];
            for (std::size_t k = 0; k < d; ++k) acc += input.at(i, k) * weights.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

struct LinearGrads {
    Tensor grad_input;
    Tensor grad_weights;
    Tensor grad_bias;
};

inline LinearGrads linear_backward(const Tensor& input, const Tensor& weights,
                                   const Tensor& grad_out) {
    std::size_t n = input.extent(0), d = input.extent(1), m = weights.extent(1);
    if (grad_out.rank() != 2 || grad_out.extent(0) != n || grad_out.extent(1) != m) {
        throw ShapeError("linear grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match output (" + std::to_string(n) + ", " +
                         std::to_string(m) + ")");
    }
    LinearGrads g{Tensor({n, d}), Tensor({d, m}), Tensor({m})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double go = grad_out.at(i, j);
            g.grad_bias[j] += go;
            for (std::size_t k = 0; k < d; ++k) {
                g.grad_input.at(i, k) += go * weights.at(k, j);
                g.grad_weights.at(k, j) += go * input.at(i, k);
            }
        }
    return g;
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return out;
}

// Gradient at exactly 0 is 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "relu_backward");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(input[i] > 0.0)) grad[i] = 0.0;
    }
    return grad;
}

struct SoftmaxLoss {
    double loss;          // mean over the batch
    Tensor grad_logits;   // (softmax - onehot) / N
    Tensor probs;         // row-wise softmax, for score readers
};

inline SoftmaxLoss softmax_cross_entropy(const Tensor& logits,
                                         const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy expects N x C logits, got " +
                         shape_str(logits.shape()));
    }
    std::size_t n = logits.extent(0), c = logits.extent(1);
    if (labels.size() != n) {
        throw ShapeError("label count " + std::to_string(labels.size()) +
                         " does not match batch size " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c) {
            throw ValueError("label " + std::to_string(labels[i]) + " out of range [0, " +
                             std::to_string(c) + ")");
        }
    }
    SoftmaxLoss r{0.0, Tensor({n, c}), Tensor({n, c})};
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - mx);
        double log_sum = std::log(sum);
        for (std::size_t j = 0; j < c; ++j) {
            double p = std::exp(logits.at(i, j) - mx) / sum;
            r.probs.at(i, j) = p;
            r.grad_logits.at(i, j) = p / static_cast<double>(n);
        }
        r.grad_logits.at(i, labels[i]) -= 1.0 / static_cast<double>(n);
        r.loss += -(logits.at(i, labels[i]) - mx - log_sum);
    }
    r.loss /= static_cast<double>(n);
    return r;
}

inline Tensor softmax_rows(const Tensor& logits) {
    std::size_t n = logits.extent(0), c = logits.extent(1);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - mx);
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = std::exp(logits.at(i, j) - mx) / sum;
    }
    return out;
}

// Inverted dropout. The mask is a pure function of (key, element offset), so
// a worker holding rows [r0, r0+n) of the global batch reproduces exactly the
// mask the single-process run would apply to those rows.
enum class DropoutMode { train, inference };

struct DropoutState {
    double ratio = 0.0;
    DropoutMode mode = DropoutMode::inference;
    std::uint64_t key = 0;            // derive_key(seed, layer_id, iteration)
    std::size_t element_offset = 0;   // global flat offset of input[0]
    Tensor mask;                      // {0,1} per element, filled in train mode
};

inline Tensor dropout_apply(const Tensor& input, DropoutState& state) {
    if (state.ratio < 0.0 || state.ratio >= 1.0) {
        throw ValueError("dropout ratio must be in [0, 1), got " + std::to_string(state.ratio));
    }
    if (state.mode == DropoutMode::inference || state.ratio == 0.0) {
        return input;
    }
    double keep_scale = 1.0 / (1.0 - state.ratio);
    state.mask = Tensor(input.shape());
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        double u = uniform_at(state.key, state.element_offset + i);
        if (u >= state.ratio) {
            state.mask[i] = 1.0;
            out[i] = input[i] * keep_scale;
        }
    }
    return out;
}

inline Tensor dropout_backward(const Tensor& grad_out, const DropoutState& state) {
    if (state.mode == DropoutMode::inference || state.ratio == 0.0) return grad_out;
    require_same_shape(grad_out, state.mask, "dropout_backward");
    double keep_scale = 1.0 / (1.0 - state.ratio);
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= state.mask[i] * keep_scale;
    return grad;
}

// v <- momentum * v - lr * (g + weight_decay * p);  p <- p + v
inline void sgd_step(Tensor& params, const Tensor& grads, double lr, double momentum,
                     double weight_decay, Tensor& velocity) {
    require_same_shape(params, grads, "sgd_step params/grads");
    require_same_shape(params, velocity, "sgd_step params/velocity");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * (grads[i] + weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

}  // namespace twostream
