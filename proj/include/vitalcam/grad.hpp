#pragma once

// Reverse-mode kernels for every forward op in ops.hpp and attention.hpp.
// Each takes the forward operands plus the output gradient and returns the
// gradients of the operands it was asked for.

#include <optional>

#include "vitalcam/attention.hpp"
#include "vitalcam/ops.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

template <typename T>
struct ConvGrads {
    std::optional<BasicTensor<T>> input;
    BasicTensor<T> kernel;
    BasicTensor<T> bias;
};

namespace detail {

template <std::size_t N, typename T>
void conv_backward(const ConvGeom& g, const T* x, const T* k, const T* gy, T* gx, T* gk, T* gb) {
    const std::size_t co_n = N ? N : g.cout;
    for (std::size_t t = 0; t < g.frames; ++t) {
        const auto [t0, t1] = g.kt == 1 ? std::pair<std::size_t, std::size_t>{0, 1} : ConvGeom::taps(t, g.kt, g.frames);
        for (std::size_t h = 0; h < g.rows; ++h) {
            const auto [h0, h1] = ConvGeom::taps(h, g.kh, g.rows);
            for (std::size_t w = 0; w < g.cols; ++w) {
                const auto [w0, w1] = ConvGeom::taps(w, g.kw, g.cols);
                const T* go_mem = gy + ((t * g.rows + h) * g.cols + w) * co_n;
                auto body = [&](const T* go) {
                    for (std::size_t co = 0; co < co_n; ++co) gb[co] += go[co];
                    for (std::size_t kt = t0; kt < t1; ++kt) {
                        const std::size_t it = t + kt - g.kt / 2;
                        for (std::size_t kh = h0; kh < h1; ++kh) {
                            const std::size_t ih = h + kh - g.kh / 2;
                            for (std::size_t kw = w0; kw < w1; ++kw) {
                                const std::size_t iw = w + kw - g.kw / 2;
                                const std::size_t in_off = ((it * g.rows + ih) * g.cols + iw) * g.cin;
                                const std::size_t tap = ((kt * g.kh + kh) * g.kw + kw) * g.cin * co_n;
                                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                    const T xv = x[in_off + ci];
                                    T* gkrow = gk + tap + ci * co_n;
                                    for (std::size_t co = 0; co < co_n; ++co) gkrow[co] += xv * go[co];
                                    if (gx) {
                                        const T* krow = k + tap + ci * co_n;
                                        T s{0};
                                        for (std::size_t co = 0; co < co_n; ++co) s += krow[co] * go[co];
                                        gx[in_off + ci] += s;
                                    }
                                }
                            }
                        }
                    }
                };
                if constexpr (N > 0) {
                    T go[N];
                    for (std::size_t co = 0; co < N; ++co) go[co] = go_mem[co];
                    body(go);
                } else {
                    body(go_mem);
                }
            }
        }
    }
}

template <typename T>
ConvGrads<T> conv_backward(const ConvGeom& geo, const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                           const BasicTensor<T>& grad_out, bool want_input) {
    ConvGrads<T> g{std::nullopt, BasicTensor<T>(kernel.shape()), BasicTensor<T>(Shape{geo.cout})};
    if (want_input) g.input.emplace(input.shape());
    T* gx = want_input ? g.input->ptr() : nullptr;
    dispatch_channels(geo.cout, [&](auto n) {
        conv_backward<decltype(n)::value>(geo, input.ptr(), kernel.ptr(), grad_out.ptr(), gx, g.kernel.ptr(),
                                          g.bias.ptr());
    });
    return g;
}

}  // namespace detail

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                             const BasicTensor<T>& grad_out, bool want_input) {
    const detail::ConvGeom geo{input.dim(0), input.dim(1),  input.dim(2),  input.dim(3),
                               1,            kernel.dim(0), kernel.dim(1), kernel.dim(3)};
    require_extent(input.size() / geo.cin * geo.cout, grad_out.size(), "conv2d_backward: grad size");
    return detail::conv_backward(geo, input, kernel, grad_out, want_input);
}

template <typename T>
ConvGrads<T> conv3d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                             const BasicTensor<T>& grad_out, bool want_input) {
    const detail::ConvGeom geo{input.dim(0),  input.dim(1),  input.dim(2),  input.dim(3),
                               kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(4)};
    require_extent(input.size() / geo.cin * geo.cout, grad_out.size(), "conv3d_backward: grad size");
    return detail::conv_backward(geo, input, kernel, grad_out, want_input);
}

template <typename T>
BasicTensor<T> avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& grad_out,
                                 PoolWindow win) {
    const Shape os = pooled_shape(input_shape, win);
    require_extent(os.numel(), grad_out.size(), "avg_pool_backward: grad size");
    const std::size_t rows = input_shape[1], cols = input_shape[2], ch = input_shape[3];
    const T scale = T{1} / static_cast<T>(win.frames * win.rows * win.cols);
    BasicTensor<T> gx(input_shape);
    for (std::size_t t = 0; t < os[0]; ++t)
        for (std::size_t h = 0; h < os[1]; ++h)
            for (std::size_t w = 0; w < os[2]; ++w) {
                const T* go = grad_out.ptr() + ((t * os[1] + h) * os[2] + w) * ch;
                for (std::size_t dt = 0; dt < win.frames; ++dt)
                    for (std::size_t dh = 0; dh < win.rows; ++dh)
                        for (std::size_t dw = 0; dw < win.cols; ++dw) {
                            const std::size_t it = t * win.frames + dt, ih = h * win.rows + dh,
                                              iw = w * win.cols + dw;
                            T* gi = gx.ptr() + ((it * rows + ih) * cols + iw) * ch;
                            for (std::size_t c = 0; c < ch; ++c) gi[c] = go[c] * scale;
                        }
            }
    return gx;
}

template <typename T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out) {
    const std::size_t n = input.dim(0), f = input.dim(1), m = weight.dim(1);
    require_extent(n * m, grad_out.size(), "dense_backward: grad size");
    DenseGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()),
                    BasicTensor<T>(Shape{m})};
    for (std::size_t i = 0; i < n; ++i) {
        const T* go = grad_out.ptr() + i * m;
        for (std::size_t j = 0; j < m; ++j) g.bias[j] += go[j];
        for (std::size_t p = 0; p < f; ++p) {
            const T xv = input[i * f + p];
            const T* wrow = weight.ptr() + p * m;
            T* gwrow = g.weight.ptr() + p * m;
            T s{0};
            for (std::size_t j = 0; j < m; ++j) {
                gwrow[j] += xv * go[j];
                s += wrow[j] * go[j];
            }
            g.input[i * f + p] = s;
        }
    }
    return g;
}

/// Gradient through an activation, given its *output* y.
template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out,
                                   Activation kind) {
    BasicTensor<T> g = grad_out;
    switch (kind) {
        case Activation::linear:
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T{1} - output[i] * output[i];
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (T{1} - output[i]);
            break;
    }
    return g;
}

template <typename T>
struct AttentionGrads {
    BasicTensor<T> input;
    BasicTensor<T> omega;
    BasicTensor<T> bias;
};

/// Exact gradient of the l1-normalised sigmoid mask, including the
/// dependence of the normaliser on every position (quotient rule).
template <typename T>
AttentionGrads<T> attention_mask_backward(const BasicTensor<T>& x_alpha,
                                          const BasicTensor<T>& omega, const BasicTensor<T>& bias,
                                          const BasicTensor<T>& grad_mask) {
    const Shape fs = detail::as_frames(x_alpha.shape());
    const std::size_t n = fs[0], plane = fs[1] * fs[2], cin = fs[3];
    require_extent(n * plane, grad_mask.size(), "attention_mask_backward: grad size");
    AttentionGrads<T> g{BasicTensor<T>(x_alpha.shape()), BasicTensor<T>(omega.shape()),
                        BasicTensor<T>(Shape{1})};
    const T* w = omega.ptr();
    const double half_area = 0.5 * static_cast<double>(plane);
    std::vector<double> s(plane);
    double gb = 0.0;
    std::vector<double> gw(cin, 0.0);
    for (std::size_t f = 0; f < n; ++f) {
        double l1 = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
            const T* xp = x_alpha.ptr() + (f * plane + p) * cin;
            T z = bias[0];
            for (std::size_t c = 0; c < cin; ++c) z += w[c] * xp[c];
            s[p] = static_cast<double>(detail::sigmoid(z));
            l1 += s[p];
        }
        const T* gm = grad_mask.ptr() + f * plane;
        double gm_dot_s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) gm_dot_s += static_cast<double>(gm[p]) * s[p];
        const double k = half_area / l1;
        for (std::size_t p = 0; p < plane; ++p) {
            const double gs = k * (static_cast<double>(gm[p]) - gm_dot_s / l1);
            const double gz = gs * s[p] * (1.0 - s[p]);
            gb += gz;
            const T* xp = x_alpha.ptr() + (f * plane + p) * cin;
            T* gxp = g.input.ptr() + (f * plane + p) * cin;
            for (std::size_t c = 0; c < cin; ++c) {
                gw[c] += gz * static_cast<double>(xp[c]);
                gxp[c] = static_cast<T>(gz * static_cast<double>(w[c]));
            }
        }
    }
    for (std::size_t c = 0; c < cin; ++c) g.omega[c] = static_cast<T>(gw[c]);
    g.bias[0] = static_cast<T>(gb);
    return g;
}

template <typename T>
struct MaskGrads {
    BasicTensor<T> input;
    BasicTensor<T> mask;
};

template <typename T>
MaskGrads<T> apply_mask_backward(const BasicTensor<T>& x, const BasicTensor<T>& mask,
                                 const BasicTensor<T>& grad_out) {
    MaskGrads<T> g{apply_mask(grad_out, mask), BasicTensor<T>(mask.shape())};
    const std::size_t frames = x.dim(0), plane = x.dim(1) * x.dim(2), ch = x.dim(3);
    const bool per_frame = detail::as_frames(mask.shape())[0] == frames && frames != 1;
    for (std::size_t t = 0; t < frames; ++t) {
        T* gm = g.mask.ptr() + (per_frame ? t * plane : 0);
        for (std::size_t p = 0; p < plane; ++p) {
            const T* xp = x.ptr() + (t * plane + p) * ch;
            const T* gp = grad_out.ptr() + (t * plane + p) * ch;
            T s{0};
            for (std::size_t c = 0; c < ch; ++c) s += xp[c] * gp[c];
            gm[p] += s;
        }
    }
    return g;
}

}  // namespace vitalcam
