#pragma once

// Forward kernels for the convolutional attention networks.
//
// Every kernel is a pure function of its arguments. Per output element the
// accumulation order is fixed: bias first, then kernel taps in (kt, kh, kw)
// order, and for each tap the input channels in ascending order. Vectorizing
// across output channels keeps that order, so float32 results are bitwise
// reproducible run to run.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>

#include "vitalcam/error.hpp"
#include "vitalcam/rng.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

enum class Activation { linear, tanh, sigmoid };

namespace detail {

inline void check_kernel_extent(std::size_t k, const char* what) {
    if (k % 2 == 0) throw DimensionError(std::string(what) + ": kernel extent must be odd", 3, k);
}

template <typename T>
inline T sigmoid(T x) noexcept {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

}  // namespace detail

namespace detail {

// Calls f(std::integral_constant<size_t, N>) with N = n for common channel
// counts and N = 0 (run-time extent) otherwise, so the innermost loops over
// output channels get a compile-time trip count.
template <typename F>
void dispatch_channels(std::size_t n, F&& f) {
    switch (n) {
        case 1: return f(std::integral_constant<std::size_t, 1>{});
        case 2: return f(std::integral_constant<std::size_t, 2>{});
        case 4: return f(std::integral_constant<std::size_t, 4>{});
        case 8: return f(std::integral_constant<std::size_t, 8>{});
        case 16: return f(std::integral_constant<std::size_t, 16>{});
        case 32: return f(std::integral_constant<std::size_t, 32>{});
        case 64: return f(std::integral_constant<std::size_t, 64>{});
        default: return f(std::integral_constant<std::size_t, 0>{});
    }
}

// Extents of a "same" convolution; conv2d is the kt == 1 case with frames
// convolved independently.
struct ConvGeom {
    std::size_t frames, rows, cols, cin;
    std::size_t kt, kh, kw, cout;

    // Valid tap range [lo, hi) along one axis for output position `pos`.
    static std::pair<std::size_t, std::size_t> taps(std::size_t pos, std::size_t k, std::size_t extent) {
        const std::size_t pad = k / 2;
        const std::size_t lo = pos < pad ? pad - pos : 0;
        const std::size_t hi = std::min(k, extent + pad - pos);
        return {lo, hi};
    }
};

template <std::size_t N, typename T>
void conv_forward(const ConvGeom& g, const T* x, const T* k, const T* b, T* y) {
    const std::size_t co_n = N ? N : g.cout;
    for (std::size_t t = 0; t < g.frames; ++t) {
        const auto [t0, t1] = g.kt == 1 ? std::pair<std::size_t, std::size_t>{0, 1} : ConvGeom::taps(t, g.kt, g.frames);
        for (std::size_t h = 0; h < g.rows; ++h) {
            const auto [h0, h1] = ConvGeom::taps(h, g.kh, g.rows);
            for (std::size_t w = 0; w < g.cols; ++w) {
                const auto [w0, w1] = ConvGeom::taps(w, g.kw, g.cols);
                auto body = [&](T* acc) {
                    for (std::size_t co = 0; co < co_n; ++co) acc[co] = b[co];
                    for (std::size_t kt = t0; kt < t1; ++kt) {
                        const std::size_t it = t + kt - g.kt / 2;
                        for (std::size_t kh = h0; kh < h1; ++kh) {
                            const std::size_t ih = h + kh - g.kh / 2;
                            for (std::size_t kw = w0; kw < w1; ++kw) {
                                const std::size_t iw = w + kw - g.kw / 2;
                                const T* xin = x + ((it * g.rows + ih) * g.cols + iw) * g.cin;
                                const T* ktap = k + ((kt * g.kh + kh) * g.kw + kw) * g.cin * co_n;
                                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                    const T xv = xin[ci];
                                    const T* krow = ktap + ci * co_n;
                                    for (std::size_t co = 0; co < co_n; ++co) acc[co] += xv * krow[co];
                                }
                            }
                        }
                    }
                };
                T* out = y + ((t * g.rows + h) * g.cols + w) * co_n;
                if constexpr (N > 0) {
                    T acc[N];
                    body(acc);
                    for (std::size_t co = 0; co < N; ++co) out[co] = acc[co];
                } else {
                    body(out);
                }
            }
        }
    }
}

}  // namespace detail

/// "Same" zero-padded 2D convolution applied independently to each frame.
/// input T x H x W x Cin, kernel K x K x Cin x Cout, bias Cout.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias) {
    require_rank(input.shape(), 4, "conv2d input");
    require_rank(kernel.shape(), 4, "conv2d kernel");
    require_rank(bias.shape(), 1, "conv2d bias");
    const detail::ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                             1,            kernel.dim(0), kernel.dim(1), kernel.dim(3)};
    detail::check_kernel_extent(g.kh, "conv2d");
    detail::check_kernel_extent(g.kw, "conv2d");
    require_extent(g.cin, kernel.dim(2), "conv2d: input channels vs kernel Cin");
    require_extent(g.cout, bias.dim(0), "conv2d: kernel Cout vs bias length");
    BasicTensor<T> out(Shape{g.frames, g.rows, g.cols, g.cout});
    detail::dispatch_channels(g.cout, [&](auto n) {
        detail::conv_forward<decltype(n)::value>(g, input.ptr(), kernel.ptr(), bias.ptr(), out.ptr());
    });
    return out;
}

/// "Same" zero-padded convolution over (T, H, W) jointly.
/// input T x H x W x Cin, kernel Kt x K x K x Cin x Cout, bias Cout.
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias) {
    require_rank(input.shape(), 4, "conv3d input");
    require_rank(kernel.shape(), 5, "conv3d kernel");
    require_rank(bias.shape(), 1, "conv3d bias");
    const detail::ConvGeom g{input.dim(0),  input.dim(1),  input.dim(2),  input.dim(3),
                             kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(4)};
    detail::check_kernel_extent(g.kt, "conv3d");
    detail::check_kernel_extent(g.kh, "conv3d");
    detail::check_kernel_extent(g.kw, "conv3d");
    require_extent(g.cin, kernel.dim(3), "conv3d: input channels vs kernel Cin");
    require_extent(g.cout, bias.dim(0), "conv3d: kernel Cout vs bias length");
    BasicTensor<T> out(Shape{g.frames, g.rows, g.cols, g.cout});
    detail::dispatch_channels(g.cout, [&](auto n) {
        detail::conv_forward<decltype(n)::value>(g, input.ptr(), kernel.ptr(), bias.ptr(), out.ptr());
    });
    return out;
}

/// Pooling window over (T, H, W). Spatial pooling uses frames == 1.
struct PoolWindow {
    std::size_t frames = 1;
    std::size_t rows = 2;
    std::size_t cols = 2;

    static constexpr PoolWindow spatial() { return {1, 2, 2}; }
    static constexpr PoolWindow spatiotemporal() { return {2, 2, 2}; }
};

inline Shape pooled_shape(const Shape& in, PoolWindow win) {
    require_rank(in, 4, "avg_pool input");
    const std::array<std::size_t, 3> ext{in[0], in[1], in[2]};
    const std::array<std::size_t, 3> w{win.frames, win.rows, win.cols};
    static constexpr const char* names[] = {"frames", "rows", "cols"};
    for (int i = 0; i < 3; ++i) {
        if (w[i] == 0) throw DimensionError("avg_pool: zero window extent");
        if (ext[i] < w[i])
            throw DimensionError(std::string("avg_pool: ") + names[i] + " extent smaller than window",
                                 w[i], ext[i]);
    }
    return Shape{ext[0] / w[0], ext[1] / w[1], ext[2] / w[2], in[3]};
}

/// Non-overlapping mean pooling, stride equal to window; trailing remainder
/// along any axis is dropped. Each output sums its block in (t, h, w) order
/// and then multiplies by 1/blocksize.
template <typename T>
BasicTensor<T> avg_pool(const BasicTensor<T>& input, PoolWindow win = PoolWindow::spatial()) {
    const Shape os = pooled_shape(input.shape(), win);
    const std::size_t rows = input.dim(1), cols = input.dim(2), ch = input.dim(3);
    const std::size_t of = os[0], orow = os[1], ocol = os[2];
    const T scale = T{1} / static_cast<T>(win.frames * win.rows * win.cols);
    BasicTensor<T> out(os);
    const T* x = input.ptr();
    T* y = out.ptr();
    for (std::size_t t = 0; t < of; ++t)
        for (std::size_t h = 0; h < orow; ++h)
            for (std::size_t w = 0; w < ocol; ++w) {
                T* acc = y + ((t * orow + h) * ocol + w) * ch;
                for (std::size_t dt = 0; dt < win.frames; ++dt)
                    for (std::size_t dh = 0; dh < win.rows; ++dh)
                        for (std::size_t dw = 0; dw < win.cols; ++dw) {
                            const std::size_t it = t * win.frames + dt;
                            const std::size_t ih = h * win.rows + dh;
                            const std::size_t iw = w * win.cols + dw;
                            const T* xin = x + ((it * rows + ih) * cols + iw) * ch;
                            for (std::size_t c = 0; c < ch; ++c) acc[c] += xin[c];
                        }
                for (std::size_t c = 0; c < ch; ++c) acc[c] *= scale;
            }
    return out;
}

/// Affine map: input N x F, weight F x M, bias M.
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
    require_rank(input.shape(), 2, "dense input");
    require_rank(weight.shape(), 2, "dense weight");
    require_rank(bias.shape(), 1, "dense bias");
    const std::size_t n = input.dim(0), f = input.dim(1), m = weight.dim(1);
    require_extent(f, weight.dim(0), "dense: input features vs weight rows");
    require_extent(m, bias.dim(0), "dense: weight columns vs bias length");
    BasicTensor<T> out(Shape{n, m});
    const T* x = input.ptr();
    const T* wt = weight.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        T* acc = out.ptr() + i * m;
        for (std::size_t j = 0; j < m; ++j) acc[j] = bias[j];
        for (std::size_t p = 0; p < f; ++p) {
            const T xv = x[i * f + p];
            const T* wrow = wt + p * m;
            for (std::size_t j = 0; j < m; ++j) acc[j] += xv * wrow[j];
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation kind) {
    BasicTensor<T> out = input;
    switch (kind) {
        case Activation::linear:
            break;
        case Activation::tanh:
            for (auto& v : out.data()) v = std::tanh(v);
            break;
        case Activation::sigmoid:
            for (auto& v : out.data()) v = detail::sigmoid(v);
            break;
    }
    return out;
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// 1/(1-rate). Entry i consumes the i-th uniform of Xoshiro256(seed).
template <typename T = float>
BasicTensor<T> dropout_mask(const Shape& dims, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ValidationError("rate", "dropout rate must lie in [0, 1)");
    BasicTensor<T> mask(dims, T{1});
    if (rate == 0.0) return mask;
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    Xoshiro256 rng(seed);
    for (auto& v : mask.data()) v = rng.uniform() < rate ? T{0} : keep;
    return mask;
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!(a.shape() == b.shape()))
        throw DimensionError("multiply: shapes " + a.shape().str() + " and " + b.shape().str());
    BasicTensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

/// Mean over the leading (frame) axis: T x H x W x C -> 1 x H x W x C.
template <typename T>
BasicTensor<T> mean_frame(const BasicTensor<T>& frames) {
    require_rank(frames.shape(), 4, "mean_frame input");
    const std::size_t n = frames.dim(0);
    const std::size_t per = frames.size() / n;
    BasicTensor<T> out(Shape{1, frames.dim(1), frames.dim(2), frames.dim(3)});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < per; ++i) out[i] += frames[t * per + i];
    const T inv = T{1} / static_cast<T>(n);
    for (auto& v : out.data()) v *= inv;
    return out;
}

}  // namespace vitalcam
