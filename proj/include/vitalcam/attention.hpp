#pragma once

// Soft-attention bridge between the appearance and motion branches:
//
//   mask = H*W * sigmoid(w . x + b) / (2 * sum_{h,w} sigmoid(w . x + b))
//
// A 1x1 convolution with a single output channel, a sigmoid, and an l1
// normalisation over the spatial plane. Every mask sums to H*W/2.

#include <cmath>
#include <cstddef>
#include <vector>

#include "vitalcam/error.hpp"
#include "vitalcam/ops.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

template <typename T>
struct BasicAttentionParams {
    BasicTensor<T> omega;  // 1 x 1 x Cin x 1
    BasicTensor<T> bias;   // 1

    std::size_t in_channels() const { return omega.dim(2); }

    void validate() const {
        require_rank(omega.shape(), 4, "attention omega");
        if (omega.dim(0) != 1 || omega.dim(1) != 1)
            throw DimensionError("attention omega must be a 1x1 kernel", 1,
                                 omega.dim(0) * omega.dim(1));
        require_extent(1, omega.dim(3), "attention omega output channels");
        require_extent(1, bias.size(), "attention bias length");
    }
};

using AttentionParams = BasicAttentionParams<float>;

namespace detail {

inline Shape as_frames(const Shape& s) {
    if (s.rank() == 3) return Shape{1, s[0], s[1], s[2]};
    require_rank(s, 4, "attention input");
    return s;
}

}  // namespace detail

/// Per-frame masks for an N x H x W x Cin (or H x W x Cin) appearance map.
/// Output keeps the input's rank with a single channel.
template <typename T>
BasicTensor<T> attention_mask(const BasicTensor<T>& x_alpha, const BasicTensor<T>& omega,
                              const BasicTensor<T>& bias) {
    BasicAttentionParams<T>{omega, bias}.validate();
    const Shape fs = detail::as_frames(x_alpha.shape());
    const std::size_t n = fs[0], plane = fs[1] * fs[2], cin = fs[3];
    require_extent(cin, omega.dim(2), "attention: appearance channels vs omega Cin");
    if (!x_alpha.all_finite()) throw NumericError("attention_mask: non-finite input");

    std::vector<std::size_t> odims = x_alpha.shape().dims();
    odims.back() = 1;
    BasicTensor<T> mask{Shape(odims)};
    const T* x = x_alpha.ptr();
    const T* w = omega.ptr();
    const T b = bias[0];
    const double half_area = 0.5 * static_cast<double>(plane);
    for (std::size_t f = 0; f < n; ++f) {
        T* m = mask.ptr() + f * plane;
        double l1 = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
            const T* xp = x + (f * plane + p) * cin;
            T z = b;
            for (std::size_t c = 0; c < cin; ++c) z += w[c] * xp[c];
            m[p] = detail::sigmoid(z);
            l1 += static_cast<double>(m[p]);
        }
        const double scale = half_area / l1;
        for (std::size_t p = 0; p < plane; ++p)
            m[p] = static_cast<T>(static_cast<double>(m[p]) * scale);
    }
    return mask;
}

template <typename T>
BasicTensor<T> attention_mask(const BasicTensor<T>& x_alpha, const BasicAttentionParams<T>& p) {
    return attention_mask(x_alpha, p.omega, p.bias);
}

/// Gates x (T x H x W x C) with a spatial mask. A mask of shape H x W x 1 or
/// 1 x H x W x 1 is broadcast over all frames; T x H x W x 1 gates frame-wise.
/// Both cases broadcast over channels.
template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& x, const BasicTensor<T>& mask) {
    require_rank(x.shape(), 4, "apply_mask input");
    const Shape ms = detail::as_frames(mask.shape());
    const std::size_t frames = x.dim(0), plane = x.dim(1) * x.dim(2), ch = x.dim(3);
    require_extent(x.dim(1), ms[1], "apply_mask: mask rows");
    require_extent(x.dim(2), ms[2], "apply_mask: mask cols");
    require_extent(1, ms[3], "apply_mask: mask channels");
    if (ms[0] != 1 && ms[0] != frames)
        throw DimensionError("apply_mask: mask frames must be 1 or T", frames, ms[0]);
    const bool per_frame = ms[0] == frames && frames != 1;
    BasicTensor<T> out = x;
    for (std::size_t t = 0; t < frames; ++t) {
        const T* m = mask.ptr() + (per_frame ? t * plane : 0);
        for (std::size_t p = 0; p < plane; ++p) {
            T* o = out.ptr() + (t * plane + p) * ch;
            const T mv = m[p];
            for (std::size_t c = 0; c < ch; ++c) o[c] *= mv;
        }
    }
    return out;
}

}  // namespace vitalcam
