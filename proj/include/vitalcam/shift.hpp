#pragma once

#include <cstddef>
#include <string>

#include "vitalcam/error.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

/// Channel partition for the temporal shift. Channels [0, left) advance one
/// frame, [left, left + right) are delayed one frame, the rest stay put.
/// Shifting happens inside windows of `window_len` frames and never crosses
/// a window edge.
struct ShiftSpec {
    std::size_t window_len = 10;
    std::size_t left_chunk = 0;
    std::size_t right_chunk = 0;
    std::size_t static_chunk = 0;

    std::size_t channels() const noexcept { return left_chunk + right_chunk + static_chunk; }

    /// floor(C/3) advanced, floor(C/3) delayed, remainder static.
    static ShiftSpec thirds(std::size_t channels, std::size_t window_len = 10) {
        const std::size_t third = channels / 3;
        return {window_len, third, third, channels - 2 * third};
    }

    static ShiftSpec none(std::size_t channels, std::size_t window_len = 10) {
        return {window_len, 0, 0, channels};
    }
};

namespace detail {

inline void check_shift(const Shape& s, const ShiftSpec& spec) {
    require_rank(s, 4, "temporal_shift input");
    if (spec.window_len == 0) throw ValidationError("window_len", "must be positive");
    if (s[0] % spec.window_len != 0)
        throw DimensionError("temporal_shift: frame count must be a multiple of window_len",
                             spec.window_len, s[0] % spec.window_len);
    if (spec.channels() != s[3])
        throw DimensionError("temporal_shift: chunk sizes must sum to the channel count", s[3],
                             spec.channels());
}

/// Moves channels [begin, end) by `offset` frames; out[t] = in[t + offset]
/// inside each window, zero where the source frame lies outside the window.
template <typename T>
void shift_chunk(const BasicTensor<T>& in, BasicTensor<T>& out, std::size_t window_len,
                 std::size_t begin, std::size_t end, long offset) {
    if (begin == end) return;
    const std::size_t frames = in.dim(0), plane = in.dim(1) * in.dim(2), ch = in.dim(3);
    for (std::size_t t = 0; t < frames; ++t) {
        const long pos = static_cast<long>(t % window_len);
        const long src_pos = pos + offset;
        const bool valid = src_pos >= 0 && src_pos < static_cast<long>(window_len);
        const std::size_t src = valid ? static_cast<std::size_t>(static_cast<long>(t) + offset) : 0;
        for (std::size_t p = 0; p < plane; ++p) {
            T* dst = out.ptr() + (t * plane + p) * ch;
            const T* s = in.ptr() + (src * plane + p) * ch;
            for (std::size_t c = begin; c < end; ++c) dst[c] = valid ? s[c] : T{0};
        }
    }
}

}  // namespace detail

/// Parameter-free temporal shift on a T x H x W x C tensor.
template <typename T>
BasicTensor<T> temporal_shift(const BasicTensor<T>& x, const ShiftSpec& spec) {
    detail::check_shift(x.shape(), spec);
    BasicTensor<T> out = x;
    const std::size_t l = spec.left_chunk, r = spec.right_chunk;
    detail::shift_chunk(x, out, spec.window_len, 0, l, +1);
    detail::shift_chunk(x, out, spec.window_len, l, l + r, -1);
    return out;
}

/// Adjoint of temporal_shift: routes output gradients back to the frames they
/// were read from. Equivalent to shifting with the directions swapped.
template <typename T>
BasicTensor<T> temporal_shift_adjoint(const BasicTensor<T>& grad, const ShiftSpec& spec) {
    detail::check_shift(grad.shape(), spec);
    BasicTensor<T> out = grad;
    const std::size_t l = spec.left_chunk, r = spec.right_chunk;
    detail::shift_chunk(grad, out, spec.window_len, 0, l, -1);
    detail::shift_chunk(grad, out, spec.window_len, l, l + r, +1);
    return out;
}

}  // namespace vitalcam
