#pragma once

// Brute-force reference implementations used only by tests. They index
// straight from the definitions with explicit bounds checks and accumulate in
// double, sharing no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "vitalcam/rng.hpp"
#include "vitalcam/tensor.hpp"

namespace oracle {

using vitalcam::Shape;
using vitalcam::Tensor;

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    vitalcam::Xoshiro256 rng(seed);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
vitalcam::BasicTensor<T> random_tensor_t(Shape s, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
    vitalcam::Xoshiro256 rng(seed);
    vitalcam::BasicTensor<T> t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// max|a - b| / max|b| over all entries.
template <typename A, typename B>
double rel_err(const A& a, const B& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        num = std::max(num, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
        den = std::max(den, std::abs(static_cast<double>(b[i])));
    }
    return den == 0.0 ? num : num / den;
}

inline std::vector<double> conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
    const long T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const long K = k.dim(0), O = k.dim(3);
    std::vector<double> y(T * H * W * O);
    for (long t = 0; t < T; ++t)
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w)
                for (long o = 0; o < O; ++o) {
                    double s = b[o];
                    for (long i = 0; i < K; ++i)
                        for (long j = 0; j < K; ++j)
                            for (long c = 0; c < C; ++c) {
                                const long hh = h + i - K / 2, ww = w + j - K / 2;
                                if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                                s += double(x[((t * H + hh) * W + ww) * C + c]) *
                                     double(k[((i * K + j) * C + c) * O + o]);
                            }
                    y[((t * H + h) * W + w) * O + o] = s;
                }
    return y;
}

inline std::vector<double> conv3d(const Tensor& x, const Tensor& k, const Tensor& b) {
    const long T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const long K = k.dim(0), O = k.dim(4);
    std::vector<double> y(T * H * W * O);
    for (long t = 0; t < T; ++t)
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w)
                for (long o = 0; o < O; ++o) {
                    double s = b[o];
                    for (long a = 0; a < K; ++a)
                        for (long i = 0; i < K; ++i)
                            for (long j = 0; j < K; ++j)
                                for (long c = 0; c < C; ++c) {
                                    const long tt = t + a - K / 2, hh = h + i - K / 2,
                                               ww = w + j - K / 2;
                                    if (tt < 0 || tt >= T || hh < 0 || hh >= H || ww < 0 || ww >= W)
                                        continue;
                                    s += double(x[((tt * H + hh) * W + ww) * C + c]) *
                                         double(k[(((a * K + i) * K + j) * C + c) * O + o]);
                                }
                    y[((t * H + h) * W + w) * O + o] = s;
                }
    return y;
}

/// Same order as documented for the library: block sum in (t, h, w) order,
/// then multiply by 1/blocksize, all in float.
inline std::vector<float> avg_pool(const Tensor& x, long pt, long ph, long pw) {
    const long T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const long OT = T / pt, OH = H / ph, OW = W / pw;
    std::vector<float> y(OT * OH * OW * C);
    const float scale = 1.0f / float(pt * ph * pw);
    for (long t = 0; t < OT; ++t)
        for (long h = 0; h < OH; ++h)
            for (long w = 0; w < OW; ++w)
                for (long c = 0; c < C; ++c) {
                    float s = 0.0f;
                    for (long a = 0; a < pt; ++a)
                        for (long i = 0; i < ph; ++i)
                            for (long j = 0; j < pw; ++j)
                                s += x[(((t * pt + a) * H + h * ph + i) * W + w * pw + j) * C + c];
                    y[((t * OH + h) * OW + w) * C + c] = s * scale;
                }
    return y;
}

inline std::vector<double> dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    const long N = x.dim(0), F = x.dim(1), M = w.dim(1);
    std::vector<double> y(N * M);
    for (long n = 0; n < N; ++n)
        for (long m = 0; m < M; ++m) {
            double s = b[m];
            for (long f = 0; f < F; ++f) s += double(x[n * F + f]) * double(w[f * M + m]);
            y[n * M + m] = s;
        }
    return y;
}

/// Scalar-loop evaluation of the l1-normalised sigmoid attention mask.
inline std::vector<double> attention(const Tensor& x, const Tensor& omega, double bias) {
    const long H = x.dim(0), W = x.dim(1), C = x.dim(2);
    std::vector<double> s(H * W);
    double l1 = 0.0;
    for (long p = 0; p < H * W; ++p) {
        double z = bias;
        for (long c = 0; c < C; ++c) z += double(omega[c]) * double(x[p * C + c]);
        s[p] = 1.0 / (1.0 + std::exp(-z));
        l1 += std::abs(s[p]);
    }
    for (auto& v : s) v = double(H * W) * v / (2.0 * l1);
    return s;
}

}  // namespace oracle
