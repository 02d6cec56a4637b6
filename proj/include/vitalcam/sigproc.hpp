#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vitalcam/error.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

// ---------------------------------------------------------------- frames

namespace detail {

// w[i][j]: share of input cell j that falls in output cell i, divided by the
// output cell width. Rows are sparse so only [first, first + count) is kept.
struct AreaWeights {
    std::vector<std::size_t> first;
    std::vector<std::vector<double>> w;
};

inline AreaWeights area_weights(std::size_t in, std::size_t out) {
    AreaWeights a;
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double lo = static_cast<double>(i) * scale, hi = static_cast<double>(i + 1) * scale;
        const auto j0 = static_cast<std::size_t>(std::floor(lo));
        const auto j1 = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
        std::vector<double> row;
        for (std::size_t j = j0; j < j1; ++j) {
            const double cover = std::min(hi, double(j + 1)) - std::max(lo, double(j));
            row.push_back(cover / scale);
        }
        a.first.push_back(j0);
        a.w.push_back(std::move(row));
    }
    return a;
}

}  // namespace detail

/// Box resampling of H x W x C (or T x H x W x C) frames to rows x cols with
/// exact fractional-coverage weights.
template <typename T>
BasicTensor<T> downsample(const BasicTensor<T>& x, std::size_t rows, std::size_t cols) {
    const Shape& s = x.shape();
    if (s.rank() != 3 && s.rank() != 4) throw DimensionError("downsample: expected a rank-3 or rank-4 tensor", 4, s.rank());
    const bool clip = s.rank() == 4;
    const std::size_t F = clip ? s[0] : 1, H = s[s.rank() - 3], W = s[s.rank() - 2], C = s[s.rank() - 1];
    if (rows == 0 || cols == 0) throw ValidationError("size", "target size must be positive");
    if (H < rows || W < cols)
        throw DimensionError("downsample: frame " + std::to_string(H) + "x" + std::to_string(W) +
                             " is smaller than the " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " target");
    const auto wr = detail::area_weights(H, rows), wc = detail::area_weights(W, cols);
    BasicTensor<T> out(clip ? Shape{F, rows, cols, C} : Shape{rows, cols, C});
    std::vector<double> acc(C), tmp(W * C);
    for (std::size_t f = 0; f < F; ++f) {
        const T* src = x.ptr() + f * H * W * C;
        T* dst = out.ptr() + f * rows * cols * C;
        for (std::size_t i = 0; i < rows; ++i) {
            // Collapse the covered input rows first, then the columns.
            std::fill(tmp.begin(), tmp.end(), 0.0);
            for (std::size_t k = 0; k < wr.w[i].size(); ++k) {
                const T* row = src + (wr.first[i] + k) * W * C;
                const double a = wr.w[i][k];
                for (std::size_t q = 0; q < W * C; ++q) tmp[q] += a * static_cast<double>(row[q]);
            }
            for (std::size_t j = 0; j < cols; ++j) {
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t k = 0; k < wc.w[j].size(); ++k) {
                    const double b = wc.w[j][k];
                    for (std::size_t c = 0; c < C; ++c) acc[c] += b * tmp[(wc.first[j] + k) * C + c];
                }
                for (std::size_t c = 0; c < C; ++c) dst[(i * cols + j) * C + c] = static_cast<T>(acc[c]);
            }
        }
    }
    return out;
}

/// d(t) = (c(t+1) - c(t)) / (c(t) + c(t+1) + eps) for a T x H x W x C clip.
template <typename T>
BasicTensor<T> normalized_difference(const BasicTensor<T>& clip, double eps = 1e-7) {
    require_rank(clip.shape(), 4, "normalized_difference input");
    if (clip.dim(0) < 2) throw DimensionError("normalized_difference: need at least 2 frames", 2, clip.dim(0));
    const std::size_t frame = clip.size() / clip.dim(0);
    Shape s = clip.shape();
    BasicTensor<T> out(Shape{s[0] - 1, s[1], s[2], s[3]});
    for (std::size_t t = 0; t + 1 < s[0]; ++t) {
        const T* a = clip.ptr() + t * frame;
        const T* b = a + frame;
        T* d = out.ptr() + t * frame;
        for (std::size_t i = 0; i < frame; ++i) {
            const double num = double(b[i]) - double(a[i]), den = double(a[i]) + double(b[i]) + eps;
            d[i] = static_cast<T>(num / den);
        }
    }
    return out;
}

/// Subtracts the mean over every element and divides by the standard
/// deviation. A constant tensor becomes all zeros.
template <typename T>
BasicTensor<T> standardize(BasicTensor<T> x) {
    double mean = 0.0;
    for (T v : x.data()) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (T v : x.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double sd = std::sqrt(var);
    for (auto& v : x.data()) v = sd > 0 ? static_cast<T>((v - mean) / sd) : T{0};
    return x;
}

/// Model-ready frames for a clip: standardized normalized differences and the
/// standardized raw frames aligned with them (frame t pairs with d(t)).
struct PreparedClip {
    Tensor motion;      // (T-1) x S x S x 3
    Tensor appearance;  // (T-1) x S x S x 3
};

inline PreparedClip prepare_clip(const Tensor& frames, std::size_t size) {
    require_rank(frames.shape(), 4, "clip");
    Tensor small = frames.dim(1) == size && frames.dim(2) == size ? frames : downsample(frames, size, size);
    Tensor motion = standardize(normalized_difference(small));
    Tensor raw(motion.shape());
    std::copy_n(small.ptr(), raw.size(), raw.ptr());
    return {std::move(motion), standardize(std::move(raw))};
}

// ---------------------------------------------------------------- traces

/// Uniformly sampled signal.
struct SignalTrace {
    std::vector<double> samples;
    double fs = 30.0;

    void validate() const {
        if (!(fs > 0) || !std::isfinite(fs)) throw ValidationError("fs", "sample rate must be positive");
        for (double v : samples)
            if (!std::isfinite(v)) throw NumericError("trace contains non-finite samples");
    }
    double duration() const { return static_cast<double>(samples.size()) / fs; }
};

struct BandSpec {
    double lo = 0.75;
    double hi = 2.5;

    void validate(double fs) const {
        if (!(lo > 0) || !(hi > lo)) throw ValidationError("band", "need 0 < lo < hi");
        if (!(hi < fs / 2)) throw ValidationError("band", "upper edge must lie below Nyquist");
    }
};

enum class SignalKind { pulse, resp };

inline BandSpec default_band(SignalKind k) {
    return k == SignalKind::pulse ? BandSpec{0.75, 2.5} : BandSpec{0.08, 0.5};
}

// ---------------------------------------------------------------- filtering

/// One second-order section, a0 = 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Digital Butterworth band-pass of prototype order `order` (2*order poles),
/// bilinear transform with both edges prewarped. Unity gain at the geometric
/// centre.
inline std::vector<Biquad> butter_bandpass_sos(const BandSpec& band, double fs, int order = 2) {
    band.validate(fs);
    if (order < 1) throw ValidationError("order", "must be positive");
    using cd = std::complex<double>;
    const double k = 2.0 * fs;
    const double w1 = k * std::tan(std::numbers::pi * band.lo / fs);
    const double w2 = k * std::tan(std::numbers::pi * band.hi / fs);
    const double bw = w2 - w1, w0sq = w1 * w2;

    auto to_z = [&](cd s) { return (k + s) / (k - s); };
    std::vector<Biquad> sos;
    auto push = [&](cd z1, cd z2) {
        // Zeros at z = 1 and z = -1 (analog zero at the origin and at infinity).
        sos.push_back({1.0, 0.0, -1.0, -(z1 + z2).real(), (z1 * z2).real()});
    };
    for (int i = 0; i < order; ++i) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order));
        if (p.imag() < -1e-12) continue;  // handled with its conjugate
        const cd half = p * bw / 2.0;
        const cd root = std::sqrt(half * half - w0sq);
        const cd s1 = half + root, s2 = half - root;
        if (std::abs(p.imag()) <= 1e-12) {
            push(to_z(s1), to_z(s2));
        } else {
            push(to_z(s1), std::conj(to_z(s1)));
            push(to_z(s2), std::conj(to_z(s2)));
        }
    }

    const double wc = 2.0 * std::atan(std::sqrt(w0sq) / k);
    const cd zc = std::polar(1.0, -wc);
    cd h{1.0, 0.0};
    for (const auto& q : sos)
        h *= (q.b0 + q.b1 * zc + q.b2 * zc * zc) / (1.0 + q.a1 * zc + q.a2 * zc * zc);
    const double g = std::pow(1.0 / std::abs(h), 1.0 / static_cast<double>(sos.size()));
    for (auto& q : sos) {
        q.b0 *= g;
        q.b1 *= g;
        q.b2 *= g;
    }
    return sos;
}

/// Complex response of the cascade at frequency f.
inline std::complex<double> sos_response(const std::vector<Biquad>& sos, double f, double fs) {
    const auto z = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
    std::complex<double> h{1.0, 0.0};
    for (const auto& q : sos) h *= (q.b0 + q.b1 * z + q.b2 * z * z) / (1.0 + q.a1 * z + q.a2 * z * z);
    return h;
}

namespace detail {

// Transposed direct form II states for a unit-step steady state, scaled by
// the DC gain of the sections in front.
inline std::vector<std::array<double, 2>> sos_zi(const std::vector<Biquad>& sos) {
    std::vector<std::array<double, 2>> zi;
    double scale = 1.0;
    for (const auto& q : sos) {
        const double den = 1.0 + q.a1 + q.a2;
        const double y = std::abs(den) > 1e-300 ? (q.b0 + q.b1 + q.b2) / den : 0.0;
        const double z2 = q.b2 - q.a2 * y;
        const double z1 = q.b1 - q.a1 * y + z2;
        zi.push_back({scale * z1, scale * z2});
        scale *= y;
    }
    return zi;
}

inline void sos_run(const std::vector<Biquad>& sos, std::vector<double>& x,
                    const std::vector<std::array<double, 2>>& zi, double x0) {
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const auto& q = sos[s];
        double z1 = zi[s][0] * x0, z2 = zi[s][1] * x0;
        for (double& v : x) {
            const double y = q.b0 * v + z1;
            z1 = q.b1 * v - q.a1 * y + z2;
            z2 = q.b2 * v - q.a2 * y;
            v = y;
        }
    }
}

}  // namespace detail

/// Causal cascade with zero initial state.
inline std::vector<double> sos_filter(const std::vector<Biquad>& sos, std::vector<double> x) {
    detail::sos_run(sos, x, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}), 0.0);
    return x;
}

/// Forward-backward filtering with odd reflection padding of three times the
/// digital filter order and steady-state initial conditions.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
    const std::size_t pad = 3 * 2 * sos.size();
    if (x.size() <= pad)
        throw DimensionError("filtfilt: signal must be longer than the padding", pad + 1, x.size());
    const std::size_t n = x.size();
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<long>(pad));
    const auto zi = detail::sos_zi(sos);
    detail::sos_run(sos, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());
    detail::sos_run(sos, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + n)};
}

inline SignalTrace butter_bandpass(const SignalTrace& x, const BandSpec& band, int order = 2) {
    x.validate();
    return {filtfilt(butter_bandpass_sos(band, x.fs, order), x.samples), x.fs};
}

// ---------------------------------------------------------------- spectra

struct Spectrum {
    std::vector<double> freq;   // Hz
    std::vector<double> power;  // |X(f)|^2 of the windowed, padded signal
};

/// One-sided periodogram of the mean-removed, Hann-windowed signal,
/// zero-padded to `pad` times its length.
inline Spectrum periodogram(const std::vector<double>& x, double fs, std::size_t pad = 4) {
    if (x.size() < 2) throw DimensionError("periodogram: need at least 2 samples", 2, x.size());
    const std::size_t n = x.size(), nfft = n * pad;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> buf(nfft, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n - 1));
        buf[i] = (x[i] - mean) * w;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> out;
    fft.fwd(out, buf);
    Spectrum s;
    for (std::size_t k = 0; k <= nfft / 2; ++k) {
        s.freq.push_back(static_cast<double>(k) * fs / static_cast<double>(nfft));
        s.power.push_back(std::norm(out[k]));
    }
    return s;
}

struct RateEstimate {
    double rate = 0.0;        // cycles per minute
    double peak_ratio = 0.0;  // in-band peak over the largest out-of-band bin
    bool confident = false;
};

/// Spectral-peak rate inside `band`. A result is flagged low-confidence when
/// the in-band peak is under twice the strongest out-of-band bin or sits on a
/// band edge.
inline RateEstimate estimate_rate(const SignalTrace& x, const BandSpec& band) {
    x.validate();
    band.validate(x.fs);
    if (x.duration() < 2.0 / band.lo)
        throw ValidationError("window", "trace of " + std::to_string(x.duration()) +
                                            " s is shorter than two periods of the band's low edge");
    const Spectrum s = periodogram(x.samples, x.fs);
    std::size_t best = 0, first = 0, last = 0;
    double peak = -1.0, outside = 0.0;
    bool any = false;
    for (std::size_t k = 1; k < s.freq.size(); ++k) {
        const bool in = s.freq[k] >= band.lo && s.freq[k] <= band.hi;
        if (!in) {
            outside = std::max(outside, s.power[k]);
            continue;
        }
        if (!any) first = k;
        any = true;
        last = k;
        if (s.power[k] > peak) {
            peak = s.power[k];
            best = k;
        }
    }
    if (!any) throw ValidationError("band", "no periodogram bin falls inside the band");
    RateEstimate r;
    r.rate = 60.0 * s.freq[best];
    r.peak_ratio = outside > 0 ? peak / outside : std::numeric_limits<double>::infinity();
    r.confident = r.peak_ratio >= 2.0 && best != first && best != last && peak > 0;
    return r;
}

// ---------------------------------------------------------------- metrics

struct RateMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> pearson;  // absent when either side has zero variance
};

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("pearson: lengths differ", a.size(), b.size());
    if (a.empty()) return std::nullopt;
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline RateMetrics rate_metrics(std::span<const double> est, std::span<const double> ref) {
    if (est.size() != ref.size()) throw DimensionError("metrics: estimate and reference lengths differ", ref.size(), est.size());
    if (est.empty()) throw ValidationError("rates", "no windows to score");
    RateMetrics m;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double e = est[i] - ref[i];
        m.mae += std::abs(e);
        m.rmse += e * e;
    }
    m.mae /= static_cast<double>(est.size());
    m.rmse = std::sqrt(m.rmse / static_cast<double>(est.size()));
    m.pearson = pearson(est, ref);
    return m;
}

inline constexpr double snr_cap_db = 80.0;

/// Summation range of the SNR, in cycles per minute.
inline std::pair<double, double> snr_range(SignalKind k) {
    return k == SignalKind::pulse ? std::pair{30.0, 240.0} : std::pair{5.0, 30.0};
}

/// Template SNR of a spectrum: power within +-6 cycles/min of the reference
/// rate and +-12 of its first harmonic against the rest of the summation
/// range. Clamped to +-80 dB.
inline double snr_from_spectrum(const Spectrum& s, double ref_rate, SignalKind kind) {
    const auto [lo, hi] = snr_range(kind);
    if (!(ref_rate >= lo && ref_rate <= hi))
        throw ValidationError("ref_rate", "reference rate " + std::to_string(ref_rate) +
                                              " lies outside the SNR summation range");
    double sig = 0.0, noise = 0.0;
    for (std::size_t k = 0; k < s.freq.size(); ++k) {
        const double r = 60.0 * s.freq[k];
        if (r < lo || r > hi) continue;
        const bool in = std::abs(r - ref_rate) <= 6.0 || std::abs(r - 2.0 * ref_rate) <= 12.0;
        (in ? sig : noise) += s.power[k];
    }
    if (sig <= 0.0) return -snr_cap_db;
    if (noise <= 0.0) return snr_cap_db;
    return std::clamp(10.0 * std::log10(sig / noise), -snr_cap_db, snr_cap_db);
}

inline double snr_db(const SignalTrace& x, double ref_rate, SignalKind kind) {
    x.validate();
    if (x.duration() < 2.0 * 60.0 / ref_rate)
        throw ValidationError("window", "trace covers fewer than two periods of the reference rate");
    return snr_from_spectrum(periodogram(x.samples, x.fs), ref_rate, kind);
}

// ---------------------------------------------------------------- evaluation

struct WindowScore {
    double start_s = 0.0;
    double estimate = 0.0;
    double reference = 0.0;
    double snr_db = 0.0;
    bool confident = false;
};

struct MetricsReport {
    SignalKind kind = SignalKind::pulse;
    BandSpec band;
    double window_s = 30.0;
    std::vector<WindowScore> windows;
    RateMetrics aggregate;
    double mean_snr_db = 0.0;
};

/// Band-passes both traces, cuts them into non-overlapping windows (a
/// trailing partial window is dropped), and scores the predicted rate of
/// every window against the rate of the reference trace.
inline MetricsReport evaluate(const SignalTrace& pred, const SignalTrace& truth, SignalKind kind,
                              std::optional<BandSpec> band = std::nullopt, double window_s = 30.0) {
    pred.validate();
    truth.validate();
    if (std::abs(pred.fs - truth.fs) > 1e-9 * truth.fs)
        throw ValidationError("fs", "prediction and reference sample rates differ");
    if (!(window_s > 0)) throw ValidationError("window", "window length must be positive");
    MetricsReport rep;
    rep.kind = kind;
    rep.band = band.value_or(default_band(kind));
    rep.window_s = window_s;
    const std::size_t n = std::min(pred.samples.size(), truth.samples.size());
    const auto win = static_cast<std::size_t>(std::llround(window_s * pred.fs));
    if (win == 0 || n < win)
        throw ValidationError("window", "traces of " + std::to_string(n) + " samples hold no full " +
                                            std::to_string(window_s) + " s window");
    auto cut = [&](const SignalTrace& t) {
        return butter_bandpass(SignalTrace{{t.samples.begin(), t.samples.begin() + long(n)}, t.fs}, rep.band);
    };
    const SignalTrace p = cut(pred), r = cut(truth);
    std::vector<double> est, ref;
    for (std::size_t w0 = 0; w0 + win <= n; w0 += win) {
        const SignalTrace pw{{p.samples.begin() + long(w0), p.samples.begin() + long(w0 + win)}, p.fs};
        const SignalTrace rw{{r.samples.begin() + long(w0), r.samples.begin() + long(w0 + win)}, r.fs};
        WindowScore s;
        s.start_s = static_cast<double>(w0) / p.fs;
        const RateEstimate e = estimate_rate(pw, rep.band);
        s.estimate = e.rate;
        s.confident = e.confident;
        s.reference = estimate_rate(rw, rep.band).rate;
        s.snr_db = snr_db(pw, s.reference, kind);
        est.push_back(s.estimate);
        ref.push_back(s.reference);
        rep.windows.push_back(s);
    }
    rep.aggregate = rate_metrics(est, ref);
    for (const auto& w : rep.windows) rep.mean_snr_db += w.snr_db;
    rep.mean_snr_db /= static_cast<double>(rep.windows.size());
    return rep;
}

}  // namespace vitalcam
