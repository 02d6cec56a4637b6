#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vitalcam/error.hpp"
#include "vitalcam/sigproc.hpp"
#include "vitalcam/synth.hpp"

namespace vitalcam {

/// Spatially averaged skin colour per frame.
struct RgbTraces {
    std::array<std::vector<double>, 3> c;  // r, g, b
    double fs = 30.0;

    std::size_t size() const { return c[0].size(); }

    void validate() const {
        if (!(fs > 0)) throw ValidationError("fs", "sample rate must be positive");
        if (c[1].size() != c[0].size() || c[2].size() != c[0].size())
            throw DimensionError("rgb traces have unequal lengths", c[0].size(), c[1].size() != c[0].size() ? c[1].size() : c[2].size());
        for (const auto& ch : c)
            for (double v : ch)
                if (!std::isfinite(v)) throw NumericError("rgb trace contains non-finite samples");
    }
};

inline RgbTraces traces_from_clip(const VideoClip& clip, const Tensor* mask = nullptr) {
    Tensor all;
    if (!mask) all = Tensor(Shape{clip.frames.dim(1), clip.frames.dim(2), 1}, 1.0f);
    return {masked_means(clip.frames, mask ? *mask : all), clip.fps};
}

struct BaselineResult {
    SignalTrace bvp;
    std::size_t skipped_windows = 0;  // pos: windows with zero projection variance
    std::size_t sources = 0;          // ica: number of separated components
    std::string note;
};

namespace detail {

inline double stddev(const std::vector<double>& x) {
    double m = 0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline std::size_t window_samples(double seconds, double fs) {
    return static_cast<std::size_t>(std::ceil(seconds * fs));
}

}  // namespace detail

/// Chrominance method: 1.6 s windows with a half-window step. Each window is
/// normalised by its mean, band-passed (zero-phase, 3rd order, 0.7-2.5 Hz),
/// projected to S = X - alpha Y and overlap-added under a Hann window. A
/// trailing partial window is dropped.
inline BaselineResult chrom(const RgbTraces& in) {
    in.validate();
    std::size_t win = detail::window_samples(1.6, in.fs);
    if (win % 2) ++win;
    if (in.size() < win) throw ValidationError("traces", "shorter than one 1.6 s window");
    const std::size_t half = win / 2, n = in.size();
    const auto sos = butter_bandpass_sos({0.7, 2.5}, in.fs, 3);
    BaselineResult out;
    out.bvp = {std::vector<double>(n, 0.0), in.fs};
    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(win));
    for (std::size_t s = 0; s + win <= n; s += half) {
        std::array<std::vector<double>, 3> y;
        for (int k = 0; k < 3; ++k) {
            double mean = 0;
            for (std::size_t i = 0; i < win; ++i) mean += in.c[k][s + i];
            mean /= static_cast<double>(win);
            y[k].resize(win);
            for (std::size_t i = 0; i < win; ++i) y[k][i] = mean != 0 ? in.c[k][s + i] / mean - 1.0 : 0.0;
        }
        std::vector<double> X(win), Y(win);
        for (std::size_t i = 0; i < win; ++i) {
            X[i] = 3.0 * y[0][i] - 2.0 * y[1][i];
            Y[i] = 1.5 * y[0][i] + y[1][i] - 1.5 * y[2][i];
        }
        X = filtfilt(sos, X);
        Y = filtfilt(sos, Y);
        const double sy = detail::stddev(Y);
        if (!(sy > 0)) {
            ++out.skipped_windows;
            continue;
        }
        const double alpha = detail::stddev(X) / sy;
        for (std::size_t i = 0; i < win; ++i) out.bvp.samples[s + i] += hann[i] * (X[i] - alpha * Y[i]);
    }
    return out;
}

/// Plane-orthogonal-to-skin: 1.6 s windows advanced one frame at a time.
/// Windows whose Y projection has zero variance are skipped and counted.
inline BaselineResult pos(const RgbTraces& in) {
    in.validate();
    const std::size_t win = detail::window_samples(1.6, in.fs), n = in.size();
    if (n < win) throw ValidationError("traces", "shorter than one 1.6 s window");
    BaselineResult out;
    out.bvp = {std::vector<double>(n, 0.0), in.fs};
    std::vector<double> X(win), Y(win);
    for (std::size_t s = 0; s + win <= n; ++s) {
        std::array<double, 3> mean{};
        for (int k = 0; k < 3; ++k) {
            for (std::size_t i = 0; i < win; ++i) mean[k] += in.c[k][s + i];
            mean[k] /= static_cast<double>(win);
        }
        if (mean[0] == 0 || mean[1] == 0 || mean[2] == 0) {
            ++out.skipped_windows;
            continue;
        }
        for (std::size_t i = 0; i < win; ++i) {
            const double r = in.c[0][s + i] / mean[0], g = in.c[1][s + i] / mean[1], b = in.c[2][s + i] / mean[2];
            X[i] = g - b;
            Y[i] = -2.0 * r + g + b;
        }
        const double sy = detail::stddev(Y);
        if (!(sy > 0)) {
            ++out.skipped_windows;
            continue;
        }
        const double ratio = detail::stddev(X) / sy;
        double hm = 0;
        for (std::size_t i = 0; i < win; ++i) hm += X[i] + ratio * Y[i];
        hm /= static_cast<double>(win);
        for (std::size_t i = 0; i < win; ++i) out.bvp.samples[s + i] += X[i] + ratio * Y[i] - hm;
    }
    return out;
}

// ---------------------------------------------------------------- ICA

struct JadeResult {
    Eigen::MatrixXd unmixing;  // sources x sensors
    std::size_t sweeps = 0;
};

/// JADE on zero-mean data X (sensors x samples) for m sources. Whitening
/// keeps the m leading principal directions; fourth-order cumulant matrices
/// are jointly diagonalised by Givens sweeps until every rotation sine falls
/// below `threshold` or `max_sweeps` is reached.
inline JadeResult jade(const Eigen::MatrixXd& X, std::size_t m, double threshold = 1e-8, int max_sweeps = 100) {
    const auto n = X.rows(), T = X.cols();
    if (m == 0 || static_cast<Eigen::Index>(m) > n) throw ValidationError("sources", "must lie in [1, sensors]");
    const Eigen::MatrixXd cov = X * X.transpose() / static_cast<double>(T);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // Eigen sorts ascending; take the last m.
    Eigen::MatrixXd W(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(i);
        const double lam = es.eigenvalues()(col);
        if (!(lam > 0)) throw NumericError("jade: non-positive variance in whitening");
        W.row(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(col).transpose() / std::sqrt(lam);
    }
    const Eigen::MatrixXd Y = W * X;
    const auto M = static_cast<Eigen::Index>(m);

    std::vector<Eigen::MatrixXd> Q;
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = i; j < M; ++j) {
            const Eigen::ArrayXd yy = Y.row(i).array() * Y.row(j).array();
            Eigen::MatrixXd C = (Y.array().rowwise() * yy.transpose()).matrix() * Y.transpose() / static_cast<double>(T);
            C -= (i == j ? 1.0 : 0.0) * Eigen::MatrixXd::Identity(M, M);
            C(i, j) -= 1.0;
            C(j, i) -= 1.0;
            Q.push_back(i == j ? C : std::sqrt(2.0) * C);
        }

    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(M, M);
    JadeResult res;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        ++res.sweeps;
        for (Eigen::Index p = 0; p + 1 < M; ++p)
            for (Eigen::Index q = p + 1; q < M; ++q) {
                double g00 = 0, g01 = 0, g11 = 0;
                for (const auto& A : Q) {
                    const double a = A(p, p) - A(q, q), b = A(p, q) + A(q, p);
                    g00 += a * a;
                    g01 += a * b;
                    g11 += b * b;
                }
                const double ton = g00 - g11, toff = 2.0 * g01;
                const double theta = 0.5 * std::atan2(toff, ton + std::sqrt(ton * ton + toff * toff));
                const double c = std::cos(theta), s = std::sin(theta);
                if (std::abs(s) <= threshold) continue;
                rotated = true;
                for (Eigen::Index r = 0; r < M; ++r) {
                    const double vp = V(r, p), vq = V(r, q);
                    V(r, p) = c * vp + s * vq;
                    V(r, q) = -s * vp + c * vq;
                }
                for (auto& A : Q) {
                    for (Eigen::Index r = 0; r < M; ++r) {
                        const double ap = A(p, r), aq = A(q, r);
                        A(p, r) = c * ap + s * aq;
                        A(q, r) = -s * ap + c * aq;
                    }
                    for (Eigen::Index r = 0; r < M; ++r) {
                        const double ap = A(r, p), aq = A(r, q);
                        A(r, p) = c * ap + s * aq;
                        A(r, q) = -s * ap + c * aq;
                    }
                }
            }
        if (!rotated) break;
    }
    res.unmixing = V.transpose() * W;
    // Fix the sign ambiguity: largest-magnitude coefficient of each row positive.
    for (Eigen::Index i = 0; i < res.unmixing.rows(); ++i) {
        Eigen::Index arg;
        res.unmixing.row(i).cwiseAbs().maxCoeff(&arg);
        if (res.unmixing(i, arg) < 0) res.unmixing.row(i) *= -1.0;
    }
    return res;
}

namespace detail {

inline std::vector<double> linear_detrend(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double st = 0, sx = 0, stt = 0, stx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = static_cast<double>(i);
        st += t;
        sx += x[i];
        stt += t * t;
        stx += t * x[i];
    }
    const double den = n * stt - st * st;
    const double slope = den != 0 ? (n * stx - st * sx) / den : 0.0;
    const double icpt = (sx - slope * st) / n;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - (icpt + slope * static_cast<double>(i));
    return out;
}

inline double band_ratio(const std::vector<double>& x, double fs, double lo, double hi) {
    const Spectrum s = periodogram(x, fs);
    double in = 0, all = 0;
    for (std::size_t k = 1; k < s.freq.size(); ++k) {
        all += s.power[k];
        if (s.freq[k] >= lo && s.freq[k] <= hi) in += s.power[k];
    }
    return all > 0 ? in / all : 0.0;
}

}  // namespace detail

/// Detrend, z-score and separate with JADE; the component with the largest
/// share of its power in 0.7-2.5 Hz is returned. Channels that are linear
/// combinations of the others reduce the number of separated sources.
inline BaselineResult ica_pulse(const RgbTraces& in) {
    in.validate();
    if (in.size() < detail::window_samples(10.0, in.fs)) throw ValidationError("traces", "ICA needs at least 10 s");
    const auto T = static_cast<Eigen::Index>(in.size());
    Eigen::MatrixXd X(3, T);
    for (int k = 0; k < 3; ++k) {
        auto d = detail::linear_detrend(in.c[k]);
        const double sd = detail::stddev(d);
        for (Eigen::Index t = 0; t < T; ++t) X(k, t) = sd > 0 ? d[std::size_t(t)] / sd : 0.0;
    }
    BaselineResult out;
    const Eigen::MatrixXd cov = X * X.transpose() / static_cast<double>(T);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues();
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < 3; ++i) rank += ev(i) > 1e-10 * std::max(ev(2), 1e-300);
    if (ev(2) <= 0) {
        out.bvp = {std::vector<double>(in.size(), 0.0), in.fs};
        out.note = "all channels constant";
        return out;
    }
    if (rank < 3) out.note = "rank-deficient input; separated " + std::to_string(rank) + " sources";
    out.sources = rank;
    const JadeResult j = jade(X, rank);
    const Eigen::MatrixXd S = j.unmixing * X;
    double best = -1;
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        std::vector<double> s(static_cast<std::size_t>(T));
        for (Eigen::Index t = 0; t < T; ++t) s[std::size_t(t)] = S(i, t);
        const double r = detail::band_ratio(s, in.fs, 0.7, 2.5);
        if (r > best) {
            best = r;
            out.bvp = {std::move(s), in.fs};
        }
    }
    return out;
}

enum class Baseline { pos, chrom, ica };

inline Baseline parse_baseline(const std::string& s) {
    if (s == "pos") return Baseline::pos;
    if (s == "chrom") return Baseline::chrom;
    if (s == "ica") return Baseline::ica;
    throw ValidationError("method", "unknown baseline '" + s + "' (pos, chrom, ica)");
}

inline BaselineResult run_baseline(Baseline b, const RgbTraces& in) {
    switch (b) {
        case Baseline::pos: return pos(in);
        case Baseline::chrom: return chrom(in);
        case Baseline::ica: return ica_pulse(in);
    }
    throw ValidationError("method", "unknown baseline");
}

}  // namespace vitalcam
