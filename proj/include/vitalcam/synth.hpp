#pragma once

// Synthetic skin video following a linearised dichromatic reflection model:
//
//   C_k(t) = u_c I0 c0 (1 + Psi) + u_s I0 (s0 + Phi) + u_p I0 p(t) + v_n(t)
//   Psi = psi_m m(t) + psi_p p(t),  Phi = phi_m m(t) + phi_p p(t)
//   p(t) = pulse_amp b(t) + resp_amp r(t)
//
// inside a soft-edged ellipse, over a background lit by I0 (1 + psi_m m(t)).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vitalcam/error.hpp"
#include "vitalcam/rng.hpp"
#include "vitalcam/tensor.hpp"
#include "vitalcam/vtf.hpp"

namespace vitalcam {

using Rgb = std::array<double, 3>;

inline Rgb unit(Rgb v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n > 0)) throw ValidationError("color", "zero vector");
    return {v[0] / n, v[1] / n, v[2] / n};
}

enum class MotionKind { none, sway, reorient };

inline const char* motion_name(MotionKind k) {
    switch (k) {
        case MotionKind::none: return "static";
        case MotionKind::sway: return "sway";
        case MotionKind::reorient: return "reorient";
    }
    return "?";
}

inline MotionKind parse_motion(const std::string& s) {
    if (s == "static" || s == "none") return MotionKind::none;
    if (s == "sway") return MotionKind::sway;
    if (s == "reorient") return MotionKind::reorient;
    throw ValidationError("motion_kind", "unknown motion '" + s + "' (static, sway, reorient)");
}

struct SynthParams {
    double fps = 30.0;
    double duration_s = 30.0;
    std::size_t height = 72;
    std::size_t width = 72;
    double hr_bpm = 72.0;
    double br_bpm = 15.0;
    Rgb u_c = unit({0.75, 0.55, 0.45});
    Rgb u_p = unit({0.33, 0.77, 0.53});
    Rgb u_s = unit({1.0, 1.0, 1.0});
    Rgb background = {0.30, 0.32, 0.38};
    double s0 = 0.05;
    double I0 = 0.8;
    double c0 = 0.7;
    double pulse_amp = 0.015;
    double resp_amp = 0.01;
    double breath_px_per_amp = 30.0;  // vertical head travel per unit resp_amp
    double rsa_depth = 0.05;
    double motion_amp = 0.0;  // pixels
    MotionKind motion_kind = MotionKind::none;
    double motion_rate = 0.3;  // Hz, sway only
    double psi_m = 0.02, psi_p = 0.005;
    double phi_m = 0.02, phi_p = 0.005;
    double texture = 0.03;  // static per-pixel albedo spread
    double noise_sigma = 1.0 / 255.0;
    bool quantize = true;
    std::uint64_t seed = 0;

    std::size_t frames() const { return static_cast<std::size_t>(std::llround(fps * duration_s)); }

    void validate() const {
        auto positive = [](double v, const char* f) {
            if (!(v > 0) || !std::isfinite(v)) throw ValidationError(f, "must be positive");
        };
        auto nonneg = [](double v, const char* f) {
            if (!(v >= 0) || !std::isfinite(v)) throw ValidationError(f, "must be non-negative");
        };
        positive(fps, "fps");
        positive(duration_s, "duration_s");
        positive(hr_bpm, "hr_bpm");
        positive(br_bpm, "br_bpm");
        positive(I0, "I0");
        positive(c0, "c0");
        if (height < 8 || width < 8) throw ValidationError("resolution", "must be at least 8x8");
        if (!(fps > 2.0 * hr_bpm / 60.0)) throw ValidationError("fps", "must exceed twice the heart-rate frequency");
        if (frames() < 2) throw ValidationError("duration_s", "clip needs at least 2 frames");
        nonneg(pulse_amp, "pulse_amp");
        nonneg(resp_amp, "resp_amp");
        nonneg(breath_px_per_amp, "breath_px_per_amp");
        nonneg(motion_amp, "motion_amp");
        nonneg(motion_rate, "motion_rate");
        nonneg(noise_sigma, "noise_sigma");
        nonneg(texture, "texture");
        nonneg(s0, "s0");
        if (!(rsa_depth >= 0 && rsa_depth < 1)) throw ValidationError("rsa_depth", "must lie in [0, 1)");
        for (auto [v, f] : {std::pair{&u_c, "u_c"}, std::pair{&u_p, "u_p"}, std::pair{&u_s, "u_s"}}) {
            const double n = std::sqrt((*v)[0] * (*v)[0] + (*v)[1] * (*v)[1] + (*v)[2] * (*v)[2]);
            if (std::abs(n - 1.0) > 1e-6) throw ValidationError(f, "must be a unit vector");
        }
    }
};

struct GroundTruth {
    std::vector<double> bvp;   // b(t), unit peak
    std::vector<double> resp;  // r(t), unit peak
    double hr_bpm = 0.0;
    double br_bpm = 0.0;
    double fs = 0.0;
};

/// r(t) = sin(2 pi f_r t); b(t) = [sin 2 pi phi + 0.5 sin 4 pi phi] / peak with
/// dphi/dt = f_h (1 + rsa_depth r(t)).
inline GroundTruth synth_waveforms(const SynthParams& p) {
    p.validate();
    const double fh = p.hr_bpm / 60.0, fr = p.br_bpm / 60.0;
    const double peak = 3.0 * std::sqrt(3.0) / 4.0;
    const double tau = 2.0 * std::numbers::pi;
    GroundTruth g{{}, {}, p.hr_bpm, p.br_bpm, p.fps};
    for (std::size_t i = 0; i < p.frames(); ++i) {
        const double t = static_cast<double>(i) / p.fps;
        const double phase = fh * (t + p.rsa_depth * (1.0 - std::cos(tau * fr * t)) / (tau * fr));
        g.bvp.push_back((std::sin(tau * phase) + 0.5 * std::sin(2.0 * tau * phase)) / peak);
        g.resp.push_back(std::sin(tau * fr * t));
    }
    return g;
}

struct VideoClip {
    Tensor frames;  // T x H x W x 3, values in [0, 1]
    double fps = 30.0;
};

struct RenderedClip {
    VideoClip clip;
    GroundTruth truth;
    Tensor skin_mask;  // H x W x 1; 1 where the pixel is skin in every frame
};

namespace detail {

// Head displacement in pixels and the normalised motion signal m(t) in [-1, 1].
struct Pose {
    double dx = 0, dy = 0, m = 0;
};

inline std::vector<Pose> head_track(const SynthParams& p, const GroundTruth& g) {
    std::vector<Pose> track(p.frames());
    Xoshiro256 jump(derive_seed(p.seed, hash_label("reorient")));
    double jx = 0, jy = 0;
    long second = -1;
    for (std::size_t i = 0; i < track.size(); ++i) {
        const double t = static_cast<double>(i) / p.fps;
        Pose& q = track[i];
        if (p.motion_kind == MotionKind::sway) {
            q.m = std::sin(2.0 * std::numbers::pi * p.motion_rate * t);
            q.dx = p.motion_amp * q.m;
        } else if (p.motion_kind == MotionKind::reorient) {
            const long s = static_cast<long>(std::floor(t));
            if (s != second) {
                second = s;
                jx = jump.uniform(-1.0, 1.0);
                jy = jump.uniform(-1.0, 1.0);
            }
            q.m = jx;
            q.dx = p.motion_amp * jx;
            q.dy = p.motion_amp * jy;
        }
        if (p.motion_amp == 0.0) q.m = 0.0;
        q.dy += p.breath_px_per_amp * p.resp_amp * g.resp[i];
    }
    return track;
}

// Anti-aliased coverage of a pixel centre by the ellipse.
inline double coverage(double x, double y, double cx, double cy, double ax, double ay) {
    const double ux = (x - cx) / ax, uy = (y - cy) / ay;
    const double rho = std::sqrt(ux * ux + uy * uy);
    const double dist = (rho - 1.0) * std::min(ax, ay);  // approximate signed pixel distance
    return std::clamp(0.5 - dist, 0.0, 1.0);
}

}  // namespace detail

/// Renders the clip. Every frame draws its sensor noise from its own stream,
/// so frames could be produced in any order with identical results.
inline RenderedClip render_clip(const SynthParams& p) {
    p.validate();
    RenderedClip out;
    out.truth = synth_waveforms(p);
    const std::size_t T = p.frames(), H = p.height, W = p.width;
    out.clip.fps = p.fps;
    out.clip.frames = Tensor(Shape{T, H, W, 3});
    out.skin_mask = Tensor(Shape{H, W, 1}, 1.0f);
    const auto track = detail::head_track(p, out.truth);

    std::vector<double> albedo(H * W, 1.0);
    Xoshiro256 tex(derive_seed(p.seed, hash_label("texture")));
    for (auto& a : albedo) a = 1.0 + p.texture * tex.uniform(-1.0, 1.0);

    const double cx0 = 0.5 * static_cast<double>(W), cy0 = 0.5 * static_cast<double>(H);
    const double ax = 0.32 * static_cast<double>(W), ay = 0.42 * static_cast<double>(H);
    for (std::size_t t = 0; t < T; ++t) {
        const double pt = p.pulse_amp * out.truth.bvp[t] + p.resp_amp * out.truth.resp[t];
        const double m = track[t].m;
        const double psi = p.psi_m * m + p.psi_p * pt, phi = p.phi_m * m + p.phi_p * pt;
        Rgb skin, bg;
        for (int k = 0; k < 3; ++k) {
            skin[k] = p.u_s[k] * p.I0 * (p.s0 + phi) + p.u_p[k] * p.I0 * pt;
            bg[k] = p.background[k] * p.I0 * (1.0 + p.psi_m * m);
        }
        const double diffuse = p.I0 * p.c0 * (1.0 + psi);
        Xoshiro256 noise(derive_seed(p.seed, t));
        float* frame = out.clip.frames.ptr() + t * H * W * 3;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double a = detail::coverage(double(x) + 0.5, double(y) + 0.5, cx0 + track[t].dx,
                                                  cy0 + track[t].dy, ax, ay);
                if (a < 1.0) out.skin_mask[y * W + x] = 0.0f;
                for (int k = 0; k < 3; ++k) {
                    const double s = p.u_c[k] * diffuse * albedo[y * W + x] + skin[k];
                    double v = a * s + (1.0 - a) * bg[k];
                    if (p.noise_sigma > 0) v += p.noise_sigma * noise.normal();
                    if (p.quantize) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
                    frame[(y * W + x) * 3 + k] = static_cast<float>(v);
                }
            }
    }
    return out;
}

/// Per-frame mean of the pixels where mask > 0.5, as three channel traces.
inline std::array<std::vector<double>, 3> masked_means(const Tensor& frames, const Tensor& mask) {
    require_rank(frames.shape(), 4, "clip");
    const std::size_t T = frames.dim(0), P = frames.dim(1) * frames.dim(2);
    if (mask.size() != P) throw DimensionError("skin mask size does not match the frames", P, mask.size());
    std::size_t count = 0;
    for (float v : mask.data()) count += v > 0.5f;
    if (count == 0) throw ValidationError("mask", "skin mask selects no pixels");
    std::array<std::vector<double>, 3> out;
    for (auto& c : out) c.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const float* f = frames.ptr() + t * P * 3;
        std::array<double, 3> acc{};
        for (std::size_t i = 0; i < P; ++i)
            if (mask[i] > 0.5f)
                for (int k = 0; k < 3; ++k) acc[k] += f[i * 3 + k];
        for (int k = 0; k < 3; ++k) out[k][t] = acc[k] / static_cast<double>(count);
    }
    return out;
}

// Clip container: records "frames", "fps" and optionally "skin_mask".
inline void save_clip(const std::filesystem::path& path, const VideoClip& c, const Tensor* mask = nullptr) {
    NamedTensors rec{{"frames", c.frames}, {"fps", Tensor(Shape{1}, static_cast<float>(c.fps))}};
    if (mask) rec.emplace_back("skin_mask", *mask);
    vtf_write(path, rec);
}

struct LoadedClip {
    VideoClip clip;
    std::optional<Tensor> skin_mask;
};

inline LoadedClip load_clip(const std::filesystem::path& path) {
    const NamedTensors rec = vtf_read(path);
    LoadedClip out;
    out.clip.frames = vtf_find(rec, "frames");
    require_rank(out.clip.frames.shape(), 4, "clip frames");
    if (out.clip.frames.dim(3) != 3) throw DimensionError("clip frames must have 3 channels", 3, out.clip.frames.dim(3));
    out.clip.fps = 30.0;
    for (const auto& [name, t] : rec) {
        if (name == "fps") out.clip.fps = t[0];
        if (name == "skin_mask") out.skin_mask = t;
    }
    if (!(out.clip.fps > 0)) throw FormatError("clip fps must be positive");
    return out;
}

}  // namespace vitalcam
