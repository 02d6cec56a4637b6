#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitalcam/model.hpp"
#include "vitalcam/sigproc.hpp"
#include "vitalcam/synth.hpp"
#include "vitalcam/train.hpp"
#include "vitalcam/vtf.hpp"

namespace vitalcam {

/// One non-overlapping window cut from a prepared clip. `raw` keeps all
/// window_len appearance frames so the same window serves every architecture.
struct DatasetWindow {
    Tensor motion;  // L x S x S x 3
    Tensor raw;     // L x S x S x 3
    std::vector<float> bvp;
    std::vector<float> resp;
    std::size_t clip = 0;
    std::size_t start = 0;  // first difference frame
};

/// First differences of a waveform, standardized over the whole clip. The
/// result lines up with the normalized difference frames.
inline std::vector<float> difference_target(const std::vector<double>& w) {
    if (w.size() < 2) throw DimensionError("target waveform needs at least 2 samples", 2, w.size());
    std::vector<double> d(w.size() - 1);
    for (std::size_t i = 0; i + 1 < w.size(); ++i) d[i] = w[i + 1] - w[i];
    double mean = 0, var = 0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    for (double v : d) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(d.size()));
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = sd > 0 ? static_cast<float>((d[i] - mean) / sd) : 0.0f;
    return out;
}

/// Number of complete windows in a clip of `frames` frames.
inline std::size_t window_count(std::size_t frames, std::size_t window_len) {
    return frames < 2 ? 0 : (frames - 1) / window_len;
}

inline Tensor slice_frames(const Tensor& x, std::size_t first, std::size_t count) {
    Shape s = x.shape();
    const std::size_t frame = x.size() / s[0];
    Tensor out(Shape{count, s[1], s[2], s[3]});
    std::copy_n(x.ptr() + first * frame, count * frame, out.ptr());
    return out;
}

inline std::vector<DatasetWindow> clip_windows(const RenderedClip& rc, std::size_t window_len,
                                               std::size_t input_size, std::size_t clip_index = 0) {
    const std::size_t n = window_count(rc.clip.frames.dim(0), window_len);
    if (n == 0)
        throw ValidationError("duration_s", "clip of " + std::to_string(rc.clip.frames.dim(0)) +
                                                " frames is shorter than one window");
    const PreparedClip pc = prepare_clip(rc.clip.frames, input_size);
    const auto bvp = difference_target(rc.truth.bvp), resp = difference_target(rc.truth.resp);
    std::vector<DatasetWindow> out;
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t s = w * window_len;
        out.push_back({slice_frames(pc.motion, s, window_len), slice_frames(pc.appearance, s, window_len),
                       {bvp.begin() + long(s), bvp.begin() + long(s + window_len)},
                       {resp.begin() + long(s), resp.begin() + long(s + window_len)}, clip_index, s});
    }
    return out;
}

/// Renders every clip and cuts it into windows.
inline std::vector<DatasetWindow> make_dataset(const std::vector<SynthParams>& clips, std::size_t window_len = 10,
                                               std::size_t input_size = 36) {
    if (window_len == 0) throw ValidationError("window_len", "must be positive");
    std::vector<DatasetWindow> all;
    for (std::size_t c = 0; c < clips.size(); ++c) {
        auto w = clip_windows(render_clip(clips[c]), window_len, input_size, c);
        all.insert(all.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return all;
}

inline std::vector<Sample> to_samples(const ModelSpec& spec, const std::vector<DatasetWindow>& windows) {
    std::vector<Sample> out;
    for (const auto& w : windows) {
        if (w.motion.dim(0) != spec.window_len || w.motion.dim(1) != spec.input_size)
            throw DimensionError("dataset window " + w.motion.shape().str() + " does not fit the model spec");
        out.push_back({make_window_input(spec, w.motion, w.raw), w.bvp, w.resp});
    }
    return out;
}

struct InferResult {
    std::map<std::string, SignalTrace> heads;  // per-frame outputs, one per difference frame
    std::size_t windows = 0;
    std::size_t dropped_frames = 0;  // difference frames past the last full window
};

/// Runs the model over consecutive non-overlapping windows of a clip.
inline InferResult infer_clip(const ModelSpec& spec, const WeightSet& w, const VideoClip& clip) {
    spec.validate();
    check_weights(spec, w);
    const std::size_t T = clip.frames.dim(0), L = spec.window_len;
    InferResult r;
    r.windows = window_count(T, L);
    if (r.windows == 0)
        throw ValidationError("clip", std::to_string(T) + " frames hold no full window of " + std::to_string(L));
    r.dropped_frames = (T - 1) - r.windows * L;
    const PreparedClip pc = prepare_clip(clip.frames, spec.input_size);
    for (const auto& h : spec.heads()) r.heads[h].fs = clip.fps;
    for (std::size_t k = 0; k < r.windows; ++k) {
        const auto out = forward(spec, w,
                                 make_window_input(spec, slice_frames(pc.motion, k * L, L),
                                                   slice_frames(pc.appearance, k * L, L)));
        for (const auto& [h, v] : out) r.heads[h].samples.insert(r.heads[h].samples.end(), v.begin(), v.end());
    }
    return r;
}

inline constexpr int dataset_schema_version = 1;

/// Writes one VTF per window plus manifest.json into `dir`.
inline std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                          const std::vector<DatasetWindow>& windows) {
    std::filesystem::create_directories(dir);
    nlohmann::json m;
    m["schema_version"] = dataset_schema_version;
    m["windows"] = nlohmann::json::array();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        char name[32];
        std::snprintf(name, sizeof name, "window_%05zu.vtf", i);
        const std::size_t L = w.bvp.size();
        vtf_write(dir / name, {{"motion", w.motion},
                               {"raw", w.raw},
                               {"bvp", Tensor(Shape{L}, w.bvp)},
                               {"resp", Tensor(Shape{L}, w.resp)}});
        m["windows"].push_back({{"file", name}, {"clip", w.clip}, {"start", w.start}});
    }
    if (!windows.empty()) {
        m["window_len"] = windows[0].motion.dim(0);
        m["input_size"] = windows[0].motion.dim(1);
    }
    const auto path = dir / "manifest.json";
    std::ofstream(path) << m.dump(2) << '\n';
    return path;
}

inline std::vector<DatasetWindow> load_dataset(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw FormatError("cannot open dataset manifest " + manifest.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest: " + std::string(e.what()));
    }
    if (!m.contains("windows") || !m["windows"].is_array()) throw FormatError("dataset manifest lacks 'windows'");
    std::vector<DatasetWindow> out;
    const auto dir = manifest.parent_path();
    for (const auto& e : m["windows"]) {
        const NamedTensors rec = vtf_read(dir / e.at("file").get<std::string>());
        DatasetWindow w;
        w.motion = vtf_find(rec, "motion");
        w.raw = vtf_find(rec, "raw");
        const auto b = vtf_find(rec, "bvp").data(), r = vtf_find(rec, "resp").data();
        w.bvp.assign(b.begin(), b.end());
        w.resp.assign(r.begin(), r.end());
        w.clip = e.value("clip", std::size_t{0});
        w.start = e.value("start", std::size_t{0});
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace vitalcam
