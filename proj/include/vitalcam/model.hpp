#pragma once

// The convolutional attention network family.
//
// Every variant has a motion branch and an appearance branch of four
// convolutions each. Attention bridges sit after the second and fourth
// convolutions, right before each pooling stage, and gate the motion
// features with masks computed from the appearance features:
//
//   conv1 -> conv2 -> [mask 1] -> pool -> dropout
//         -> conv3 -> conv4 -> [mask 2] -> pool -> dropout
//         -> flatten per frame -> dense(hidden, tanh) -> dropout -> dense(1)
//
// Variants differ in the motion/appearance convolutions:
//   can2d   2D motion, 2D appearance on every frame (one mask per frame)
//   can3d   3D motion, 3D appearance over the window (one mask per frame)
//   hybrid  3D motion, 2D appearance on the window-averaged frame (one mask)
//   tscan   temporal shift + 2D motion, 2D appearance on the averaged frame
// Pooling is spatial 2x2 in every variant so each head emits one value per
// frame.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitalcam/error.hpp"
#include "vitalcam/rng.hpp"
#include "vitalcam/tape.hpp"
#include "vitalcam/tensor.hpp"
#include "vitalcam/vtf.hpp"

namespace vitalcam {

enum class Arch { can2d, can3d, hybrid, tscan };
enum class Task { pulse, resp };

inline const char* arch_name(Arch a) {
    switch (a) {
        case Arch::can2d: return "can2d";
        case Arch::can3d: return "can3d";
        case Arch::hybrid: return "hybrid";
        case Arch::tscan: return "tscan";
    }
    return "?";
}

inline Arch parse_arch(const std::string& s) {
    if (s == "can2d") return Arch::can2d;
    if (s == "can3d") return Arch::can3d;
    if (s == "hybrid") return Arch::hybrid;
    if (s == "tscan") return Arch::tscan;
    throw ValidationError("arch", "unknown architecture '" + s + "'");
}

inline const char* head_name(Task t) { return t == Task::pulse ? "bvp" : "resp"; }

struct ModelSpec {
    Arch arch = Arch::tscan;
    bool multi_task = false;
    Task task = Task::pulse;  // head of a single-task model
    std::size_t window_len = 10;
    std::size_t input_size = 36;
    std::array<std::size_t, 4> filters{32, 32, 64, 64};
    std::size_t hidden = 128;
    double dropout_pool = 0.25;
    double dropout_head = 0.5;
    bool temporal_shift = true;  // tscan only; false gives a 2D motion branch

    void validate() const {
        if (input_size < 4 || input_size % 4 != 0)
            throw ValidationError("input_size", "must be a positive multiple of 4");
        if (window_len < 1) throw ValidationError("window_len", "must be positive");
        if (arch != Arch::can2d && window_len < 2)
            throw ValidationError("window_len", "temporal architectures need at least 2 frames");
        for (auto f : filters)
            if (f == 0) throw ValidationError("filters", "filter counts must be positive");
        if (hidden == 0) throw ValidationError("hidden", "must be positive");
        if (!(dropout_pool >= 0 && dropout_pool < 1) || !(dropout_head >= 0 && dropout_head < 1))
            throw ValidationError("dropout", "rates must lie in [0, 1)");
    }

    std::vector<std::string> heads() const {
        if (multi_task) return {"bvp", "resp"};
        return {head_name(task)};
    }

    bool motion_is_3d() const { return arch == Arch::can3d || arch == Arch::hybrid; }
    bool appearance_is_3d() const { return arch == Arch::can3d; }
    bool averaged_appearance() const { return arch == Arch::hybrid || arch == Arch::tscan; }
    bool shifts() const { return arch == Arch::tscan && temporal_shift; }

    std::size_t appearance_frames() const { return averaged_appearance() ? 1 : window_len; }
    std::size_t flat_features() const { return (input_size / 4) * (input_size / 4) * filters[3]; }
};

template <typename T>
using BasicWeightSet = std::map<std::string, BasicTensor<T>>;
using WeightSet = BasicWeightSet<float>;

/// Thrown when a weight file lacks a parameter the spec requires.
class MissingParameterError : public ValidationError {
public:
    explicit MissingParameterError(const std::string& name)
        : ValidationError(name, "missing parameter") {}
};

/// Expected parameter names and shapes for a spec.
inline std::map<std::string, Shape> parameter_shapes(const ModelSpec& spec) {
    spec.validate();
    std::map<std::string, Shape> out;
    const auto& f = spec.filters;
    const std::array<std::size_t, 4> cin{3, f[0], f[1], f[2]};
    auto add_conv = [&](const std::string& branch, bool is3d) {
        for (int i = 0; i < 4; ++i) {
            const std::string p = branch + "/conv" + std::to_string(i + 1);
            out.emplace(p + "/kernel", is3d ? Shape{3, 3, 3, cin[i], f[i]} : Shape{3, 3, cin[i], f[i]});
            out.emplace(p + "/bias", Shape{f[i]});
        }
    };
    add_conv("motion", spec.motion_is_3d());
    add_conv("appearance", spec.appearance_is_3d());
    out.emplace("attention1/omega", Shape{1, 1, f[1], 1});
    out.emplace("attention1/bias", Shape{1});
    out.emplace("attention2/omega", Shape{1, 1, f[3], 1});
    out.emplace("attention2/bias", Shape{1});
    for (const auto& h : spec.heads()) {
        out.emplace(h + "/dense1/kernel", Shape{spec.flat_features(), spec.hidden});
        out.emplace(h + "/dense1/bias", Shape{spec.hidden});
        out.emplace(h + "/dense2/kernel", Shape{spec.hidden, 1});
        out.emplace(h + "/dense2/bias", Shape{1});
    }
    return out;
}

inline std::size_t parameter_count(const ModelSpec& spec) {
    std::size_t n = 0;
    for (const auto& [name, shape] : parameter_shapes(spec)) n += shape.numel();
    return n;
}

/// Glorot-uniform kernels, zero biases. Each tensor draws from its own
/// stream keyed by its name, so shared trunk names get identical values
/// across single- and multi-task specs.
template <typename T = float>
BasicWeightSet<T> build_model(const ModelSpec& spec, std::uint64_t init_seed) {
    BasicWeightSet<T> w;
    for (const auto& [name, shape] : parameter_shapes(spec)) {
        BasicTensor<T> t(shape);
        const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, "/bias") == 0;
        if (!is_bias) {
            const std::size_t fan_out = shape[shape.rank() - 1];
            const std::size_t fan_in = shape.numel() / fan_out;
            const std::size_t receptive = shape.rank() >= 4 ? fan_in / shape[shape.rank() - 2] : 1;
            const double limit =
                std::sqrt(6.0 / static_cast<double>(fan_in + receptive * fan_out));
            Xoshiro256 rng(derive_seed(init_seed, hash_label(name)));
            for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
        }
        w.emplace(name, std::move(t));
    }
    return w;
}

/// Checks names and extents of `w` against the spec.
template <typename T>
void check_weights(const ModelSpec& spec, const BasicWeightSet<T>& w) {
    const auto shapes = parameter_shapes(spec);
    for (const auto& [name, shape] : shapes) {
        auto it = w.find(name);
        if (it == w.end()) throw MissingParameterError(name);
        if (!(it->second.shape() == shape))
            throw DimensionError("parameter '" + name + "' has shape " + it->second.shape().str() +
                                 ", spec expects " + shape.str());
    }
    for (const auto& [name, t] : w)
        if (!shapes.count(name))
            throw ValidationError(name, "parameter not used by a " + std::string(arch_name(spec.arch)) +
                                            " spec");
}

inline void save_weights(const std::filesystem::path& path, const WeightSet& w) {
    NamedTensors rec(w.begin(), w.end());
    vtf_write(path, rec);
}

inline WeightSet load_weights(const std::filesystem::path& path, const ModelSpec& spec) {
    WeightSet w;
    for (auto& [name, t] : vtf_read(path)) w.insert_or_assign(name, std::move(t));
    check_weights(spec, w);
    return w;
}

/// One model input window. `appearance` holds window_len frames for can2d and
/// can3d, or the single window-averaged frame for hybrid and tscan.
template <typename T>
struct BasicWindowInput {
    BasicTensor<T> motion;      // T x S x S x 3 normalized difference frames
    BasicTensor<T> appearance;  // T x S x S x 3 or 1 x S x S x 3 standardized raw frames
};
using WindowInput = BasicWindowInput<float>;

/// Builds the input for `spec` from difference frames and the aligned raw
/// frames, averaging the raw frames when the architecture wants one frame.
template <typename T>
BasicWindowInput<T> make_window_input(const ModelSpec& spec, BasicTensor<T> motion,
                                      const BasicTensor<T>& raw_frames) {
    if (spec.averaged_appearance()) return {std::move(motion), mean_frame(raw_frames)};
    return {std::move(motion), raw_frames};
}

template <typename T>
void check_input(const ModelSpec& spec, const BasicWindowInput<T>& in) {
    const std::size_t s = spec.input_size;
    const Shape motion{spec.window_len, s, s, 3};
    const Shape app{spec.appearance_frames(), s, s, 3};
    if (!(in.motion.shape() == motion))
        throw DimensionError("motion input " + in.motion.shape().str() + ", spec expects " + motion.str());
    if (!(in.appearance.shape() == app))
        throw DimensionError("appearance input " + in.appearance.shape().str() + ", spec expects " +
                             app.str());
    if (!in.motion.all_finite() || !in.appearance.all_finite())
        throw NumericError("model input contains non-finite values");
}

/// Records the network on `tp` and returns one T x 1 output per head.
template <typename T>
std::map<std::string, Var> build_graph(Tape<T>& tp, const ModelSpec& spec,
                                       const BasicWeightSet<T>& w, const BasicWindowInput<T>& in,
                                       bool training, std::uint64_t seed) {
    check_input(spec, in);
    auto param = [&](const std::string& name) -> Var {
        auto it = w.find(name);
        if (it == w.end()) throw MissingParameterError(name);
        return tp.parameter(it->second);
    };
    auto site_seed = [&](const char* site) { return derive_seed(seed, hash_label(site)); };

    auto motion_conv = [&](Var x, int i) {
        const std::string p = "motion/conv" + std::to_string(i);
        if (spec.shifts())
            x = tp.temporal_shift(x, ShiftSpec::thirds(tp.value(x).dim(3), spec.window_len));
        Var y = spec.motion_is_3d() ? tp.conv3d(x, param(p + "/kernel"), param(p + "/bias"))
                                    : tp.conv2d(x, param(p + "/kernel"), param(p + "/bias"));
        return tp.activation(y, Activation::tanh);
    };
    auto appearance_conv = [&](Var x, int i) {
        const std::string p = "appearance/conv" + std::to_string(i);
        Var y = spec.appearance_is_3d() ? tp.conv3d(x, param(p + "/kernel"), param(p + "/bias"))
                                        : tp.conv2d(x, param(p + "/kernel"), param(p + "/bias"));
        return tp.activation(y, Activation::tanh);
    };

    Var m = tp.constant(in.motion);
    Var a = tp.constant(in.appearance);

    m = motion_conv(motion_conv(m, 1), 2);
    a = appearance_conv(appearance_conv(a, 1), 2);
    Var mask1 = tp.attention_mask(a, param("attention1/omega"), param("attention1/bias"));
    m = tp.apply_mask(m, mask1);
    m = tp.dropout(tp.avg_pool(m, PoolWindow::spatial()), spec.dropout_pool,
                   site_seed("motion/dropout1"), training);
    a = tp.dropout(tp.avg_pool(a, PoolWindow::spatial()), spec.dropout_pool,
                   site_seed("appearance/dropout1"), training);

    m = motion_conv(motion_conv(m, 3), 4);
    a = appearance_conv(appearance_conv(a, 3), 4);
    Var mask2 = tp.attention_mask(a, param("attention2/omega"), param("attention2/bias"));
    m = tp.apply_mask(m, mask2);
    m = tp.dropout(tp.avg_pool(m, PoolWindow::spatial()), spec.dropout_pool,
                   site_seed("motion/dropout2"), training);

    Var flat = tp.reshape(m, Shape{spec.window_len, spec.flat_features()});
    std::map<std::string, Var> outputs;
    for (const auto& h : spec.heads()) {
        Var z = tp.activation(tp.dense(flat, param(h + "/dense1/kernel"), param(h + "/dense1/bias")),
                              Activation::tanh);
        z = tp.dropout(z, spec.dropout_head, site_seed((h + "/dropout").c_str()), training);
        outputs.emplace(h, tp.dense(z, param(h + "/dense2/kernel"), param(h + "/dense2/bias")));
    }
    return outputs;
}

/// Per-frame predictions keyed by head name ("bvp", "resp"), each of length
/// window_len. Inference applies no dropout; train mode replays masks from
/// `seed`.
template <typename T>
std::map<std::string, std::vector<T>> forward(const ModelSpec& spec, const BasicWeightSet<T>& w,
                                              const BasicWindowInput<T>& in, bool train_mode = false,
                                              std::uint64_t seed = 0) {
    Tape<T> tp(false);
    const auto outs = build_graph(tp, spec, w, in, train_mode, seed);
    std::map<std::string, std::vector<T>> result;
    for (const auto& [h, v] : outs) {
        const auto& t = tp.value(v);
        result.emplace(h, std::vector<T>(t.data().begin(), t.data().end()));
    }
    return result;
}

}  // namespace vitalcam
