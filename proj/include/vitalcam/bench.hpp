#pragma once

// Single-threaded per-frame inference latency.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include <sys/utsname.h>

#include "vitalcam/model.hpp"
#include "vitalcam/rng.hpp"

namespace vitalcam {

/// A benchmarked configuration. Single-task architectures need one network
/// per vital sign, so they are timed as a pulse + respiration pair; the
/// multi-task TS-CAN is one network with both heads.
struct BenchModel {
    std::string name;
    std::vector<ModelSpec> networks;
};

inline const std::vector<std::string>& bench_model_names() {
    static const std::vector<std::string> names{"2d-can", "3d-can", "hybrid-can", "ts-can", "mtts-can"};
    return names;
}

/// `base` supplies sizes (filters, hidden, window, input); arch and heads are
/// overridden per name.
inline BenchModel bench_model(const std::string& name, const ModelSpec& base) {
    BenchModel m{name, {}};
    ModelSpec s = base;
    s.temporal_shift = true;
    s.multi_task = false;
    if (name == "mtts-can") {
        s.arch = Arch::tscan;
        s.multi_task = true;
        m.networks.push_back(s);
        return m;
    }
    if (name == "2d-can") s.arch = Arch::can2d;
    else if (name == "3d-can") s.arch = Arch::can3d;
    else if (name == "hybrid-can") s.arch = Arch::hybrid;
    else if (name == "ts-can") s.arch = Arch::tscan;
    else throw ValidationError("models", "unknown benchmark model '" + name + "'");
    for (Task t : {Task::pulse, Task::resp}) {
        s.task = t;
        m.networks.push_back(s);
    }
    return m;
}

struct BenchConfig {
    std::vector<std::string> models = bench_model_names();
    ModelSpec base;
    std::size_t iterations = 30;
    std::size_t warmup = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (iterations < 30) throw ValidationError("iterations", "must be at least 30");
        if (warmup < 5) throw ValidationError("warmup", "must be at least 5");
        if (models.empty()) throw ValidationError("models", "no models given");
        base.validate();
    }
};

struct BenchEntry {
    std::string model;
    std::size_t networks = 1;
    double median_ms = 0, p10_ms = 0, p90_ms = 0;  // per frame
    double window_ms = 0;                          // median per window
    std::size_t warmup = 0, iterations = 0;
    std::size_t threads = 1;
};

struct BenchReport {
    std::string host;
    std::size_t window_len = 0;
    std::size_t input_size = 0;
    std::vector<BenchEntry> entries;

    const BenchEntry& at(const std::string& model) const {
        for (const auto& e : entries)
            if (e.model == model) return e;
        throw ValidationError("models", "no entry for '" + model + "'");
    }
};

inline std::string host_descriptor() {
    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
            break;
        }
    }
    utsname u{};
    if (uname(&u) == 0) return cpu + "; " + u.sysname + " " + u.release + " " + u.machine;
    return cpu;
}

/// Linear interpolation between closest ranks; `sorted` must be ascending.
inline double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Random normal motion and raw frames, shared by every model.
inline WindowInput bench_fixture(std::size_t window_len, std::size_t size, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    WindowInput in{Tensor(Shape{window_len, size, size, 3}), Tensor(Shape{window_len, size, size, 3})};
    for (auto& v : in.motion.data()) v = static_cast<float>(rng.normal());
    for (auto& v : in.appearance.data()) v = static_cast<float>(rng.normal());
    return in;
}

/// Times forward() per window for each model. Iterations are interleaved
/// across models so slow drifts in machine load hit every model alike.
inline BenchReport run_bench(const BenchConfig& cfg) {
    cfg.validate();
    struct Prepared {
        BenchModel model;
        std::vector<WeightSet> weights;
        std::vector<WindowInput> inputs;
        std::vector<double> samples;
    };
    const WindowInput fixture = bench_fixture(cfg.base.window_len, cfg.base.input_size, cfg.seed);
    std::vector<Prepared> all;
    for (const auto& name : cfg.models) {
        Prepared p{bench_model(name, cfg.base), {}, {}, {}};
        for (const auto& s : p.model.networks) {
            p.weights.push_back(build_model<float>(s, cfg.seed));
            p.inputs.push_back(make_window_input(s, fixture.motion, fixture.appearance));
        }
        all.push_back(std::move(p));
    }
    volatile float sink = 0;
    auto run_once = [&](Prepared& p) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t k = 0; k < p.weights.size(); ++k) {
            const auto out = forward(p.model.networks[k], p.weights[k], p.inputs[k]);
            sink = sink + out.begin()->second[0];
        }
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    for (std::size_t i = 0; i < cfg.warmup; ++i)
        for (auto& p : all) run_once(p);
    for (std::size_t i = 0; i < cfg.iterations; ++i)
        for (auto& p : all) p.samples.push_back(run_once(p));

    BenchReport rep{host_descriptor(), cfg.base.window_len, cfg.base.input_size, {}};
    const double L = static_cast<double>(cfg.base.window_len);
    for (auto& p : all) {
        std::sort(p.samples.begin(), p.samples.end());
        BenchEntry e;
        e.model = p.model.name;
        e.networks = p.model.networks.size();
        e.window_ms = quantile(p.samples, 0.5);
        e.median_ms = e.window_ms / L;
        e.p10_ms = quantile(p.samples, 0.1) / L;
        e.p90_ms = quantile(p.samples, 0.9) / L;
        e.warmup = cfg.warmup;
        e.iterations = cfg.iterations;
        rep.entries.push_back(e);
    }
    return rep;
}

}  // namespace vitalcam
