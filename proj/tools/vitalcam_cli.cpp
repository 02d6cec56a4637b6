// vitalcam: synth, infer, train, eval, baseline and bench verbs.
//
// Exit status: 0 success, 2 invalid input or configuration, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vitalcam/bench.hpp"
#include "vitalcam/classical.hpp"
#include "vitalcam/dataset.hpp"
#include "vitalcam/io.hpp"
#include "vitalcam/train.hpp"

namespace fs = std::filesystem;
using namespace vitalcam;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    fs::path out = "out";
};

std::string numbered(const char* stem, std::size_t i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, suffix);
    return buf;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    fs::path config;
    bool dataset = false;
    std::size_t window_len = 10;
    std::size_t input_size = 36;
};

// A config is one SynthParams object or {"clips": [ ... ]}. A clip without
// its own "seed" gets the global seed plus its index.
int cmd_synth(const Globals& g, const SynthArgs& a) {
    const json cfg = read_json(a.config);
    std::vector<json> items;
    if (cfg.is_object() && cfg.contains("clips")) {
        if (!cfg["clips"].is_array() || cfg["clips"].empty()) throw ValidationError("clips", "must be a non-empty array");
        for (const auto& c : cfg["clips"]) items.push_back(c);
    } else {
        items.push_back(cfg);
    }
    std::vector<SynthParams> params;
    for (std::size_t i = 0; i < items.size(); ++i) {
        SynthParams p = synth_params_from_json(items[i]);
        if (!items[i].contains("seed")) p.seed = g.seed.value_or(0) + i;
        params.push_back(p);
    }
    fs::create_directories(g.out);
    json manifest = {{"schema_version", report_schema_version}, {"clips", json::array()}};
    std::vector<DatasetWindow> windows;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const RenderedClip rc = render_clip(params[i]);
        const auto clip = numbered("clip", i, ".vtf"), bvp = numbered("clip", i, "_bvp.csv"),
                   resp = numbered("clip", i, "_resp.csv"), rgb = numbered("clip", i, "_rgb.csv");
        save_clip(g.out / clip, rc.clip, &rc.skin_mask);
        write_trace_csv(g.out / bvp, {rc.truth.bvp, rc.truth.fs});
        write_trace_csv(g.out / resp, {rc.truth.resp, rc.truth.fs});
        write_rgb_csv(g.out / rgb, traces_from_clip(rc.clip, &rc.skin_mask));
        manifest["clips"].push_back({{"clip", clip},
                                     {"bvp", bvp},
                                     {"resp", resp},
                                     {"rgb", rgb},
                                     {"frames", rc.clip.frames.dim(0)},
                                     {"params", to_json(params[i])}});
        if (a.dataset) {
            auto w = clip_windows(rc, a.window_len, a.input_size, i);
            windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
        }
        std::cerr << "rendered " << clip << " (" << rc.clip.frames.dim(0) << " frames)\n";
    }
    if (a.dataset) {
        save_dataset(g.out / "dataset", windows);
        manifest["dataset"] = "dataset/manifest.json";
        std::cerr << "wrote " << windows.size() << " training windows\n";
    }
    write_json(g.out / "manifest.json", manifest);
    return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    fs::path model, weights, clip;
    std::string stem = "pred";
};

int cmd_infer(const Globals& g, const InferArgs& a) {
    const ModelSpec spec = model_spec_from_json(read_json(a.model));
    const WeightSet w = load_weights(a.weights, spec);
    const LoadedClip clip = load_clip(a.clip);
    const InferResult r = infer_clip(spec, w, clip.clip);
    json summary = {{"schema_version", report_schema_version},
                    {"frames", clip.clip.frames.dim(0)},
                    {"difference_frames", clip.clip.frames.dim(0) - 1},
                    {"windows", r.windows},
                    {"dropped_frames", r.dropped_frames},
                    {"fps", clip.clip.fps},
                    {"outputs", json::object()}};
    for (const auto& [head, trace] : r.heads) {
        const std::string file = a.stem + "_" + head + ".csv";
        write_trace_csv(g.out / file, trace);
        summary["outputs"][head] = {{"file", file}, {"samples", trace.samples.size()}};
    }
    write_json(g.out / (a.stem + "_summary.json"), summary);
    if (r.dropped_frames > 0)
        std::cerr << "warning: " << r.dropped_frames << " trailing difference frames did not fill a window\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    fs::path model, data;
    std::size_t epochs = 1;
    std::size_t batch = 32;
    double lr = 1.0;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    const ModelSpec spec = model_spec_from_json(read_json(a.model));
    const auto samples = to_samples(spec, load_dataset(a.data));
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.lr = a.lr;
    cfg.seed = g.seed.value_or(0);
    fs::create_directories(g.out);
    std::ofstream loss(g.out / "loss.csv");
    loss << "epoch,loss\n";
    const auto res = train<float>(spec, samples, cfg, [&](std::size_t e, double l) {
        loss << e + 1 << ',' << fmt_double(l) << '\n' << std::flush;
        std::cerr << "epoch " << e + 1 << " loss " << l << '\n';
    });
    save_weights(g.out / "weights.vtf", res.weights);
    write_json(g.out / "model.json", to_json(spec));
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    fs::path pred, truth;
    std::string kind = "pulse";
    std::vector<double> band;
    double window_s = 30.0;
    bool svg = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const SignalKind kind = parse_kind(a.kind);
    std::optional<BandSpec> band;
    if (!a.band.empty()) {
        if (a.band.size() != 2) throw ValidationError("band", "expected two edges in Hz");
        band = BandSpec{a.band[0], a.band[1]};
    }
    const MetricsReport rep = evaluate(read_trace_csv(a.pred), read_trace_csv(a.truth), kind, band, a.window_s);
    write_json(g.out / "metrics.json", to_json(rep));
    write_metrics_csv(g.out / "metrics.csv", rep);
    const auto pts = bland_altman(rep);
    write_bland_altman_csv(g.out / "bland_altman.csv", pts);
    if (a.svg) write_bland_altman_svg(g.out / "bland_altman.svg", pts, kind == SignalKind::pulse ? "BPM" : "breaths/min");
    std::printf("windows %zu  MAE %.3f  RMSE %.3f  SNR %.2f dB\n", rep.windows.size(), rep.aggregate.mae,
                rep.aggregate.rmse, rep.mean_snr_db);
    return 0;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
    std::string method;
    fs::path clip, rgb;
    bool full_frame = false;
};

int cmd_baseline(const Globals& g, const BaselineArgs& a) {
    const Baseline b = parse_baseline(a.method);
    RgbTraces traces;
    if (!a.rgb.empty()) {
        traces = read_rgb_csv(a.rgb);
    } else {
        const LoadedClip c = load_clip(a.clip);
        const Tensor* mask = (c.skin_mask && !a.full_frame) ? &*c.skin_mask : nullptr;
        traces = traces_from_clip(c.clip, mask);
    }
    const BaselineResult r = run_baseline(b, traces);
    write_trace_csv(g.out / (a.method + "_bvp.csv"), r.bvp);
    json summary = {{"schema_version", report_schema_version},
                    {"method", a.method},
                    {"samples", r.bvp.samples.size()},
                    {"skipped_windows", r.skipped_windows},
                    {"note", r.note}};
    if (b == Baseline::ica) summary["sources"] = r.sources;
    const BandSpec band = default_band(SignalKind::pulse);
    if (r.bvp.duration() >= 2.0 / band.lo) {
        const RateEstimate e = estimate_rate(butter_bandpass(r.bvp, band), band);
        summary["hr_bpm"] = e.rate;
        summary["confident"] = e.confident;
        std::printf("%s: HR %.1f BPM\n", a.method.c_str(), e.rate);
    }
    write_json(g.out / (a.method + "_summary.json"), summary);
    return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::vector<std::string> models = bench_model_names();
    fs::path model;
    std::size_t iterations = 30;
    std::size_t warmup = 5;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
    BenchConfig cfg;
    cfg.models = a.models;
    if (!a.model.empty()) cfg.base = model_spec_from_json(read_json(a.model));
    cfg.iterations = a.iterations;
    cfg.warmup = a.warmup;
    cfg.seed = g.seed.value_or(0);
    const BenchReport rep = run_bench(cfg);
    write_json(g.out / "bench.json", to_json(rep));
    std::printf("%-12s %10s %10s %10s %12s\n", "model", "median_ms", "p10_ms", "p90_ms", "window_ms");
    for (const auto& e : rep.entries)
        std::printf("%-12s %10.3f %10.3f %10.3f %12.3f\n", e.model.c_str(), e.median_ms, e.p10_ms, e.p90_ms,
                    e.window_ms);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vitalcam: camera-based pulse and respiration measurement"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->type_name("N");
    app.add_option("--out", g.out, "Output directory")->type_name("DIR");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Render synthetic clips and ground truth");
    synth->add_option("--config", sa.config, "SynthParams JSON")->required()->check(CLI::ExistingFile);
    synth->add_flag("--dataset", sa.dataset, "Also cut training windows");
    synth->add_option("--window-len", sa.window_len, "Frames per training window");
    synth->add_option("--input-size", sa.input_size, "Model input side length");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "Run a trained model over a clip");
    infer->add_option("--model", ia.model, "ModelSpec JSON")->required()->check(CLI::ExistingFile);
    infer->add_option("--weights", ia.weights, "Weight file")->required()->check(CLI::ExistingFile);
    infer->add_option("--clip", ia.clip, "Clip file")->required()->check(CLI::ExistingFile);
    infer->add_option("--stem", ia.stem, "Output file prefix");

    TrainArgs ta;
    auto* trainc = app.add_subcommand("train", "Train a model on a dataset manifest");
    trainc->add_option("--model", ta.model, "ModelSpec JSON")->required()->check(CLI::ExistingFile);
    trainc->add_option("--data", ta.data, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
    trainc->add_option("--epochs", ta.epochs, "Training epochs");
    trainc->add_option("--batch", ta.batch, "Batch size");
    trainc->add_option("--lr", ta.lr, "Adadelta learning rate");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Score a predicted trace against a reference");
    eval->add_option("--pred", ea.pred, "Predicted trace CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", ea.truth, "Reference trace CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--kind", ea.kind, "pulse or resp");
    eval->add_option("--band", ea.band, "Pass band edges in Hz")->expected(2)->delimiter(',');
    eval->add_option("--window-s", ea.window_s, "Evaluation window length in seconds");
    eval->add_flag("--svg", ea.svg, "Also draw the Bland-Altman scatter");

    BaselineArgs ba;
    auto* base = app.add_subcommand("baseline", "Unsupervised pulse extraction");
    base->add_option("method", ba.method, "pos, chrom or ica")->required()->check(CLI::IsMember({"pos", "chrom", "ica"}));
    auto* bclip = base->add_option("--clip", ba.clip, "Clip file")->check(CLI::ExistingFile);
    auto* brgb = base->add_option("--rgb", ba.rgb, "RGB trace CSV")->check(CLI::ExistingFile);
    bclip->excludes(brgb);
    base->add_flag("--full-frame", ba.full_frame, "Ignore the clip's skin mask");

    BenchArgs bea;
    auto* bench = app.add_subcommand("bench", "Per-frame inference latency");
    bench->add_option("--models", bea.models, "Subset of 2d-can,3d-can,hybrid-can,ts-can,mtts-can")->delimiter(',');
    bench->add_option("--model", bea.model, "ModelSpec JSON giving sizes")->check(CLI::ExistingFile);
    bench->add_option("--iterations", bea.iterations, "Timed iterations (>= 30)");
    bench->add_option("--warmup", bea.warmup, "Untimed iterations (>= 5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*synth) return cmd_synth(g, sa);
        if (*infer) return cmd_infer(g, ia);
        if (*trainc) return cmd_train(g, ta);
        if (*eval) return cmd_eval(g, ea);
        if (*base) {
            if (ba.clip.empty() && ba.rgb.empty()) throw ValidationError("input", "give --clip or --rgb");
            return cmd_baseline(g, ba);
        }
        if (*bench) return cmd_bench(g, bea);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
