#pragma once

// Text formats shared by the CLI: trace CSVs, JSON configs and reports.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitalcam/bench.hpp"
#include "vitalcam/classical.hpp"
#include "vitalcam/model.hpp"
#include "vitalcam/sigproc.hpp"
#include "vitalcam/synth.hpp"

namespace vitalcam {

using nlohmann::json;

inline constexpr int report_schema_version = 1;

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() && s.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": row " + std::to_string(row) + ": bad number '" + s + "'");
    }
}

// Reads a numeric CSV with an exact header; returns the time column and the rest.
inline std::vector<std::vector<double>> read_columns(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw FormatError(path.string() + ": expected header '" + header + "', got '" + line + "'");
    const std::size_t ncol = split_csv(header).size();
    std::vector<std::vector<double>> cols(ncol);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != ncol)
            throw FormatError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " columns, expected " + std::to_string(ncol));
        for (std::size_t c = 0; c < ncol; ++c) cols[c].push_back(parse_number(cells[c], path, row));
    }
    return cols;
}

// Sample rate from a uniformly spaced time column.
inline double infer_fs(const std::vector<double>& t, const std::filesystem::path& path) {
    if (t.size() < 2) throw FormatError(path.string() + ": need at least 2 rows to infer the sample rate");
    const double span = t.back() - t.front();
    if (!(span > 0)) throw FormatError(path.string() + ": time column must increase");
    const double dt = span / static_cast<double>(t.size() - 1);
    for (std::size_t i = 1; i < t.size(); ++i)
        if (std::abs(t[i] - t[i - 1] - dt) > 1e-6 * dt + 1e-9)
            throw FormatError(path.string() + ": samples are not uniformly spaced at row " + std::to_string(i + 2));
    return 1.0 / dt;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace detail

inline void write_trace_csv(const std::filesystem::path& path, const SignalTrace& x) {
    auto out = detail::open_out(path);
    out << "t_s,value\n";
    for (std::size_t i = 0; i < x.samples.size(); ++i)
        out << fmt_double(static_cast<double>(i) / x.fs) << ',' << fmt_double(x.samples[i]) << '\n';
}

inline SignalTrace read_trace_csv(const std::filesystem::path& path) {
    auto cols = detail::read_columns(path, "t_s,value");
    SignalTrace x{std::move(cols[1]), detail::infer_fs(cols[0], path)};
    x.validate();
    return x;
}

inline void write_rgb_csv(const std::filesystem::path& path, const RgbTraces& x) {
    x.validate();
    auto out = detail::open_out(path);
    out << "t_s,r,g,b\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        out << fmt_double(static_cast<double>(i) / x.fs) << ',' << fmt_double(x.c[0][i]) << ','
            << fmt_double(x.c[1][i]) << ',' << fmt_double(x.c[2][i]) << '\n';
}

inline RgbTraces read_rgb_csv(const std::filesystem::path& path) {
    auto cols = detail::read_columns(path, "t_s,r,g,b");
    RgbTraces x;
    x.fs = detail::infer_fs(cols[0], path);
    for (int k = 0; k < 3; ++k) x.c[k] = std::move(cols[k + 1]);
    x.validate();
    return x;
}

// ---------------------------------------------------------------- JSON

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    detail::open_out(path) << j.dump(2) << '\n';
}

namespace detail {

// Typed field access that reports the offending key.
template <typename T>
T get_field(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(key, j.contains(key) ? "wrong type" : "missing required field");
    }
}

template <typename T>
void read_opt(const json& j, const std::string& key, T& dst) {
    if (j.contains(key)) dst = get_field<T>(j, key);
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ValidationError("", "expected a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) throw ValidationError(k, "unknown field");
    }
}

}  // namespace detail

inline json to_json(const SynthParams& p) {
    return {{"fps", p.fps},
            {"duration_s", p.duration_s},
            {"height", p.height},
            {"width", p.width},
            {"hr_bpm", p.hr_bpm},
            {"br_bpm", p.br_bpm},
            {"u_c", p.u_c},
            {"u_p", p.u_p},
            {"u_s", p.u_s},
            {"background", p.background},
            {"s0", p.s0},
            {"I0", p.I0},
            {"c0", p.c0},
            {"pulse_amp", p.pulse_amp},
            {"resp_amp", p.resp_amp},
            {"breath_px_per_amp", p.breath_px_per_amp},
            {"rsa_depth", p.rsa_depth},
            {"motion_amp", p.motion_amp},
            {"motion_kind", motion_name(p.motion_kind)},
            {"motion_rate", p.motion_rate},
            {"psi_m", p.psi_m},
            {"psi_p", p.psi_p},
            {"phi_m", p.phi_m},
            {"phi_p", p.phi_p},
            {"texture", p.texture},
            {"noise_sigma", p.noise_sigma},
            {"quantize", p.quantize},
            {"seed", p.seed}};
}

/// `fps` and `duration_s` are required; every other field defaults. Colour
/// directions are normalised on read.
inline SynthParams synth_params_from_json(const json& j) {
    using detail::read_opt;
    detail::reject_unknown(j, {"fps", "duration_s", "height", "width", "hr_bpm", "br_bpm", "u_c", "u_p", "u_s",
                               "background", "s0", "I0", "c0", "pulse_amp", "resp_amp", "breath_px_per_amp",
                               "rsa_depth", "motion_amp", "motion_kind", "motion_rate", "psi_m", "psi_p", "phi_m",
                               "phi_p", "texture", "noise_sigma", "quantize", "seed"});
    SynthParams p;
    p.fps = detail::get_field<double>(j, "fps");
    p.duration_s = detail::get_field<double>(j, "duration_s");
    read_opt(j, "height", p.height);
    read_opt(j, "width", p.width);
    read_opt(j, "hr_bpm", p.hr_bpm);
    read_opt(j, "br_bpm", p.br_bpm);
    for (auto [key, dst] : {std::pair{"u_c", &p.u_c}, std::pair{"u_p", &p.u_p}, std::pair{"u_s", &p.u_s}}) {
        if (!j.contains(key)) continue;
        const Rgb v = detail::get_field<Rgb>(j, key);
        if (!(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] > 0)) throw ValidationError(key, "must be non-zero");
        *dst = unit(v);
    }
    read_opt(j, "background", p.background);
    read_opt(j, "s0", p.s0);
    read_opt(j, "I0", p.I0);
    read_opt(j, "c0", p.c0);
    read_opt(j, "pulse_amp", p.pulse_amp);
    read_opt(j, "resp_amp", p.resp_amp);
    read_opt(j, "breath_px_per_amp", p.breath_px_per_amp);
    read_opt(j, "rsa_depth", p.rsa_depth);
    read_opt(j, "motion_amp", p.motion_amp);
    if (j.contains("motion_kind")) p.motion_kind = parse_motion(detail::get_field<std::string>(j, "motion_kind"));
    read_opt(j, "motion_rate", p.motion_rate);
    read_opt(j, "psi_m", p.psi_m);
    read_opt(j, "psi_p", p.psi_p);
    read_opt(j, "phi_m", p.phi_m);
    read_opt(j, "phi_p", p.phi_p);
    read_opt(j, "texture", p.texture);
    read_opt(j, "noise_sigma", p.noise_sigma);
    read_opt(j, "quantize", p.quantize);
    read_opt(j, "seed", p.seed);
    p.validate();
    return p;
}

inline json to_json(const ModelSpec& s) {
    return {{"arch", arch_name(s.arch)},
            {"multi_task", s.multi_task},
            {"task", head_name(s.task)},
            {"window_len", s.window_len},
            {"input_size", s.input_size},
            {"filters", s.filters},
            {"hidden", s.hidden},
            {"dropout_pool", s.dropout_pool},
            {"dropout_head", s.dropout_head},
            {"temporal_shift", s.temporal_shift}};
}

inline ModelSpec model_spec_from_json(const json& j) {
    using detail::read_opt;
    detail::reject_unknown(j, {"arch", "multi_task", "task", "window_len", "input_size", "filters", "hidden",
                               "dropout_pool", "dropout_head", "temporal_shift"});
    ModelSpec s;
    s.arch = parse_arch(detail::get_field<std::string>(j, "arch"));
    read_opt(j, "multi_task", s.multi_task);
    if (j.contains("task")) {
        const auto t = detail::get_field<std::string>(j, "task");
        if (t == "bvp" || t == "pulse") s.task = Task::pulse;
        else if (t == "resp") s.task = Task::resp;
        else throw ValidationError("task", "expected bvp or resp, got '" + t + "'");
    }
    read_opt(j, "window_len", s.window_len);
    read_opt(j, "input_size", s.input_size);
    read_opt(j, "filters", s.filters);
    read_opt(j, "hidden", s.hidden);
    read_opt(j, "dropout_pool", s.dropout_pool);
    read_opt(j, "dropout_head", s.dropout_head);
    read_opt(j, "temporal_shift", s.temporal_shift);
    s.validate();
    return s;
}

inline const char* kind_name(SignalKind k) { return k == SignalKind::pulse ? "pulse" : "resp"; }

inline SignalKind parse_kind(const std::string& s) {
    if (s == "pulse" || s == "hr" || s == "bvp") return SignalKind::pulse;
    if (s == "resp" || s == "br") return SignalKind::resp;
    throw ValidationError("kind", "expected pulse or resp, got '" + s + "'");
}

inline json to_json(const MetricsReport& r) {
    json wins = json::array();
    for (const auto& w : r.windows)
        wins.push_back({{"start_s", w.start_s},
                        {"estimate", w.estimate},
                        {"reference", w.reference},
                        {"abs_error", std::abs(w.estimate - w.reference)},
                        {"snr_db", w.snr_db},
                        {"confident", w.confident}});
    json agg = {{"mae", r.aggregate.mae},
                {"rmse", r.aggregate.rmse},
                {"pearson", r.aggregate.pearson ? json(*r.aggregate.pearson) : json(nullptr)},
                {"snr_db", r.mean_snr_db},
                {"windows", r.windows.size()}};
    return {{"schema_version", report_schema_version},
            {"kind", kind_name(r.kind)},
            {"band_hz", {r.band.lo, r.band.hi}},
            {"window_s", r.window_s},
            {"rate_unit", "per_minute"},
            {"windows", wins},
            {"aggregate", agg}};
}

/// One row per window, then an "all" row carrying MAE, RMSE, rho and mean SNR.
inline void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r) {
    auto out = detail::open_out(path);
    out << "row,start_s,estimate,reference,abs_error,snr_db,mae,rmse,pearson\n";
    for (std::size_t i = 0; i < r.windows.size(); ++i) {
        const auto& w = r.windows[i];
        out << i << ',' << fmt_double(w.start_s) << ',' << fmt_double(w.estimate) << ',' << fmt_double(w.reference)
            << ',' << fmt_double(std::abs(w.estimate - w.reference)) << ',' << fmt_double(w.snr_db) << ",,,\n";
    }
    out << "all,,,,," << fmt_double(r.mean_snr_db) << ',' << fmt_double(r.aggregate.mae) << ','
        << fmt_double(r.aggregate.rmse) << ',' << (r.aggregate.pearson ? fmt_double(*r.aggregate.pearson) : "")
        << '\n';
}

inline json to_json(const BenchReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"model", e.model},
                           {"networks", e.networks},
                           {"median_ms", e.median_ms},
                           {"p10_ms", e.p10_ms},
                           {"p90_ms", e.p90_ms},
                           {"window_ms", e.window_ms},
                           {"warmup", e.warmup},
                           {"iterations", e.iterations},
                           {"threads", e.threads}});
    return {{"schema_version", report_schema_version},
            {"host", r.host},
            {"latency_unit", "ms_per_frame"},
            {"window_len", r.window_len},
            {"input_size", r.input_size},
            {"entries", entries}};
}

// ---------------------------------------------------------------- Bland-Altman

struct BlandAltmanPoint {
    double mean_rate;
    double diff_rate;  // estimate - reference
};

inline std::vector<BlandAltmanPoint> bland_altman(const MetricsReport& r) {
    std::vector<BlandAltmanPoint> pts;
    for (const auto& w : r.windows) pts.push_back({0.5 * (w.estimate + w.reference), w.estimate - w.reference});
    return pts;
}

inline void write_bland_altman_csv(const std::filesystem::path& path, const std::vector<BlandAltmanPoint>& pts) {
    auto out = detail::open_out(path);
    out << "mean_rate,diff_rate\n";
    for (const auto& p : pts) out << fmt_double(p.mean_rate) << ',' << fmt_double(p.diff_rate) << '\n';
}

/// Scatter of the points with the bias line and 1.96 SD limits.
inline void write_bland_altman_svg(const std::filesystem::path& path, const std::vector<BlandAltmanPoint>& pts,
                                   const std::string& unit = "per min") {
    const double W = 480, H = 360, L = 60, R = 20, T = 20, B = 50;
    double bias = 0, sd = 0;
    for (const auto& p : pts) bias += p.diff_rate;
    if (!pts.empty()) bias /= static_cast<double>(pts.size());
    for (const auto& p : pts) sd += (p.diff_rate - bias) * (p.diff_rate - bias);
    if (pts.size() > 1) sd = std::sqrt(sd / static_cast<double>(pts.size() - 1));
    double x0 = 1e300, x1 = -1e300, y0 = bias - 1.96 * sd, y1 = bias + 1.96 * sd;
    for (const auto& p : pts) {
        x0 = std::min(x0, p.mean_rate);
        x1 = std::max(x1, p.mean_rate);
        y0 = std::min(y0, p.diff_rate);
        y1 = std::max(y1, p.diff_rate);
    }
    if (pts.empty()) x0 = 0, x1 = 1;
    const double xpad = std::max(1.0, 0.1 * (x1 - x0)), ypad = std::max(1.0, 0.1 * (y1 - y0));
    x0 -= xpad, x1 += xpad, y0 -= ypad, y1 += ypad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return T + (y1 - y) / (y1 - y0) * (H - T - B); };
    auto out = detail::open_out(path);
    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                  L, T, W - L - R, H - T - B);
    out << buf;
    auto hline = [&](double y, const char* dash, const char* label) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%.2f\" x2=\"%g\" y2=\"%.2f\" stroke=\"gray\" stroke-dasharray=\"%s\"/>"
                      "<text x=\"%g\" y=\"%.2f\" font-size=\"10\" text-anchor=\"end\">%s %.2f</text>\n",
                      L, py(y), W - R, py(y), dash, W - R - 2, py(y) - 2, label, y);
        out << buf;
    };
    hline(bias, "none", "bias");
    hline(bias + 1.96 * sd, "4,3", "+1.96 SD");
    hline(bias - 1.96 * sd, "4,3", "-1.96 SD");
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"steelblue\"/>\n",
                      px(p.mean_rate), py(p.diff_rate));
        out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\">mean of estimate and reference (%s)</text>\n"
                  "<text x=\"14\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 %g)\">estimate - reference (%s)</text>\n",
                  L + (W - L - R) / 2, H - 12, unit.c_str(), T + (H - T - B) / 2, T + (H - T - B) / 2, unit.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"10\">%.1f</text><text x=\"%g\" y=\"%g\" font-size=\"10\" "
                  "text-anchor=\"end\">%.1f</text>\n",
                  L, H - B + 14, x0, W - R, H - B + 14, x1);
    out << buf << "</svg>\n";
}

}  // namespace vitalcam
