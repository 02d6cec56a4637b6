#include <gtest/gtest.h>

#include <numbers>

#include "vitalcam/classical.hpp"

using namespace vitalcam;

namespace {

RgbTraces equal_channels(std::size_t n, std::uint64_t seed) {
    RgbTraces t;
    Xoshiro256 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = 0.5 + 0.05 * std::sin(i * 0.3) + 0.01 * rng.normal();
        for (auto& c : t.c) c.push_back(v);
    }
    return t;
}

RgbTraces noisy_pulse(std::size_t n, std::uint64_t seed) {
    RgbTraces t;
    Xoshiro256 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::sin(2 * std::numbers::pi * 1.3 * i / 30.0);
        const double m = 0.02 * rng.normal();
        t.c[0].push_back(0.6 + 0.002 * p + m + 0.003 * rng.normal());
        t.c[1].push_back(0.45 + 0.006 * p + m + 0.003 * rng.normal());
        t.c[2].push_back(0.35 + 0.003 * p + m + 0.003 * rng.normal());
    }
    return t;
}

double hr_of(const SignalTrace& s) {
    return estimate_rate(butter_bandpass(s, {0.75, 2.5}), {0.75, 2.5}).rate;
}

double abs_corr(const std::vector<double>& a, const std::vector<double>& b) {
    return std::abs(pearson(a, b).value_or(0.0));
}

const RgbTraces& default_clip_traces() {
    static const RgbTraces t = [] {
        const RenderedClip rc = render_clip(SynthParams{});
        return traces_from_clip(rc.clip, &rc.skin_mask);
    }();
    return t;
}

}  // namespace

TEST(Chrom, IdenticalChannelsCancel) {
    const auto out = chrom(equal_channels(300, 1));
    for (double v : out.bvp.samples) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Chrom, ConstantTracesGiveZero) {
    RgbTraces t;
    t.c = {std::vector<double>(200, 0.6), std::vector<double>(200, 0.4), std::vector<double>(200, 0.3)};
    for (double v : chrom(t).bvp.samples) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(Chrom, WindowGeometryDropsTrailingPartialWindow) {
    // 48-sample windows, step 24; 100 samples hold windows at 0, 24, 48 only.
    const auto out = chrom(noisy_pulse(100, 2));
    ASSERT_EQ(out.bvp.samples.size(), 100u);
    for (std::size_t i = 96; i < 100; ++i) EXPECT_EQ(out.bvp.samples[i], 0.0);
    EXPECT_NE(out.bvp.samples[95], 0.0);
    EXPECT_THROW(chrom(noisy_pulse(40, 2)), ValidationError);
}

TEST(Pos, SymmetricChannelsGiveZero) {
    const auto out = pos(equal_channels(300, 3));
    for (double v : out.bvp.samples) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(out.skipped_windows, 300u - 48u + 1u);
}

TEST(Pos, AllMethodsScaleInvariant) {
    const RgbTraces t = noisy_pulse(600, 4);
    RgbTraces k = t;
    for (auto& c : k.c)
        for (auto& v : c) v *= 7.5;
    for (Baseline b : {Baseline::pos, Baseline::chrom, Baseline::ica}) {
        const auto a = run_baseline(b, t).bvp.samples, c = run_baseline(b, k).bvp.samples;
        ASSERT_EQ(a.size(), c.size());
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], c[i], 1e-6);
    }
}

TEST(Pos, RecoversToneFromNoisyChannels) {
    const RgbTraces t = noisy_pulse(900, 5);
    EXPECT_NEAR(hr_of(pos(t).bvp), 78.0, 1.0);
    EXPECT_NEAR(hr_of(chrom(t).bvp), 78.0, 1.0);
}

TEST(Jade, SeparatesKnownMixture) {
    const std::size_t n = 3000;
    Eigen::MatrixXd S(3, n);
    Xoshiro256 rng(6);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i / 30.0;
        S(0, i) = std::sin(2 * std::numbers::pi * 1.2 * t);
        S(1, i) = std::sin(2 * std::numbers::pi * 0.3 * t + 1.0);
        S(2, i) = rng.uniform(-1.7, 1.7);
    }
    Eigen::Matrix3d A;
    A << 0.9, 0.4, 0.3, -0.2, 1.1, 0.5, 0.6, -0.3, 0.8;
    Eigen::MatrixXd X = A * S;
    X = X.colwise() - X.rowwise().mean();
    const JadeResult j = jade(X, 3);
    EXPECT_LE(j.sweeps, 100u);
    // Global system is a scaled permutation: one dominant entry per row.
    const Eigen::Matrix3d G = j.unmixing * A;
    for (int r = 0; r < 3; ++r) {
        const Eigen::Vector3d row = G.row(r).cwiseAbs().transpose();
        EXPECT_LT((row.sum() - row.maxCoeff()) / row.maxCoeff(), 0.05) << G;
    }
}

TEST(Ica, KnownMixingRecoversPulseSource) {
    const std::size_t n = 900;
    Xoshiro256 rng(7);
    std::vector<double> src[3];
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i / 30.0;
        src[0].push_back(std::sin(2 * std::numbers::pi * 1.2 * t));
        src[1].push_back(std::sin(2 * std::numbers::pi * 0.3 * t));
        src[2].push_back(rng.normal());
    }
    const double A[3][3] = {{0.8, 0.5, 0.3}, {0.6, -0.4, 0.7}, {0.2, 0.9, -0.5}};
    RgbTraces t;
    for (int k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < n; ++i) t.c[k].push_back(1.0 + 0.1 * (A[k][0] * src[0][i] + A[k][1] * src[1][i] + A[k][2] * src[2][i]));
    const auto out = ica_pulse(t);
    EXPECT_EQ(out.sources, 3u);
    EXPECT_GE(abs_corr(out.bvp.samples, src[0]), 0.95);

    RgbTraces perm = t;
    std::swap(perm.c[0], perm.c[2]);
    std::swap(perm.c[1], perm.c[2]);
    EXPECT_GE(abs_corr(ica_pulse(perm).bvp.samples, out.bvp.samples), 0.99);

    EXPECT_EQ(ica_pulse(t).bvp.samples, out.bvp.samples);
}

TEST(Ica, RankDeficientInputFallsBackToTwoSources) {
    RgbTraces t = noisy_pulse(600, 8);
    t.c[2] = t.c[1];
    const auto out = ica_pulse(t);
    EXPECT_EQ(out.sources, 2u);
    EXPECT_FALSE(out.note.empty());
    EXPECT_EQ(out.bvp.samples.size(), 600u);
    EXPECT_THROW(ica_pulse(noisy_pulse(200, 8)), ValidationError);
}

TEST(Classical, DefaultSyntheticClipHeartRate) {
    const RgbTraces& t = default_clip_traces();
    for (Baseline b : {Baseline::pos, Baseline::chrom, Baseline::ica})
        EXPECT_NEAR(hr_of(run_baseline(b, t).bvp), 72.0, 2.0) << int(b);
}

TEST(Classical, ParseNames) {
    EXPECT_EQ(parse_baseline("chrom"), Baseline::chrom);
    EXPECT_THROW(parse_baseline("green"), ValidationError);
}
