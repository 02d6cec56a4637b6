#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vitalcam/attention.hpp"
#include "vitalcam/shift.hpp"

using namespace vitalcam;

namespace {

// Direct index remap: out[t][c] = in[t + d(c)][c] when the source frame is in
// the same window, zero otherwise.
Tensor shift_oracle(const Tensor& x, const ShiftSpec& s) {
    Tensor out(x.shape());
    const std::size_t T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
                for (std::size_t c = 0; c < C; ++c) {
                    long d = 0;
                    if (c < s.left_chunk) d = 1;
                    else if (c < s.left_chunk + s.right_chunk) d = -1;
                    const long src = long(t) + d;
                    const long win = long(t / s.window_len) * long(s.window_len);
                    if (src < win || src >= win + long(s.window_len)) continue;
                    out.at({t, h, w, c}) = x.at({std::size_t(src), h, w, c});
                }
    return out;
}

}  // namespace

TEST(TemporalShift, ThreeChannelExample) {
    // One pixel, three frames; every channel of frame t holds f_t.
    Tensor x(Shape{3, 1, 1, 3});
    const float f[3] = {10.0f, 20.0f, 30.0f};
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < 3; ++c) x.at({t, 0, 0, c}) = f[t];
    Tensor y = temporal_shift(x, ShiftSpec{3, 1, 1, 1});
    const float left[3] = {20, 30, 0}, right[3] = {0, 10, 20}, stat[3] = {10, 20, 30};
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_EQ(y.at({t, 0, 0, 0}), left[t]);
        EXPECT_EQ(y.at({t, 0, 0, 1}), right[t]);
        EXPECT_EQ(y.at({t, 0, 0, 2}), stat[t]);
    }
}

TEST(TemporalShift, NoMovingChunksIsIdentity) {
    Tensor x = oracle::random_tensor(Shape{10, 3, 3, 5}, 1);
    EXPECT_TRUE(bitwise_equal(temporal_shift(x, ShiftSpec::none(5)), x));
}

TEST(TemporalShift, MatchesIndexRemapAndMassAccounting) {
    Tensor x = oracle::random_tensor(Shape{10, 4, 4, 6}, 2);
    const ShiftSpec spec = ShiftSpec::thirds(6);
    ASSERT_EQ(spec.left_chunk, 2u);
    ASSERT_EQ(spec.right_chunk, 2u);
    Tensor y = temporal_shift(x, spec);
    EXPECT_TRUE(bitwise_equal(y, shift_oracle(x, spec)));

    auto chunk_sum = [](const Tensor& t, std::size_t c0, std::size_t c1, long frame) {
        double s = 0.0;
        for (std::size_t f = 0; f < t.dim(0); ++f) {
            if (frame >= 0 && f != std::size_t(frame)) continue;
            for (std::size_t h = 0; h < 4; ++h)
                for (std::size_t w = 0; w < 4; ++w)
                    for (std::size_t c = c0; c < c1; ++c) s += t.at({f, h, w, c});
        }
        return s;
    };
    EXPECT_DOUBLE_EQ(chunk_sum(y, 4, 6, -1), chunk_sum(x, 4, 6, -1));
    // The advanced chunk loses frame 0, the delayed chunk loses frame 9.
    EXPECT_NEAR(chunk_sum(y, 0, 2, -1), chunk_sum(x, 0, 2, -1) - chunk_sum(x, 0, 2, 0), 1e-9);
    EXPECT_NEAR(chunk_sum(y, 2, 4, -1), chunk_sum(x, 2, 4, -1) - chunk_sum(x, 2, 4, 9), 1e-9);
}

TEST(TemporalShift, ChunkSizingForIndivisibleChannels) {
    const ShiftSpec s = ShiftSpec::thirds(8);
    EXPECT_EQ(s.left_chunk, 2u);
    EXPECT_EQ(s.right_chunk, 2u);
    EXPECT_EQ(s.static_chunk, 4u);
}

TEST(TemporalShift, WindowsDoNotLeak) {
    Tensor x = oracle::random_tensor(Shape{20, 2, 2, 3}, 3);
    const ShiftSpec spec = ShiftSpec::thirds(3, 10);
    Tensor y = temporal_shift(x, spec);
    EXPECT_TRUE(bitwise_equal(y, shift_oracle(x, spec)));
    // Frame 9 advanced channel is zero even though frame 10 exists.
    EXPECT_EQ(y.at({9, 0, 0, 0}), 0.0f);
    EXPECT_EQ(y.at({10, 1, 1, 1}), 0.0f);
}

TEST(TemporalShift, LinearAndShiftUnshiftProperty) {
    Tensor x = oracle::random_tensor(Shape{10, 3, 3, 6}, 4);
    const ShiftSpec spec = ShiftSpec::thirds(6);
    Tensor scaled = x;
    for (auto& v : scaled.data()) v *= 3.0f;
    Tensor a = temporal_shift(scaled, spec), b = temporal_shift(x, spec);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], 3.0f * b[i]);

    Tensor back = temporal_shift_adjoint(temporal_shift(x, spec), spec);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t w = 0; w < 3; ++w)
                for (std::size_t c = 0; c < 6; ++c) {
                    const bool lost = (c < 2 && t == 0) || (c >= 2 && c < 4 && t == 9);
                    EXPECT_EQ(back.at({t, h, w, c}), lost ? 0.0f : x.at({t, h, w, c}));
                }
}

TEST(TemporalShift, Errors) {
    EXPECT_THROW(temporal_shift(Tensor(Shape{9, 2, 2, 3}), ShiftSpec::thirds(3)), DimensionError);
    EXPECT_THROW(temporal_shift(Tensor(Shape{10, 2, 2, 3}), ShiftSpec::thirds(4)), DimensionError);
}

TEST(Attention, ZeroWeightsGiveHalfEverywhere) {
    Tensor x = oracle::random_tensor(Shape{6, 5, 3}, 5);
    Tensor m = attention_mask(x, Tensor(Shape{1, 1, 3, 1}), Tensor(Shape{1}));
    EXPECT_EQ(m.shape(), (Shape{6, 5, 1}));
    for (float v : m.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Attention, SumsToHalfAreaAndStaysPositive) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Tensor x = oracle::random_tensor(Shape{7, 9, 4}, 1000 + seed, -3, 3);
        Tensor w = oracle::random_tensor(Shape{1, 1, 4, 1}, 2000 + seed, -2, 2);
        Tensor b = oracle::random_tensor(Shape{1}, 3000 + seed);
        Tensor m = attention_mask(x, w, b);
        double s = 0.0;
        for (float v : m.data()) {
            EXPECT_GT(v, 0.0f);
            EXPECT_LE(v, 7.0f * 9.0f / 2.0f);
            s += v;
        }
        EXPECT_NEAR(s / (7.0 * 9.0 / 2.0), 1.0, 1e-5);
    }
}

TEST(Attention, MatchesScalarLoop) {
    Tensor x = oracle::random_tensor(Shape{4, 4, 3}, 6);
    Tensor w = oracle::random_tensor(Shape{1, 1, 3, 1}, 7);
    Tensor b(Shape{1}, std::vector<float>{0.3f});
    EXPECT_LE(oracle::rel_err(attention_mask(x, w, b), oracle::attention(x, w, 0.3)), 1e-6);
}

TEST(Attention, FrameWiseNormalisation) {
    Tensor x = oracle::random_tensor(Shape{3, 4, 4, 2}, 8);
    Tensor w = oracle::random_tensor(Shape{1, 1, 2, 1}, 9);
    Tensor b(Shape{1});
    Tensor m = attention_mask(x, w, b);
    for (std::size_t f = 0; f < 3; ++f) {
        Tensor frame(Shape{4, 4, 2});
        std::copy_n(x.ptr() + f * 32, 32, frame.ptr());
        Tensor mf = attention_mask(frame, w, b);
        for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(m[f * 16 + p], mf[p]);
    }
}

TEST(Attention, RejectsBadInputs) {
    Tensor x(Shape{4, 4, 3});
    EXPECT_THROW(attention_mask(x, Tensor(Shape{1, 1, 2, 1}), Tensor(Shape{1})), DimensionError);
    EXPECT_THROW(attention_mask(x, Tensor(Shape{3, 3, 3, 1}), Tensor(Shape{1})), DimensionError);
    x[5] = std::nanf("");
    EXPECT_THROW(attention_mask(x, Tensor(Shape{1, 1, 3, 1}), Tensor(Shape{1})), NumericError);
}

TEST(ApplyMask, BroadcastsOverFramesAndChannels) {
    Tensor x = oracle::random_tensor(Shape{10, 4, 4, 3}, 10);
    EXPECT_TRUE(bitwise_equal(apply_mask(x, Tensor(Shape{4, 4, 1}, 1.0f)), x));
    Tensor half = apply_mask(x, Tensor(Shape{4, 4, 1}, 0.5f));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(half[i], 0.5f * x[i]);

    Tensor m = oracle::random_tensor(Shape{4, 4, 1}, 11, 0, 2);
    Tensor y = apply_mask(x, m);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t w = 0; w < 4; ++w)
                for (std::size_t c = 0; c < 3; ++c)
                    EXPECT_EQ(y.at({t, h, w, c}), x.at({t, h, w, c}) * m.at({h, w, 0}));

    Tensor mf = oracle::random_tensor(Shape{10, 4, 4, 1}, 12, 0, 2);
    Tensor yf = apply_mask(x, mf);
    for (std::size_t t = 0; t < 10; ++t)
        EXPECT_EQ(yf.at({t, 2, 1, 2}), x.at({t, 2, 1, 2}) * mf.at({t, 2, 1, 0}));

    EXPECT_THROW(apply_mask(x, Tensor(Shape{3, 4, 1})), DimensionError);
    EXPECT_THROW(apply_mask(x, Tensor(Shape{4, 4, 4, 1})), DimensionError);
}
