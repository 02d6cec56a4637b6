#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "vitalcam/model.hpp"

using namespace vitalcam;

namespace {

ModelSpec small(Arch a, bool multi = true) {
    ModelSpec s;
    s.arch = a;
    s.multi_task = multi;
    s.input_size = 16;
    s.filters = {4, 4, 8, 8};
    s.hidden = 16;
    return s;
}

WindowInput random_input(const ModelSpec& s, std::uint64_t seed) {
    const std::size_t n = s.input_size;
    return {oracle::random_tensor(Shape{s.window_len, n, n, 3}, seed),
            oracle::random_tensor(Shape{s.appearance_frames(), n, n, 3}, seed + 1)};
}

std::size_t head_params(const ModelSpec& s) {
    return s.flat_features() * s.hidden + s.hidden + s.hidden + 1;
}

// Straight-line composition of the public ops for an inference-mode tscan.
std::vector<float> tscan_by_hand(const ModelSpec& s, const WeightSet& w, const WindowInput& in,
                                 const std::string& head) {
    auto conv = [&](const Tensor& x, const std::string& p, bool shift) {
        const Tensor xs = shift ? temporal_shift(x, ShiftSpec::thirds(x.dim(3), s.window_len)) : x;
        return activation(conv2d(xs, w.at(p + "/kernel"), w.at(p + "/bias")), Activation::tanh);
    };
    Tensor m = conv(conv(in.motion, "motion/conv1", true), "motion/conv2", true);
    Tensor a = conv(conv(in.appearance, "appearance/conv1", false), "appearance/conv2", false);
    m = avg_pool(apply_mask(m, attention_mask(a, w.at("attention1/omega"), w.at("attention1/bias"))),
                 PoolWindow::spatial());
    a = avg_pool(a, PoolWindow::spatial());
    m = conv(conv(m, "motion/conv3", true), "motion/conv4", true);
    a = conv(conv(a, "appearance/conv3", false), "appearance/conv4", false);
    m = avg_pool(apply_mask(m, attention_mask(a, w.at("attention2/omega"), w.at("attention2/bias"))),
                 PoolWindow::spatial());
    const Tensor flat = m.reshaped(Shape{s.window_len, s.flat_features()});
    const Tensor z = activation(dense(flat, w.at(head + "/dense1/kernel"), w.at(head + "/dense1/bias")),
                                Activation::tanh);
    const Tensor y = dense(z, w.at(head + "/dense2/kernel"), w.at(head + "/dense2/bias"));
    return {y.data().begin(), y.data().end()};
}

WeightSet randomised(const ModelSpec& s, std::uint64_t seed) {
    WeightSet w = build_model(s, seed);
    Xoshiro256 rng(seed + 99);
    for (auto& [name, t] : w)
        if (name.ends_with("/bias"))
            for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    return w;
}

}  // namespace

TEST(Model, OutputShapesForEveryArchitecture) {
    for (Arch a : {Arch::can2d, Arch::can3d, Arch::hybrid, Arch::tscan}) {
        const ModelSpec s = small(a);
        const auto out = forward(s, build_model(s, 1), random_input(s, 2));
        ASSERT_EQ(out.size(), 2u);
        for (const auto& [h, v] : out) {
            EXPECT_EQ(v.size(), s.window_len) << arch_name(a) << " " << h;
            for (float x : v) EXPECT_TRUE(std::isfinite(x));
        }
    }
}

TEST(Model, ParameterCountsAndOrdering) {
    for (Arch a : {Arch::can2d, Arch::can3d, Arch::hybrid, Arch::tscan}) {
        ModelSpec single = small(a, false), multi = small(a, true);
        EXPECT_EQ(parameter_count(multi) - parameter_count(single), head_params(single));
        single.task = Task::resp;
        EXPECT_EQ(build_model(single, 0).count("resp/dense1/kernel"), 1u);
        EXPECT_EQ(build_model(single, 0).count("bvp/dense1/kernel"), 0u);
    }
    const ModelSpec d;
    auto count = [&](Arch a) {
        ModelSpec s = d;
        s.arch = a;
        return parameter_count(s);
    };
    EXPECT_EQ(count(Arch::tscan), count(Arch::can2d));
    EXPECT_GT(count(Arch::can3d), count(Arch::hybrid));
    EXPECT_GT(count(Arch::hybrid), count(Arch::tscan));
}

TEST(Model, InitialisationIsSeededPerParameter) {
    const ModelSpec s = small(Arch::tscan);
    const WeightSet a = build_model(s, 5), b = build_model(s, 5), c = build_model(s, 6);
    for (const auto& [name, t] : a) EXPECT_TRUE(bitwise_equal(t, b.at(name))) << name;
    EXPECT_FALSE(bitwise_equal(a.at("motion/conv1/kernel"), c.at("motion/conv1/kernel")));
    EXPECT_EQ(a.at("motion/conv1/bias"), Tensor(Shape{4}));
    // Trunk weights do not depend on how many heads the spec has.
    const WeightSet single = build_model(small(Arch::tscan, false), 5);
    for (const auto& [name, t] : single) EXPECT_TRUE(bitwise_equal(t, a.at(name))) << name;
}

TEST(Model, InferenceIsDeterministicAndTrainModeDependsOnSeed) {
    const ModelSpec s = small(Arch::tscan);
    const WeightSet w = randomised(s, 3);
    const WindowInput in = random_input(s, 4);
    EXPECT_EQ(forward(s, w, in), forward(s, w, in));
    EXPECT_EQ(forward(s, w, in, true, 8), forward(s, w, in, true, 8));
    EXPECT_NE(forward(s, w, in, true, 8).at("bvp"), forward(s, w, in, true, 9).at("bvp"));
    EXPECT_NE(forward(s, w, in, true, 8).at("bvp"), forward(s, w, in).at("bvp"));
}

TEST(Model, ZeroWeightsGiveZeroOutput) {
    const ModelSpec s = small(Arch::hybrid);
    WeightSet w = build_model(s, 1);
    for (auto& [n, t] : w) t.fill(0.0f);
    for (const auto& [h, v] : forward(s, w, random_input(s, 1)))
        for (float x : v) EXPECT_EQ(x, 0.0f);
}

TEST(Model, DuplicatedHeadsGiveIdenticalOutputs) {
    const ModelSpec s = small(Arch::tscan);
    WeightSet w = randomised(s, 11);
    for (const char* p : {"/dense1/kernel", "/dense1/bias", "/dense2/kernel", "/dense2/bias"})
        w.at(std::string("resp") + p) = w.at(std::string("bvp") + p);
    const auto out = forward(s, w, random_input(s, 12));
    EXPECT_EQ(out.at("bvp"), out.at("resp"));
}

TEST(Model, TscanMatchesHandComposition) {
    const ModelSpec s = small(Arch::tscan);
    const WeightSet w = randomised(s, 21);
    const WindowInput in = random_input(s, 22);
    const auto out = forward(s, w, in);
    EXPECT_EQ(out.at("bvp"), tscan_by_hand(s, w, in, "bvp"));
    EXPECT_EQ(out.at("resp"), tscan_by_hand(s, w, in, "resp"));
}

TEST(Model, MultiTaskEqualsTwoSingleTaskPasses) {
    for (Arch a : {Arch::can3d, Arch::tscan}) {
        const ModelSpec multi = small(a);
        const WeightSet w = randomised(multi, 31);
        const WindowInput in = random_input(multi, 32);
        const auto both = forward(multi, w, in);
        for (Task t : {Task::pulse, Task::resp}) {
            ModelSpec single = small(a, false);
            single.task = t;
            WeightSet ws;
            for (const auto& [name, shape] : parameter_shapes(single)) ws.emplace(name, w.at(name));
            EXPECT_EQ(forward(single, ws, in).at(head_name(t)), both.at(head_name(t))) << arch_name(a);
        }
    }
}

TEST(Model, TscanWithoutShiftIsCan2dOnReplicatedAverage) {
    ModelSpec ts = small(Arch::tscan);
    ts.temporal_shift = false;
    ModelSpec c2 = small(Arch::can2d);
    const WeightSet w = randomised(ts, 41);
    const WindowInput in = random_input(ts, 42);
    Tensor rep(Shape{c2.window_len, c2.input_size, c2.input_size, 3});
    const std::size_t plane = in.appearance.size();
    for (std::size_t t = 0; t < c2.window_len; ++t)
        std::copy_n(in.appearance.ptr(), plane, rep.ptr() + t * plane);
    EXPECT_EQ(forward(ts, w, in), forward(c2, w, WindowInput{in.motion, rep}));

    ts.temporal_shift = true;
    EXPECT_NE(forward(ts, w, in), forward(c2, w, WindowInput{in.motion, rep}));
}

TEST(Model, RawFramesAreAveragedForSingleFrameAppearance) {
    const ModelSpec s = small(Arch::hybrid);
    const Tensor raw = oracle::random_tensor(Shape{10, 16, 16, 3}, 50);
    const WindowInput in = make_window_input(s, oracle::random_tensor(Shape{10, 16, 16, 3}, 51), raw);
    EXPECT_EQ(in.appearance.shape(), (Shape{1, 16, 16, 3}));
    EXPECT_EQ(make_window_input(small(Arch::can2d), in.motion, raw).appearance, raw);
}

TEST(Model, WeightFileRoundTripAndErrors) {
    const auto dir = std::filesystem::temp_directory_path() / "vitalcam_model_test";
    std::filesystem::create_directories(dir);
    const ModelSpec s = small(Arch::tscan);
    const WeightSet w = randomised(s, 61);
    save_weights(dir / "w.vtf", w);
    const WeightSet back = load_weights(dir / "w.vtf", s);
    for (const auto& [n, t] : w) EXPECT_TRUE(bitwise_equal(t, back.at(n)));
    const WindowInput in = random_input(s, 62);
    EXPECT_EQ(forward(s, w, in), forward(s, back, in));

    WeightSet missing = w;
    missing.erase("attention2/omega");
    save_weights(dir / "missing.vtf", missing);
    try {
        load_weights(dir / "missing.vtf", s);
        FAIL();
    } catch (const MissingParameterError& e) {
        EXPECT_EQ(e.field(), "attention2/omega");
    }

    save_weights(dir / "c3d.vtf", build_model(small(Arch::can3d), 1));
    EXPECT_THROW(load_weights(dir / "c3d.vtf", s), DimensionError);
    EXPECT_THROW(load_weights(dir / "w.vtf", small(Arch::tscan, false)), ValidationError);
    std::filesystem::remove_all(dir);
}

TEST(Model, InputValidation) {
    const ModelSpec s = small(Arch::tscan);
    const WeightSet w = build_model(s, 1);
    WindowInput in = random_input(s, 1);
    in.appearance = oracle::random_tensor(Shape{10, 16, 16, 3}, 2);
    EXPECT_THROW(forward(s, w, in), DimensionError);
    in = random_input(s, 1);
    in.motion[7] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(forward(s, w, in), NumericError);

    ModelSpec bad = s;
    bad.input_size = 18;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = s;
    bad.dropout_head = 1.0;
    EXPECT_THROW(bad.validate(), ValidationError);
    EXPECT_THROW(parse_arch("resnet"), ValidationError);
    EXPECT_EQ(parse_arch("hybrid"), Arch::hybrid);
}
