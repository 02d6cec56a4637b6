#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vitalcam/dataset.hpp"
#include "vitalcam/io.hpp"

using namespace vitalcam;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = VITALCAM_CLI_PATH;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("vitalcam_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the CLI with stdout/stderr captured to files; returns the exit code.
    int run(const std::string& args) {
        const std::string cmd = "'" + kCli.string() + "' " + args + " >'" + (dir_ / "stdout.txt").string() + "' 2>'" +
                                (dir_ / "stderr.txt").string() + "'";
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    }
    std::string slurp(const fs::path& p) const {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name) << text;
        return dir_ / name;
    }
    std::string p(const std::string& name) const { return "'" + (dir_ / name).string() + "'"; }

    fs::path dir_;
};

const char* kTinyModel = R"({"arch":"tscan","multi_task":true,"window_len":10,"input_size":12,
                            "filters":[2,2,4,4],"hidden":4})";

}  // namespace

TEST_F(Cli, SynthWritesDeterministicClips) {
    write("c.json", R"({"fps":30,"duration_s":30,"height":16,"width":16})");
    ASSERT_EQ(run("--seed 3 --out " + p("a") + " synth --config " + p("c.json")), 0) << slurp(dir_ / "stderr.txt");
    ASSERT_EQ(run("--seed 3 --out " + p("b") + " synth --config " + p("c.json")), 0);
    EXPECT_EQ(load_clip(dir_ / "a/clip_000.vtf").clip.frames.dim(0), 900u);
    EXPECT_EQ(slurp(dir_ / "a/manifest.json"), slurp(dir_ / "b/manifest.json"));
    EXPECT_EQ(slurp(dir_ / "a/clip_000.vtf"), slurp(dir_ / "b/clip_000.vtf"));
    EXPECT_EQ(read_json(dir_ / "a/manifest.json")["schema_version"], 1);
    EXPECT_EQ(read_trace_csv(dir_ / "a/clip_000_bvp.csv").samples.size(), 900u);

    ASSERT_EQ(run("--seed 4 --out " + p("c") + " synth --config " + p("c.json")), 0);
    EXPECT_NE(slurp(dir_ / "a/clip_000.vtf"), slurp(dir_ / "c/clip_000.vtf"));
}

TEST_F(Cli, SynthMissingFieldIsValidationError) {
    write("c.json", R"({"duration_s":30})");
    EXPECT_EQ(run("--out " + p("o") + " synth --config " + p("c.json")), 2);
    EXPECT_NE(slurp(dir_ / "stderr.txt").find("fps"), std::string::npos);
    write("d.json", R"({"fps":30,"duration_s":30,"hr_bmp":70})");
    EXPECT_EQ(run("--out " + p("o") + " synth --config " + p("d.json")), 2);
    EXPECT_NE(slurp(dir_ / "stderr.txt").find("hr_bmp"), std::string::npos);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("synth --config " + p("absent.json")), 2);
}

TEST_F(Cli, InferZeroWeightsGivesZeroTracesPerHead) {
    write("c.json", R"({"fps":30,"duration_s":30,"height":16,"width":16})");
    ASSERT_EQ(run("--out " + p("s") + " synth --config " + p("c.json")), 0);
    write("m.json", kTinyModel);
    const ModelSpec spec = model_spec_from_json(read_json(dir_ / "m.json"));
    WeightSet zero = build_model<float>(spec, 1);
    for (auto& [name, t] : zero) t = Tensor(t.shape());
    save_weights(dir_ / "w.vtf", zero);
    ASSERT_EQ(run("--out " + p("i") + " infer --model " + p("m.json") + " --weights " + p("w.vtf") + " --clip " +
                  p("s/clip_000.vtf")),
              0)
        << slurp(dir_ / "stderr.txt");
    for (const char* head : {"bvp", "resp"}) {
        const SignalTrace t = read_trace_csv(dir_ / "i" / (std::string("pred_") + head + ".csv"));
        ASSERT_EQ(t.samples.size(), 890u);
        EXPECT_DOUBLE_EQ(t.fs, 30.0);
        for (double v : t.samples) ASSERT_EQ(v, 0.0);
    }
    const json summary = read_json(dir_ / "i/pred_summary.json");
    EXPECT_EQ(summary["windows"], 89);
    EXPECT_EQ(summary["dropped_frames"], 9);

    write("single.json", R"({"arch":"can2d","task":"resp","window_len":10,"input_size":12,
                             "filters":[2,2,4,4],"hidden":4})");
    save_weights(dir_ / "w2.vtf", build_model<float>(model_spec_from_json(read_json(dir_ / "single.json")), 2));
    ASSERT_EQ(run("--out " + p("j") + " infer --model " + p("single.json") + " --weights " + p("w2.vtf") +
                  " --clip " + p("s/clip_000.vtf")),
              0);
    EXPECT_TRUE(fs::exists(dir_ / "j/pred_resp.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "j/pred_bvp.csv"));
    EXPECT_EQ(run("--out " + p("k") + " infer --model " + p("single.json") + " --weights " + p("w.vtf") +
                  " --clip " + p("s/clip_000.vtf")),
              2);
}

TEST_F(Cli, TrainIsSeededAndZeroEpochsKeepsInitialWeights) {
    write("c.json", R"({"fps":30,"duration_s":2,"height":16,"width":16})");
    ASSERT_EQ(run("--out " + p("s") + " synth --dataset --input-size 12 --config " + p("c.json")), 0);
    write("m.json", kTinyModel);
    const std::string common = " train --model " + p("m.json") + " --data " + p("s/dataset/manifest.json");
    ASSERT_EQ(run("--seed 9 --out " + p("t0") + common + " --epochs 0"), 0) << slurp(dir_ / "stderr.txt");
    const ModelSpec spec = model_spec_from_json(read_json(dir_ / "m.json"));
    const WeightSet init = build_model<float>(spec, 9), got = load_weights(dir_ / "t0/weights.vtf", spec);
    for (const auto& [name, t] : init) EXPECT_TRUE(bitwise_equal(t, got.at(name))) << name;

    ASSERT_EQ(run("--seed 9 --out " + p("t1") + common + " --epochs 2 --batch 2"), 0);
    ASSERT_EQ(run("--seed 9 --out " + p("t2") + common + " --epochs 2 --batch 2"), 0);
    EXPECT_EQ(slurp(dir_ / "t1/weights.vtf"), slurp(dir_ / "t2/weights.vtf"));
    EXPECT_NE(slurp(dir_ / "t1/weights.vtf"), slurp(dir_ / "t0/weights.vtf"));
    const std::string loss = slurp(dir_ / "t1/loss.csv");
    EXPECT_EQ(loss.rfind("epoch,loss\n1,", 0), 0u) << loss;
    EXPECT_NE(loss.find("\n2,"), std::string::npos);
}

TEST_F(Cli, EvalIdenticalTracesAndFixture) {
    std::vector<double> a, b;
    for (int i = 0; i < 1800; ++i) {
        a.push_back(std::sin(2 * std::numbers::pi * 1.2 * i / 30.0));
        b.push_back(std::sin(2 * std::numbers::pi * 1.5 * i / 30.0));
    }
    write_trace_csv(dir_ / "a.csv", {a, 30.0});
    write_trace_csv(dir_ / "b.csv", {b, 30.0});
    ASSERT_EQ(run("--out " + p("same") + " eval --pred " + p("a.csv") + " --truth " + p("a.csv") + " --svg"), 0);
    const json same = read_json(dir_ / "same/metrics.json");
    EXPECT_EQ(same["schema_version"], 1);
    EXPECT_EQ(same["windows"].size(), 2u);
    EXPECT_EQ(same["aggregate"]["mae"], 0.0);
    EXPECT_EQ(same["aggregate"]["rmse"], 0.0);
    for (const char* key : {"mae", "rmse", "pearson", "snr_db"}) EXPECT_TRUE(same["aggregate"].contains(key)) << key;
    EXPECT_EQ(slurp(dir_ / "same/bland_altman.csv"), "mean_rate,diff_rate\n72,0\n72,0\n");
    EXPECT_NE(slurp(dir_ / "same/bland_altman.svg").find("<svg"), std::string::npos);

    ASSERT_EQ(run("--out " + p("diff") + " eval --pred " + p("a.csv") + " --truth " + p("b.csv")), 0);
    const json diff = read_json(dir_ / "diff/metrics.json");
    EXPECT_NEAR(diff["aggregate"]["mae"].get<double>(), 18.0, 1e-6);
    EXPECT_NEAR(diff["aggregate"]["rmse"].get<double>(), 18.0, 1e-6);
    EXPECT_TRUE(diff["aggregate"]["pearson"].is_null());
    const std::string csv = slurp(dir_ / "diff/metrics.csv");
    EXPECT_NE(csv.find("\nall,"), std::string::npos);

    write_trace_csv(dir_ / "short.csv", {std::vector<double>(a.begin(), a.begin() + 600), 30.0});
    EXPECT_EQ(run("--out " + p("x") + " eval --pred " + p("short.csv") + " --truth " + p("short.csv")), 2);
    EXPECT_EQ(run("--out " + p("x") + " eval --kind heart --pred " + p("a.csv") + " --truth " + p("a.csv")), 2);
}

TEST_F(Cli, BaselineFromRgbCsv) {
    RgbTraces t;
    for (int i = 0; i < 600; ++i) {
        const double s = std::sin(2 * std::numbers::pi * 1.5 * i / 30.0);
        t.c[0].push_back(0.6 + 0.002 * s);
        t.c[1].push_back(0.45 + 0.006 * s);
        t.c[2].push_back(0.35 + 0.003 * s);
    }
    write_rgb_csv(dir_ / "rgb.csv", t);
    for (const char* m : {"pos", "chrom", "ica"}) {
        ASSERT_EQ(run("--out " + p("o") + " baseline " + m + " --rgb " + p("rgb.csv")), 0) << m;
        const json s = read_json(dir_ / "o" / (std::string(m) + "_summary.json"));
        EXPECT_NEAR(s["hr_bpm"].get<double>(), 90.0, 1.0) << m;
        EXPECT_EQ(read_trace_csv(dir_ / "o" / (std::string(m) + "_bvp.csv")).samples.size(), 600u);
    }
    EXPECT_EQ(run("--out " + p("o") + " baseline green --rgb " + p("rgb.csv")), 2);
    EXPECT_EQ(run("--out " + p("o") + " baseline pos"), 2);
}

TEST_F(Cli, BenchReportSchema) {
    write("m.json", kTinyModel);
    ASSERT_EQ(run("--out " + p("b") + " bench --model " + p("m.json") + " --models ts-can,mtts-can"), 0)
        << slurp(dir_ / "stderr.txt");
    const json r = read_json(dir_ / "b/bench.json");
    EXPECT_EQ(r["schema_version"], 1);
    EXPECT_FALSE(r["host"].get<std::string>().empty());
    ASSERT_EQ(r["entries"].size(), 2u);
    for (const auto& e : r["entries"]) {
        EXPECT_LE(e["p10_ms"].get<double>(), e["median_ms"].get<double>());
        EXPECT_LE(e["median_ms"].get<double>(), e["p90_ms"].get<double>());
        EXPECT_GE(e["iterations"].get<int>(), 30);
        EXPECT_EQ(e["threads"], 1);
    }
    EXPECT_EQ(r["entries"][0]["networks"], 2);
    EXPECT_EQ(r["entries"][1]["networks"], 1);
    EXPECT_EQ(run("--out " + p("b") + " bench --iterations 10"), 2);
    EXPECT_EQ(run("--out " + p("b") + " bench --models 4d-can"), 2);
}
