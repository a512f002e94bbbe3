#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nbseg/cli.hpp"

using namespace nbseg;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("nbseg");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

class CliPipeline : public ::testing::Test {
  protected:
    void SetUp() override {
        root = fs::temp_directory_path() / "nbseg_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        cfg_path = root / "pipeline.cfg";
        std::ofstream f(cfg_path);
        f << "# tiny network for fast tests\n"
             "input_size = 32\n"
             "depth = 2\n"
             "base_channels = 4\n"
             "epochs = 2\n"
             "batch_size = 2\n"
             "patches_per_epoch = 4\n"
             "stride = 16\n"
             "min_component_area = 8\n"
             "seed = 7\n";
    }
    void TearDown() override { fs::remove_all(root); }

    fs::path root, cfg_path;
};

}  // namespace

TEST(PipelineConfig, SetCoversEveryKey) {
    PipelineConfig c;
    c.set("input_size", "64");
    c.set("depth", "3");
    c.set("base_channels", "16");
    c.set("dropout_rate", "0.25");
    c.set("class_scheme", "binary_inside");
    c.set("seed", "99");
    c.set("epochs", "12");
    c.set("batch_size", "4");
    c.set("patches_per_epoch", "128");
    c.set("learning_rate", "0.002");
    c.set("beta1", "0.85");
    c.set("beta2", "0.99");
    c.set("epsilon", "1e-7");
    c.set("elastic", "off");
    c.set("rotate", "0");
    c.set("flip", "no");
    c.set("shift", "false");
    c.set("rescale", "off");
    c.set("elastic_alpha_min", "10");
    c.set("elastic_alpha_max", "20");
    c.set("elastic_sigma", "5");
    c.set("rescale_min", "0.8");
    c.set("rescale_max", "1.2");
    c.set("shift_max", "3");
    c.set("inside_threshold", "0.6");
    c.set("min_component_area", "15");
    c.set("dilation_radius", "1.5");
    c.set("stride", "32");
    c.set("match_threshold", "0.3");
    c.set("boundary_width", "3");
    EXPECT_EQ(c.network.input_size, 64);
    EXPECT_EQ(c.network.depth, 3);
    EXPECT_EQ(c.network.base_channels, 16);
    EXPECT_DOUBLE_EQ(c.network.dropout_rate, 0.25);
    EXPECT_EQ(c.network.class_scheme, ClassScheme::BinaryInside);
    EXPECT_EQ(c.network.seed, 99u);
    EXPECT_EQ(c.training.seed, 99u);  // seed fans out to both consumers
    EXPECT_EQ(c.training.epochs, 12);
    EXPECT_EQ(c.training.batch_size, 4);
    EXPECT_EQ(c.training.patches_per_epoch, 128);
    EXPECT_DOUBLE_EQ(c.training.adam.lr, 0.002);
    EXPECT_DOUBLE_EQ(c.training.adam.beta1, 0.85);
    EXPECT_DOUBLE_EQ(c.training.adam.beta2, 0.99);
    EXPECT_DOUBLE_EQ(c.training.adam.eps, 1e-7);
    EXPECT_FALSE(c.training.augment.enable_elastic);
    EXPECT_FALSE(c.training.augment.enable_rotate);
    EXPECT_FALSE(c.training.augment.enable_flip);
    EXPECT_FALSE(c.training.augment.enable_shift);
    EXPECT_FALSE(c.training.augment.enable_rescale);
    EXPECT_DOUBLE_EQ(c.training.augment.elastic_alpha_min, 10.0);
    EXPECT_DOUBLE_EQ(c.training.augment.elastic_alpha_max, 20.0);
    EXPECT_DOUBLE_EQ(c.training.augment.elastic_sigma, 5.0);
    EXPECT_DOUBLE_EQ(c.training.augment.rescale_min, 0.8);
    EXPECT_DOUBLE_EQ(c.training.augment.rescale_max, 1.2);
    EXPECT_EQ(c.training.augment.shift_max, 3);
    EXPECT_DOUBLE_EQ(c.postproc.inside_threshold, 0.6);
    EXPECT_EQ(c.postproc.min_component_area, 15);
    EXPECT_DOUBLE_EQ(c.postproc.dilation_radius, 1.5);
    EXPECT_EQ(c.stride, 32);
    EXPECT_DOUBLE_EQ(c.match_threshold, 0.3);
    EXPECT_DOUBLE_EQ(c.boundary_width, 3.0);
}

TEST(PipelineConfig, ErrorsNameTheKeyAndValue) {
    PipelineConfig c;
    try {
        c.set("no_such_knob", "1");
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("no_such_knob"), std::string::npos);
    }
    try {
        c.set("depth", "three");
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("three"), std::string::npos);
        EXPECT_NE(msg.find("depth"), std::string::npos);
    }
    EXPECT_THROW(c.set("elastic", "maybe"), std::invalid_argument);
    EXPECT_THROW(c.set("class_scheme", "quaternary"), std::invalid_argument);
}

TEST(PipelineConfig, BoolSpellings) {
    EXPECT_TRUE(PipelineConfig::parse_bool("1"));
    EXPECT_TRUE(PipelineConfig::parse_bool("true"));
    EXPECT_TRUE(PipelineConfig::parse_bool("on"));
    EXPECT_TRUE(PipelineConfig::parse_bool("yes"));
    EXPECT_FALSE(PipelineConfig::parse_bool("0"));
    EXPECT_FALSE(PipelineConfig::parse_bool("false"));
    EXPECT_FALSE(PipelineConfig::parse_bool("off"));
    EXPECT_FALSE(PipelineConfig::parse_bool("no"));
}

TEST(ConfigFile, ParsesCommentsAndSpacing) {
    const fs::path p = fs::temp_directory_path() / "nbseg_cfg_ok.cfg";
    {
        std::ofstream f(p);
        f << "# header comment\n\n  depth = 3  # trailing comment\n\tstride=16\n";
    }
    PipelineConfig c;
    load_config_file(c, p.string());
    EXPECT_EQ(c.network.depth, 3);
    EXPECT_EQ(c.stride, 16);
    fs::remove(p);
}

TEST(ConfigFile, ErrorsCarryPathAndLine) {
    const fs::path p = fs::temp_directory_path() / "nbseg_cfg_bad.cfg";
    {
        std::ofstream f(p);
        f << "depth = 2\nstride = 16\nwibble = 1\n";
    }
    PipelineConfig c;
    try {
        load_config_file(c, p.string());
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(p.string() + ":3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("wibble"), std::string::npos);
    }
    {
        std::ofstream f(p);
        f << "depth\n";
    }
    try {
        load_config_file(c, p.string());
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos);
    }
    fs::remove(p);
    EXPECT_THROW(load_config_file(c, "/nonexistent/nbseg.cfg"), std::runtime_error);
}

TEST(CliDispatch, BadInvocationsReturnNonzero) {
    EXPECT_NE(run_cli({}), 0);                      // a subcommand is required
    EXPECT_NE(run_cli({"frobnicate"}), 0);          // unknown subcommand
    EXPECT_NE(run_cli({"train", "--bogus"}), 0);    // unknown flag
    EXPECT_EQ(run_cli({"--help"}), 0);
    EXPECT_EQ(run_cli({"selftest"}), 0);
}

TEST(CliDispatch, RuntimeErrorsExitOne) {
    EXPECT_EQ(run_cli({"predict", "--ckpt", "/nonexistent/model.ckpt", "--in", "/nonexistent",
                       "--out", "/tmp/nbseg_cli_never"}),
              1);
    EXPECT_EQ(run_cli({"normalize", "--target", "/nonexistent/t.png", "--in", "/nonexistent",
                       "--out", "/tmp/nbseg_cli_never"}),
              1);
}

TEST_F(CliPipeline, SynthMakeMasksRoundTrip) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "6", "--images", "2", "--seed", "11"}),
              0);
    ASSERT_TRUE(fs::exists(synth / "synth00.png"));
    ASSERT_TRUE(fs::exists(synth / "synth00_labels.png"));
    ASSERT_TRUE(fs::exists(synth / "synth00_annotations.txt"));
    ASSERT_TRUE(fs::exists(synth / "synth00_ternary.png"));
    ASSERT_TRUE(fs::exists(synth / "synth01.png"));

    // Rasterizing the emitted annotations must reproduce the emitted ternary
    // mask bit for bit.
    const fs::path masks = root / "masks";
    ASSERT_EQ(run_cli({"make-masks", "--annotations", synth.string(), "--images", synth.string(),
                       "--out", masks.string()}),
              0);
    ASSERT_TRUE(fs::exists(masks / "synth00_ternary.png"));
    ASSERT_TRUE(fs::exists(masks / "synth00_labels.png"));
    EXPECT_EQ(slurp(masks / "synth00_ternary.png"), slurp(synth / "synth00_ternary.png"));
    EXPECT_EQ(slurp(masks / "synth01_ternary.png"), slurp(synth / "synth01_ternary.png"));
}

TEST_F(CliPipeline, TrainPredictEvaluateProduceArtifacts) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "6", "--images", "2", "--seed", "3"}),
              0);
    const fs::path ckpt = root / "model.ckpt";
    ASSERT_EQ(run_cli({"train", "--config", cfg_path.string(), "--images", synth.string(),
                       "--masks", synth.string(), "--out", ckpt.string()}),
              0);
    ASSERT_TRUE(fs::exists(ckpt));
    const fs::path csv = fs::path(ckpt.string() + ".loss.csv");
    ASSERT_TRUE(fs::exists(csv));
    const std::string history = slurp(csv);
    EXPECT_NE(history.find("epoch,train_loss,val_loss"), std::string::npos);
    EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);  // header + 2 epochs

    const fs::path pred = root / "pred";
    ASSERT_EQ(run_cli({"predict", "--config", cfg_path.string(), "--ckpt", ckpt.string(), "--in",
                       synth.string(), "--out", pred.string()}),
              0);
    for (const char* stem : {"synth00", "synth01"}) {
        EXPECT_TRUE(fs::exists(pred / (std::string(stem) + "_probs.png")));
        EXPECT_TRUE(fs::exists(pred / (std::string(stem) + "_labels.png")));
        EXPECT_TRUE(fs::exists(pred / (std::string(stem) + "_overlay.png")));
    }

    const fs::path report = root / "report.txt";
    ASSERT_EQ(run_cli({"evaluate", "--gt", synth.string(), "--pred", pred.string(), "--report",
                       report.string()}),
              0);
    const std::string rep = slurp(report);
    EXPECT_NE(rep.find("synth00.f1="), std::string::npos);
    EXPECT_NE(rep.find("synth01.recall="), std::string::npos);
    EXPECT_NE(rep.find("mean.f1="), std::string::npos);
    EXPECT_NE(rep.find("mean.mdr="), std::string::npos);
}

TEST_F(CliPipeline, TrainingIsDeterministicPerSeed) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "6", "--images", "1", "--seed", "5"}),
              0);
    const fs::path a = root / "a.ckpt", b = root / "b.ckpt", c = root / "c.ckpt";
    for (const auto& out : {a, b}) {
        ASSERT_EQ(run_cli({"train", "--config", cfg_path.string(), "--images", synth.string(),
                           "--masks", synth.string(), "--out", out.string(), "--seed", "21"}),
                  0);
    }
    ASSERT_EQ(run_cli({"train", "--config", cfg_path.string(), "--images", synth.string(),
                       "--masks", synth.string(), "--out", c.string(), "--seed", "22"}),
              0);
    EXPECT_EQ(slurp(a), slurp(b));  // identical checkpoint bytes
    EXPECT_EQ(slurp(fs::path(a.string() + ".loss.csv")), slurp(fs::path(b.string() + ".loss.csv")));
    EXPECT_NE(slurp(a), slurp(c));  // different seed, different trajectory
}

TEST_F(CliPipeline, AugmentPreviewWritesPairs) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "6", "--images", "1", "--seed", "9"}),
              0);
    const fs::path prev = root / "preview";
    ASSERT_EQ(run_cli({"augment-preview", "--image", (synth / "synth00.png").string(), "--mask",
                       (synth / "synth00_ternary.png").string(), "--out", prev.string(), "--count",
                       "3", "--seed", "2"}),
              0);
    EXPECT_TRUE(fs::exists(prev / "orig_image.png"));
    EXPECT_TRUE(fs::exists(prev / "orig_mask.png"));
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(fs::exists(prev / ("aug" + std::to_string(i) + "_image.png")));
        EXPECT_TRUE(fs::exists(prev / ("aug" + std::to_string(i) + "_mask.png")));
    }
}

TEST_F(CliPipeline, NormalizeWritesProfileAndImages) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "8", "--images", "2", "--seed", "13"}),
              0);
    const fs::path out = root / "norm";
    const fs::path profile = root / "stain.txt";
    ASSERT_EQ(run_cli({"normalize", "--target", (synth / "synth00.png").string(), "--in",
                       synth.string(), "--out", out.string(), "--save-profile", profile.string()}),
              0);
    EXPECT_TRUE(fs::exists(out / "synth00.png"));
    EXPECT_TRUE(fs::exists(out / "synth01.png"));
    ASSERT_TRUE(fs::exists(profile));
    const std::string prof = slurp(profile);
    EXPECT_NE(prof.find("h0="), std::string::npos);
    EXPECT_NE(prof.find("e2="), std::string::npos);
    EXPECT_NE(prof.find("max_h="), std::string::npos);
    EXPECT_NO_THROW(load_stain_profile(profile.string()));
}

TEST_F(CliPipeline, PredictReusesConfigStrideAndIsIdempotent) {
    const fs::path synth = root / "synth";
    ASSERT_EQ(run_cli({"synth", "--out", synth.string(), "--width", "64", "--height", "64",
                       "--count", "6", "--images", "1", "--seed", "17"}),
              0);
    const fs::path ckpt = root / "model.ckpt";
    ASSERT_EQ(run_cli({"train", "--config", cfg_path.string(), "--images", synth.string(),
                       "--masks", synth.string(), "--out", ckpt.string()}),
              0);
    const fs::path p1 = root / "p1", p2 = root / "p2";
    ASSERT_EQ(run_cli({"predict", "--config", cfg_path.string(), "--ckpt", ckpt.string(), "--in",
                       synth.string(), "--out", p1.string()}),
              0);
    ASSERT_EQ(run_cli({"predict", "--config", cfg_path.string(), "--ckpt", ckpt.string(), "--in",
                       synth.string(), "--out", p2.string()}),
              0);
    EXPECT_EQ(slurp(p1 / "synth00_probs.png"), slurp(p2 / "synth00_probs.png"));
    EXPECT_EQ(slurp(p1 / "synth00_labels.png"), slurp(p2 / "synth00_labels.png"));
}
