#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fehforge/cli.hpp"
#include "fehforge/config.hpp"
#include "fehforge/error.hpp"
#include "fehforge/preprocess.hpp"
#include "fehforge/zoo.hpp"

using namespace fehforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "feh-forge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fehforge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Json snapshot_config() const { return Json::parse(slurp(dir_ / "out" / "config.snapshot")); }

  fs::path dir_;
};

}  // namespace

TEST(Config, ApplyOverride) {
  Json j = Json::object();
  apply_override(j, "train.max_epochs=50");
  apply_override(j, "grid.learning_rates=[0.1,0.2]");
  apply_override(j, "variant=RAW");
  apply_override(j, "matrix.tiny_models=true");
  EXPECT_EQ(j["train"]["max_epochs"], 50);
  EXPECT_EQ(j["grid"]["learning_rates"].size(), 2u);
  EXPECT_EQ(j["variant"], "RAW");
  EXPECT_EQ(j["matrix"]["tiny_models"], true);
  EXPECT_THROW(apply_override(j, "no_equals_sign"), Error);
}

TEST(Config, UnknownKeyIsInvalidConfig) {
  try {
    RunConfig::from_json(Json{{"trian", Json::object()}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_EQ(exit_code(e.code()), 8);
  }
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.seed = 17;
  c.train.max_epochs = 12;
  c.variant = preprocess::Variant::RawPadded;
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST_F(CliTest, PrecedenceFlagsOverSetOverFile) {
  std::ofstream(path("cfg.json")) << R"({"train": {"max_epochs": 5, "patience": 4}, "seed": 3})";
  const std::string out = path("out");
  ASSERT_EQ(run({"synth", "-c", path("cfg.json"), "-o", out, "--stars", "5"}).code, 0);
  EXPECT_EQ(snapshot_config()["train"]["max_epochs"], 5);
  EXPECT_EQ(snapshot_config()["seed"], 3);

  ASSERT_EQ(run({"synth", "-c", path("cfg.json"), "-o", out, "--stars", "5", "--set", "train.max_epochs=7"}).code, 0);
  EXPECT_EQ(snapshot_config()["train"]["max_epochs"], 7);
  EXPECT_EQ(snapshot_config()["train"]["patience"], 4);

  ASSERT_EQ(run({"synth", "-c", path("cfg.json"), "-o", out, "--stars", "5", "--set", "train.max_epochs=7",
                 "--epochs", "9", "--seed", "4"})
                .code,
            0);
  EXPECT_EQ(snapshot_config()["train"]["max_epochs"], 9);
  EXPECT_EQ(snapshot_config()["seed"], 4);
}

TEST_F(CliTest, OutputFromEnvironment) {
  ::setenv(cli::kOutputEnv, path("env_out").c_str(), 1);
  const Outcome r = run({"synth", "--stars", "4"});
  ::unsetenv(cli::kOutputEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "env_out" / "data" / "synthetic_catalog.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "env_out" / "manifest.json"));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"train", "--epochs", "many"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);

  const Outcome missing = run({"ingest", "--catalog", path("nope.csv"), "--photometry", path("nope2.csv"), "-o",
                               path("out")});
  EXPECT_EQ(missing.code, 3);
  EXPECT_FALSE(missing.err.empty());

  std::ofstream(path("bad.json")) << R"({"train": {"max_epochs": "lots"}})";
  EXPECT_EQ(run({"synth", "-c", path("bad.json"), "-o", path("out")}).code, 8);
  EXPECT_EQ(run({"synth", "-o", path("out"), "--set", "train.learning_rate=-1"}).code, 8);

  std::ofstream(path("empty.csv")) << "id,source_id,period,AmpG,#epochs,[Fe/H],sigma[Fe/H],sigma_phi31\n";
  std::ofstream(path("phot.csv")) << "source_id,time_bjd,mag_g\n";
  EXPECT_EQ(run({"ingest", "--catalog", path("empty.csv"), "--photometry", path("phot.csv"), "-o", path("out")}).code,
            4);
}

TEST_F(CliTest, EndToEndWithTinyModel) {
  const std::string out = path("out");
  Json cfg;
  cfg["model"] = zoo::tiny_spec(zoo::ModelKind::GRU).to_json();
  cfg["train"] = {{"max_epochs", 2}, {"folds", 2}, {"repeats", 1}, {"batch_size", 32}};
  cfg["preprocess"] = {{"resample_length", 16}};
  cfg["seed"] = 11;
  std::ofstream(path("tiny.json")) << cfg.dump();

  const Outcome synth = run({"synth", "-o", out, "--stars", "60", "--seed", "11"});
  ASSERT_EQ(synth.code, 0) << synth.err;
  const std::string cat = out + "/data/synthetic_catalog.csv", phot = out + "/data/synthetic_photometry.csv";

  const Outcome ingest = run({"ingest", "-c", path("tiny.json"), "-o", out, "--catalog", cat, "--photometry", phot});
  ASSERT_EQ(ingest.code, 0) << ingest.err;
  EXPECT_NE(ingest.out.find("accepted"), std::string::npos);

  const Outcome pre = run({"preprocess", "-c", path("tiny.json"), "-o", out, "--catalog", cat, "--photometry", phot,
                           "--variant", "FULL"});
  ASSERT_EQ(pre.code, 0) << pre.err;
  ASSERT_TRUE(fs::exists(fs::path(out) / "data" / "FULL.validation.fehds"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "data" / "FULL.weights.csv"));

  const Outcome train = run({"train", "-c", path("tiny.json"), "-o", out, "--variant", "FULL"});
  ASSERT_EQ(train.code, 0) << train.err;
  const fs::path snap = fs::path(out) / "snapshots" / "GRU_FULL.fehsnap";
  ASSERT_TRUE(fs::exists(snap));

  const std::string input = (fs::path(out) / "data" / "FULL.validation.fehds").string();
  const Outcome pred = run({"predict", "-o", out, "--snapshot", snap.string(), "--input", input, "--out",
                            path("pred.csv")});
  ASSERT_EQ(pred.code, 0) << pred.err;
  const std::string csv = slurp(path("pred.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "source_id,predicted_feh,true_feh");

  // Same inputs, same bytes.
  ASSERT_EQ(run({"predict", "-o", out, "--snapshot", snap.string(), "--input", input, "--out", path("pred2.csv")})
                .code,
            0);
  EXPECT_EQ(slurp(path("pred2.csv")), csv);

  // A snapshot used with a different architecture is an integrity failure.
  const Outcome mismatch = run({"predict", "-o", out, "--snapshot", snap.string(), "--input", input, "--model",
                                "LSTM", "--out", path("pred3.csv")});
  EXPECT_EQ(mismatch.code, 7) << mismatch.err;

  const Outcome cv = run({"cv", "-c", path("tiny.json"), "-o", out, "--variant", "FULL"});
  ASSERT_EQ(cv.code, 0) << cv.err;
  EXPECT_TRUE(fs::exists(fs::path(out) / "reports" / "cv_GRU_FULL.csv"));

  const Json manifest = Json::parse(slurp(fs::path(out) / "manifest.json"));
  for (const char* cmd : {"synth", "ingest", "preprocess", "train", "predict", "cv"})
    EXPECT_TRUE(manifest["commands"].contains(cmd)) << cmd;
}

TEST_F(CliTest, PredictOnUnlabelledStarsLeavesTruthEmpty) {
  const std::string out = path("out");
  Json cfg;
  cfg["model"] = zoo::tiny_spec(zoo::ModelKind::FCN).to_json();
  cfg["preprocess"] = {{"resample_length", 16}};
  std::ofstream(path("tiny.json")) << cfg.dump();
  ASSERT_EQ(run({"synth", "-o", out, "--stars", "40"}).code, 0);
  const std::string cat = out + "/data/synthetic_catalog.csv", phot = out + "/data/synthetic_photometry.csv";
  ASSERT_EQ(run({"preprocess", "-c", path("tiny.json"), "-o", out, "--catalog", cat, "--photometry", phot,
                 "--variant", "FULL"})
                .code,
            0);
  const Outcome train = run({"train", "-c", path("tiny.json"), "-o", out, "--epochs", "1", "--variant", "FULL"});
  ASSERT_EQ(train.code, 0) << train.err;

  auto series = preprocess::load_container(fs::path(out) / "data" / "FULL.validation.fehds");
  ASSERT_FALSE(series.empty());
  for (auto& s : series) s.feh = std::numeric_limits<double>::quiet_NaN();
  preprocess::save_container(path("unlabelled.fehds"), series);

  const Outcome pred = run({"predict", "-o", out, "--snapshot", out + "/snapshots/FCN_FULL.fehsnap", "--input",
                            path("unlabelled.fehds"), "--out", path("pred.csv")});
  ASSERT_EQ(pred.code, 0) << pred.err;
  std::istringstream csv(slurp(path("pred.csv")));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(line.back(), ',') << line;
  }
  EXPECT_EQ(rows, series.size());
}
