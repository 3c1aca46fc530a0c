#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aligncap/cli.hpp"
#include "aligncap/config.hpp"
#include "aligncap/dataset.hpp"
#include "aligncap/training.hpp"

using namespace aligncap;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "aligncap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("aligncap_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string detections() {
    nlohmann::json arr = nlohmann::json::array();
    auto add = [&](const char* cls, int n, double x) {
      for (int i = 0; i < n; ++i) {
        const double y = 0.1 * i;
        arr.push_back({{"class", cls}, {"bbox", {x, y, x + 0.1, y + 0.1}}, {"score", 0.9}});
      }
    };
    add("person", 4, 0.05);
    add("dog", 3, 0.6);
    add("mouse", 2, 0.85);
    return write("dets.json", arr.dump());
  }

  std::string tiny_config(double dropout) {
    TrainingConfig c = TrainingConfig::minimized();
    c.steps = 4;
    c.dataset_size = 3;
    c.dropout_p = dropout;
    return write("config.json", c.to_json_text());
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(CliTest, GodWorkedExample) {
  const Result r = run({"god", "--detections", detections(), "--target", "0.3,0.3,0.5,0.5", "--k",
                        "1", "--j", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], "classes\tperson");
  EXPECT_EQ(ls[1], "view\t0\ttarget\t[0.3,0.3,0.5,0.5]");
  for (std::size_t i = 2; i < ls.size(); ++i) EXPECT_EQ(ls[i].rfind("view\t", 0), 0u);
}

TEST_F(CliTest, GodIsDeterministic) {
  const std::string d = detections();
  const std::vector<std::string> args{"--seed", "5", "god", "--detections", d, "--target",
                                      "0.3,0.3,0.5,0.5", "--k", "2", "--j", "3"};
  const Result a = run(args), b = run(args);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, GodInferenceSelection) {
  const Result r = run({"god", "--detections", detections(), "--target", "0.3,0.3,0.5,0.5",
                        "--select", "inference", "--mode", "one-minus-iou"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 2u);
  EXPECT_EQ(ls[1].rfind("selected\t", 0), 0u);
  // Feature-cosine needs a scene to encode.
  EXPECT_EQ(run({"god", "--detections", detections(), "--target", "0.3,0.3,0.5,0.5", "--select",
                 "inference"})
                .code,
            kExitUsage);
}

TEST_F(CliTest, GodErrors) {
  const std::string bad = write("bad.json", "[\n{\"class\": \"dog\",\n \"bbox\": [0, 0, 1]}\n]");
  Result r = run({"god", "--detections", bad, "--target", "0.1,0.1,0.2,0.2"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("line"), std::string::npos) << r.err;
  r = run({"god", "--detections", detections(), "--target", "0.5,0.5,0.2,0.2"});
  EXPECT_EQ(r.code, kExitFailure);
  r = run({"god", "--detections", detections(), "--target", "0.1,0.1,0.2,0.2", "--bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(run({"god", "--detections", (dir_ / "missing.json").string(), "--target",
                 "0.1,0.1,0.2,0.2"})
                .code,
            kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
}

TEST_F(CliTest, GradCheckModuleFilter) {
  const Result r = run({"grad-check", "--module", "losses-training"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  for (std::size_t i = 0; i + 1 < ls.size(); ++i) {
    EXPECT_EQ(ls[i].rfind("losses-training\t", 0), 0u) << ls[i];
  }
  EXPECT_EQ(ls.back(), "groups 2 failed 0 tolerance 1e-04");
}

TEST_F(CliTest, GradCheckSpatialOnly) {
  const Result r = run({"grad-check", "--module", "spatial-awareness"});
  ASSERT_EQ(r.code, 0) << r.out;
  for (const auto& l : lines(r.out)) {
    if (l.rfind("groups", 0) == 0) continue;
    EXPECT_EQ(l.rfind("spatial-awareness\t", 0), 0u) << l;
  }
}

TEST_F(CliTest, GradCheckCorruptedGradientFails) {
  const Result r = run({"grad-check", "--module", "losses-training", "--corrupt-gradient", "1e-3"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, TrainThenEvalMatchesFinalRecord) {
  const std::string cfg = tiny_config(0.0);
  const std::string out = (dir_ / "run").string();
  const Result t = run({"--config", cfg, "train", "--out", out});
  ASSERT_EQ(t.code, 0) << t.err;
  ASSERT_TRUE(std::filesystem::exists(dir_ / "run" / "checkpoint"));

  std::ifstream metrics(dir_ / "run" / "metrics.jsonl");
  std::vector<MetricRecord> records;
  for (std::string l; std::getline(metrics, l);) records.push_back(MetricRecord::from_json(l));
  ASSERT_EQ(records.size(), 5u);

  const std::string data = write("data.json", R"({"generate": {"seed": 42, "size": 3}})");
  const Result e = run({"eval", "--checkpoint", out + "/checkpoint", "--data", data});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = nlohmann::json::parse(e.out);
  EXPECT_NEAR(j.at("total").get<double>(), records.back().losses.total, 1e-9);
}

TEST_F(CliTest, EvalErrors) {
  const std::string cfg = tiny_config(0.1);
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(run({"--config", cfg, "train", "--out", out}).code, 0);
  const std::string ckpt = out + "/checkpoint";

  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--data", write("empty.json", "")}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--data", write("none.json", R"({"examples": []})")}).code,
            kExitUsage);

  TrainingConfig other = TrainingConfig::minimized();
  other.dims.mlp_hidden = 8;
  const std::string other_cfg = write("other.json", other.to_json_text());
  const Result r = run({"--config", other_cfg, "eval", "--checkpoint", ckpt, "--data",
                        write("data.json", R"({"generate": {"seed": 1, "size": 2}})")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("incompatible"), std::string::npos) << r.err;
  EXPECT_EQ(run({"eval", "--checkpoint", cfg, "--data", write("d2.json", R"({"generate": {"seed": 1, "size": 2}})")}).code,
            kExitFailure);
}

TEST_F(CliTest, DemoCaptionTokensInVocabulary) {
  const std::string cfg = tiny_config(0.1);
  const std::string out = (dir_ / "run").string();
  ASSERT_EQ(run({"--config", cfg, "train", "--out", out}).code, 0);
  const TrainingConfig c = TrainingConfig::load(cfg);
  const SyntheticExample ex =
      make_synthetic_dataset(9, 1, c.dims.grid, c.dims.channels, TagVocabulary::builtin())[0];
  const std::string scene = (dir_ / "scene.json").string();
  ex.scene.save(scene);

  const std::vector<std::string> args{"demo-caption", "--checkpoint", out + "/checkpoint",
                                      "--scene", scene, "--target", "0.2,0.2,0.7,0.7"};
  const Result r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 4u);
  EXPECT_EQ(ls[0].rfind("view\t", 0), 0u);
  EXPECT_EQ(ls[1].rfind("tags\t", 0), 0u);
  ASSERT_EQ(ls[2].rfind("tokens\t", 0), 0u);
  std::istringstream ids(ls[2].substr(7));
  std::size_t n = 0;
  for (std::size_t id; ids >> id; ++n) {
    EXPECT_GE(id, 3u);
    EXPECT_LT(id, c.dims.v_llm);
  }
  EXPECT_LE(n, 20u);
  EXPECT_EQ(ls[3].rfind("caption\t", 0), 0u);
  EXPECT_EQ(run(args).out, r.out);
}

TEST_F(CliTest, BadLogLevelIsUsageError) {
  setenv("ALIGNCAP_LOG", "loud", 1);
  const Result r = run({"god", "--detections", detections(), "--target", "0.1,0.1,0.2,0.2"});
  unsetenv("ALIGNCAP_LOG");
  EXPECT_EQ(r.code, kExitUsage);
}
