#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "progen/config.hpp"
#include "progen/io.hpp"
#include "progen/metrics.hpp"
#include "progen/mock_world.hpp"
#include "progen/noise_study.hpp"

namespace progen {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Outcome progen_cli(const std::string& args) {
  const std::string cmd = std::string(PROGEN_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) o.output.append(buf, n);
  const int status = ::pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("progen_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Mock-world config shrunk so a full run takes well under a second.
  std::string small_config(const std::string& name = "cfg.json") const {
    auto j = json::parse(read_text_file(fs::path(PROGEN_SOURCE_DIR) / "configs/mock_world.json"));
    j["iterations_T"] = 3;
    j["feedback_interval_I"] = 60;
    j["top_M"] = 10;
    j["score_subset_n"] = 60;
    j["val_size"] = 40;
    j["test_size"] = 100;
    j["features"]["dims"] = 1024;
    write_text_file(path(name), j.dump(2));
    return path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, RunWritesArtifacts) {
  const auto o = progen_cli("run " + small_config() + " --out " + path("out"));
  ASSERT_EQ(o.code, 0) << o.output;
  for (const char* f : {"dataset.jsonl", "audit.jsonl", "model.json", "report.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  const auto data = read_jsonl(dir_ / "out/dataset.jsonl");
  EXPECT_EQ(data.size(), 180u);
  EXPECT_NO_THROW(read_model(dir_ / "out/model.json"));
  // Only the final scoring subset carries scores, and they match the report.
  const auto report = read_report(dir_ / "out/report.json");
  EXPECT_EQ(report.scores.size(), 60u);
  std::size_t scored = 0;
  for (const auto& e : data) {
    if (!e.influence_score) continue;
    ++scored;
    EXPECT_EQ(*e.influence_score, report.scores.at(e.id));
  }
  EXPECT_EQ(scored, report.scores.size());
}

TEST_F(CliTest, RunIsByteIdenticalPerSeed) {
  const auto cfg = small_config();
  ASSERT_EQ(progen_cli("run " + cfg + " --out " + path("a") + " --seed 5").code, 0);
  ASSERT_EQ(progen_cli("run " + cfg + " --out " + path("b") + " --seed 5").code, 0);
  ASSERT_EQ(progen_cli("run " + cfg + " --out " + path("c") + " --seed 6").code, 0);
  for (const char* f : {"dataset.jsonl", "audit.jsonl", "model.json", "report.json"})
    EXPECT_EQ(read_text_file(dir_ / "a" / f), read_text_file(dir_ / "b" / f)) << f;
  EXPECT_NE(read_text_file(dir_ / "a/dataset.jsonl"), read_text_file(dir_ / "c/dataset.jsonl"));
}

TEST_F(CliTest, ResumeOfFinishedRunIsStable) {
  const auto cfg = small_config();
  ASSERT_EQ(progen_cli("run " + cfg + " --out " + path("a")).code, 0);
  const auto before = read_text_file(dir_ / "a/dataset.jsonl");
  const auto o = progen_cli("run " + cfg + " --resume " + path("a"));
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(read_text_file(dir_ / "a/dataset.jsonl"), before);
  EXPECT_EQ(progen_cli("run " + cfg + " --resume " + path("missing")).code, 1);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
  auto o = progen_cli("run " + path("nope.json") + " --out " + path("x"));
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("config error"), std::string::npos);
  EXPECT_EQ(std::count(o.output.begin(), o.output.end(), '\n'), 1);

  auto j = json::parse(read_text_file(small_config()));
  j["surprise"] = 1;
  write_text_file(path("bad.json"), j.dump());
  EXPECT_EQ(progen_cli("run " + path("bad.json") + " --out " + path("x")).code, 1);

  write_text_file(path("broken.json"), "{ not json");
  EXPECT_EQ(progen_cli("run " + path("broken.json") + " --out " + path("x")).code, 1);
  EXPECT_EQ(progen_cli("run").code, 1);
  EXPECT_EQ(progen_cli("").code, 1);
  EXPECT_EQ(progen_cli("frobnicate").code, 1);
}

TEST_F(CliTest, BackendFailureExitsTwo) {
  auto j = json::parse(read_text_file(fs::path(PROGEN_SOURCE_DIR) / "configs/http_backend.json"));
  // Port 9 (discard) on loopback is closed in the sandbox.
  j["backend"]["http"]["base_url"] = "http://127.0.0.1:9";
  j["backend"]["http"]["max_retries"] = 0;
  j["backend"]["http"]["timeout_s"] = 2.0;
  write_text_file(path("http.json"), j.dump());
  const auto o = progen_cli("generate " + path("http.json") + " --out " + path("g.jsonl") + " --count 2");
  EXPECT_EQ(o.code, 2) << o.output;
  EXPECT_NE(o.output.find("backend error"), std::string::npos);
}

TEST_F(CliTest, GenerateAndMockWorld) {
  ASSERT_EQ(progen_cli("generate " + small_config() + " --out " + path("g.jsonl") + " --count 7").code, 0);
  EXPECT_EQ(read_jsonl(path("g.jsonl")).size(), 7u);
  ASSERT_EQ(progen_cli("mock-world --out " + path("w.jsonl") + " --count 12 --seed 2").code, 0);
  const auto w = read_jsonl(path("w.jsonl"));
  ASSERT_EQ(w.size(), 12u);
  const MockWorld world(MockWorldConfig{});
  for (const auto& e : w) EXPECT_EQ(world.true_label(e.text), e.label);
  EXPECT_EQ(progen_cli("mock-world --out " + path("w.jsonl") + " --count 0").code, 1);
}

class ScoreFixture : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    // 32 training points and a validation set, both from the mock world.
    ASSERT_EQ(progen_cli("mock-world --out " + path("train.jsonl") + " --count 32 --seed 11").code, 0);
    ASSERT_EQ(progen_cli("mock-world --out " + path("val.jsonl") + " --count 24 --seed 12").code, 0);
    ASSERT_EQ(progen_cli("train --dataset " + path("train.jsonl") + " --out " + path("m.json") +
                         " --dims 256 --lambda 0.05")
                  .code,
              0);
  }
  std::string score_args(const std::string& method, const std::string& out) const {
    return "score --dataset " + path("train.jsonl") + " --val " + path("val.jsonl") + " --model " +
           path("m.json") + " --method " + method + " --out " + path(out);
  }
};

TEST_F(ScoreFixture, ExactAndStochasticAgree) {
  ASSERT_EQ(progen_cli(score_args("exact", "exact.json")).code, 0);
  ASSERT_EQ(progen_cli(score_args("stochastic", "stoch.json") + " --seed 3").code, 0);
  const auto a = read_report(path("exact.json"));
  const auto b = read_report(path("stoch.json"));
  ASSERT_EQ(a.scores.size(), 32u);
  ASSERT_EQ(b.scores.size(), 32u);
  std::vector<double> x, y;
  for (const auto& [id, s] : a.scores) {
    ASSERT_TRUE(std::isfinite(s));
    x.push_back(s);
    y.push_back(b.scores.at(id));
  }
  EXPECT_GE(spearman(x, y), 0.95);
}

TEST_F(ScoreFixture, MalformedLineIsNamed) {
  auto text = read_text_file(path("train.jsonl"));
  const auto second = text.find('\n') + 1;
  text.insert(second, "{\"id\": 99, \"text\": 5}\n");
  write_text_file(path("train.jsonl"), text);
  const auto o = progen_cli(score_args("exact", "r.json"));
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("line 2"), std::string::npos) << o.output;
  EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(ScoreFixture, ModelMismatchExitsOne) {
  ASSERT_EQ(progen_cli(score_args("exact", "r.json")).code, 0);
  write_text_file(path("m.json"), "{}");
  EXPECT_EQ(progen_cli(score_args("exact", "r2.json")).code, 1);
  EXPECT_EQ(progen_cli(score_args("magic", "r3.json")).code, 1);
}

TEST_F(ScoreFixture, RemovalAndEval) {
  ASSERT_EQ(progen_cli(score_args("exact", "r.json")).code, 0);
  const auto o = progen_cli("removal --dataset " + path("train.jsonl") + " --report " + path("r.json") +
                            " --model " + path("m.json") + " --val " + path("val.jsonl") + " --test " +
                            path("val.jsonl") + " --ratios 0,0.25 --out " + path("curve.csv"));
  ASSERT_EQ(o.code, 0) << o.output;
  const auto curve = parse_removal_csv(read_text_file(path("curve.csv")));
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_EQ(curve[1].removed, 8);

  const auto ev = progen_cli("eval --model " + path("m.json") + " --dataset " + path("val.jsonl"));
  ASSERT_EQ(ev.code, 0);
  const auto j = json::parse(ev.output);
  // Ratio 0 retrains on the full set with the same hyperparameters.
  EXPECT_EQ(j["accuracy"].get<double>(), curve[0].accuracy);
  EXPECT_EQ(j["ce_loss"].get<double>(), curve[0].loss);
}

TEST_F(CliTest, NoiseStudyRangeAndOutput) {
  EXPECT_EQ(progen_cli("noise-study --flip-ratio 1.5").code, 1);
  EXPECT_EQ(progen_cli("noise-study --flip-ratio -0.1").code, 1);
  EXPECT_EQ(progen_cli("noise-study --seeds 0").code, 1);
  const auto o = progen_cli("noise-study --flip-ratio 0.4 --seeds 1 --out " + path("ns.csv"));
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("verdict="), std::string::npos);
  const auto csv = read_text_file(path("ns.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "seed,objective," + std::string(kRemovalCsvHeader));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 6);
}

}  // namespace
}  // namespace progen
