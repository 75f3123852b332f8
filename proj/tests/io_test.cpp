#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <string>

#include <unistd.h>

#include "progen/io.hpp"
#include "test_support.hpp"

namespace progen {
namespace {

namespace fs = std::filesystem;

Dataset sample_data() {
  return {{0, "a \"quoted\" review\nwith newline", 1, 0, false, std::nullopt},
          {7, "plain", 0, 3, true, -0.125},
          {-4, "unicode caf\xc3\xa9", 1, 2, false, 1e-300}};
}

TEST(Jsonl, RoundTrip) {
  const auto d = sample_data();
  const auto text = dump_jsonl(d);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(parse_jsonl(text), d);
  EXPECT_EQ(example_line(d[1]),
            "{\"id\":7,\"influence_score\":-0.125,\"iteration\":3,\"label\":0,\"text\":\"plain\","
            "\"used_feedback\":true}\n");
}

TEST(Jsonl, FileRoundTrip) {
  const auto path = fs::temp_directory_path() / ("progen_io_" + std::to_string(::getpid()) + ".jsonl");
  write_jsonl(path, sample_data());
  EXPECT_EQ(read_jsonl(path), sample_data());
  fs::remove(path);
  EXPECT_THROW(read_jsonl(path), IoError);
}

TEST(Jsonl, BlankLinesSkipped) {
  const auto d = sample_data();
  EXPECT_EQ(parse_jsonl("\n" + example_line(d[0]) + "\n  \n" + example_line(d[1])),
            Dataset(d.begin(), d.begin() + 2));
}

std::size_t schema_error_line(const std::string& text) {
  try {
    parse_jsonl(text);
  } catch (const SchemaError& e) {
    return e.line();
  }
  return 0;
}

TEST(Jsonl, SchemaErrorsNameTheLine) {
  const auto good = example_line(sample_data()[1]);
  EXPECT_EQ(schema_error_line(good + "{not json}\n"), 2u);
  EXPECT_EQ(schema_error_line(good + good + R"({"id":1,"text":"x","label":0,"iteration":0})" "\n"), 3u);
  EXPECT_EQ(schema_error_line(R"({"id":"1","text":"x","label":0,"iteration":0,"used_feedback":false})"), 1u);
  EXPECT_EQ(schema_error_line(R"({"id":1,"text":"x","label":-1,"iteration":0,"used_feedback":false})"), 1u);
  EXPECT_EQ(schema_error_line(good + R"({"id":1,"text":"x","label":0,"iteration":0,"used_feedback":false,"extra":1})"), 2u);
  EXPECT_EQ(schema_error_line(R"({"id":1,"text":"x","label":0,"iteration":0,"used_feedback":false,"influence_score":"big"})"), 1u);
  EXPECT_EQ(schema_error_line("[1,2]"), 1u);
  try {
    parse_jsonl(good + "oops\n");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Jsonl, MissingScoreIsNull) {
  const auto d = parse_jsonl(R"({"id":1,"text":"x","label":0,"iteration":0,"used_feedback":false})");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_FALSE(d[0].influence_score.has_value());
}

TEST(Model, RoundTripIsExact) {
  FeatureConfig f;
  f.dims = 64;
  f.hash_seed = 99;
  auto p = testing::random_params(f, 3, 0.25, 4);
  p.weights[5] = 0.0;
  p.weights[6] = std::numeric_limits<double>::denorm_min();
  const auto back = model_from_json(json::parse(model_to_json(p).dump()));
  EXPECT_EQ(back, p);
  EXPECT_EQ(back.fingerprint(), p.fingerprint());
}

TEST(Model, RejectsCorruption) {
  FeatureConfig f;
  f.dims = 8;
  const auto p = testing::random_params(f, 2, 0.1, 1);
  auto j = model_to_json(p);
  j["weights"][0][1] = 123.0;
  EXPECT_THROW(model_from_json(j), ConfigError);
  j = model_to_json(p);
  j["num_params"] = 3;
  EXPECT_THROW(model_from_json(j), DimensionError);
  j = model_to_json(p);
  j["weights"].push_back({1000, 1.0});
  EXPECT_THROW(model_from_json(j), DimensionError);
  j = model_to_json(p);
  j.erase("features");
  EXPECT_THROW(model_from_json(j), ConfigError);
}

TEST(Report, RoundTrip) {
  InfluenceReport r;
  r.model_fingerprint = 0xfeedbeefcafe1234ULL;
  r.config.method = IhvpMethod::kExact;
  r.config.damping = 0.5;
  r.config.val_loss = LossSpec::ce();
  r.config.stochastic.seed = 77;
  r.scores = {{3, -1.5}, {-2, 0.0}, {10, 1e-17}};
  const auto j = report_to_json(r);
  EXPECT_EQ(j["method"], "exact");
  EXPECT_EQ(j["seed"], 77);
  EXPECT_EQ(j["scores"].size(), 3u);
  EXPECT_EQ(j["scores"][0]["id"], -2);
  EXPECT_EQ(report_from_json(json::parse(j.dump())), r);
  auto bad = j;
  bad.erase("scores");
  EXPECT_THROW(report_from_json(bad), ConfigError);
}

TEST(RemovalCsv, RoundTrip) {
  std::vector<RemovalPoint> curve = {{0.0, 0, 0.9, 0.3, 0.31, 0.9, 0.3, 0.29},
                                     {0.1, 16, 0.8125, 0.45678901234567, 0.5, 0.85, 0.4, 1.0 / 3.0}};
  const auto csv = removal_csv(curve);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kRemovalCsvHeader);
  EXPECT_EQ(parse_removal_csv(csv), curve);
  EXPECT_THROW(parse_removal_csv("bad,header\n"), SchemaError);
  try {
    parse_removal_csv(std::string(kRemovalCsvHeader) + "\n0,0,1,1,1,1,1,1\n0.1,x,1,1,1,1,1,1\n");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  for (const auto& p : curve) EXPECT_EQ(removal_point_from_json(to_json(p)), p);
}

TEST(CorpusStatsJson, RoundTrip) {
  const CorpusStats s{0.123, 0.75, 2000};
  EXPECT_EQ(corpus_stats_from_json(json::parse(to_json(s).dump())), s);
}

TEST(ConfigPieces, InfluenceConfigRoundTrip) {
  InfluenceConfig c;
  c.method = IhvpMethod::kExact;
  c.stochastic.recursion_depth = 77;
  c.val_loss = LossSpec::rce(-2.5);
  EXPECT_EQ(influence_config_from_json(to_json(c)), c);
  auto j = to_json(c);
  j["method"] = "magic";
  EXPECT_THROW(influence_config_from_json(j), ConfigError);
  j = to_json(c);
  j["val_loss"]["rce_constant_A"] = 1.0;
  EXPECT_THROW(influence_config_from_json(j), ConfigError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  const double third = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_double(third)), third);
}

}  // namespace
}  // namespace progen
