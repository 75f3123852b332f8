#include <gtest/gtest.h>

#include "progen/noise_study.hpp"

namespace progen {
namespace {

NoiseStudyConfig tiny(double flip) {
  NoiseStudyConfig c;
  c.flip_ratio = flip;
  c.seeds = 2;
  c.train_size = 200;
  c.val_size = 60;
  c.test_size = 200;
  c.ratios = {0.0, 0.2, 0.4};
  c.features.dims = 512;
  return c;
}

TEST(NoiseStudy, Validation) {
  auto c = tiny(0.4);
  EXPECT_NO_THROW(c.validate());
  c.flip_ratio = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(0.4);
  c.train_flip_ratio = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(0.4);
  c.seeds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(0.4);
  c.ratios = {0.0, 1.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c.ratios.clear();
  EXPECT_THROW(run_noise_study(c), ConfigError);
}

TEST(NoiseStudy, ShapeAndDeterminism) {
  const auto c = tiny(0.4);
  const auto a = run_noise_study(c);
  ASSERT_EQ(a.per_seed.size(), 2u);
  for (const auto& s : a.per_seed) {
    ASSERT_EQ(s.ce.size(), 3u);
    ASSERT_EQ(s.rce.size(), 3u);
    // Same trained model before any removal.
    EXPECT_EQ(s.ce[0].loss, s.rce[0].loss);
    EXPECT_EQ(s.ce[1].removed, 40);
    EXPECT_EQ(loss_increase(s.ce)[0], 0.0);
  }
  EXPECT_EQ(a.mean_gap[0], 0.0);
  const auto b = run_noise_study(c);
  EXPECT_EQ(noise_study_csv(a), noise_study_csv(b));
  EXPECT_EQ(a.verdict, b.verdict);
  EXPECT_NE(a.verdict.find("flip_ratio=0.4 seeds=2"), std::string::npos);
}

TEST(NoiseStudy, CsvParsesPerCurve) {
  const auto r = run_noise_study(tiny(0.0));
  const auto csv = noise_study_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "seed,objective," + std::string(kRemovalCsvHeader));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 3);
  EXPECT_NE(csv.find("\n1,RCE,0.4,"), std::string::npos);
  EXPECT_EQ(r.verdict.find("verdict=ON_PAR") != std::string::npos, r.on_par);
}

TEST(NoiseStudy, TrainingNoiseHurtsTheFullModel) {
  auto c = tiny(0.0);
  c.seeds = 1;
  const auto noisy = run_noise_study(c);
  c.train_flip_ratio = 0.0;
  const auto clean = run_noise_study(c);
  EXPECT_GT(clean.per_seed[0].ce[0].accuracy, noisy.per_seed[0].ce[0].accuracy);
  EXPECT_LT(clean.per_seed[0].ce[0].loss, noisy.per_seed[0].ce[0].loss);
}

TEST(NoiseStudy, DominanceNeedsStrictGain) {
  std::vector<RemovalPoint> curve(3);
  curve[0].loss = 0.5;
  curve[1].loss = 0.6;
  curve[2].loss = 0.4;
  const auto up = loss_increase(curve);
  EXPECT_DOUBLE_EQ(up[1], 0.1);
  EXPECT_DOUBLE_EQ(up[2], -0.1);
}

}  // namespace
}  // namespace progen
