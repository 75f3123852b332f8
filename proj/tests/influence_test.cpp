#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "progen/influence.hpp"
#include "progen/metrics.hpp"
#include "dense_oracle.hpp"
#include "test_support.hpp"

namespace progen {
namespace {

using testing::dense_hessian;
using testing::dense_vector;
using testing::fd_gradient;
using testing::random_dense_set;
using testing::random_params;
using testing::random_vector;
using testing::rel_err;
using testing::to_eigen;

FeaturizedSet lambda_only_set(std::size_t dims) {
  FeatureConfig cfg;
  cfg.dims = dims;
  cfg.fit_bias = false;
  FeaturizedSet data{cfg, 2, {}, {}, {}};
  data.push_back(FeatureVector{dims, {}}, 0, 0);
  data.push_back(FeatureVector{dims, {}}, 1, 1);
  return data;
}

TEST(ValGrad, ZeroForOneHotCePredictions) {
  FeatureConfig cfg;
  cfg.dims = 1;
  cfg.fit_bias = false;
  FeaturizedSet val{cfg, 2, {}, {}, {}};
  val.push_back(dense_vector({1.0}), 0, 0);
  val.push_back(dense_vector({-1.0}), 1, 1);
  ModelParams p(cfg, 2, 0.0);
  p.weights = {1000.0, -1000.0};
  for (double g : val_grad(p, val, LossSpec::ce())) EXPECT_EQ(g, 0.0);
}

TEST(ValGrad, IsSumOfPerExampleGradientsAndMatchesFd) {
  for (int trial = 0; trial < 10; ++trial) {
    const auto val = random_dense_set(7, 3, 2 + trial % 2, true, 40 + trial, 0.3);
    const auto params = random_params(val.config, val.num_classes, 0.0, 41 + trial, 0.6);
    for (const auto spec : {LossSpec::ce(), LossSpec::rce(-4.0)}) {
      const auto g = val_grad(params, val, spec);
      Vector sum(g.size(), 0.0);
      for (std::size_t i = 0; i < val.size(); ++i)
        axpy(1.0, grad_loss(params, val.x[i], val.y[i], spec), sum);
      for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], sum[i], 1e-12);
      const auto numeric = fd_gradient(
          [&](const Vector& w) {
            ModelParams q = params;
            q.weights = w;
            return summed_loss(q, val, spec);
          },
          params.weights);
      EXPECT_LE(rel_err(g, numeric), 1e-5);
    }
  }
}

TEST(ValGrad, EmptyValidationSetThrows) {
  FeatureConfig cfg;
  cfg.dims = 2;
  FeaturizedSet empty{cfg, 2, {}, {}, {}};
  EXPECT_THROW(val_grad(ModelParams(cfg, 2, 0.0), empty, LossSpec::rce()), DatasetError);
}

TEST(IhvpExact, ScaledIdentity) {
  const auto data = lambda_only_set(3);
  const ModelParams p(data.config, 2, 2.0);
  const auto v = random_vector(p.num_params(), 1);
  const auto u = ihvp_exact(p, data, v, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(u[i], v[i] / 2.0, 1e-12);
}

TEST(IhvpExact, RoundTripThroughHvp) {
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = random_dense_set(25, 4, 2, true, 60 + trial, 0.1);
    const auto p = random_params(data.config, 2, 0.01, 61 + trial, 0.5);
    ASSERT_EQ(p.num_params(), 10u);
    const auto v = random_vector(p.num_params(), 62 + trial);
    const auto u = ihvp_exact(p, data, v, 0.01);
    EXPECT_LE(rel_err(hvp(p, data, u, 0.01), v), 1e-6);
  }
}

TEST(IhvpExact, MatchesDenseSolverOnSixParameters) {
  for (int trial = 0; trial < 10; ++trial) {
    // dims 2, 2 classes, bias -> 6 parameters.
    const auto data = random_dense_set(12, 2, 2, true, 100 + trial, 0.2);
    const auto p = random_params(data.config, 2, 0.05, 101 + trial);
    ASSERT_EQ(p.num_params(), 6u);
    const double damping = 0.01 * (trial % 3);
    const auto v = random_vector(6, 102 + trial);
    const Eigen::MatrixXd H = dense_hessian(p, data, damping);
    const Eigen::VectorXd expected = H.ldlt().solve(to_eigen(v));
    const auto got = ihvp_exact(p, data, v, damping);
    Vector exp_vec(expected.data(), expected.data() + expected.size());
    EXPECT_LE(rel_err(got, exp_vec), 1e-6);
  }
}

TEST(IhvpExact, Errors) {
  const auto data = random_dense_set(20, 6, 3, true, 5);
  const auto p = random_params(data.config, 3, 0.0, 6);
  const auto v = random_vector(p.num_params(), 7);
  EXPECT_THROW(ihvp_exact(p, data, v, 0.0), ConfigError);
  try {
    ihvp_exact(p, data, v, 1e-3, /*max_iters=*/1);
    FAIL() << "expected non-convergence";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
  EXPECT_THROW(ihvp_exact(p, data, Vector(3, 1.0), 0.1), DimensionError);
}

TEST(IhvpStochastic, SingleStepByHand) {
  // H = I (lambda = 1, no features), scale 0.5: u_1 = v + (I - 0.5 I) v = 1.5 v,
  // and the returned estimate is scale * u_1.
  const auto data = lambda_only_set(2);
  const ModelParams p(data.config, 2, 1.0);
  const auto v = random_vector(p.num_params(), 3);
  StochasticConfig cfg{1, 1, 0.5, 8, 0};
  const auto u1 = neumann_recursion(p, data, v, 0.0, cfg);
  const auto est = ihvp_stochastic(p, data, v, 0.0, cfg);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(u1[i], 1.5 * v[i], 1e-15);
    EXPECT_NEAR(est[i], 0.75 * v[i], 1e-15);
  }
}

TEST(IhvpStochastic, GeometricSeriesConvergesToInverse) {
  const auto data = lambda_only_set(2);
  const ModelParams p(data.config, 2, 1.0);
  const auto v = random_vector(p.num_params(), 4);
  const auto est = ihvp_stochastic(p, data, v, 0.0, StochasticConfig{1000, 1, 0.5, 8, 0});
  EXPECT_LE(rel_err(est, v), 1e-3);
}

TEST(IhvpStochastic, AgreesWithExactOnTwentyParameters) {
  // dims 9, 2 classes, bias -> 20 parameters; default depth/repeats/scale.
  const auto data = random_dense_set(200, 9, 2, true, 77, 0.1, 1.0 / 3.0);
  TrainHyper hyper;
  hyper.l2_lambda = 0.1;
  const auto p = train(data, hyper);
  ASSERT_EQ(p.num_params(), 20u);
  const auto v = random_vector(20, 78);
  const double damping = 0.01;
  const auto exact = ihvp_exact(p, data, v, damping);
  const auto stoch = ihvp_stochastic(p, data, v, damping, StochasticConfig{});
  EXPECT_LE(rel_err(stoch, exact), 0.05);
}

TEST(IhvpStochastic, DeterministicPerSeed) {
  const auto data = random_dense_set(40, 4, 2, true, 9);
  const auto p = random_params(data.config, 2, 0.1, 10, 0.3);
  const auto v = random_vector(p.num_params(), 11);
  StochasticConfig cfg{200, 2, 0.1, 4, 123};
  EXPECT_EQ(ihvp_stochastic(p, data, v, 0.0, cfg), ihvp_stochastic(p, data, v, 0.0, cfg));
  StochasticConfig other = cfg;
  other.seed = 124;
  EXPECT_NE(ihvp_stochastic(p, data, v, 0.0, cfg), ihvp_stochastic(p, data, v, 0.0, other));
}

TEST(IhvpStochastic, DivergenceIsReported) {
  const auto data = lambda_only_set(2);
  const ModelParams p(data.config, 2, 1.0);
  const auto v = random_vector(p.num_params(), 12);
  EXPECT_THROW(ihvp_stochastic(p, data, v, 0.0, StochasticConfig{100, 1, 5.0, 8, 0}),
               ScaleTooLargeError);
}

TEST(IhvpStochastic, ConfigValidation) {
  const auto data = lambda_only_set(2);
  const ModelParams p(data.config, 2, 1.0);
  const auto v = random_vector(p.num_params(), 13);
  EXPECT_THROW(ihvp_stochastic(p, data, v, 0.0, StochasticConfig{0, 1, 0.5, 8, 0}),
               ConfigError);
  EXPECT_THROW(ihvp_stochastic(p, data, v, 0.0, StochasticConfig{10, 1, 0.0, 8, 0}),
               ConfigError);
}

InfluenceConfig exact_config(double damping = 0.0, LossSpec val = LossSpec::rce()) {
  InfluenceConfig cfg;
  cfg.method = IhvpMethod::kExact;
  cfg.damping = damping;
  cfg.val_loss = val;
  return cfg;
}

TEST(InfluenceScores, ZeroGradientCandidateScoresZero) {
  auto train_set = random_dense_set(20, 3, 2, false, 14);
  const auto val = random_dense_set(6, 3, 2, false, 15);
  FeaturizedSet candidates{train_set.config, 2, {}, {}, {}};
  candidates.push_back(FeatureVector{3, {}}, 0, 999);  // no features, no bias
  candidates.push_back(train_set.x[3], train_set.y[3], train_set.ids[3]);
  TrainHyper hyper;
  hyper.l2_lambda = 0.1;
  const auto p = train(train_set, hyper);
  const auto report = influence_scores(p, candidates, train_set, val, exact_config(0.01));
  EXPECT_EQ(report.scores.at(999), 0.0);
  EXPECT_NE(report.scores.at(train_set.ids[3]), 0.0);
  EXPECT_EQ(report.model_fingerprint, p.fingerprint());
}

TEST(InfluenceScores, SelfInfluenceIsNegative) {
  const auto train_set = random_dense_set(30, 3, 2, true, 16, 0.2);
  TrainHyper hyper;
  hyper.l2_lambda = 0.05;
  const auto p = train(train_set, hyper);
  for (std::size_t i = 0; i < 10; ++i) {
    FeaturizedSet single{train_set.config, 2, {}, {}, {}};
    single.push_back(train_set.x[i], train_set.y[i], train_set.ids[i]);
    const auto report =
        influence_scores(p, single, train_set, single, exact_config(0.01, LossSpec::ce()));
    const double s = report.scores.at(train_set.ids[i]);
    // -g^T (H + dI)^{-1} g with H positive definite.
    const auto g = grad_loss(p, train_set.x[i], train_set.y[i], LossSpec::ce());
    const auto u = ihvp_exact(p, train_set, g, 0.01);
    EXPECT_NEAR(s, -dot(g, u), 1e-9 * std::max(1.0, std::abs(s)));
    EXPECT_LT(s, 0.0);
  }
}

TEST(InfluenceScores, TransposeConsistency) {
  const auto train_set = random_dense_set(40, 5, 3, true, 17, 0.2);
  const auto val = random_dense_set(15, 5, 3, true, 18, 0.2);
  TrainHyper hyper;
  hyper.l2_lambda = 0.02;
  const auto p = train(train_set, hyper);
  const auto report = influence_scores(p, train_set, train_set, val, exact_config(0.01));
  const auto gv = val_grad(p, val, LossSpec::rce());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto gz = grad_loss(p, train_set.x[i], train_set.y[i], LossSpec::ce());
    const double per_candidate = -dot(gv, ihvp_exact(p, train_set, gz, 0.01));
    const double s = report.scores.at(train_set.ids[i]);
    EXPECT_NEAR(s, per_candidate, 1e-6 * std::max(std::abs(per_candidate), 1e-3));
  }
}

TEST(InfluenceScores, ScaleEquivarianceKeepsOrder) {
  const auto train_set = random_dense_set(40, 4, 2, true, 19, 0.2);
  const auto val = random_dense_set(15, 4, 2, true, 20, 0.2);
  TrainHyper hyper;
  hyper.l2_lambda = 0.05;
  const auto p = train(train_set, hyper);
  const auto cfg = exact_config(0.01);
  const auto report = influence_scores(p, train_set, train_set, val, cfg);
  // Scores under the candidate loss c * CE: gradients scale by c.
  const double c = 3.5;
  const auto u = ihvp_exact(p, train_set, val_grad(p, val, cfg.val_loss), cfg.damping);
  InfluenceReport scaled = report;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    auto g = grad_loss(p, train_set.x[i], train_set.y[i], LossSpec::ce());
    scale_in_place(c, g);
    scaled.scores[train_set.ids[i]] = -dot(u, g);
    EXPECT_NEAR(scaled.scores[train_set.ids[i]], c * report.scores.at(train_set.ids[i]),
                1e-9);
  }
  Dataset examples;
  for (auto id : train_set.ids) examples.push_back({id, "t", 0, 1, false, {}});
  const auto a = select_helpful(report, examples, 10);
  const auto b = select_helpful(scaled, examples, 10);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}

TEST(InfluenceScores, DeterministicGivenSeed) {
  const auto train_set = random_dense_set(30, 3, 2, true, 21, 0.2);
  const auto val = random_dense_set(10, 3, 2, true, 22, 0.2);
  TrainHyper hyper;
  hyper.l2_lambda = 0.05;
  const auto p = train(train_set, hyper);
  InfluenceConfig cfg;
  cfg.stochastic.recursion_depth = 300;
  cfg.stochastic.seed = 42;
  EXPECT_EQ(influence_scores(p, train_set, train_set, val, cfg),
            influence_scores(p, train_set, train_set, val, cfg));
}

TEST(InfluenceScores, StochasticRankingAgreesWithExact) {
  for (int trial = 0; trial < 3; ++trial) {
    const auto train_set = random_dense_set(200, 9, 2, true, 300 + trial, 0.15, 1.0 / 3.0);
    const auto val = random_dense_set(50, 9, 2, true, 310 + trial, 0.15, 1.0 / 3.0);
    TrainHyper hyper;
    hyper.l2_lambda = 0.1;
    const auto p = train(train_set, hyper);
    ASSERT_EQ(p.num_params(), 20u);
    InfluenceConfig stoch;
    stoch.stochastic.seed = static_cast<std::uint64_t>(trial);
    const auto exact = influence_scores(p, train_set, train_set, val, exact_config(0.01));
    const auto approx = influence_scores(p, train_set, train_set, val, stoch);
    std::vector<double> a, b;
    for (const auto& [id, s] : exact.scores) {
      a.push_back(s);
      b.push_back(approx.scores.at(id));
    }
    EXPECT_GE(spearman(a, b), 0.95) << "trial " << trial;
  }
}

TEST(SelectHelpful, AscendingWithIdTieBreak) {
  InfluenceReport r;
  r.scores = {{1, -3.0}, {2, -1.0}, {3, 2.0}};
  Dataset ex = {{3, "c", 0, 1, false, {}}, {1, "a", 0, 1, false, {}}, {2, "b", 1, 1, false, {}}};
  auto top = select_helpful(r, ex, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].id, 1);
  EXPECT_EQ(top[1].id, 2);
  EXPECT_EQ(top[0].influence_score, -3.0);

  auto all = select_helpful(r, ex, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[2].id, 3);

  InfluenceReport tie;
  tie.scores = {{7, -1.0}, {5, -1.0}};
  Dataset tex = {{7, "x", 0, 1, false, {}}, {5, "y", 0, 1, false, {}}};
  auto one = select_helpful(tie, tex, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].id, 5);
  EXPECT_THROW(select_helpful(tie, tex, 0), ConfigError);
}

TEST(LooOracle, DuplicateRemovalMattersLessThanUniquePoint) {
  FeatureConfig cfg;
  cfg.dims = 2;
  FeaturizedSet train_set{cfg, 2, {}, {}, {}};
  train_set.push_back(dense_vector({1.0, 0.2}), 0, 0);
  train_set.push_back(dense_vector({1.0, 0.2}), 0, 1);  // duplicate of 0
  train_set.push_back(dense_vector({0.1, 1.0}), 1, 2);
  train_set.push_back(dense_vector({-1.5, -1.0}), 1, 3);  // isolated
  train_set.push_back(dense_vector({0.9, -0.7}), 0, 4);
  train_set.push_back(dense_vector({0.2, 0.8}), 1, 5);
  // Validation point sits next to the isolated point 3.
  FeaturizedSet val{cfg, 2, {}, {}, {}};
  val.push_back(dense_vector({-1.4, -1.1}), 1, 100);
  TrainHyper hyper;
  hyper.l2_lambda = 0.1;
  hyper.tol = 1e-12;
  const auto full = train(train_set, hyper);
  const double dup = loo_oracle(train_set, 1, val, LossSpec::ce(), hyper, &full);
  const double unique = loo_oracle(train_set, 3, val, LossSpec::ce(), hyper, &full);
  EXPECT_LE(std::abs(dup), std::abs(unique));
  // Removing the point identical to the sole validation point hurts.
  FeaturizedSet val2{cfg, 2, {}, {}, {}};
  val2.push_back(train_set.x[3], train_set.y[3], 200);
  EXPECT_GT(loo_oracle(train_set, 3, val2, LossSpec::ce(), hyper, &full), 0.0);
  EXPECT_GT(loo_oracle(train_set, 3, val2, LossSpec::rce(), hyper), 0.0);
}

TEST(LooOracle, Errors) {
  FeatureConfig cfg;
  cfg.dims = 1;
  FeaturizedSet train_set{cfg, 2, {}, {}, {}};
  train_set.push_back(dense_vector({1.0}), 0, 0);
  train_set.push_back(dense_vector({-1.0}), 1, 1);
  train_set.push_back(dense_vector({-2.0}), 1, 2);
  const auto val = train_set;
  EXPECT_THROW(loo_oracle(train_set, 0, val, LossSpec::ce(), TrainHyper{}), DatasetError);
  EXPECT_THROW(loo_oracle(train_set, 42, val, LossSpec::ce(), TrainHyper{}), DatasetError);
}

TEST(LooOracle, InfluenceRankingTracksRetraining) {
  // 32-point L2-regularized binary instance; removal of z changes the summed
  // validation loss by about -(1/n) score(z).
  const auto train_set = random_dense_set(32, 3, 2, true, 500, 0.15);
  const auto val = random_dense_set(20, 3, 2, true, 501, 0.15);
  TrainHyper hyper;
  hyper.l2_lambda = 0.05;
  hyper.tol = 1e-12;
  const auto full = train(train_set, hyper);
  const auto report = influence_scores(full, train_set, train_set, val, exact_config(0.0));
  std::vector<double> predicted, actual;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    predicted.push_back(-report.scores.at(train_set.ids[i]) / 32.0);
    actual.push_back(
        loo_oracle(train_set, train_set.ids[i], val, LossSpec::rce(), hyper, &full));
  }
  EXPECT_GE(spearman(predicted, actual), 0.9);
}

}  // namespace
}  // namespace progen
