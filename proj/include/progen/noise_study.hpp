#ifndef PROGEN_NOISE_STUDY_HPP_
#define PROGEN_NOISE_STUDY_HPP_

// Paired removal experiment on an artificially noisy dataset. Training labels
// are flipped at a fixed share and validation labels at flip_ratio, so
// flip_ratio 0 means a gold validation set. The training set is scored with
// CE-based and RCE-based validation objectives, the most helpful points are
// removed under each and the held-out loss is compared on clean test data.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "progen/common.hpp"
#include "progen/influence.hpp"
#include "progen/io.hpp"
#include "progen/metrics.hpp"
#include "progen/mock_world.hpp"
#include "progen/model.hpp"

namespace progen {

struct NoiseStudyConfig {
  double flip_ratio = 0.4;        // validation labels
  double train_flip_ratio = 0.4;  // training labels
  int seeds = 5;
  std::uint64_t base_seed = 0;
  std::vector<double> ratios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int train_size = 1000;
  int val_size = 200;
  int test_size = 1000;
  MockWorldConfig world;  // noise_rate is unused; labels are flipped explicitly
  FeatureConfig features = [] {
    FeatureConfig f;
    f.dims = std::size_t{1} << 12;
    return f;
  }();
  TrainHyper hyper = [] {
    TrainHyper h;
    h.l2_lambda = 1e-3;
    return h;
  }();
  InfluenceConfig influence = [] {
    InfluenceConfig c;
    c.method = IhvpMethod::kExact;
    return c;
  }();
  double dominance_from = 0.2;  // compare curves at ratios >= this

  void validate() const {
    if (!(flip_ratio >= 0.0 && flip_ratio <= 1.0)) throw ConfigError("flip ratio must lie in [0, 1]");
    if (!(train_flip_ratio >= 0.0 && train_flip_ratio <= 1.0))
      throw ConfigError("train flip ratio must lie in [0, 1]");
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    if (ratios.empty()) throw ConfigError("need at least one removal ratio");
    for (double r : ratios)
      if (!(r >= 0.0 && r < 1.0)) throw ConfigError("removal ratios must lie in [0, 1)");
    if (train_size < 4 || val_size < 2 || test_size < 2) throw ConfigError("study sets too small");
    world.validate();
    features.validate();
    influence.validate();
  }
};

struct NoiseSeedResult {
  std::uint64_t seed = 0;
  std::vector<RemovalPoint> ce;
  std::vector<RemovalPoint> rce;
  bool rce_dominates = false;
};

struct NoiseStudyResult {
  NoiseStudyConfig config;
  std::vector<NoiseSeedResult> per_seed;
  int dominating_seeds = 0;
  // Per ratio: |mean RCE loss - mean CE loss| and the pooled across-seed std.
  std::vector<double> mean_gap;
  std::vector<double> pooled_std;
  bool on_par = false;     // every mean gap below the pooled std
  bool dominance = false;  // RCE dominates in >= 80% of seeds
  std::string verdict;
};

/// Loss increase of each curve point over its own ratio-0 point.
inline std::vector<double> loss_increase(const std::vector<RemovalPoint>& curve) {
  std::vector<double> out;
  for (const auto& p : curve) out.push_back(p.loss - curve.front().loss);
  return out;
}

inline NoiseSeedResult noise_study_seed(const NoiseStudyConfig& cfg, std::uint64_t seed) {
  MockWorldConfig wc = cfg.world;
  wc.seed = derive_seed(cfg.world.seed, {0x5eed, seed});
  const MockWorld world(wc);
  const auto n_train = static_cast<std::size_t>(cfg.train_size);
  const auto n_val = static_cast<std::size_t>(cfg.val_size);
  const auto clean_train = world.sample_clean(n_train, 1, 0);
  const auto clean_val = world.sample_clean(n_val, 2, static_cast<std::int64_t>(n_train));
  const auto test = world.sample_clean(static_cast<std::size_t>(cfg.test_size), 3,
                                       static_cast<std::int64_t>(n_train + n_val));
  const auto train_set = flip_labels(clean_train, cfg.train_flip_ratio, derive_seed(seed, {1}));
  const auto val_set = flip_labels(clean_val, cfg.flip_ratio, derive_seed(seed, {2}));

  const ModelSpec spec{cfg.features, 2};
  const auto model = train(train_set, spec, cfg.hyper);
  const auto train_f = featurize_dataset(train_set, spec.features, 2);
  const auto val_f = featurize_dataset(val_set, spec.features, 2);

  NoiseSeedResult r;
  r.seed = seed;
  for (LossKind kind : {LossKind::kCE, LossKind::kRCE}) {
    InfluenceConfig ic = cfg.influence;
    ic.val_loss.kind = kind;
    ic.stochastic.seed = derive_seed(seed, {3});
    const auto report = influence_scores(model, train_f, train_f, val_f, ic);
    auto curve = removal_curve(train_set, report, cfg.ratios, val_set, test, spec, cfg.hyper,
                               derive_seed(seed, {4}));
    (kind == LossKind::kCE ? r.ce : r.rce) = std::move(curve);
  }
  const auto ce_up = loss_increase(r.ce), rce_up = loss_increase(r.rce);
  r.rce_dominates = true;
  for (std::size_t i = 0; i < cfg.ratios.size(); ++i)
    if (cfg.ratios[i] >= cfg.dominance_from - 1e-12 && !(rce_up[i] > ce_up[i])) r.rce_dominates = false;
  return r;
}

inline NoiseStudyResult run_noise_study(const NoiseStudyConfig& cfg) {
  cfg.validate();
  NoiseStudyResult out;
  out.config = cfg;
  for (int s = 0; s < cfg.seeds; ++s) {
    out.per_seed.push_back(noise_study_seed(cfg, cfg.base_seed + static_cast<std::uint64_t>(s)));
    out.dominating_seeds += out.per_seed.back().rce_dominates;
  }
  const auto n = static_cast<double>(cfg.seeds);
  out.on_par = true;
  for (std::size_t i = 0; i < cfg.ratios.size(); ++i) {
    double m_ce = 0.0, m_rce = 0.0;
    for (const auto& s : out.per_seed) m_ce += s.ce[i].loss, m_rce += s.rce[i].loss;
    m_ce /= n;
    m_rce /= n;
    double var = 0.0;
    for (const auto& s : out.per_seed)
      var += (s.ce[i].loss - m_ce) * (s.ce[i].loss - m_ce) + (s.rce[i].loss - m_rce) * (s.rce[i].loss - m_rce);
    const double sd = cfg.seeds > 1 ? std::sqrt(var / (2.0 * (n - 1.0))) : 0.0;
    out.mean_gap.push_back(std::abs(m_rce - m_ce));
    out.pooled_std.push_back(sd);
    // Identical curves (e.g. ratio 0) count as on par.
    if (!(out.mean_gap.back() < sd || out.mean_gap.back() == 0.0)) out.on_par = false;
  }
  out.dominance = 5 * out.dominating_seeds >= 4 * cfg.seeds;
  out.verdict = "flip_ratio=" + format_double(cfg.flip_ratio) + " seeds=" +
                std::to_string(cfg.seeds) + " rce_dominates=" +
                std::to_string(out.dominating_seeds) + "/" + std::to_string(cfg.seeds) +
                " on_par=" + (out.on_par ? "yes" : "no") + " verdict=" +
                (cfg.flip_ratio > 0.0 ? (out.dominance ? "RCE_DOMINATES" : "NO_DOMINANCE")
                                      : (out.on_par ? "ON_PAR" : "DIFFERENT"));
  return out;
}

inline std::string noise_study_csv(const NoiseStudyResult& r) {
  std::string out = "seed,objective,";
  out += kRemovalCsvHeader;
  out += '\n';
  for (const auto& s : r.per_seed)
    for (const auto* curve : {&s.ce, &s.rce})
      for (const auto& p : *curve)
        out += std::to_string(s.seed) + "," + (curve == &s.ce ? "CE" : "RCE") + "," +
               removal_csv_row(p) + "\n";
  return out;
}

}  // namespace progen

#endif  // PROGEN_NOISE_STUDY_HPP_
