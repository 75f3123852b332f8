#ifndef PROGEN_METRICS_HPP_
#define PROGEN_METRICS_HPP_

// Dataset-quality measurements: Self-BLEU diversity, label correctness
// against an oracle labeler, label flipping and influence-guided removal
// curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "progen/common.hpp"
#include "progen/influence.hpp"
#include "progen/model.hpp"

namespace progen {

// ---------------------------------------------------------------------------
// Rank statistics

/// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionError("pearson: need two equal-length series of size >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// ---------------------------------------------------------------------------
// Self-BLEU

struct CorpusStats {
  double self_bleu = 0.0;
  double correctness = 0.0;
  std::size_t size = 0;
  bool operator==(const CorpusStats&) const = default;
};

namespace detail {

struct NgramTop2 {
  std::size_t best_doc = std::numeric_limits<std::size_t>::max();
  int best = 0;
  int second = 0;

  void offer(std::size_t doc, int count) {
    if (count > best) {
      second = best;
      best = count;
      best_doc = doc;
    } else if (count > second) {
      second = count;
    }
  }
  int excluding(std::size_t doc) const { return doc == best_doc ? second : best; }
};

using NgramCounts = std::unordered_map<std::string, int>;

inline NgramCounts count_ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      g += '\x1f';
      g += toks[i + k];
    }
    ++counts[g];
  }
  return counts;
}

}  // namespace detail

/// Mean sentence-BLEU of sampled documents against all other documents.
/// Uniform weights up to `max_n`, clipped counts, closest-length brevity
/// penalty, and epsilon smoothing of zero n-gram matches.
inline double self_bleu(std::span<const std::string> corpus, int max_n = 4,
                        std::size_t sample_size = 1000, std::uint64_t seed = 0,
                        double epsilon = 1e-9) {
  if (corpus.size() < 2) throw DatasetError("self_bleu needs at least two documents");
  if (max_n < 1) throw ConfigError("max_n must be >= 1");
  const std::size_t N = corpus.size();
  const auto un = static_cast<std::size_t>(max_n);

  std::vector<std::vector<std::string>> toks(N);
  for (std::size_t d = 0; d < N; ++d) toks[d] = tokenize(corpus[d]);

  std::vector<std::vector<detail::NgramCounts>> counts(N);
  std::vector<std::unordered_map<std::string, detail::NgramTop2>> top(un);
  for (std::size_t d = 0; d < N; ++d) {
    counts[d].resize(un);
    for (std::size_t n = 1; n <= un; ++n) {
      counts[d][n - 1] = detail::count_ngrams(toks[d], n);
      for (const auto& [g, c] : counts[d][n - 1]) top[n - 1][g].offer(d, c);
    }
  }

  std::vector<std::size_t> sample(N);
  std::iota(sample.begin(), sample.end(), 0);
  if (sample_size < N) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, N - 1);
      std::swap(sample[i], sample[pick(rng)]);
    }
    sample.resize(sample_size);
    std::sort(sample.begin(), sample.end());
  }

  double total = 0.0;
  for (std::size_t d : sample) {
    const double c = static_cast<double>(toks[d].size());
    // Closest reference length, ties to the shorter one.
    double r = 0.0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < N; ++o) {
      if (o == d) continue;
      const double len = static_cast<double>(toks[o].size());
      const double gap = std::abs(len - c);
      if (gap < best_gap || (gap == best_gap && len < r)) best_gap = gap, r = len;
    }
    double log_sum = 0.0;
    bool any_unigram = false;
    for (std::size_t n = 1; n <= un; ++n) {
      long matched = 0, denom = 0;
      for (const auto& [g, cnt] : counts[d][n - 1]) {
        denom += cnt;
        auto it = top[n - 1].find(g);
        const int ref = it == top[n - 1].end() ? 0 : it->second.excluding(d);
        matched += std::min(cnt, ref);
      }
      if (n == 1) any_unigram = matched > 0;
      const double den = static_cast<double>(std::max<long>(1, denom));
      const double p = matched > 0 ? static_cast<double>(matched) / den : epsilon / den;
      log_sum += std::log(p) / static_cast<double>(max_n);
    }
    double bleu = 0.0;
    if (any_unigram) {
      const double bp = c > r ? 1.0 : (c == 0.0 ? 0.0 : std::exp(1.0 - r / c));
      bleu = bp * std::exp(log_sum);
    }
    total += bleu;
  }
  return total / static_cast<double>(sample.size());
}

// ---------------------------------------------------------------------------
// Labels

using Labeler = std::function<int(const std::string&)>;

/// Fraction of examples whose label agrees with the oracle.
inline double correctness(std::span<const Example> dataset, const Labeler& oracle) {
  if (dataset.empty()) throw DatasetError("correctness of an empty dataset");
  std::size_t ok = 0;
  for (const auto& e : dataset)
    if (oracle(e.text) == e.label) ++ok;
  return static_cast<double>(ok) / static_cast<double>(dataset.size());
}

/// Flips exactly round(ratio * n) binary labels chosen by a seeded sample.
/// The chosen positions depend only on (n, seed), so applying the same call
/// twice restores the input.
inline Dataset flip_labels(std::span<const Example> dataset, double ratio,
                           std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("flip ratio must lie in [0, 1]");
  for (const auto& e : dataset)
    if (e.label != 0 && e.label != 1)
      throw DatasetError("flip_labels needs a binary task");
  Dataset out(dataset.begin(), dataset.end());
  const std::size_t n = out.size();
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  for (std::size_t i = 0; i < k; ++i) out[order[i]].label = 1 - out[order[i]].label;
  return out;
}

// ---------------------------------------------------------------------------
// Removal curves

struct RemovalPoint {
  double ratio = 0.0;
  std::size_t removed = 0;
  double accuracy = 0.0;  // test set, after removing most-helpful points
  double loss = 0.0;      // mean CE on the test set
  double val_loss = 0.0;  // mean CE on the validation set
  double control_accuracy = 0.0;  // same count removed uniformly at random
  double control_loss = 0.0;
  double control_val_loss = 0.0;
  bool operator==(const RemovalPoint&) const = default;
};

namespace detail {

inline Dataset remove_ids(std::span<const Example> data,
                          const std::vector<std::int64_t>& ids, std::size_t k) {
  std::vector<std::int64_t> drop(ids.begin(), ids.begin() + static_cast<long>(k));
  std::sort(drop.begin(), drop.end());
  Dataset out;
  for (const auto& e : data)
    if (!std::binary_search(drop.begin(), drop.end(), e.id)) out.push_back(e);
  return out;
}

inline void require_all_classes(std::span<const Example> data, int num_classes, double ratio) {
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (const auto& e : data)
    if (e.label >= 0 && e.label < num_classes) seen[static_cast<std::size_t>(e.label)] = true;
  for (int c = 0; c < num_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)])
      throw DatasetError("removing ratio " + std::to_string(ratio) + " empties class " +
                         std::to_string(c));
}

}  // namespace detail

/// For each ratio removes the top round(ratio * n) examples by ascending
/// score, retrains from scratch and evaluates. A seeded random removal of the
/// same size is reported alongside as a control.
inline std::vector<RemovalPoint> removal_curve(std::span<const Example> dataset,
                                               const InfluenceReport& report,
                                               std::span<const double> ratios,
                                               std::span<const Example> val_set,
                                               std::span<const Example> test_set,
                                               const ModelSpec& spec,
                                               const TrainHyper& hyper,
                                               std::uint64_t seed = 0) {
  for (double r : ratios)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("removal ratios must lie in [0, 1)");
  if (dataset.empty()) throw DatasetError("removal_curve on an empty dataset");

  std::vector<std::pair<double, std::int64_t>> scored;
  for (const auto& e : dataset) {
    auto it = report.scores.find(e.id);
    if (it != report.scores.end()) scored.emplace_back(it->second, e.id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::int64_t> helpful_order;
  for (const auto& s : scored) helpful_order.push_back(s.second);

  std::vector<std::int64_t> random_order;
  for (const auto& e : dataset) random_order.push_back(e.id);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < random_order.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, random_order.size() - 1);
    std::swap(random_order[i], random_order[pick(rng)]);
  }

  const auto val = featurize_dataset(val_set, spec.features, spec.num_classes);
  const auto test = featurize_dataset(test_set, spec.features, spec.num_classes);
  std::vector<RemovalPoint> curve;
  for (double r : ratios) {
    RemovalPoint pt;
    pt.ratio = r;
    const auto want =
        static_cast<std::size_t>(std::llround(r * static_cast<double>(dataset.size())));
    pt.removed = std::min(want, helpful_order.size());

    const auto kept = detail::remove_ids(dataset, helpful_order, pt.removed);
    detail::require_all_classes(kept, spec.num_classes, r);
    const auto model = train(kept, spec, hyper);
    const auto on_test = evaluate(model, test);
    pt.accuracy = on_test.accuracy;
    pt.loss = on_test.mean_ce_loss;
    pt.val_loss = val.empty() ? 0.0 : evaluate(model, val).mean_ce_loss;

    const auto kept_rand = detail::remove_ids(dataset, random_order, pt.removed);
    detail::require_all_classes(kept_rand, spec.num_classes, r);
    const auto control = train(kept_rand, spec, hyper);
    const auto ctrl_test = evaluate(control, test);
    pt.control_accuracy = ctrl_test.accuracy;
    pt.control_loss = ctrl_test.mean_ce_loss;
    pt.control_val_loss = val.empty() ? 0.0 : evaluate(control, val).mean_ce_loss;
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace progen

#endif  // PROGEN_METRICS_HPP_
