#ifndef PROGEN_MOCK_WORLD_HPP_
#define PROGEN_MOCK_WORLD_HPP_

// A synthetic sentiment world with an exact ground-truth labeler, plus a
// deterministic backend that "generates" reviews from prompts in it.
//
// Texts mix words from two disjoint polarity lexicons with shared fillers; the
// polarity with more words wins. Word frequencies are Zipfian so that a
// classifier sees a long tail of rare words and label noise actually hurts.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "progen/common.hpp"
#include "progen/generator.hpp"
#include "progen/model.hpp"

namespace progen {

struct MockWorldConfig {
  std::uint64_t seed = 0;
  double noise_rate = 0.0;    // zero-shot polarity flip probability
  double icl_strength = 0.8;  // chance of imitating a same-label demonstration
  int lexicon_size = 150;     // words per polarity
  int filler_size = 400;
  int sentiment_words = 3;    // odd, so the majority is always defined
  int min_fillers = 4;
  int max_fillers = 9;
  double zipf_exponent = 1.1;
  int max_borrowed = 1;  // words an imitation may copy from its demonstration

  void validate() const {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise_rate must lie in [0, 1]");
    if (!(icl_strength >= 0.0 && icl_strength <= 1.0))
      throw ConfigError("icl_strength must lie in [0, 1]");
    if (lexicon_size < 1 || filler_size < 1) throw ConfigError("lexicon sizes must be >= 1");
    if (sentiment_words < 1 || sentiment_words % 2 == 0)
      throw ConfigError("sentiment_words must be odd and >= 1");
    if (min_fillers < 0 || max_fillers < min_fillers) throw ConfigError("bad filler range");
    if (!(zipf_exponent >= 0.0)) throw ConfigError("zipf_exponent must be >= 0");
    if (max_borrowed < 0) throw ConfigError("max_borrowed must be >= 0");
  }
};

namespace detail {

// Leading entries are real words so samples read naturally; the rest are
// pronounceable pseudo-words.
inline const std::vector<std::string>& seed_positive() {
  static const std::vector<std::string> w = {
      "great", "wonderful", "brilliant", "superb", "delightful", "charming",
      "moving", "excellent", "fantastic", "gripping", "beautiful", "clever",
      "touching", "stunning", "memorable", "hilarious", "masterful", "engaging",
      "fresh", "heartfelt", "splendid", "joyful", "elegant", "vivid"};
  return w;
}
inline const std::vector<std::string>& seed_negative() {
  static const std::vector<std::string> w = {
      "awful", "boring", "dull", "terrible", "tedious", "clumsy",
      "bland", "dreadful", "messy", "lifeless", "painful", "forgettable",
      "shallow", "annoying", "sloppy", "tiresome", "hollow", "awkward",
      "stale", "wooden", "pointless", "weak", "grating", "muddled"};
  return w;
}
inline const std::vector<std::string>& seed_filler() {
  static const std::vector<std::string> w = {
      "the", "film", "story", "plot", "acting", "cast", "director", "scenes",
      "was", "is", "really", "quite", "and", "with", "a", "of", "it", "this",
      "ending", "music", "characters", "script", "camera", "pacing", "overall",
      "at", "times", "very", "lead", "performance", "dialogue", "second", "half"};
  return w;
}

inline std::string pseudo_word(std::uint64_t index) {
  static constexpr std::string_view kOnset = "bdfgklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  const std::uint64_t base = kOnset.size() * kVowel.size();
  std::string w;
  for (int s = 0; s < 3; ++s) {
    const auto d = index % base;
    index /= base;
    w += kOnset[d / kVowel.size()];
    w += kVowel[d % kVowel.size()];
  }
  while (index > 0) {  // only for very large vocabularies
    w += kOnset[index % kOnset.size()];
    index /= kOnset.size();
  }
  return w;
}

}  // namespace detail

class MockWorld {
 public:
  enum Polarity { kNegative = 0, kPositive = 1 };

  explicit MockWorld(MockWorldConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::set<std::string> used;
    std::uint64_t next = 0;
    auto build = [&](const std::vector<std::string>& seeds, int size) {
      std::vector<std::string> out;
      for (const auto& w : seeds) {
        if (static_cast<int>(out.size()) == size) break;
        if (used.insert(w).second) out.push_back(w);
      }
      while (static_cast<int>(out.size()) < size) {
        auto w = detail::pseudo_word(next++);
        if (used.insert(w).second) out.push_back(std::move(w));
      }
      return out;
    };
    lexicon_[kPositive] = build(detail::seed_positive(), cfg_.lexicon_size);
    lexicon_[kNegative] = build(detail::seed_negative(), cfg_.lexicon_size);
    filler_ = build(detail::seed_filler(), cfg_.filler_size);
    for (int p = 0; p < 2; ++p)
      for (const auto& w : lexicon_[p]) polarity_of_[w] = p;
    lex_weights_ = zipf_weights(cfg_.lexicon_size);
    filler_weights_ = zipf_weights(cfg_.filler_size);
  }

  const MockWorldConfig& config() const { return cfg_; }
  const std::vector<std::string>& lexicon(int polarity) const {
    return lexicon_[check_polarity(polarity)];
  }
  const std::vector<std::string>& fillers() const { return filler_; }

  /// Ground truth: the polarity with more lexicon words; ties go negative.
  int true_label(std::string_view text) const {
    const auto counts = polarity_counts(text);
    return counts[kPositive] > counts[kNegative] ? kPositive : kNegative;
  }

  std::array<int, 2> polarity_counts(std::string_view text) const {
    std::array<int, 2> counts{0, 0};
    for (const auto& tok : tokenize(text)) {
      auto it = polarity_of_.find(tok);
      if (it != polarity_of_.end()) ++counts[static_cast<std::size_t>(it->second)];
    }
    return counts;
  }

  /// A review whose true polarity is `polarity`. `borrowed` words of that
  /// polarity are reused before fresh draws.
  std::string sample_text(int polarity, std::mt19937_64& rng,
                          std::span<const std::string> borrowed = {}) const {
    check_polarity(polarity);
    std::uniform_int_distribution<int> majority_dist(cfg_.sentiment_words / 2 + 1,
                                                     cfg_.sentiment_words);
    const int majority = majority_dist(rng);
    std::uniform_int_distribution<int> filler_dist(cfg_.min_fillers, cfg_.max_fillers);
    const int fillers = filler_dist(rng);

    std::discrete_distribution<std::size_t> lex_pick(lex_weights_.begin(), lex_weights_.end());
    std::discrete_distribution<std::size_t> fill_pick(filler_weights_.begin(),
                                                      filler_weights_.end());
    std::vector<std::string> words;
    for (int i = 0; i < majority; ++i) {
      if (static_cast<std::size_t>(i) < borrowed.size())
        words.push_back(borrowed[static_cast<std::size_t>(i)]);
      else
        words.push_back(lexicon_[polarity][lex_pick(rng)]);
    }
    for (int i = majority; i < cfg_.sentiment_words; ++i)
      words.push_back(lexicon_[1 - polarity][lex_pick(rng)]);
    for (int i = 0; i < fillers; ++i) words.push_back(filler_[fill_pick(rng)]);
    std::shuffle(words.begin(), words.end(), rng);
    return join(words, " ");
  }

  /// Words of `text` that belong to the given polarity lexicon, in order.
  std::vector<std::string> polar_words(std::string_view text, int polarity) const {
    std::vector<std::string> out;
    for (const auto& tok : tokenize(text)) {
      auto it = polarity_of_.find(tok);
      if (it != polarity_of_.end() && it->second == polarity) out.push_back(tok);
    }
    return out;
  }

  /// A short title built from fillers (for condition prompts).
  std::string sample_title(std::mt19937_64& rng) const {
    std::discrete_distribution<std::size_t> fill_pick(filler_weights_.begin(),
                                                      filler_weights_.end());
    std::uniform_int_distribution<int> len(2, 3);
    std::vector<std::string> words;
    for (int i = len(rng); i > 0; --i) words.push_back(filler_[fill_pick(rng)]);
    return join(words, " ");
  }

  /// Balanced, correctly labeled examples; the gold test set.
  Dataset sample_clean(std::size_t n, std::uint64_t seed, std::int64_t first_id = 0) const {
    std::mt19937_64 rng(derive_seed(cfg_.seed, {0x7e57, seed}));
    Dataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int y = static_cast<int>(i % 2);
      out.push_back(Example{first_id + static_cast<std::int64_t>(i), sample_text(y, rng), y, 0,
                            false, std::nullopt});
    }
    return out;
  }

 private:
  static std::size_t check_polarity(int p) {
    if (p != kNegative && p != kPositive)
      throw ConfigError("the mock world is binary; got class " + std::to_string(p));
    return static_cast<std::size_t>(p);
  }

  std::vector<double> zipf_weights(int n) const {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) w[static_cast<std::size_t>(r)] = std::pow(r + 1.0, -cfg_.zipf_exponent);
    return w;
  }

  MockWorldConfig cfg_;
  std::array<std::vector<std::string>, 2> lexicon_;
  std::vector<std::string> filler_;
  std::unordered_map<std::string, int> polarity_of_;
  std::vector<double> lex_weights_;
  std::vector<double> filler_weights_;
};

/// What the mock backend reads out of a prompt.
struct ParsedPrompt {
  std::optional<int> target_label;  // nullopt: a condition request
  struct Demo {
    std::optional<int> shown_label;  // nullopt when rendered label-free
    std::string text;
  };
  std::vector<Demo> demos;
};

namespace detail {

inline std::optional<int> find_label(std::string_view block,
                                     const std::vector<std::string>& label_words) {
  std::vector<std::string> lowered;
  for (const auto& w : label_words) {
    const auto toks = tokenize(w);
    lowered.push_back(toks.empty() ? std::string() : toks[0]);
  }
  for (auto tok : tokenize(block)) {
    while (!tok.empty() && !std::isalnum(static_cast<unsigned char>(tok.back()))) tok.pop_back();
    for (std::size_t c = 0; c < lowered.size(); ++c)
      if (!lowered[c].empty() && tok == lowered[c]) return static_cast<int>(c);
  }
  return std::nullopt;
}

}  // namespace detail

inline ParsedPrompt parse_prompt(std::string_view prompt,
                                 const std::vector<std::string>& label_words) {
  std::vector<std::string_view> blocks;
  for (std::size_t start = 0;;) {
    const auto pos = prompt.find(kBlockSeparator, start);
    blocks.push_back(prompt.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + kBlockSeparator.size();
  }
  ParsedPrompt out;
  out.target_label = detail::find_label(blocks.back(), label_words);
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    const auto block = blocks[b];
    const auto close = block.rfind('"');
    if (close == std::string_view::npos || close == 0) continue;
    const auto open = block.rfind('"', close - 1);
    if (open == std::string_view::npos) continue;
    ParsedPrompt::Demo d;
    d.shown_label = detail::find_label(block.substr(0, open), label_words);
    d.text = std::string(block.substr(open + 1, close - open - 1));
    out.demos.push_back(std::move(d));
  }
  return out;
}

/// Deterministic stand-in for a language model service.
///
/// Each request draws from an RNG seeded by (world seed, request counter).
/// Given same-label demonstrations it imitates one of them with probability
/// icl_strength: the output takes that demonstration's true polarity and
/// reuses some of its words. Otherwise it writes a fresh review of the prompt
/// label, flipped with probability noise_rate.
class MockBackend : public GeneratorBackend {
 public:
  MockBackend(MockWorldConfig cfg, std::vector<std::string> label_words)
      : world_(std::move(cfg)), label_words_(std::move(label_words)) {
    if (label_words_.size() != 2) throw ConfigError("the mock backend needs two label words");
  }

  const MockWorld& world() const { return world_; }
  std::uint64_t counter() const { return counter_; }

  std::vector<std::optional<std::string>> generate_batch(
      std::span<const PromptRequest> requests) override {
    std::vector<std::optional<std::string>> out;
    out.reserve(requests.size());
    for (const auto& r : requests) {
      r.sampling.validate();
      out.push_back(finish_completion(complete_raw(r.prompt, r.sampling.max_tokens), r.sampling));
    }
    return out;
  }

  /// The raw completion, including text past the closing quote.
  std::string complete_raw(std::string_view prompt, int max_tokens) {
    std::mt19937_64 rng(derive_seed(world_.config().seed, {counter_++}));
    const auto parsed = parse_prompt(prompt, label_words_);
    if (!parsed.target_label) return world_.sample_title(rng) + "\" (" + std::to_string(counter_) + ")";

    const int target = *parsed.target_label;
    std::vector<const ParsedPrompt::Demo*> same;
    for (const auto& d : parsed.demos)
      if (d.shown_label.value_or(target) == target && !d.text.empty()) same.push_back(&d);

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::string text;
    if (!same.empty() && unif(rng) < world_.config().icl_strength) {
      std::uniform_int_distribution<std::size_t> pick(0, same.size() - 1);
      const auto& demo = *same[pick(rng)];
      const int polarity = world_.true_label(demo.text);
      auto words = world_.polar_words(demo.text, polarity);
      std::shuffle(words.begin(), words.end(), rng);
      std::uniform_int_distribution<int> keep(0, world_.config().max_borrowed);
      words.resize(std::min(words.size(), static_cast<std::size_t>(keep(rng))));
      text = world_.sample_text(polarity, rng, words);
    } else {
      const bool flip = unif(rng) < world_.config().noise_rate;
      text = world_.sample_text(flip ? 1 - target : target, rng);
    }
    auto toks = tokenize(text);
    if (static_cast<int>(toks.size()) > max_tokens) {
      toks.resize(static_cast<std::size_t>(max_tokens));
      return join(toks, " ");
    }
    return text + "\" and that is all.";
  }

  nlohmann::json state() const override { return {{"counter", counter_}}; }
  void restore(const nlohmann::json& state) override {
    if (!state.contains("counter") || !state["counter"].is_number_unsigned())
      throw SchemaError("mock backend state lacks a counter", 0);
    counter_ = state["counter"].get<std::uint64_t>();
  }

 private:
  MockWorld world_;
  std::vector<std::string> label_words_;
  std::uint64_t counter_ = 0;
};

}  // namespace progen

#endif  // PROGEN_MOCK_WORLD_HPP_
