#ifndef PROGEN_GENERATOR_HPP_
#define PROGEN_GENERATOR_HPP_

// Prompt construction for label-conditioned generation, with optional
// in-context demonstrations, plus the backend interface the prompts are sent
// through and the copy-overlap filter applied to completions.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "progen/common.hpp"
#include "progen/model.hpp"

namespace progen {

enum class TemplateId { kP1, kP2, kP3 };

inline const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::kP1: return "P1";
    case TemplateId::kP2: return "P2";
    case TemplateId::kP3: return "P3";
  }
  return "?";
}

/// A label-descriptive prompt. Patterns end with the opening quote of the
/// text to be generated and may contain <TASK>, <Y> and <C> placeholders.
struct PromptTemplate {
  TemplateId id = TemplateId::kP2;
  std::string pattern;
  std::string demo_pattern;       // labeled in-context demonstrations
  std::string unlabeled_pattern;  // label-free demonstrations (F5)
  std::string condition_prompt;   // P3 only: asks the generator for <C>
  std::vector<std::string> label_words;  // index = class
  std::string task_word;

  int num_classes() const { return static_cast<int>(label_words.size()); }

  void validate() const {
    if (label_words.size() < 2) throw ConfigError("template needs >= 2 label words");
    auto count = [](std::string_view s, std::string_view needle) {
      std::size_t n = 0;
      for (auto pos = s.find(needle); pos != std::string_view::npos;
           pos = s.find(needle, pos + needle.size()))
        ++n;
      return n;
    };
    if (id != TemplateId::kP3 && count(pattern, "<Y>") != 1)
      throw ConfigError("template pattern must contain <Y> exactly once");
    if (id == TemplateId::kP3 && (count(pattern, "<Y>") != 1 || count(pattern, "<C>") != 1))
      throw ConfigError("P3 pattern must contain <Y> and <C> exactly once");
    if (count(unlabeled_pattern, "<Y>") != 0)
      throw ConfigError("unlabeled pattern must not contain <Y>");
  }
};

namespace detail {

inline std::string title_case(std::string_view s) {
  std::string out(s);
  bool start = true;
  for (auto& ch : out) {
    if (start && std::isalpha(static_cast<unsigned char>(ch)))
      ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    start = ch == ' ';
  }
  return out;
}

}  // namespace detail

/// The three sentiment templates. Class 0 is negative, class 1 positive.
inline PromptTemplate make_template(TemplateId id, const std::string& task_word) {
  PromptTemplate t;
  t.id = id;
  t.task_word = task_word;
  t.condition_prompt = detail::title_case(task_word) + ": \"";
  switch (id) {
    case TemplateId::kP1:
      t.pattern = "<Y> <TASK> Review: \"";
      t.demo_pattern = t.pattern;
      t.unlabeled_pattern = "<TASK> Review: \"";
      t.label_words = {"Negative", "Positive"};
      t.task_word = detail::title_case(task_word);
      break;
    case TemplateId::kP2:
      t.pattern = "The <TASK> review in <Y> sentiment is: \"";
      t.demo_pattern = t.pattern;
      t.unlabeled_pattern = "The <TASK> review is: \"";
      t.label_words = {"negative", "positive"};
      break;
    case TemplateId::kP3:
      t.pattern = "The <TASK> review in <Y> sentiment for <TASK> \"<C>\" is: \"";
      // Demonstrations carry no condition text.
      t.demo_pattern = "The <TASK> review in <Y> sentiment is: \"";
      t.unlabeled_pattern = "The <TASK> review is: \"";
      t.label_words = {"negative", "positive"};
      break;
  }
  return t;
}

inline TemplateId parse_template_id(std::string_view s) {
  if (s == "P1") return TemplateId::kP1;
  if (s == "P2") return TemplateId::kP2;
  if (s == "P3") return TemplateId::kP3;
  throw ConfigError("unknown template id '" + std::string(s) + "'");
}

enum class InContextFormat { kBase, kF1, kF2, kF3, kF4, kF5 };

inline const char* to_string(InContextFormat f) {
  switch (f) {
    case InContextFormat::kBase: return "BASE";
    case InContextFormat::kF1: return "F1";
    case InContextFormat::kF2: return "F2";
    case InContextFormat::kF3: return "F3";
    case InContextFormat::kF4: return "F4";
    case InContextFormat::kF5: return "F5";
  }
  return "?";
}

inline InContextFormat parse_format(std::string_view s) {
  for (auto f : {InContextFormat::kBase, InContextFormat::kF1, InContextFormat::kF2,
                 InContextFormat::kF3, InContextFormat::kF4, InContextFormat::kF5})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown in-context format '" + std::string(s) + "'");
}

struct InContextConfig {
  InContextFormat format = InContextFormat::kF5;
  int k = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (format == InContextFormat::kBase && k != 0)
      throw ConfigError("BASE format takes k = 0");
    if (format != InContextFormat::kBase && k < 1)
      throw ConfigError("in-context formats need k >= 1");
  }
};

struct SamplingConfig {
  double top_p = 0.9;
  double temperature = 1.0;
  int max_tokens = 64;
  std::string stop = "\"";

  void validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  }
};

struct PromptRequest {
  std::string prompt;
  SamplingConfig sampling;
};

// ---------------------------------------------------------------------------
// Labels and rendering

/// Round-robin class assignment: exact balance with a uniform marginal.
inline int sample_label(int num_classes, int /*iteration*/, std::int64_t index) {
  if (num_classes < 2) throw ConfigError("need at least two classes");
  return static_cast<int>(index % num_classes);
}

namespace detail {

inline std::string fill(const PromptTemplate& t, const std::string& pattern, int label,
                        std::string_view condition) {
  std::string s = replace_all(pattern, "<TASK>", t.task_word);
  if (s.find("<Y>") != std::string::npos) {
    if (label < 0 || label >= t.num_classes())
      throw ConfigError("no label word for class " + std::to_string(label));
    s = replace_all(s, "<Y>", t.label_words[static_cast<std::size_t>(label)]);
  }
  return replace_all(s, "<C>", condition);
}

}  // namespace detail

inline std::string render_condition_prompt(const PromptTemplate& t) {
  return t.condition_prompt;
}

/// T(y). P3 additionally needs the generated condition text.
inline std::string render_zero_shot(const PromptTemplate& t, int label,
                                    std::string_view condition = {}) {
  if (label < 0 || label >= t.num_classes())
    throw ConfigError("no label word for class " + std::to_string(label));
  if (t.id == TemplateId::kP3 && condition.empty())
    throw ConfigError("P3 prompts need a condition text");
  return detail::fill(t, t.pattern, label, condition);
}

/// A demonstration T(y_i, x_i): the pattern, the text, and the closing quote.
inline std::string render_demo(const PromptTemplate& t, const Example& ex, bool labeled) {
  return detail::fill(t, labeled ? t.demo_pattern : t.unlabeled_pattern, ex.label, {}) +
         ex.text + "\"";
}

inline constexpr std::string_view kBlockSeparator = "\n\n";

struct InContextPrompt {
  std::string text;
  Dataset demos;  // in rendered order
};

/// Draws k demonstrations from `helpful` without replacement and renders
/// them ahead of the target prompt.
///
///   F1  classes mixed, order shuffled
///   F2  positive (higher class index) examples before negative
///   F3  positive examples after negative
///   F4  target-class examples only
///   F5  target-class examples only, rendered with the label-free pattern
///
/// Mixed formats split k across classes round-robin starting at the target
/// class.
inline InContextPrompt build_in_context(const PromptTemplate& t,
                                        std::span<const Example> helpful,
                                        const InContextConfig& cfg, int target_label,
                                        std::string_view condition = {}) {
  cfg.validate();
  const std::string target = render_zero_shot(t, target_label, condition);
  if (cfg.format == InContextFormat::kBase) return {target, {}};
  if (helpful.empty()) throw DatasetError("in-context formats need helpful examples");

  const int C = t.num_classes();
  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < helpful.size(); ++i) {
    const int l = helpful[i].label;
    if (l < 0 || l >= C) throw DatasetError("helpful example with unknown label");
    pools[static_cast<std::size_t>(l)].push_back(i);
  }

  std::vector<int> per_class(static_cast<std::size_t>(C), 0);
  const bool target_only =
      cfg.format == InContextFormat::kF4 || cfg.format == InContextFormat::kF5;
  if (target_only) {
    per_class[static_cast<std::size_t>(target_label)] = cfg.k;
  } else {
    for (int i = 0; i < cfg.k; ++i) ++per_class[static_cast<std::size_t>((target_label + i) % C)];
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<std::size_t>> drawn(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    auto& pool = pools[static_cast<std::size_t>(c)];
    const auto need = static_cast<std::size_t>(per_class[static_cast<std::size_t>(c)]);
    if (pool.size() < need)
      throw DatasetError("need " + std::to_string(need) + " in-context examples of class " +
                         std::to_string(c) + ", have " + std::to_string(pool.size()));
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      drawn[static_cast<std::size_t>(c)].push_back(pool[i]);
    }
  }

  std::vector<std::size_t> order;
  switch (cfg.format) {
    case InContextFormat::kF2:
      for (int c = C - 1; c >= 0; --c)
        for (auto i : drawn[static_cast<std::size_t>(c)]) order.push_back(i);
      break;
    case InContextFormat::kF3:
      for (int c = 0; c < C; ++c)
        for (auto i : drawn[static_cast<std::size_t>(c)]) order.push_back(i);
      break;
    default:
      for (const auto& d : drawn)
        for (auto i : d) order.push_back(i);
      if (cfg.format == InContextFormat::kF1)
        for (std::size_t i = order.size(); i > 1; --i) {
          std::uniform_int_distribution<std::size_t> pick(0, i - 1);
          std::swap(order[i - 1], order[pick(rng)]);
        }
      break;
  }

  InContextPrompt out;
  const bool labeled = cfg.format != InContextFormat::kF5;
  for (auto i : order) {
    out.text += render_demo(t, helpful[i], labeled);
    out.text += kBlockSeparator;
    out.demos.push_back(helpful[i]);
  }
  out.text += target;
  return out;
}

inline std::string render_in_context(const PromptTemplate& t,
                                     std::span<const Example> helpful,
                                     const InContextConfig& cfg, int target_label,
                                     std::string_view condition = {}) {
  return build_in_context(t, helpful, cfg, target_label, condition).text;
}

// ---------------------------------------------------------------------------
// Copy filter

inline constexpr std::size_t kOverlapNgram = 8;
inline constexpr double kOverlapJaccard = 0.5;

namespace detail {

inline std::set<std::string> ngram_set(const std::vector<std::string>& toks, std::size_t n) {
  std::set<std::string> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t k = 1; k < n; ++k) g += ' ' + toks[i + k];
    out.insert(std::move(g));
  }
  return out;
}

}  // namespace detail

/// Keep a generated text unless it shares a word 8-gram with, or has a word
/// set Jaccard similarity >= 0.5 to, any in-context text.
inline bool overlap_filter(std::string_view candidate,
                           std::span<const std::string> in_context_texts) {
  const auto ctoks = tokenize(candidate);
  const std::set<std::string> cwords(ctoks.begin(), ctoks.end());
  const auto cgrams = detail::ngram_set(ctoks, kOverlapNgram);
  for (const auto& other : in_context_texts) {
    const auto otoks = tokenize(other);
    const std::set<std::string> owords(otoks.begin(), otoks.end());
    std::size_t inter = 0;
    for (const auto& w : cwords) inter += owords.count(w);
    const std::size_t uni = cwords.size() + owords.size() - inter;
    if (uni > 0 && static_cast<double>(inter) / static_cast<double>(uni) >= kOverlapJaccard)
      return false;
    for (const auto& g : detail::ngram_set(otoks, kOverlapNgram))
      if (cgrams.count(g)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Backends

/// Applies the stop string and trims; std::nullopt marks an empty completion
/// that the caller should resample.
inline std::optional<std::string> finish_completion(std::string_view raw,
                                                    const SamplingConfig& sampling) {
  std::string_view s = raw;
  if (!sampling.stop.empty()) {
    const auto pos = s.find(sampling.stop);
    if (pos != std::string_view::npos) s = s.substr(0, pos);
  }
  std::string out = trim(s);
  if (out.empty()) return std::nullopt;
  return out;
}

class EmptyCompletionError : public Error {
 public:
  using Error::Error;
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  /// Completions in request order, already passed through finish_completion.
  virtual std::vector<std::optional<std::string>> generate_batch(
      std::span<const PromptRequest> requests) = 0;

  /// Backend-private state needed to resume a run reproducibly.
  virtual nlohmann::json state() const { return nlohmann::json::object(); }
  virtual void restore(const nlohmann::json& /*state*/) {}
};

inline std::string generate(GeneratorBackend& backend, const std::string& prompt,
                            const SamplingConfig& sampling) {
  const PromptRequest req{prompt, sampling};
  auto out = backend.generate_batch(std::span<const PromptRequest>(&req, 1));
  if (out.empty() || !out[0]) throw EmptyCompletionError("empty completion");
  return *out[0];
}

}  // namespace progen

#endif  // PROGEN_GENERATOR_HPP_
