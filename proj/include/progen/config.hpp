#ifndef PROGEN_CONFIG_HPP_
#define PROGEN_CONFIG_HPP_

// The run configuration and its JSON form. The file mirrors ProgenConfig
// field for field; omitted fields keep their defaults, unknown fields are
// rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "progen/backend.hpp"
#include "progen/common.hpp"
#include "progen/generator.hpp"
#include "progen/influence.hpp"
#include "progen/io.hpp"
#include "progen/model.hpp"

namespace progen {

enum class FeedbackSchedule { kAlternate, kAlways, kNever };

inline const char* to_string(FeedbackSchedule s) {
  switch (s) {
    case FeedbackSchedule::kAlternate: return "alternate";
    case FeedbackSchedule::kAlways: return "always";
    case FeedbackSchedule::kNever: return "never";
  }
  return "?";
}

inline FeedbackSchedule parse_schedule(std::string_view s) {
  if (s == "alternate") return FeedbackSchedule::kAlternate;
  if (s == "always") return FeedbackSchedule::kAlways;
  if (s == "never") return FeedbackSchedule::kNever;
  throw ConfigError("feedback_schedule must be alternate, always or never");
}

struct ProgenConfig {
  int feedback_interval_I = 200;
  int iterations_T = 10;
  int top_M = 50;
  int score_subset_n = 2000;
  int val_size = 1000;
  InContextConfig incontext;
  SamplingConfig sampling;
  PromptTemplate prompt = make_template(TemplateId::kP2, "movie");
  BackendConfig backend;
  FeatureConfig features;
  TrainHyper model_hyper;
  InfluenceConfig influence;
  std::uint64_t master_seed = 0;
  FeedbackSchedule feedback_schedule = FeedbackSchedule::kAlternate;
  int max_resamples = 20;  // per slot, on empty or overlapping completions
  bool filter_overlap = true;
  int test_size = 1000;  // clean test set drawn from the mock world, if any

  int num_classes() const { return prompt.num_classes(); }

  void validate() const {
    if (feedback_interval_I < 1) throw ConfigError("feedback_interval_I must be >= 1");
    if (iterations_T < 1) throw ConfigError("iterations_T must be >= 1");
    if (top_M < 1) throw ConfigError("top_M must be >= 1");
    if (score_subset_n < top_M) throw ConfigError("score_subset_n must be >= top_M");
    if (val_size < 2 || val_size < num_classes())
      throw ConfigError("val_size must be >= 2 and cover every class");
    if (max_resamples < 0) throw ConfigError("max_resamples must be >= 0");
    if (test_size < 0) throw ConfigError("test_size must be >= 0");
    prompt.validate();
    incontext.validate();
    sampling.validate();
    backend.validate();
    features.validate();
    if (!(model_hyper.l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be >= 0");
    if (model_hyper.max_iters < 1 || model_hyper.lbfgs_memory < 1 || !(model_hyper.tol > 0.0))
      throw ConfigError("invalid training hyperparameters");
    influence.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const PromptTemplate& t) {
  return {{"id", to_string(t.id)},
          {"task_word", t.task_word},
          {"pattern", t.pattern},
          {"demo_pattern", t.demo_pattern},
          {"unlabeled_pattern", t.unlabeled_pattern},
          {"condition_prompt", t.condition_prompt},
          {"label_words", t.label_words}};
}

/// Starts from make_template(id, task_word); any other field overrides it.
inline PromptTemplate template_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"id", "task_word", "pattern", "demo_pattern", "unlabeled_pattern",
                          "condition_prompt", "label_words"},
                         "template");
  auto t = make_template(parse_template_id(detail::get_or<std::string>(j, "id", "P2")),
                         detail::get_or<std::string>(j, "task_word", "movie"));
  if (j.contains("task_word")) t.task_word = j["task_word"].get<std::string>();
  t.pattern = detail::get_or(j, "pattern", t.pattern);
  t.demo_pattern = detail::get_or(j, "demo_pattern", t.demo_pattern);
  t.unlabeled_pattern = detail::get_or(j, "unlabeled_pattern", t.unlabeled_pattern);
  t.condition_prompt = detail::get_or(j, "condition_prompt", t.condition_prompt);
  t.label_words = detail::get_or(j, "label_words", t.label_words);
  t.validate();
  return t;
}

inline json to_json(const InContextConfig& c) {
  return {{"format", to_string(c.format)}, {"k", c.k}, {"seed", c.seed}};
}

inline InContextConfig incontext_from_json(const json& j) {
  detail::reject_unknown(j, {"format", "k", "seed"}, "incontext");
  InContextConfig c;
  c.format = parse_format(detail::get_or<std::string>(j, "format", to_string(c.format)));
  c.k = detail::get_or(j, "k", c.format == InContextFormat::kBase ? 0 : c.k);
  c.seed = detail::get_or(j, "seed", c.seed);
  c.validate();
  return c;
}

inline json to_json(const SamplingConfig& s) {
  return {{"top_p", s.top_p},
          {"temperature", s.temperature},
          {"max_tokens", s.max_tokens},
          {"stop", s.stop}};
}

inline SamplingConfig sampling_from_json(const json& j) {
  detail::reject_unknown(j, {"top_p", "temperature", "max_tokens", "stop"}, "sampling");
  SamplingConfig s;
  s.top_p = detail::get_or(j, "top_p", s.top_p);
  s.temperature = detail::get_or(j, "temperature", s.temperature);
  s.max_tokens = detail::get_or(j, "max_tokens", s.max_tokens);
  s.stop = detail::get_or(j, "stop", s.stop);
  s.validate();
  return s;
}

inline json to_json(const MockWorldConfig& m) {
  return {{"seed", m.seed},
          {"noise_rate", m.noise_rate},
          {"icl_strength", m.icl_strength},
          {"lexicon_size", m.lexicon_size},
          {"filler_size", m.filler_size},
          {"sentiment_words", m.sentiment_words},
          {"min_fillers", m.min_fillers},
          {"max_fillers", m.max_fillers},
          {"zipf_exponent", m.zipf_exponent},
          {"max_borrowed", m.max_borrowed}};
}

inline MockWorldConfig mock_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"seed", "noise_rate", "icl_strength", "lexicon_size", "filler_size",
                          "sentiment_words", "min_fillers", "max_fillers", "zipf_exponent",
                          "max_borrowed"},
                         "mock");
  MockWorldConfig m;
  m.seed = detail::get_or(j, "seed", m.seed);
  m.noise_rate = detail::get_or(j, "noise_rate", m.noise_rate);
  m.icl_strength = detail::get_or(j, "icl_strength", m.icl_strength);
  m.lexicon_size = detail::get_or(j, "lexicon_size", m.lexicon_size);
  m.filler_size = detail::get_or(j, "filler_size", m.filler_size);
  m.sentiment_words = detail::get_or(j, "sentiment_words", m.sentiment_words);
  m.min_fillers = detail::get_or(j, "min_fillers", m.min_fillers);
  m.max_fillers = detail::get_or(j, "max_fillers", m.max_fillers);
  m.zipf_exponent = detail::get_or(j, "zipf_exponent", m.zipf_exponent);
  m.max_borrowed = detail::get_or(j, "max_borrowed", m.max_borrowed);
  m.validate();
  return m;
}

inline json to_json(const HttpConfig& h) {
  return {{"base_url", h.base_url},
          {"model_name", h.model_name},
          {"auth_env_var", h.auth_env_var},
          {"timeout_s", h.timeout_s},
          {"max_inflight", h.max_inflight},
          {"max_retries", h.max_retries},
          {"initial_backoff_s", h.initial_backoff_s},
          {"max_backoff_s", h.max_backoff_s}};
}

inline HttpConfig http_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"base_url", "model_name", "auth_env_var", "timeout_s", "max_inflight",
                          "max_retries", "initial_backoff_s", "max_backoff_s"},
                         "http");
  HttpConfig h;
  h.base_url = detail::get_or(j, "base_url", h.base_url);
  h.model_name = detail::get_or(j, "model_name", h.model_name);
  h.auth_env_var = detail::get_or(j, "auth_env_var", h.auth_env_var);
  h.timeout_s = detail::get_or(j, "timeout_s", h.timeout_s);
  h.max_inflight = detail::get_or(j, "max_inflight", h.max_inflight);
  h.max_retries = detail::get_or(j, "max_retries", h.max_retries);
  h.initial_backoff_s = detail::get_or(j, "initial_backoff_s", h.initial_backoff_s);
  h.max_backoff_s = detail::get_or(j, "max_backoff_s", h.max_backoff_s);
  h.validate();
  return h;
}

inline json to_json(const BackendConfig& b) {
  json j{{"kind", b.kind == BackendKind::kHttp ? "HTTP" : "MOCK"}};
  if (b.http) j["http"] = to_json(*b.http);
  if (b.mock) j["mock"] = to_json(*b.mock);
  return j;
}

inline BackendConfig backend_from_json(const json& j) {
  detail::reject_unknown(j, {"kind", "http", "mock"}, "backend");
  BackendConfig b;
  const auto kind = detail::get_or<std::string>(j, "kind", "MOCK");
  if (kind == "HTTP") b.kind = BackendKind::kHttp;
  else if (kind == "MOCK") b.kind = BackendKind::kMock;
  else throw ConfigError("backend kind must be HTTP or MOCK");
  if (j.contains("http")) b.http = http_from_json(j["http"]);
  if (j.contains("mock")) b.mock = mock_from_json(j["mock"]);
  b.validate();
  return b;
}

inline json to_json(const TrainHyper& h) {
  return {{"l2_lambda", h.l2_lambda},
          {"max_iters", h.max_iters},
          {"tol", h.tol},
          {"seed", h.seed},
          {"lbfgs_memory", h.lbfgs_memory}};
}

inline TrainHyper train_hyper_from_json(const json& j) {
  detail::reject_unknown(j, {"l2_lambda", "max_iters", "tol", "seed", "lbfgs_memory"},
                         "model_hyper");
  TrainHyper h;
  h.l2_lambda = detail::get_or(j, "l2_lambda", h.l2_lambda);
  h.max_iters = detail::get_or(j, "max_iters", h.max_iters);
  h.tol = detail::get_or(j, "tol", h.tol);
  h.seed = detail::get_or(j, "seed", h.seed);
  h.lbfgs_memory = detail::get_or(j, "lbfgs_memory", h.lbfgs_memory);
  return h;
}

inline json to_json(const ProgenConfig& c) {
  return {{"feedback_interval_I", c.feedback_interval_I},
          {"iterations_T", c.iterations_T},
          {"top_M", c.top_M},
          {"score_subset_n", c.score_subset_n},
          {"val_size", c.val_size},
          {"incontext", to_json(c.incontext)},
          {"sampling", to_json(c.sampling)},
          {"template", to_json(c.prompt)},
          {"backend", to_json(c.backend)},
          {"features", to_json(c.features)},
          {"model_hyper", to_json(c.model_hyper)},
          {"influence", to_json(c.influence)},
          {"master_seed", c.master_seed},
          {"feedback_schedule", to_string(c.feedback_schedule)},
          {"max_resamples", c.max_resamples},
          {"filter_overlap", c.filter_overlap},
          {"test_size", c.test_size}};
}

inline ProgenConfig config_from_json(const json& j) {
  detail::reject_unknown(
      j,
      {"feedback_interval_I", "iterations_T", "top_M", "score_subset_n", "val_size", "incontext",
       "sampling", "template", "backend", "features", "model_hyper", "influence", "master_seed",
       "feedback_schedule", "max_resamples", "filter_overlap", "test_size"},
      "config");
  ProgenConfig c;
  c.feedback_interval_I = detail::get_or(j, "feedback_interval_I", c.feedback_interval_I);
  c.iterations_T = detail::get_or(j, "iterations_T", c.iterations_T);
  c.top_M = detail::get_or(j, "top_M", c.top_M);
  c.score_subset_n = detail::get_or(j, "score_subset_n", c.score_subset_n);
  c.val_size = detail::get_or(j, "val_size", c.val_size);
  if (j.contains("incontext")) c.incontext = incontext_from_json(j["incontext"]);
  if (j.contains("sampling")) c.sampling = sampling_from_json(j["sampling"]);
  if (j.contains("template")) c.prompt = template_from_json(j["template"]);
  if (!j.contains("backend")) throw ConfigError("config needs a backend block");
  c.backend = backend_from_json(j["backend"]);
  if (j.contains("features")) c.features = feature_config_from_json(j["features"]);
  if (j.contains("model_hyper")) c.model_hyper = train_hyper_from_json(j["model_hyper"]);
  if (j.contains("influence")) c.influence = influence_config_from_json(j["influence"]);
  c.master_seed = detail::get_or(j, "master_seed", c.master_seed);
  c.feedback_schedule =
      parse_schedule(detail::get_or<std::string>(j, "feedback_schedule", "alternate"));
  c.max_resamples = detail::get_or(j, "max_resamples", c.max_resamples);
  c.filter_overlap = detail::get_or(j, "filter_overlap", c.filter_overlap);
  c.test_size = detail::get_or(j, "test_size", c.test_size);
  c.validate();
  return c;
}

inline ProgenConfig read_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Hash of the canonical (sorted-key) JSON form.
inline std::uint64_t config_fingerprint(const ProgenConfig& c) {
  return fnv1a(to_json(c).dump());
}

}  // namespace progen

#endif  // PROGEN_CONFIG_HPP_
