#ifndef PROGEN_ORCHESTRATOR_HPP_
#define PROGEN_ORCHESTRATOR_HPP_

// The progressive generation loop: build a validation set, then per
// iteration generate a slice (with in-context feedback on scheduled
// iterations), retrain the task model from scratch, score a stratified subset
// of the training data and keep the most helpful examples as the next
// feedback pool.
//
// With an output directory the run persists dataset.jsonl, val.jsonl and
// audit.jsonl incrementally plus a checkpoint after every iteration; resume
// truncates the files back to the checkpointed offsets and continues.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "progen/backend.hpp"
#include "progen/common.hpp"
#include "progen/config.hpp"
#include "progen/generator.hpp"
#include "progen/influence.hpp"
#include "progen/io.hpp"
#include "progen/metrics.hpp"
#include "progen/model.hpp"

namespace progen {

class ResampleCapError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Seed derivation tags.
inline constexpr std::uint64_t kTagSlot = 0x51;
inline constexpr std::uint64_t kTagSubset = 0x5b;
inline constexpr std::uint64_t kTagInfluence = 0x1f;
inline constexpr std::uint64_t kTagTest = 0x7e;

struct IterationRecord {
  int iteration = 0;
  bool used_feedback = false;
  int generated = 0;
  int resampled_empty = 0;
  int resampled_overlap = 0;
  std::size_t train_size = 0;
  std::size_t scored = 0;
  EvalResult val;  // current model on the (generated, possibly noisy) validation set
  std::optional<EvalResult> test;    // clean test set, when one is available
  std::optional<double> slice_correctness;  // oracle agreement of this slice's labels
  double train_objective = 0.0;
  std::vector<std::int64_t> helpful_ids;
  std::uint64_t model_fingerprint = 0;

  bool operator==(const IterationRecord&) const = default;
};

inline json to_json(const EvalResult& r) {
  return {{"accuracy", r.accuracy}, {"ce_loss", r.mean_ce_loss}, {"rce_loss", r.mean_rce_loss}};
}

inline EvalResult eval_result_from_json(const json& j) {
  return {j.at("accuracy").get<double>(), j.at("ce_loss").get<double>(),
          j.at("rce_loss").get<double>()};
}

inline json to_json(const IterationRecord& r) {
  json j{{"iteration", r.iteration},
         {"used_feedback", r.used_feedback},
         {"generated", r.generated},
         {"resampled_empty", r.resampled_empty},
         {"resampled_overlap", r.resampled_overlap},
         {"train_size", r.train_size},
         {"scored", r.scored},
         {"val", to_json(r.val)},
         {"train_objective", r.train_objective},
         {"helpful_ids", r.helpful_ids},
         {"model_fingerprint", hex64(r.model_fingerprint)}};
  j["test"] = r.test ? to_json(*r.test) : json(nullptr);
  j["slice_correctness"] = r.slice_correctness ? json(*r.slice_correctness) : json(nullptr);
  return j;
}

inline IterationRecord iteration_record_from_json(const json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.used_feedback = j.at("used_feedback").get<bool>();
  r.generated = j.at("generated").get<int>();
  r.resampled_empty = j.at("resampled_empty").get<int>();
  r.resampled_overlap = j.at("resampled_overlap").get<int>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.scored = j.at("scored").get<std::size_t>();
  r.val = eval_result_from_json(j.at("val"));
  if (!j.at("test").is_null()) r.test = eval_result_from_json(j["test"]);
  if (!j.at("slice_correctness").is_null()) r.slice_correctness = j["slice_correctness"].get<double>();
  r.train_objective = j.at("train_objective").get<double>();
  r.helpful_ids = j.at("helpful_ids").get<std::vector<std::int64_t>>();
  r.model_fingerprint = std::stoull(j.at("model_fingerprint").get<std::string>(), nullptr, 16);
  return r;
}

struct RunState {
  Dataset d_train;
  Dataset d_val;
  Dataset d_helpful;  // in selection order, influence_score set
  int iteration = 0;
  std::int64_t next_id = 0;
  ModelParams model;
  json backend_state = json::object();
  std::vector<IterationRecord> audit;

  bool operator==(const RunState&) const = default;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  bool resume = false;
  std::optional<int> stop_after_iteration;  // leave a resumable checkpoint and return
  Labeler oracle;                           // enables slice_correctness
  Dataset test_set;                         // enables per-iteration test metrics
  std::vector<std::string>* prompt_log = nullptr;  // every review prompt, in request order
};

struct RunResult {
  RunState state;
  InfluenceReport last_report;
};

// ---------------------------------------------------------------------------
// Schedule and sampling helpers

/// Feedback on even iterations under the default schedule, never without a
/// helpful pool.
inline bool feedback_schedule(int t, bool have_helpful,
                              FeedbackSchedule schedule = FeedbackSchedule::kAlternate) {
  if (t < 1) throw ConfigError("iterations are numbered from 1");
  if (!have_helpful) return false;
  switch (schedule) {
    case FeedbackSchedule::kAlternate: return t % 2 == 0;
    case FeedbackSchedule::kAlways: return true;
    case FeedbackSchedule::kNever: return false;
  }
  return false;
}

/// Largest usable k <= cfg.k for this pool, 0 if none. Formats that need
/// target-class examples shrink to what the pool holds.
inline int feasible_k(const InContextConfig& cfg, std::span<const Example> helpful,
                      int target_label, int num_classes) {
  if (cfg.format == InContextFormat::kBase) return 0;
  std::vector<int> have(static_cast<std::size_t>(num_classes), 0);
  for (const auto& e : helpful)
    if (e.label >= 0 && e.label < num_classes) ++have[static_cast<std::size_t>(e.label)];
  const bool target_only =
      cfg.format == InContextFormat::kF4 || cfg.format == InContextFormat::kF5;
  for (int k = cfg.k; k >= 1; --k) {
    std::vector<int> need(static_cast<std::size_t>(num_classes), 0);
    if (target_only) need[static_cast<std::size_t>(target_label)] = k;
    else
      for (int i = 0; i < k; ++i) ++need[static_cast<std::size_t>((target_label + i) % num_classes)];
    bool ok = true;
    for (int c = 0; c < num_classes; ++c) ok &= need[static_cast<std::size_t>(c)] <= have[static_cast<std::size_t>(c)];
    if (ok) return k;
  }
  return 0;
}

/// Per-class stratified sample of min(n, |data|) examples, returned in
/// dataset order. Class quotas follow largest remainders.
inline Dataset stratified_subset(std::span<const Example> data, int n, int num_classes,
                                 std::uint64_t seed) {
  const std::size_t total = data.size();
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(n), total);
  if (want == total) return Dataset(data.begin(), data.end());
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < total; ++i)
    by_class[static_cast<std::size_t>(data[i].label)].push_back(i);

  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = static_cast<double>(want) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(total);
    quota[c] = static_cast<std::size_t>(exact);
    assigned += quota[c];
    remainders.emplace_back(-(exact - static_cast<double>(quota[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < want; ++i, ++assigned) ++quota[remainders[i].second];

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    for (std::size_t i = 0; i < quota[c]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen.push_back(pool[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  Dataset out;
  for (auto i : chosen) out.push_back(data[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Generation

struct SliceStats {
  int resampled_empty = 0;
  int resampled_overlap = 0;
};

/// Fills `count` labeled slots. Each slot's prompt depends only on
/// (master_seed, t, slot, attempt); rejected slots are retried in later
/// rounds so a batch of requests can run concurrently.
inline Dataset generate_examples(GeneratorBackend& backend, const ProgenConfig& cfg, int t,
                                 int count, std::span<const Example> helpful, bool use_feedback,
                                 std::int64_t first_id, SliceStats* stats = nullptr,
                                 std::vector<std::string>* prompt_log = nullptr) {
  if (use_feedback && helpful.empty()) throw DatasetError("feedback needs a helpful pool");
  const int C = cfg.num_classes();
  const auto& tmpl = cfg.prompt;
  const auto n = static_cast<std::size_t>(count);
  std::vector<std::optional<std::string>> texts(n);
  std::vector<int> attempts(n, 0);
  std::vector<std::size_t> pending(n);
  for (std::size_t j = 0; j < n; ++j) pending[j] = j;
  SliceStats local;

  while (!pending.empty()) {
    std::vector<std::string> conditions(pending.size());
    if (tmpl.id == TemplateId::kP3) {
      std::vector<PromptRequest> creq(pending.size(),
                                      PromptRequest{render_condition_prompt(tmpl), cfg.sampling});
      const auto got = backend.generate_batch(creq);
      for (std::size_t i = 0; i < pending.size(); ++i)
        conditions[i] = got[i].value_or(tmpl.task_word);
    }

    std::vector<PromptRequest> reqs;
    std::vector<std::vector<std::string>> demo_texts(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const auto j = pending[i];
      const int label = sample_label(C, t, static_cast<std::int64_t>(j));
      std::string prompt;
      InContextConfig ic = cfg.incontext;
      ic.seed = derive_seed(cfg.master_seed,
                            {kTagSlot, static_cast<std::uint64_t>(t), j,
                             static_cast<std::uint64_t>(attempts[j]), cfg.incontext.seed});
      ic.k = use_feedback ? feasible_k(ic, helpful, label, C) : 0;
      if (ic.k == 0) {
        prompt = render_zero_shot(tmpl, label, conditions[i]);
      } else {
        auto built = build_in_context(tmpl, helpful, ic, label, conditions[i]);
        prompt = std::move(built.text);
        for (const auto& d : built.demos) demo_texts[i].push_back(d.text);
      }
      if (prompt_log) prompt_log->push_back(prompt);
      reqs.push_back({std::move(prompt), cfg.sampling});
    }

    const auto got = backend.generate_batch(reqs);
    std::vector<std::size_t> retry;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const auto j = pending[i];
      bool ok = got[i].has_value();
      if (!ok) ++local.resampled_empty;
      if (ok && cfg.filter_overlap && !overlap_filter(*got[i], demo_texts[i])) {
        ok = false;
        ++local.resampled_overlap;
      }
      if (ok) {
        texts[j] = got[i];
        continue;
      }
      if (++attempts[j] > cfg.max_resamples)
        throw ResampleCapError("slot " + std::to_string(j) + " of iteration " + std::to_string(t) +
                               " exceeded " + std::to_string(cfg.max_resamples) + " resamples");
      retry.push_back(j);
    }
    pending = std::move(retry);
  }

  if (stats) {
    stats->resampled_empty += local.resampled_empty;
    stats->resampled_overlap += local.resampled_overlap;
  }
  Dataset out;
  for (std::size_t j = 0; j < n; ++j)
    out.push_back(Example{first_id + static_cast<std::int64_t>(j), *texts[j],
                          sample_label(C, t, static_cast<std::int64_t>(j)), t, use_feedback,
                          std::nullopt});
  return out;
}

/// Zero-shot, class-balanced, iteration 0.
inline Dataset build_validation(GeneratorBackend& backend, const ProgenConfig& cfg,
                                std::int64_t first_id = 0) {
  cfg.validate();
  return generate_examples(backend, cfg, 0, cfg.val_size, {}, false, first_id);
}

inline Dataset generate_slice(GeneratorBackend& backend, const ProgenConfig& cfg,
                              RunState& state, bool use_feedback, SliceStats* stats = nullptr,
                              std::vector<std::string>* prompt_log = nullptr) {
  auto slice = generate_examples(backend, cfg, state.iteration + 1, cfg.feedback_interval_I,
                                 state.d_helpful, use_feedback, state.next_id, stats, prompt_log);
  state.next_id += cfg.feedback_interval_I;
  return slice;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kDatasetFile = "dataset.jsonl";
inline constexpr const char* kValFile = "val.jsonl";
inline constexpr const char* kAuditFile = "audit.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kReportFile = "report.json";

struct Checkpoint {
  std::uint64_t config_fingerprint = 0;
  int iteration = 0;
  std::int64_t next_id = 0;
  json backend_state = json::object();
  std::vector<std::pair<std::int64_t, double>> helpful;  // id, score in selection order
  std::uintmax_t dataset_bytes = 0;
  std::uintmax_t val_bytes = 0;
  std::uintmax_t audit_bytes = 0;
};

inline json to_json(const Checkpoint& c) {
  json helpful = json::array();
  for (const auto& [id, s] : c.helpful) helpful.push_back({{"id", id}, {"score", s}});
  return {{"format", "progen-checkpoint-v1"},
          {"config_fingerprint", hex64(c.config_fingerprint)},
          {"iteration", c.iteration},
          {"next_id", c.next_id},
          {"backend_state", c.backend_state},
          {"helpful", std::move(helpful)},
          {"dataset_bytes", c.dataset_bytes},
          {"val_bytes", c.val_bytes},
          {"audit_bytes", c.audit_bytes}};
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const IoError& e) {
    throw CheckpointError(std::string("missing checkpoint: ") + e.what());
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "progen-checkpoint-v1") throw CheckpointError("unknown checkpoint format");
    Checkpoint c;
    c.config_fingerprint = std::stoull(j.at("config_fingerprint").get<std::string>(), nullptr, 16);
    c.iteration = j.at("iteration").get<int>();
    c.next_id = j.at("next_id").get<std::int64_t>();
    c.backend_state = j.at("backend_state");
    for (const auto& h : j.at("helpful"))
      c.helpful.emplace_back(h.at("id").get<std::int64_t>(), h.at("score").get<double>());
    c.dataset_bytes = j.at("dataset_bytes").get<std::uintmax_t>();
    c.val_bytes = j.at("val_bytes").get<std::uintmax_t>();
    c.audit_bytes = j.at("audit_bytes").get<std::uintmax_t>();
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const std::logic_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, to_json(c).dump(2) + "\n");
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline Dataset read_prefix(const std::filesystem::path& path, std::uintmax_t bytes) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size < bytes) throw CheckpointError(path.string() + " is shorter than its checkpoint");
  if (size > bytes) std::filesystem::resize_file(path, bytes);
  try {
    return read_jsonl(path);
  } catch (const SchemaError& e) {
    throw CheckpointError(std::string("corrupt run file: ") + e.what());
  }
}

}  // namespace detail

/// Rebuilds the state saved by a checkpoint in `out_dir`. Files are truncated
/// to the checkpointed offsets; the model is retrained (training is
/// deterministic) when at least one iteration has completed.
inline RunState load_state(const std::filesystem::path& out_dir, const ProgenConfig& cfg) {
  const auto cp = read_checkpoint(out_dir / kCheckpointFile);
  if (cp.config_fingerprint != config_fingerprint(cfg))
    throw CheckpointError("checkpoint was written by a different configuration");
  RunState s;
  s.iteration = cp.iteration;
  s.next_id = cp.next_id;
  s.backend_state = cp.backend_state;
  s.d_val = detail::read_prefix(out_dir / kValFile, cp.val_bytes);
  s.d_train = detail::read_prefix(out_dir / kDatasetFile, cp.dataset_bytes);
  {
    std::error_code ec;
    const auto path = out_dir / kAuditFile;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size < cp.audit_bytes) throw CheckpointError("audit log is shorter than its checkpoint");
    if (size > cp.audit_bytes) std::filesystem::resize_file(path, cp.audit_bytes);
    const auto text = read_text_file(path);
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      try {
        s.audit.push_back(iteration_record_from_json(json::parse(text.substr(start, end - start))));
      } catch (const std::exception& e) {
        throw CheckpointError(std::string("corrupt audit log: ") + e.what());
      }
      start = end + 1;
    }
  }
  if (s.d_train.size() != static_cast<std::size_t>(cp.iteration) *
                              static_cast<std::size_t>(cfg.feedback_interval_I) ||
      s.audit.size() != static_cast<std::size_t>(cp.iteration))
    throw CheckpointError("run files disagree with the checkpoint iteration");
  std::map<std::int64_t, const Example*> by_id;
  for (const auto& e : s.d_train) by_id[e.id] = &e;
  for (const auto& [id, score] : cp.helpful) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw CheckpointError("helpful id " + std::to_string(id) + " not in dataset");
    Example e = *it->second;
    e.influence_score = score;
    s.d_helpful.push_back(std::move(e));
  }
  if (s.iteration > 0)
    s.model = train(s.d_train, ModelSpec{cfg.features, cfg.num_classes()}, cfg.model_hyper);
  return s;
}

// ---------------------------------------------------------------------------
// The loop

class ProgenRun {
 public:
  ProgenRun(ProgenConfig cfg, GeneratorBackend& backend, RunOptions opts = {})
      : cfg_(std::move(cfg)), backend_(backend), opts_(std::move(opts)) {
    cfg_.validate();
  }

  RunResult run() {
    RunState state;
    if (opts_.out_dir) std::filesystem::create_directories(*opts_.out_dir);
    if (opts_.resume) {
      if (!opts_.out_dir) throw ConfigError("resume needs an output directory");
      state = load_state(*opts_.out_dir, cfg_);
      backend_.restore(state.backend_state);
    } else {
      state.d_val = build_validation(backend_, cfg_, state.next_id);
      state.next_id += cfg_.val_size;
      if (opts_.out_dir) {
        write_jsonl(dir() / kValFile, state.d_val);
        write_text_file(dir() / kDatasetFile, "");
        write_text_file(dir() / kAuditFile, "");
        save_checkpoint(state);
      }
    }

    const ModelSpec spec{cfg_.features, cfg_.num_classes()};
    const auto val = featurize_dataset(state.d_val, spec.features, spec.num_classes);
    const auto test = opts_.test_set.empty()
                          ? std::optional<FeaturizedSet>{}
                          : featurize_dataset(opts_.test_set, spec.features, spec.num_classes);
    InfluenceReport report;
    bool scored = false;

    while (state.iteration < cfg_.iterations_T) {
      if (opts_.stop_after_iteration && state.iteration >= *opts_.stop_after_iteration) break;
      const int t = state.iteration + 1;
      IterationRecord rec;
      rec.iteration = t;
      rec.used_feedback = feedback_schedule(t, !state.d_helpful.empty(), cfg_.feedback_schedule);

      SliceStats stats;
      const auto slice = generate_slice(backend_, cfg_, state, rec.used_feedback, &stats,
                                        opts_.prompt_log);
      rec.generated = static_cast<int>(slice.size());
      rec.resampled_empty = stats.resampled_empty;
      rec.resampled_overlap = stats.resampled_overlap;
      if (opts_.oracle) rec.slice_correctness = correctness(slice, opts_.oracle);
      state.d_train.insert(state.d_train.end(), slice.begin(), slice.end());

      const auto train_set = featurize_dataset(state.d_train, spec.features, spec.num_classes);
      TrainHyper hyper = cfg_.model_hyper;
      TrainTrace trace;
      state.model = train(train_set, hyper, &trace);
      rec.train_objective = trace.objective.empty() ? 0.0 : trace.objective.back();
      rec.train_size = state.d_train.size();
      rec.model_fingerprint = state.model.fingerprint();
      rec.val = evaluate(state.model, val, cfg_.influence.val_loss.rce_constant_A);
      if (test) rec.test = evaluate(state.model, *test, cfg_.influence.val_loss.rce_constant_A);

      const auto subset =
          stratified_subset(state.d_train, cfg_.score_subset_n, spec.num_classes,
                            derive_seed(cfg_.master_seed, {kTagSubset, static_cast<std::uint64_t>(t)}));
      InfluenceConfig ic = cfg_.influence;
      ic.stochastic.seed = derive_seed(cfg_.master_seed,
                                       {kTagInfluence, static_cast<std::uint64_t>(t),
                                        cfg_.influence.stochastic.seed});
      report = influence_scores(state.model,
                                featurize_dataset(subset, spec.features, spec.num_classes),
                                train_set, val, ic);
      rec.scored = subset.size();
      scored = true;
      state.d_helpful = select_helpful(report, subset, cfg_.top_M);
      for (const auto& h : state.d_helpful) rec.helpful_ids.push_back(h.id);

      state.iteration = t;
      state.backend_state = backend_.state();
      state.audit.push_back(rec);
      if (opts_.out_dir) {
        append_text_file(dir() / kDatasetFile, dump_jsonl(slice));
        append_text_file(dir() / kAuditFile, to_json(rec).dump() + "\n");
        save_checkpoint(state);
      }
    }

    if (state.iteration == cfg_.iterations_T && !scored) {
      // Resumed after the last iteration: recompute the final report.
      report = final_report(state, spec, val);
    }
    if (state.iteration == cfg_.iterations_T) {
      for (auto& e : state.d_train) {
        auto it = report.scores.find(e.id);
        e.influence_score = it == report.scores.end() ? std::nullopt : std::optional(it->second);
      }
      if (opts_.out_dir) {
        write_jsonl(dir() / kDatasetFile, state.d_train);
        write_model(dir() / kModelFile, state.model);
        write_report(dir() / kReportFile, report);
        save_checkpoint(state);  // offsets now cover the scored dataset file
      }
    }
    return {std::move(state), std::move(report)};
  }

 private:
  const std::filesystem::path& dir() const { return *opts_.out_dir; }

  InfluenceReport final_report(const RunState& state, const ModelSpec& spec,
                               const FeaturizedSet& val) const {
    const int t = state.iteration;
    const auto subset =
        stratified_subset(state.d_train, cfg_.score_subset_n, spec.num_classes,
                          derive_seed(cfg_.master_seed, {kTagSubset, static_cast<std::uint64_t>(t)}));
    InfluenceConfig ic = cfg_.influence;
    ic.stochastic.seed = derive_seed(
        cfg_.master_seed, {kTagInfluence, static_cast<std::uint64_t>(t), cfg_.influence.stochastic.seed});
    return influence_scores(state.model, featurize_dataset(subset, spec.features, spec.num_classes),
                            featurize_dataset(state.d_train, spec.features, spec.num_classes), val,
                            ic);
  }

  void save_checkpoint(const RunState& state) const {
    Checkpoint cp;
    cp.config_fingerprint = config_fingerprint(cfg_);
    cp.iteration = state.iteration;
    cp.next_id = state.next_id;
    cp.backend_state = backend_.state();
    for (const auto& h : state.d_helpful) cp.helpful.emplace_back(h.id, *h.influence_score);
    cp.dataset_bytes = std::filesystem::file_size(dir() / kDatasetFile);
    cp.val_bytes = std::filesystem::file_size(dir() / kValFile);
    cp.audit_bytes = std::filesystem::file_size(dir() / kAuditFile);
    write_checkpoint(dir() / kCheckpointFile, cp);
  }

  ProgenConfig cfg_;
  GeneratorBackend& backend_;
  RunOptions opts_;
};

inline RunResult run_progen(const ProgenConfig& cfg, GeneratorBackend& backend,
                            RunOptions opts = {}) {
  return ProgenRun(cfg, backend, std::move(opts)).run();
}

/// Convenience for the mock world: builds the backend, the clean test set and
/// the ground-truth oracle from the config.
inline RunResult run_progen_mock(const ProgenConfig& cfg, RunOptions opts = {}) {
  cfg.validate();
  if (cfg.backend.kind != BackendKind::kMock) throw ConfigError("run_progen_mock needs a MOCK backend");
  MockBackend backend(*cfg.backend.mock, cfg.prompt.label_words);
  const MockWorld& world = backend.world();
  opts.oracle = [&world](const std::string& s) { return world.true_label(s); };
  if (cfg.test_size > 0)
    opts.test_set = world.sample_clean(static_cast<std::size_t>(cfg.test_size),
                                       derive_seed(cfg.master_seed, {kTagTest}), -1'000'000'000);
  return run_progen(cfg, backend, std::move(opts));
}

}  // namespace progen

#endif  // PROGEN_ORCHESTRATOR_HPP_
