#ifndef PROGEN_IO_HPP_
#define PROGEN_IO_HPP_

// On-disk formats: JSONL datasets, JSON models and influence reports, and
// CSV removal curves. Readers validate strictly and report line numbers.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "progen/common.hpp"
#include "progen/influence.hpp"
#include "progen/metrics.hpp"
#include "progen/model.hpp"

namespace progen {

using json = nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline void append_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Examples

inline json example_to_json(const Example& e) {
  json j;
  j["id"] = e.id;
  j["text"] = e.text;
  j["label"] = e.label;
  j["iteration"] = e.iteration;
  j["used_feedback"] = e.used_feedback;
  j["influence_score"] = e.influence_score ? json(*e.influence_score) : json(nullptr);
  return j;
}

/// One JSONL line, newline included.
inline std::string example_line(const Example& e) { return example_to_json(e).dump() + "\n"; }

inline Example example_from_json(const json& j, std::size_t line) {
  auto fail = [line](const std::string& why) -> SchemaError {
    return SchemaError("line " + std::to_string(line) + ": " + why, line);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  static const char* kKeys[] = {"id", "text", "label", "iteration", "used_feedback",
                                "influence_score"};
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : kKeys) known |= k == key;
    if (!known) throw fail("unknown field '" + k + "'");
  }
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw fail(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  Example e;
  const auto& id = need("id");
  if (!id.is_number_integer()) throw fail("id must be an integer");
  e.id = id.get<std::int64_t>();
  const auto& text = need("text");
  if (!text.is_string()) throw fail("text must be a string");
  e.text = text.get<std::string>();
  const auto& label = need("label");
  if (!label.is_number_integer() || label.get<std::int64_t>() < 0)
    throw fail("label must be a non-negative integer");
  e.label = label.get<int>();
  const auto& it = need("iteration");
  if (!it.is_number_integer() || it.get<std::int64_t>() < 0)
    throw fail("iteration must be a non-negative integer");
  e.iteration = it.get<int>();
  const auto& fb = need("used_feedback");
  if (!fb.is_boolean()) throw fail("used_feedback must be a boolean");
  e.used_feedback = fb.get<bool>();
  if (j.contains("influence_score") && !j["influence_score"].is_null()) {
    if (!j["influence_score"].is_number()) throw fail("influence_score must be a number or null");
    e.influence_score = j["influence_score"].get<double>();
  }
  return e;
}

inline Dataset parse_jsonl(std::string_view content) {
  Dataset out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    ++line_no;
    const auto line = content.substr(start, end - start);
    start = end + 1;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")",
                        line_no);
    }
    out.push_back(example_from_json(j, line_no));
  }
  return out;
}

inline Dataset read_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(read_text_file(path));
}

inline std::string dump_jsonl(std::span<const Example> data) {
  std::string out;
  for (const auto& e : data) out += example_line(e);
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, std::span<const Example> data) {
  write_text_file(path, dump_jsonl(data));
}

// ---------------------------------------------------------------------------
// Shared config pieces

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                           std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok |= k == key;
    if (!ok) throw ConfigError("unknown field '" + k + "' in " + std::string(where));
  }
}

}  // namespace detail

inline json to_json(const FeatureConfig& f) {
  return {{"hash_seed", f.hash_seed}, {"ngram_min", f.ngram_min}, {"ngram_max", f.ngram_max},
          {"dims", f.dims},           {"fit_bias", f.fit_bias}};
}

inline FeatureConfig feature_config_from_json(const json& j) {
  detail::reject_unknown(j, {"hash_seed", "ngram_min", "ngram_max", "dims", "fit_bias"},
                         "features");
  FeatureConfig f;
  f.hash_seed = detail::get_or(j, "hash_seed", f.hash_seed);
  f.ngram_min = detail::get_or(j, "ngram_min", f.ngram_min);
  f.ngram_max = detail::get_or(j, "ngram_max", f.ngram_max);
  f.dims = detail::get_or(j, "dims", f.dims);
  f.fit_bias = detail::get_or(j, "fit_bias", f.fit_bias);
  f.validate();
  return f;
}

inline json to_json(const LossSpec& l) {
  return {{"kind", to_string(l.kind)}, {"rce_constant_A", l.rce_constant_A}};
}

inline LossSpec loss_spec_from_json(const json& j) {
  detail::reject_unknown(j, {"kind", "rce_constant_A"}, "val_loss");
  LossSpec l;
  const auto kind = detail::get_or<std::string>(j, "kind", "RCE");
  if (kind == "CE") l.kind = LossKind::kCE;
  else if (kind == "RCE") l.kind = LossKind::kRCE;
  else throw ConfigError("val_loss kind must be CE or RCE");
  l.rce_constant_A = detail::get_or(j, "rce_constant_A", l.rce_constant_A);
  l.validate();
  return l;
}

inline IhvpMethod parse_method(std::string_view s) {
  if (s == "exact") return IhvpMethod::kExact;
  if (s == "stochastic") return IhvpMethod::kStochastic;
  throw ConfigError("method must be exact or stochastic");
}

inline json to_json(const InfluenceConfig& c) {
  return {{"method", to_string(c.method)},
          {"damping", c.damping},
          {"val_loss", to_json(c.val_loss)},
          {"stochastic",
           {{"recursion_depth", c.stochastic.recursion_depth},
            {"num_repeats", c.stochastic.num_repeats},
            {"scale", c.stochastic.scale},
            {"batch_size", c.stochastic.batch_size},
            {"seed", c.stochastic.seed}}},
          {"cg_max_iters", c.cg_max_iters},
          {"cg_rel_tol", c.cg_rel_tol}};
}

inline InfluenceConfig influence_config_from_json(const json& j) {
  detail::reject_unknown(
      j, {"method", "damping", "val_loss", "stochastic", "cg_max_iters", "cg_rel_tol"},
      "influence");
  InfluenceConfig c;
  c.method = parse_method(detail::get_or<std::string>(j, "method", to_string(c.method)));
  c.damping = detail::get_or(j, "damping", c.damping);
  if (j.contains("val_loss")) c.val_loss = loss_spec_from_json(j["val_loss"]);
  if (j.contains("stochastic")) {
    const auto& s = j["stochastic"];
    detail::reject_unknown(s, {"recursion_depth", "num_repeats", "scale", "batch_size", "seed"},
                           "stochastic");
    c.stochastic.recursion_depth = detail::get_or(s, "recursion_depth", c.stochastic.recursion_depth);
    c.stochastic.num_repeats = detail::get_or(s, "num_repeats", c.stochastic.num_repeats);
    c.stochastic.scale = detail::get_or(s, "scale", c.stochastic.scale);
    c.stochastic.batch_size = detail::get_or(s, "batch_size", c.stochastic.batch_size);
    c.stochastic.seed = detail::get_or(s, "seed", c.stochastic.seed);
  }
  c.cg_max_iters = detail::get_or(j, "cg_max_iters", c.cg_max_iters);
  c.cg_rel_tol = detail::get_or(j, "cg_rel_tol", c.cg_rel_tol);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Models

/// Weights are stored sparsely as [index, value] pairs.
inline json model_to_json(const ModelParams& p) {
  json w = json::array();
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    if (p.weights[i] != 0.0) w.push_back({i, p.weights[i]});
  return {{"format", "progen-model-v1"},
          {"features", to_json(p.features)},
          {"num_classes", p.num_classes},
          {"l2_lambda", p.l2_lambda},
          {"num_params", p.num_params()},
          {"fingerprint", hex64(p.fingerprint())},
          {"weights", std::move(w)}};
}

inline ModelParams model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "progen-model-v1") throw ConfigError("not a progen model file");
    ModelParams p(feature_config_from_json(j.at("features")), j.at("num_classes").get<int>(),
                  j.at("l2_lambda").get<double>());
    if (j.at("num_params").get<std::size_t>() != p.num_params())
      throw DimensionError("model num_params does not match its feature config");
    for (const auto& pair : j.at("weights")) {
      const auto i = pair.at(0).get<std::size_t>();
      if (i >= p.weights.size()) throw DimensionError("weight index out of range");
      p.weights[i] = pair.at(1).get<double>();
    }
    p.validate();
    if (j.contains("fingerprint") && j["fingerprint"].get<std::string>() != hex64(p.fingerprint()))
      throw ConfigError("model fingerprint mismatch (corrupt file?)");
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

inline void write_model(const std::filesystem::path& path, const ModelParams& p) {
  write_text_file(path, model_to_json(p).dump() + "\n");
}

inline ModelParams read_model(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Influence reports

inline json report_to_json(const InfluenceReport& r) {
  json scores = json::array();
  for (const auto& [id, s] : r.scores) scores.push_back({{"id", id}, {"score", s}});
  return {{"model_fingerprint", hex64(r.model_fingerprint)},
          {"method", to_string(r.config.method)},
          {"seed", r.config.stochastic.seed},
          {"config", to_json(r.config)},
          {"scores", std::move(scores)}};
}

inline InfluenceReport report_from_json(const json& j) {
  try {
    InfluenceReport r;
    r.model_fingerprint = std::stoull(j.at("model_fingerprint").get<std::string>(), nullptr, 16);
    r.config = influence_config_from_json(j.at("config"));
    for (const auto& s : j.at("scores"))
      r.scores[s.at("id").get<std::int64_t>()] = s.at("score").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed influence report: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConfigError(std::string("malformed influence report: ") + e.what());
  }
}

inline void write_report(const std::filesystem::path& path, const InfluenceReport& r) {
  write_text_file(path, report_to_json(r).dump(2) + "\n");
}

inline InfluenceReport read_report(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed influence report " + path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

// ---------------------------------------------------------------------------
// Metrics outputs

inline json to_json(const CorpusStats& s) {
  return {{"self_bleu", s.self_bleu}, {"correctness", s.correctness}, {"size", s.size}};
}

inline CorpusStats corpus_stats_from_json(const json& j) {
  return {j.at("self_bleu").get<double>(), j.at("correctness").get<double>(),
          j.at("size").get<std::size_t>()};
}

inline json to_json(const RemovalPoint& p) {
  return {{"ratio", p.ratio},
          {"removed", p.removed},
          {"accuracy", p.accuracy},
          {"loss", p.loss},
          {"val_loss", p.val_loss},
          {"control_accuracy", p.control_accuracy},
          {"control_loss", p.control_loss},
          {"control_val_loss", p.control_val_loss}};
}

inline RemovalPoint removal_point_from_json(const json& j) {
  RemovalPoint p;
  p.ratio = j.at("ratio").get<double>();
  p.removed = j.at("removed").get<std::size_t>();
  p.accuracy = j.at("accuracy").get<double>();
  p.loss = j.at("loss").get<double>();
  p.val_loss = j.at("val_loss").get<double>();
  p.control_accuracy = j.at("control_accuracy").get<double>();
  p.control_loss = j.at("control_loss").get<double>();
  p.control_val_loss = j.at("control_val_loss").get<double>();
  return p;
}

inline constexpr std::string_view kRemovalCsvHeader =
    "ratio,removed,accuracy,loss,control_accuracy,control_loss,val_loss,control_val_loss";

inline std::string removal_csv_row(const RemovalPoint& p) {
  return format_double(p.ratio) + "," + std::to_string(p.removed) + "," +
         format_double(p.accuracy) + "," + format_double(p.loss) + "," +
         format_double(p.control_accuracy) + "," + format_double(p.control_loss) + "," +
         format_double(p.val_loss) + "," + format_double(p.control_val_loss);
}

inline std::string removal_csv(std::span<const RemovalPoint> curve) {
  std::string out(kRemovalCsvHeader);
  out += '\n';
  for (const auto& p : curve) out += removal_csv_row(p) + '\n';
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw SchemaError("line " + std::to_string(line) + ": bad number '" + s + "'", line);
  return v;
}

}  // namespace detail

inline std::vector<RemovalPoint> parse_removal_csv(std::string_view content) {
  std::vector<RemovalPoint> out;
  std::size_t line_no = 0, start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kRemovalCsvHeader) throw SchemaError("line 1: unexpected CSV header", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 8)
      throw SchemaError("line " + std::to_string(line_no) + ": expected 8 columns", line_no);
    RemovalPoint p;
    p.ratio = detail::parse_double(f[0], line_no);
    p.removed = static_cast<std::size_t>(detail::parse_double(f[1], line_no));
    p.accuracy = detail::parse_double(f[2], line_no);
    p.loss = detail::parse_double(f[3], line_no);
    p.control_accuracy = detail::parse_double(f[4], line_no);
    p.control_loss = detail::parse_double(f[5], line_no);
    p.val_loss = detail::parse_double(f[6], line_no);
    p.control_val_loss = detail::parse_double(f[7], line_no);
    out.push_back(p);
  }
  return out;
}

}  // namespace progen

#endif  // PROGEN_IO_HPP_
