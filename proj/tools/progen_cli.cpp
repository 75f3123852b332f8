// progen command line. Exit codes: 0 ok, 1 bad input (config, schema, io),
// 2 backend failure, 3 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "progen/backend.hpp"
#include "progen/config.hpp"
#include "progen/influence.hpp"
#include "progen/io.hpp"
#include "progen/metrics.hpp"
#include "progen/mock_world.hpp"
#include "progen/model.hpp"
#include "progen/noise_study.hpp"
#include "progen/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace progen;

namespace {

struct RunArgs {
  std::string config, out, resume;
  std::optional<std::uint64_t> seed;
};

struct GenerateArgs {
  std::string config, out;
  int count = 100;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string dataset, out;
  std::size_t dims = std::size_t{1} << 16;
  std::uint64_t hash_seed = 0;
  int ngram_max = 2;
  int classes = 2;
  double lambda = 1e-3;
};

struct ScoreArgs {
  std::string dataset, val, model, out;
  std::string method = "stochastic";
  std::string val_loss = "rce";
  double damping = 0.01;
  std::uint64_t seed = 0;
  int depth = 5000, repeats = 10;
  double scale = 0.1;
};

struct EvalArgs {
  std::string model, dataset;
};

struct RemovalArgs {
  std::string dataset, report, model, val, test, out;
  std::vector<double> ratios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 0;
};

struct NoiseArgs {
  double flip_ratio = 0.4;
  int seeds = 5;
  std::uint64_t base_seed = 0;
  std::string out;
};

struct MockArgs {
  std::string out;
  std::uint64_t seed = 0;
  int count = 200;
  std::string config;
};

ProgenConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = read_config(path);
  if (seed) cfg.master_seed = *seed;
  cfg.validate();
  return cfg;
}

int cmd_run(const RunArgs& a) {
  auto cfg = load_config(a.config, a.seed);
  RunOptions opts;
  fs::path out = a.out;
  if (!a.resume.empty()) {
    if (!a.out.empty() && fs::path(a.out) != fs::path(a.resume))
      throw ConfigError("--resume and --out name different directories");
    out = a.resume;
    opts.resume = true;
  }
  if (out.empty()) throw ConfigError("run needs --out or --resume");
  fs::create_directories(out);
  opts.out_dir = out;
  RunResult r;
  if (cfg.backend.kind == BackendKind::kMock) {
    r = run_progen_mock(cfg, std::move(opts));
  } else {
    auto backend = make_backend(cfg.backend, cfg.prompt);
    r = run_progen(cfg, *backend, std::move(opts));
  }
  const auto& last = r.state.audit.back();
  std::cout << "iterations=" << r.state.iteration << " examples=" << r.state.d_train.size()
            << " val_accuracy=" << format_double(last.val.accuracy);
  if (last.test) std::cout << " test_accuracy=" << format_double(last.test->accuracy);
  std::cout << "\n";
  return 0;
}

int cmd_generate(const GenerateArgs& a) {
  auto cfg = load_config(a.config, a.seed);
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  auto backend = make_backend(cfg.backend, cfg.prompt);
  const auto data = generate_examples(*backend, cfg, 1, a.count, {}, false, 0);
  write_jsonl(a.out, data);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const auto data = read_jsonl(a.dataset);
  FeatureConfig f;
  f.dims = a.dims;
  f.hash_seed = a.hash_seed;
  f.ngram_max = a.ngram_max;
  f.validate();
  TrainHyper h;
  h.l2_lambda = a.lambda;
  const auto model = train(featurize_dataset(data, f, a.classes), h);
  write_model(a.out, model);
  return 0;
}

int cmd_score(const ScoreArgs& a) {
  const auto train_set = read_jsonl(a.dataset);
  const auto val_set = read_jsonl(a.val);
  const auto model = read_model(a.model);
  InfluenceConfig c;
  c.method = parse_method(a.method);
  if (a.val_loss == "ce") c.val_loss = LossSpec::ce();
  else if (a.val_loss != "rce") throw ConfigError("--val-loss must be ce or rce");
  c.damping = a.damping;
  c.stochastic.seed = a.seed;
  c.stochastic.recursion_depth = a.depth;
  c.stochastic.num_repeats = a.repeats;
  c.stochastic.scale = a.scale;
  c.validate();
  const auto train_f = featurize_dataset(train_set, model);
  const auto val_f = featurize_dataset(val_set, model);
  write_report(a.out, influence_scores(model, train_f, train_f, val_f, c));
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const auto model = read_model(a.model);
  const auto data = read_jsonl(a.dataset);
  std::cout << to_json(evaluate(model, data)).dump() << "\n";
  return 0;
}

int cmd_removal(const RemovalArgs& a) {
  const auto data = read_jsonl(a.dataset);
  const auto report = read_report(a.report);
  const auto model = read_model(a.model);
  const auto val = read_jsonl(a.val);
  const auto test = read_jsonl(a.test);
  TrainHyper h;
  h.l2_lambda = model.l2_lambda;
  const ModelSpec spec{model.features, model.num_classes};
  const auto curve = removal_curve(data, report, a.ratios, val, test, spec, h, a.seed);
  write_text_file(a.out, removal_csv(curve));
  return 0;
}

int cmd_noise_study(const NoiseArgs& a) {
  NoiseStudyConfig c;
  c.flip_ratio = a.flip_ratio;
  c.seeds = a.seeds;
  c.base_seed = a.base_seed;
  c.validate();
  const auto r = run_noise_study(c);
  if (!a.out.empty()) write_text_file(a.out, noise_study_csv(r));
  std::cout << r.verdict << "\n";
  return 0;
}

int cmd_mock_world(const MockArgs& a) {
  MockWorldConfig w;
  if (!a.config.empty()) {
    const auto cfg = read_config(a.config);
    if (!cfg.backend.mock) throw ConfigError("config has no mock backend");
    w = *cfg.backend.mock;
  }
  w.validate();
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  const MockWorld world(w);
  write_jsonl(a.out, world.sample_clean(static_cast<std::size_t>(a.count), a.seed, 0));
  return 0;
}

int fail(int code, const char* kind, const std::exception& e) {
  std::cerr << "progen: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progen: progressive dataset synthesis with influence feedback"};
  app.require_subcommand(1, 1);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "run the generation loop from a config");
  c_run->add_option("config", run.config, "config JSON")->required();
  c_run->add_option("--out", run.out, "output directory");
  c_run->add_option("--seed", run.seed, "override master_seed");
  c_run->add_option("--resume", run.resume, "resume from this output directory");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "zero-shot generation into JSONL");
  c_gen->add_option("config", gen.config, "config JSON")->required();
  c_gen->add_option("--out", gen.out, "output JSONL")->required();
  c_gen->add_option("--count", gen.count, "number of examples");
  c_gen->add_option("--seed", gen.seed, "override master_seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "fit the task model");
  c_train->add_option("--dataset", tr.dataset)->required();
  c_train->add_option("--out", tr.out, "model JSON")->required();
  c_train->add_option("--dims", tr.dims, "hashed feature dimension");
  c_train->add_option("--hash-seed", tr.hash_seed);
  c_train->add_option("--ngram-max", tr.ngram_max);
  c_train->add_option("--classes", tr.classes);
  c_train->add_option("--lambda", tr.lambda, "L2 penalty");

  ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "influence scores for a dataset");
  c_score->add_option("--dataset", sc.dataset)->required();
  c_score->add_option("--val", sc.val)->required();
  c_score->add_option("--model", sc.model)->required();
  c_score->add_option("--out", sc.out, "report JSON")->required();
  c_score->add_option("--method", sc.method)->check(CLI::IsMember({"exact", "stochastic"}));
  c_score->add_option("--val-loss", sc.val_loss)->check(CLI::IsMember({"ce", "rce"}));
  c_score->add_option("--damping", sc.damping);
  c_score->add_option("--seed", sc.seed);
  c_score->add_option("--depth", sc.depth);
  c_score->add_option("--repeats", sc.repeats);
  c_score->add_option("--scale", sc.scale);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a model on a dataset");
  c_eval->add_option("--model", ev.model)->required();
  c_eval->add_option("--dataset", ev.dataset)->required();

  RemovalArgs rm;
  auto* c_rm = app.add_subcommand("removal", "removal curve as CSV");
  c_rm->add_option("--dataset", rm.dataset)->required();
  c_rm->add_option("--report", rm.report)->required();
  c_rm->add_option("--model", rm.model, "supplies features and lambda")->required();
  c_rm->add_option("--val", rm.val)->required();
  c_rm->add_option("--test", rm.test)->required();
  c_rm->add_option("--out", rm.out, "CSV")->required();
  c_rm->add_option("--ratios", rm.ratios)->delimiter(',');
  c_rm->add_option("--seed", rm.seed);

  NoiseArgs ns;
  auto* c_ns = app.add_subcommand("noise-study", "CE vs RCE validation objectives under label noise");
  c_ns->add_option("--flip-ratio", ns.flip_ratio, "share of validation labels flipped");
  c_ns->add_option("--seeds", ns.seeds);
  c_ns->add_option("--base-seed", ns.base_seed);
  c_ns->add_option("--out", ns.out, "per-seed curves CSV");

  MockArgs mw;
  auto* c_mw = app.add_subcommand("mock-world", "sample clean labeled mock-world texts");
  c_mw->add_option("--out", mw.out, "output JSONL")->required();
  c_mw->add_option("--seed", mw.seed);
  c_mw->add_option("--count", mw.count);
  c_mw->add_option("--config", mw.config, "take mock settings from a config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "progen: usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*c_run) return cmd_run(run);
    if (*c_gen) return cmd_generate(gen);
    if (*c_train) return cmd_train(tr);
    if (*c_score) return cmd_score(sc);
    if (*c_eval) return cmd_eval(ev);
    if (*c_rm) return cmd_removal(rm);
    if (*c_ns) return cmd_noise_study(ns);
    if (*c_mw) return cmd_mock_world(mw);
  } catch (const SchemaError& e) {
    return fail(1, "schema error", e);
  } catch (const ConfigError& e) {
    return fail(1, "config error", e);
  } catch (const IoError& e) {
    return fail(1, "io error", e);
  } catch (const CheckpointError& e) {
    return fail(1, "checkpoint error", e);
  } catch (const DatasetError& e) {
    return fail(1, "dataset error", e);
  } catch (const DimensionError& e) {
    return fail(1, "dimension error", e);
  } catch (const BackendError& e) {
    return fail(2, "backend error", e);
  } catch (const ResampleCapError& e) {
    return fail(2, "backend error", e);
  } catch (const EmptyCompletionError& e) {
    return fail(2, "backend error", e);
  } catch (const std::exception& e) {
    return fail(3, "internal error", e);
  }
  return 3;
}
