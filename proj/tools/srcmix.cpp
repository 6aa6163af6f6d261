// srcmix command line: train frozen source encoders, cache extractions,
// train/evaluate target taggers, inspect learned mixture weights and run
// experiment suites.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
// failure (non-finite loss or gradient).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srcmix/config.hpp"
#include "srcmix/corpus.hpp"
#include "srcmix/embeddings.hpp"
#include "srcmix/encoders.hpp"
#include "srcmix/errors.hpp"
#include "srcmix/evaluation.hpp"
#include "srcmix/experiments.hpp"
#include "srcmix/mixer.hpp"
#include "srcmix/model.hpp"
#include "srcmix/serialize.hpp"
#include "srcmix/training.hpp"

namespace {

using namespace srcmix;

Dataset read_conll_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file: " + path);
  return read_conll(in);
}

Config read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  try {
    return Config::parse(in);
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

EmbeddingTable read_embeddings_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embeddings file: " + path);
  return load_text_embeddings(in);
}

std::string file_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

bool looks_like_param_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open source model: " + path);
  std::string first;
  std::getline(in, first);
  return first.rfind("srcmix-params", 0) == 0;
}

// --- train-source -----------------------------------------------------------------

struct TrainSourceArgs {
  std::string data, out, config, static_emb, name;
  long long seed = -1;  // -1: keep the config value (default 1)
};

int run_train_source(const TrainSourceArgs& args) {
  SourceTrainConfig cfg;
  if (!args.config.empty()) {
    try {
      cfg = source_config_from(read_config_file(args.config));
    } catch (const ValidationError& e) {
      throw ConfigError(args.config + ": " + e.what());
    }
  }
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  const Dataset data = read_conll_file(args.data);
  std::optional<EmbeddingTable> statics;
  if (!args.static_emb.empty()) statics = read_embeddings_file(args.static_emb);

  const ToyEncoderParams params =
      train_source(cfg, data, statics ? &*statics : nullptr);
  const std::string name = args.name.empty() ? file_stem(args.out) : args.name;
  save_toy_encoder_file(args.out, name, params);

  std::cout << "trained source '" << name << "' on " << data.size() << " sentences ("
            << data.label_vocab.size() << " tags), output dim " << params.out_dim()
            << ", token accuracy " << format_percent(toy_token_accuracy(params, data))
            << "\n";
  return 0;
}

// --- cache-extract ----------------------------------------------------------------

struct CacheExtractArgs {
  std::string model, data, out;
};

int run_cache_extract(const CacheExtractArgs& args) {
  const auto [name, params] = load_toy_encoder_file(args.model);
  const Dataset data = read_conll_file(args.data);
  SentenceCache cache;
  for (const auto& sent : data.sentences)
    cache.store(sent.tokens, toy_extract(params, sent.tokens));
  cache.save(args.out);
  std::cout << "cached " << cache.size() << " sentences from '" << name << "' (dim "
            << cache.dim() << ") to " << args.out << "\n";
  return 0;
}

// --- train-target -----------------------------------------------------------------

struct TrainTargetArgs {
  std::string train, dev, sources, static_emb, config, out, metrics_out;
  long long seed = -1;  // -1: keep the config value (default 1)
};

int run_train_target(const TrainTargetArgs& args) {
  TrainConfig cfg;
  if (!args.config.empty()) {
    try {
      cfg = train_config_from(read_config_file(args.config));
    } catch (const ValidationError& e) {
      throw ConfigError(args.config + ": " + e.what());
    }
  }
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  const Dataset train_data = read_conll_file(args.train);
  const Dataset dev_data = read_conll_file(args.dev);

  TargetModel model;
  model.statics = read_embeddings_file(args.static_emb);
  if (!args.sources.empty()) {
    for (const auto& path : split_csv(args.sources)) {
      if (looks_like_param_file(path)) {
        auto [name, params] = load_toy_encoder_file(path);
        model.sources.push_back(std::make_shared<ToyEncoder>(name, std::move(params)));
        model.source_kinds.push_back("toy");
        model.source_paths.push_back(path);
      } else {
        model.sources.push_back(
            std::make_shared<CachedEncoder>(file_stem(path), SentenceCache::load(path)));
        model.source_kinds.push_back("cache");
        model.source_paths.push_back(path);
      }
    }
  }
  model.labels = train_data.label_vocab;

  std::vector<std::size_t> source_dims;
  for (const auto& s : model.sources) source_dims.push_back(s->dim());
  const bool use_mix = !model.sources.empty();
  const std::size_t input_dim = (use_mix ? cfg.proj_dim : 0) + model.statics.dim;

  MixParams mix;
  if (use_mix) mix = init_mix_params(source_dims, cfg.proj_dim, derive_seed(cfg.seed, 11));
  TaggerParams tagger =
      make_tagger(input_dim, cfg.hidden, cfg.resolved_layers(), model.labels.size(),
                  cfg.decoder, derive_seed(cfg.seed, 12));

  const TrainResult result = train_target(cfg, train_data, dev_data, model.encoder_ptrs(),
                                          model.statics, std::move(mix), std::move(tagger));
  model.mix = result.mix;
  model.tagger = result.tagger;
  save_target_model(args.out, model);

  std::ostringstream tsv;
  write_metrics_tsv(tsv, result.metrics);
  std::cout << tsv.str();
  if (!args.metrics_out.empty()) write_file(args.metrics_out, tsv.str());
  std::cerr << "best epoch " << result.best_epoch << " dev F1 "
            << format_percent(result.best_dev_f1) << ", model written to " << args.out
            << "\n";
  return 0;
}

// --- evaluate ---------------------------------------------------------------------

struct EvaluateArgs {
  std::string model, data, pred_out;
  bool verbose = false;
};

int run_evaluate(const EvaluateArgs& args) {
  const TargetModel model = load_target_model(args.model);
  const Dataset data = read_conll_file(args.data);

  const auto label_ids = label_index(model.labels);
  const std::vector<SentenceExample> examples =
      build_examples(data, model.encoder_ptrs(), model.statics, label_ids);
  std::vector<std::vector<std::string>> gold, pred;
  for (const auto& ex : examples) {
    const std::vector<std::size_t> path =
        sentence_decode(model.uses_mix() ? &model.mix : nullptr, model.tagger, ex);
    std::vector<std::string> tags(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) tags[i] = model.labels[path[i]];
    gold.push_back(ex.gold_tags);
    pred.push_back(std::move(tags));
  }
  const F1Result f1 = span_f1(gold, pred);
  std::cout << "P " << format_percent(f1.precision) << "\n"
            << "R " << format_percent(f1.recall) << "\n"
            << "F1 " << format_percent(f1.f1) << "\n";
  if (args.verbose)
    std::cout << "token_acc " << format_percent(token_accuracy(gold, pred)) << "\n";
  if (!args.pred_out.empty()) {
    std::ostringstream out;
    write_predictions(out, data, pred);
    write_file(args.pred_out, out.str());
  }
  return 0;
}

// --- inspect-mix ------------------------------------------------------------------

int run_inspect_mix(const std::string& model_path) {
  const TargetModel model = load_target_model(model_path);
  if (!model.uses_mix())
    throw ValidationError("model has no mixture parameters (baseline model)");
  std::vector<std::string> names;
  for (const auto& s : model.sources) names.push_back(s->name());
  std::cout << inspect_mix(model.mix, names);
  return 0;
}

// --- run-experiment ---------------------------------------------------------------

int run_run_experiment(const std::string& spec_path, const std::string& out_dir,
                       long long seed) {
  ExperimentSpec spec;
  try {
    spec = parse_experiment_spec(read_config_file(spec_path));
  } catch (const ValidationError& e) {
    throw ConfigError(spec_path + ": " + e.what());
  }
  if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
  const ExperimentReport report = run_experiment(spec);
  write_report_files(report, out_dir);
  std::cout << emit_table(report) << "\n" << emit_weight_report(report);
  std::cerr << "wall time " << report.wall_seconds << " s, outputs in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"supervised contextual embeddings: scalar-mixed frozen source encoders "
               "feeding a recurrent tagger"};
  app.require_subcommand(1);

  TrainSourceArgs ts;
  CLI::App* train_source_cmd =
      app.add_subcommand("train-source", "train a toy source encoder on its full dataset");
  train_source_cmd->add_option("--data", ts.data, "CoNLL training data")->required();
  train_source_cmd->add_option("--out", ts.out, "output encoder file")->required();
  train_source_cmd->add_option("--config", ts.config, "key=value training config");
  train_source_cmd->add_option("--static-emb", ts.static_emb,
                               "frozen input vectors (static mode)");
  train_source_cmd->add_option("--name", ts.name, "encoder name (default: output stem)");
  train_source_cmd->add_option("--seed", ts.seed, "training seed (default 1)");

  CacheExtractArgs ce;
  CLI::App* cache_cmd =
      app.add_subcommand("cache-extract", "precompute encoder states for a dataset");
  cache_cmd->add_option("--model", ce.model, "toy encoder file")->required();
  cache_cmd->add_option("--data", ce.data, "CoNLL data")->required();
  cache_cmd->add_option("--out", ce.out, "JSONL cache output")->required();

  TrainTargetArgs tt;
  CLI::App* train_target_cmd =
      app.add_subcommand("train-target", "train the target tagger (mixer + tagger)");
  train_target_cmd->add_option("--train", tt.train, "CoNLL training data")->required();
  train_target_cmd->add_option("--dev", tt.dev, "CoNLL development data")->required();
  train_target_cmd->add_option("--sources", tt.sources,
                               "comma-separated encoder/cache files; omit for baseline");
  train_target_cmd->add_option("--static-emb", tt.static_emb, "static word vectors")
      ->required();
  train_target_cmd->add_option("--config", tt.config, "key=value training config");
  train_target_cmd->add_option("--out", tt.out, "output model file")->required();
  train_target_cmd->add_option("--metrics-out", tt.metrics_out, "metric trace TSV file");
  train_target_cmd->add_option("--seed", tt.seed, "training seed (default 1)");

  EvaluateArgs ev;
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "span F1 of a model on a dataset");
  evaluate_cmd->add_option("--model", ev.model, "target model file")->required();
  evaluate_cmd->add_option("--data", ev.data, "CoNLL data with gold tags")->required();
  evaluate_cmd->add_option("--pred-out", ev.pred_out, "write token/gold/pred TSV");
  evaluate_cmd->add_flag("--verbose", ev.verbose, "also print token accuracy");

  std::string inspect_model;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect-mix", "report learned source mixture weights");
  inspect_cmd->add_option("--model", inspect_model, "target model file")->required();

  std::string spec_path, exp_out;
  long long exp_seed = -1;
  CLI::App* experiment_cmd =
      app.add_subcommand("run-experiment", "run a transfer experiment suite");
  experiment_cmd->add_option("--spec", spec_path, "experiment spec file")->required();
  experiment_cmd->add_option("--out", exp_out, "output directory")->required();
  experiment_cmd->add_option("--seed", exp_seed, "override the spec seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*train_source_cmd) return run_train_source(ts);
    if (*cache_cmd) return run_cache_extract(ce);
    if (*train_target_cmd) return run_train_target(tt);
    if (*evaluate_cmd) return run_evaluate(ev);
    if (*inspect_cmd) return run_inspect_mix(inspect_model);
    if (*experiment_cmd) return run_run_experiment(spec_path, exp_out, exp_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
