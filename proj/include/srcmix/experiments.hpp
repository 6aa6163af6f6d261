#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srcmix/config.hpp"
#include "srcmix/corpus.hpp"
#include "srcmix/embeddings.hpp"
#include "srcmix/encoders.hpp"
#include "srcmix/errors.hpp"
#include "srcmix/evaluation.hpp"
#include "srcmix/mixer.hpp"
#include "srcmix/model.hpp"
#include "srcmix/training.hpp"

namespace srcmix {

enum class Setting { kCrossTask, kCrossDomain, kCrossLingual };
enum class Condition { kStaticOnly, kStaticPlusMix };

inline std::string setting_name(Setting s) {
  switch (s) {
    case Setting::kCrossTask: return "cross_task";
    case Setting::kCrossDomain: return "cross_domain";
    case Setting::kCrossLingual: return "cross_lingual";
  }
  return {};
}

inline Setting setting_from_name(const std::string& s) {
  if (s == "cross_task") return Setting::kCrossTask;
  if (s == "cross_domain") return Setting::kCrossDomain;
  if (s == "cross_lingual") return Setting::kCrossLingual;
  throw ValidationError("unknown setting '" + s + "'");
}

inline std::string condition_name(Condition c) {
  return c == Condition::kStaticOnly ? "static_only" : "static_plus_mix";
}

inline Condition condition_from_name(const std::string& s) {
  if (s == "static_only") return Condition::kStaticOnly;
  if (s == "static_plus_mix") return Condition::kStaticPlusMix;
  throw ValidationError("unknown condition '" + s + "'");
}

struct SourceEntry {
  std::string name;
  bool informative = true;  // only cross_task distinguishes noise sources
};

/// One desk-scale transfer experiment: synthetic corpora for the chosen
/// setting, frozen sources trained on their full data, then a (subset size x
/// embedding condition) grid of target trainings.
struct ExperimentSpec {
  Setting setting = Setting::kCrossTask;
  std::vector<SourceEntry> sources;
  std::uint64_t seed = 42;

  // corpus shape
  std::size_t vocab_size = 300;
  std::size_t n_classes = 4;
  std::size_t len_min = 4;
  std::size_t len_max = 9;
  double noise_rate = 0.0;
  std::size_t source_sentences = 5000;
  std::size_t target_train = 400;  // pool that subsets are drawn from
  std::size_t target_dev = 200;
  std::size_t target_test = 400;

  // grid
  std::vector<std::size_t> subset_sizes = {100};  // 0 means "all"
  std::vector<Condition> conditions = {Condition::kStaticOnly, Condition::kStaticPlusMix};

  std::size_t static_dim = 16;
  SourceTrainConfig source_train;
  TrainConfig target_train_config;

  void validate() const {
    if (sources.empty()) throw ValidationError("experiment: need at least one source");
    if (subset_sizes.empty()) throw ValidationError("experiment: need subset sizes");
    for (std::size_t i = 1; i < subset_sizes.size(); ++i) {
      const std::size_t prev = subset_sizes[i - 1] ? subset_sizes[i - 1] : target_train;
      const std::size_t cur = subset_sizes[i] ? subset_sizes[i] : target_train;
      if (cur < prev) throw ValidationError("experiment: subset sizes must ascend");
    }
    if (conditions.empty()) throw ValidationError("experiment: need conditions");
    if (vocab_size < n_classes || n_classes < 2)
      throw ValidationError("experiment: need vocab_size >= n_classes >= 2");
  }
};

/// The default cross-task analog: one informative and two noise sources,
/// a 100-sentence low-resource target, both embedding conditions.
inline ExperimentSpec default_cross_task_spec() {
  ExperimentSpec spec;
  spec.setting = Setting::kCrossTask;
  spec.sources = {{"inf", true}, {"noise-a", false}, {"noise-b", false}};
  spec.vocab_size = 150;
  spec.source_train.epochs = 3;
  spec.target_train_config.epochs = 75;
  return spec;
}

inline ExperimentSpec default_cross_domain_spec() {
  ExperimentSpec spec = default_cross_task_spec();
  spec.setting = Setting::kCrossDomain;
  spec.sources = {{"dom-a", true}, {"dom-b", true}, {"dom-c", true}};
  spec.source_sentences = 3000;
  return spec;
}

inline ExperimentSpec default_cross_lingual_spec() {
  ExperimentSpec spec = default_cross_task_spec();
  spec.setting = Setting::kCrossLingual;
  spec.sources = {{"lang-a", true}, {"lang-b", true}};
  spec.vocab_size = 200;
  spec.source_sentences = 3000;
  return spec;
}

// --- spec files -------------------------------------------------------------------

inline const std::vector<std::string>& experiment_config_keys() {
  static const std::vector<std::string> keys = {
      "setting",        "seed",          "vocab_size",     "n_classes",
      "len_min",        "len_max",       "noise_rate",     "source_sentences",
      "target_train",   "target_dev",    "target_test",    "subset_sizes",
      "conditions",     "static_dim",    "source",         "epochs",
      "batch_size",     "lr",            "hidden",         "layers",
      "decoder",        "proj_dim",      "source_epochs",  "source_batch_size",
      "source_lr",      "source_emb_dim", "source_hidden"};
  return keys;
}

/// Flat key=value spec with one "source = <name> [informative|noise]" line
/// per source model.
inline ExperimentSpec parse_experiment_spec(const Config& cfg) {
  cfg.require_known(experiment_config_keys());
  ExperimentSpec spec;
  spec.setting = setting_from_name(cfg.get_string("setting", "cross_task"));
  spec.seed = cfg.get_u64("seed", 42);
  spec.vocab_size = cfg.get_u64("vocab_size", spec.vocab_size);
  spec.n_classes = cfg.get_u64("n_classes", spec.n_classes);
  spec.len_min = cfg.get_u64("len_min", spec.len_min);
  spec.len_max = cfg.get_u64("len_max", spec.len_max);
  spec.noise_rate = cfg.get_double("noise_rate", spec.noise_rate);
  spec.source_sentences = cfg.get_u64("source_sentences", spec.source_sentences);
  spec.target_train = cfg.get_u64("target_train", spec.target_train);
  spec.target_dev = cfg.get_u64("target_dev", spec.target_dev);
  spec.target_test = cfg.get_u64("target_test", spec.target_test);
  spec.static_dim = cfg.get_u64("static_dim", spec.static_dim);

  if (cfg.has("subset_sizes")) {
    spec.subset_sizes.clear();
    for (const auto& field : split_csv(cfg.get_string("subset_sizes"))) {
      if (field == "all") {
        spec.subset_sizes.push_back(0);
      } else {
        unsigned long long v = 0;
        if (!parse_u64(field, &v) || v == 0)
          throw ValidationError("experiment: bad subset size '" + field + "'");
        spec.subset_sizes.push_back(v);
      }
    }
  }
  if (cfg.has("conditions")) {
    spec.conditions.clear();
    for (const auto& field : split_csv(cfg.get_string("conditions")))
      spec.conditions.push_back(condition_from_name(field));
  }

  const std::vector<std::string> source_lines = cfg.get_all("source");
  if (!source_lines.empty()) {
    spec.sources.clear();
    for (const auto& line : source_lines) {
      const std::vector<std::string> fields = split_whitespace(line);
      if (fields.empty() || fields.size() > 2)
        throw ValidationError("experiment: bad source line '" + line + "'");
      SourceEntry entry;
      entry.name = fields[0];
      if (fields.size() == 2) {
        if (fields[1] == "informative")
          entry.informative = true;
        else if (fields[1] == "noise")
          entry.informative = false;
        else
          throw ValidationError("experiment: source role must be informative|noise, got '" +
                                fields[1] + "'");
      }
      spec.sources.push_back(std::move(entry));
    }
  } else {
    spec.sources = default_cross_task_spec().sources;
  }

  spec.target_train_config.epochs = cfg.get_u64("epochs", 40);
  spec.target_train_config.batch_size = cfg.get_u64("batch_size", 0);
  spec.target_train_config.lr = cfg.get_double("lr", 0.001);
  spec.target_train_config.hidden = cfg.get_u64("hidden", 50);
  spec.target_train_config.layers = cfg.get_u64("layers", 0);
  spec.target_train_config.decoder =
      decoder_kind_from_name(cfg.get_string("decoder", "crf"));
  spec.target_train_config.proj_dim = cfg.get_u64("proj_dim", 300);

  spec.source_train.epochs = cfg.get_u64("source_epochs", 3);
  spec.source_train.batch_size = cfg.get_u64("source_batch_size", 0);
  spec.source_train.lr = cfg.get_double("source_lr", 0.001);
  spec.source_train.emb_dim = cfg.get_u64("source_emb_dim", 16);
  spec.source_train.hidden = cfg.get_u64("source_hidden", 16);

  spec.validate();
  return spec;
}

/// Deterministic round-trip form of a spec (also the config echo in reports).
inline std::string format_experiment_spec(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "setting = " << setting_name(spec.setting) << '\n';
  out << "seed = " << spec.seed << '\n';
  out << "vocab_size = " << spec.vocab_size << '\n';
  out << "n_classes = " << spec.n_classes << '\n';
  out << "len_min = " << spec.len_min << '\n';
  out << "len_max = " << spec.len_max << '\n';
  out << "noise_rate = " << format_double(spec.noise_rate) << '\n';
  out << "source_sentences = " << spec.source_sentences << '\n';
  out << "target_train = " << spec.target_train << '\n';
  out << "target_dev = " << spec.target_dev << '\n';
  out << "target_test = " << spec.target_test << '\n';
  out << "subset_sizes = ";
  for (std::size_t i = 0; i < spec.subset_sizes.size(); ++i) {
    if (i) out << ',';
    if (spec.subset_sizes[i] == 0)
      out << "all";
    else
      out << spec.subset_sizes[i];
  }
  out << '\n';
  out << "conditions = ";
  for (std::size_t i = 0; i < spec.conditions.size(); ++i) {
    if (i) out << ',';
    out << condition_name(spec.conditions[i]);
  }
  out << '\n';
  out << "static_dim = " << spec.static_dim << '\n';
  for (const auto& s : spec.sources)
    out << "source = " << s.name << ' ' << (s.informative ? "informative" : "noise") << '\n';
  out << "epochs = " << spec.target_train_config.epochs << '\n';
  out << "batch_size = " << spec.target_train_config.batch_size << '\n';
  out << "lr = " << format_double(spec.target_train_config.lr) << '\n';
  out << "hidden = " << spec.target_train_config.hidden << '\n';
  out << "layers = " << spec.target_train_config.layers << '\n';
  out << "decoder = " << decoder_kind_name(spec.target_train_config.decoder) << '\n';
  out << "proj_dim = " << spec.target_train_config.proj_dim << '\n';
  out << "source_epochs = " << spec.source_train.epochs << '\n';
  out << "source_batch_size = " << spec.source_train.batch_size << '\n';
  out << "source_lr = " << format_double(spec.source_train.lr) << '\n';
  out << "source_emb_dim = " << spec.source_train.emb_dim << '\n';
  out << "source_hidden = " << spec.source_train.hidden << '\n';
  return out.str();
}

// --- corpus construction per setting ------------------------------------------------

namespace detail {

enum ExperimentStream : std::uint64_t {
  kExpSource = 300,    // + source index
  kExpTarget = 340,    // +0 pool, +1 dev, +2 test
  kExpStatic = 350,
  kExpUnderlying = 351,
  kExpAlignMap = 352,
  kExpSubsample = 400,  // + subset index
  kExpCellInit = 500,   // + 8*subset index + 2*condition + {0,1}
  kExpCellTrain = 700,
};

inline std::vector<std::string> uniform_sentence(Rng& rng, const ExperimentSpec& spec,
                                                 const std::vector<std::string>& surfaces,
                                                 std::vector<std::size_t>* ids) {
  const std::size_t len =
      spec.len_min + static_cast<std::size_t>(rng.next_below(spec.len_max - spec.len_min + 1));
  std::vector<std::string> tokens(len);
  ids->resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t t = static_cast<std::size_t>(rng.next_below(surfaces.size()));
    tokens[i] = surfaces[t];
    (*ids)[i] = t;
  }
  return tokens;
}

/// Domain-skewed draw: probability `own_mass` from the given vocab block,
/// the rest uniform over everything.
inline std::vector<std::string> skewed_sentence(Rng& rng, const ExperimentSpec& spec,
                                                const std::vector<std::string>& surfaces,
                                                std::size_t block_begin, std::size_t block_end,
                                                double own_mass, std::vector<std::size_t>* ids) {
  const std::size_t len =
      spec.len_min + static_cast<std::size_t>(rng.next_below(spec.len_max - spec.len_min + 1));
  std::vector<std::string> tokens(len);
  ids->resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t t;
    if (rng.next_unit() < own_mass)
      t = block_begin + static_cast<std::size_t>(rng.next_below(block_end - block_begin));
    else
      t = static_cast<std::size_t>(rng.next_below(surfaces.size()));
    tokens[i] = surfaces[t];
    (*ids)[i] = t;
  }
  return tokens;
}

inline EmbeddingTable random_static_table(const std::vector<std::string>& surfaces,
                                          std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::string, Vector>> rows;
  rows.reserve(surfaces.size());
  for (const auto& tok : surfaces) {
    Vector row(dim);
    for (double& v : row) v = rng.next_range(-0.5, 0.5);
    rows.emplace_back(tok, std::move(row));
  }
  return build_embedding_table(rows, dim);
}

}  // namespace detail

/// Everything run_experiment trains on. `source_static_table` is set only in
/// the cross-lingual setting, where sources consume frozen shared-space
/// vectors instead of their own lookup tables.
struct ExperimentCorpora {
  std::vector<Dataset> sources;
  Dataset target_pool;
  Dataset target_dev;
  Dataset target_test;
  EmbeddingTable statics;
  bool sources_use_static = false;
  EmbeddingTable source_static_table;
};

inline ExperimentCorpora build_corpora(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentCorpora out;
  const std::size_t K = spec.sources.size();

  // Hidden class map shared by every dataset in the experiment.
  SynthSpec map_spec;
  map_spec.vocab_size = spec.vocab_size;
  map_spec.n_classes = spec.n_classes;
  map_spec.seed = spec.seed;
  const std::vector<std::size_t> class_map = synth_class_map(map_spec);

  auto span_labels = [&](const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> classes(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) classes[i] = class_map[ids[i]];
    return synth_target_labels(classes);
  };

  auto class_tag_labels = [&](const std::vector<std::size_t>& ids, std::size_t k,
                              bool informative, Rng& rng) {
    std::vector<std::string> labels(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t c = informative
                                ? class_map[ids[i]]
                                : static_cast<std::size_t>(rng.next_below(spec.n_classes));
      labels[i] = "B-S" + std::to_string(k) + "C" + std::to_string(c);
    }
    return labels;
  };

  if (spec.setting == Setting::kCrossLingual) {
    // One surface vocabulary per language, all mapped into a shared space:
    // aligned(lang, id) = R * w_id with one underlying vector per token id
    // and one shared linear map R.
    std::vector<std::vector<std::string>> lang_surfaces(K + 1);
    for (std::size_t lang = 0; lang <= K; ++lang) {
      lang_surfaces[lang].resize(spec.vocab_size);
      const std::string prefix =
          lang < K ? "l" + std::to_string(lang) + "_t" : std::string("tgt_t");
      for (std::size_t i = 0; i < spec.vocab_size; ++i)
        lang_surfaces[lang][i] = prefix + std::to_string(i);
    }

    Rng underlying_rng(derive_seed(spec.seed, detail::kExpUnderlying));
    Matrix underlying(spec.vocab_size, spec.static_dim);
    for (double& v : underlying.data()) v = underlying_rng.next_range(-0.5, 0.5);
    Rng map_rng(derive_seed(spec.seed, detail::kExpAlignMap));
    Matrix align(spec.static_dim, spec.static_dim);
    {
      const double bound = std::sqrt(3.0 / static_cast<double>(spec.static_dim));
      for (double& v : align.data()) v = map_rng.next_range(-bound, bound);
    }
    const Matrix aligned = matmul(underlying, align);  // vocab x static_dim

    std::vector<std::pair<std::string, Vector>> rows;
    for (std::size_t lang = 0; lang <= K; ++lang)
      for (std::size_t i = 0; i < spec.vocab_size; ++i) {
        Vector row(spec.static_dim);
        for (std::size_t j = 0; j < spec.static_dim; ++j) row[j] = aligned(i, j);
        rows.emplace_back(lang_surfaces[lang][i], std::move(row));
      }
    out.statics = build_embedding_table(rows, spec.static_dim);
    out.sources_use_static = true;
    out.source_static_table = out.statics;

    for (std::size_t k = 0; k < K; ++k) {
      Rng rng(derive_seed(spec.seed, detail::kExpSource + k));
      std::vector<TaggedSentence> sents(spec.source_sentences);
      for (auto& s : sents) {
        std::vector<std::size_t> ids;
        s.tokens = detail::uniform_sentence(rng, spec, lang_surfaces[k], &ids);
        s.labels = span_labels(ids);
      }
      out.sources.push_back(make_dataset(std::move(sents)));
    }

    auto gen_target = [&](std::size_t n, std::uint64_t tag) {
      Rng rng(derive_seed(spec.seed, tag));
      std::vector<TaggedSentence> sents(n);
      for (auto& s : sents) {
        std::vector<std::size_t> ids;
        s.tokens = detail::uniform_sentence(rng, spec, lang_surfaces[K], &ids);
        s.labels = span_labels(ids);
      }
      return make_dataset(std::move(sents));
    };
    out.target_pool = gen_target(spec.target_train, detail::kExpTarget + 0);
    out.target_dev = gen_target(spec.target_dev, detail::kExpTarget + 1);
    out.target_test = gen_target(spec.target_test, detail::kExpTarget + 2);
    return out;
  }

  // Shared surface vocabulary for cross-task and cross-domain.
  std::vector<std::string> surfaces(spec.vocab_size);
  for (std::size_t i = 0; i < spec.vocab_size; ++i) surfaces[i] = synth_token(i);
  out.statics = detail::random_static_table(surfaces, spec.static_dim,
                                            derive_seed(spec.seed, detail::kExpStatic));

  const std::size_t parts = K + 1;  // cross-domain blocks; last one is the target's
  auto block = [&](std::size_t p) {
    const std::size_t begin = p * spec.vocab_size / parts;
    const std::size_t end = (p + 1) * spec.vocab_size / parts;
    return std::make_pair(begin, end);
  };

  for (std::size_t k = 0; k < K; ++k) {
    Rng rng(derive_seed(spec.seed, detail::kExpSource + k));
    std::vector<TaggedSentence> sents(spec.source_sentences);
    for (auto& s : sents) {
      std::vector<std::size_t> ids;
      if (spec.setting == Setting::kCrossDomain) {
        const auto [b, e] = block(k);
        s.tokens = detail::skewed_sentence(rng, spec, surfaces, b, e, 0.8, &ids);
        s.labels = span_labels(ids);  // same task, different domain
      } else {
        s.tokens = detail::uniform_sentence(rng, spec, surfaces, &ids);
        s.labels = class_tag_labels(ids, k, spec.sources[k].informative, rng);
      }
    }
    out.sources.push_back(make_dataset(std::move(sents)));
  }

  auto gen_target = [&](std::size_t n, std::uint64_t tag) {
    Rng rng(derive_seed(spec.seed, tag));
    std::vector<TaggedSentence> sents(n);
    for (auto& s : sents) {
      std::vector<std::size_t> ids;
      if (spec.setting == Setting::kCrossDomain) {
        const auto [b, e] = block(K);
        s.tokens = detail::skewed_sentence(rng, spec, surfaces, b, e, 0.8, &ids);
      } else {
        s.tokens = detail::uniform_sentence(rng, spec, surfaces, &ids);
      }
      s.labels = span_labels(ids);
    }
    return make_dataset(std::move(sents));
  };
  out.target_pool = gen_target(spec.target_train, detail::kExpTarget + 0);
  out.target_dev = gen_target(spec.target_dev, detail::kExpTarget + 1);
  out.target_test = gen_target(spec.target_test, detail::kExpTarget + 2);
  return out;
}

// --- running the grid ------------------------------------------------------------

struct ExperimentCell {
  std::string subset_label;  // "100" or "all"
  std::size_t subset_size = 0;
  Condition condition = Condition::kStaticOnly;
  F1Result dev;
  F1Result test;
  std::size_t best_epoch = 0;
  std::vector<std::string> source_names;
  Vector weights;  // softmax of best-epoch logits; empty for static_only
  double gamma = 0.0;
  std::vector<std::vector<std::string>> test_pred;
  std::string param_blob;  // serialized best-epoch parameters
};

struct ExperimentReport {
  std::string config_echo;
  Setting setting = Setting::kCrossTask;
  std::vector<ExperimentCell> cells;
  Dataset test_data;
  double wall_seconds = 0.0;  // informational only; never serialized
};

/// Trains the frozen sources once, then every (subset size, condition) cell.
/// All seeds derive from the spec, so repeated runs are bit-identical.
inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  spec.validate();
  const ExperimentCorpora corpora = build_corpora(spec);

  // Sources train on their complete datasets, then freeze.
  std::vector<std::shared_ptr<SourceEncoder>> encoders;
  for (std::size_t k = 0; k < corpora.sources.size(); ++k) {
    SourceTrainConfig cfg = spec.source_train;
    cfg.seed = derive_seed(spec.seed, detail::kExpSource + 64 + k);
    ToyEncoderParams params =
        train_source(cfg, corpora.sources[k],
                     corpora.sources_use_static ? &corpora.source_static_table : nullptr);
    encoders.push_back(
        std::make_shared<ToyEncoder>(spec.sources[k].name, std::move(params)));
  }
  std::vector<const SourceEncoder*> encoder_ptrs;
  std::vector<std::size_t> source_dims;
  std::vector<std::string> source_names;
  for (const auto& e : encoders) {
    encoder_ptrs.push_back(e.get());
    source_dims.push_back(e->dim());
    source_names.push_back(e->name());
  }

  ExperimentReport report;
  report.config_echo = format_experiment_spec(spec);
  report.setting = spec.setting;
  report.test_data = corpora.target_test;

  for (std::size_t si = 0; si < spec.subset_sizes.size(); ++si) {
    const std::size_t requested = spec.subset_sizes[si];
    const Dataset train_data =
        requested == 0 ? corpora.target_pool
                       : subsample(corpora.target_pool, requested,
                                   derive_seed(spec.seed, detail::kExpSubsample + si));
    const std::string label = requested == 0 ? "all" : std::to_string(requested);

    for (Condition condition : spec.conditions) {
      const bool mix_condition = condition == Condition::kStaticPlusMix;
      const std::uint64_t cell_tag =
          detail::kExpCellInit + 8 * si + 2 * static_cast<std::uint64_t>(mix_condition);

      TrainConfig tc = spec.target_train_config;
      tc.seed = derive_seed(spec.seed, detail::kExpCellTrain + 8 * si +
                                           2 * static_cast<std::uint64_t>(mix_condition));

      const std::size_t input_dim =
          (mix_condition ? tc.proj_dim : 0) + corpora.statics.dim;
      TaggerParams tagger = make_tagger(input_dim, tc.hidden, tc.resolved_layers(),
                                        train_data.label_vocab.size(), tc.decoder,
                                        derive_seed(spec.seed, cell_tag));
      MixParams mix;
      std::vector<const SourceEncoder*> cell_encoders;
      if (mix_condition) {
        mix = init_mix_params(source_dims, tc.proj_dim,
                              derive_seed(spec.seed, cell_tag + 1));
        cell_encoders = encoder_ptrs;
      }

      TrainResult trained = train_target(tc, train_data, corpora.target_dev, cell_encoders,
                                         corpora.statics, std::move(mix), std::move(tagger));

      // test-set decode with the best parameters
      const auto label_ids = label_index(train_data.label_vocab);
      const std::vector<SentenceExample> test_ex =
          build_examples(corpora.target_test, cell_encoders, corpora.statics, label_ids);
      std::vector<std::vector<std::string>> gold, pred;
      for (const auto& ex : test_ex) {
        const std::vector<std::size_t> path =
            sentence_decode(mix_condition ? &trained.mix : nullptr, trained.tagger, ex);
        std::vector<std::string> tags(path.size());
        for (std::size_t i = 0; i < path.size(); ++i)
          tags[i] = train_data.label_vocab[path[i]];
        gold.push_back(ex.gold_tags);
        pred.push_back(std::move(tags));
      }

      ExperimentCell cell;
      cell.subset_label = label;
      cell.subset_size = train_data.size();
      cell.condition = condition;
      cell.best_epoch = trained.best_epoch;
      const EpochMetrics& best = trained.metrics[trained.best_epoch - 1];
      cell.dev.precision = best.dev_precision;
      cell.dev.recall = best.dev_recall;
      cell.dev.f1 = best.dev_f1;
      cell.test = span_f1(gold, pred);
      cell.test_pred = std::move(pred);
      if (mix_condition) {
        cell.source_names = source_names;
        cell.weights = softmax_weights(trained.mix.logits);
        cell.gamma = trained.mix.gamma;
      }
      {
        std::ostringstream blob;
        ParamWriter w(blob);
        if (mix_condition) save_mix_params(w, "mixer", trained.mix);
        save_tagger_params(w, "tagger", trained.tagger);
        cell.param_blob = blob.str();
      }
      report.cells.push_back(std::move(cell));
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// --- report rendering -------------------------------------------------------------

inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

/// Markdown table in the paper's layout: one row per embedding condition,
/// one (dev, test) column pair per subset size, percentages to 2 decimals.
inline std::string emit_table(const ExperimentReport& report) {
  // collect subset labels in order of first appearance
  std::vector<std::string> sizes;
  std::vector<Condition> conds;
  for (const auto& c : report.cells) {
    bool seen = false;
    for (const auto& s : sizes) seen = seen || s == c.subset_label;
    if (!seen) sizes.push_back(c.subset_label);
    bool cseen = false;
    for (const auto& k : conds) cseen = cseen || k == c.condition;
    if (!cseen) conds.push_back(c.condition);
  }
  std::ostringstream out;
  out << "| embeddings |";
  for (const auto& s : sizes) out << " n=" << s << " dev | n=" << s << " test |";
  out << '\n' << "| --- |";
  for (std::size_t i = 0; i < sizes.size(); ++i) out << " --- | --- |";
  out << '\n';
  for (Condition cond : conds) {
    out << "| " << condition_name(cond) << " |";
    for (const auto& s : sizes) {
      const ExperimentCell* cell = nullptr;
      for (const auto& c : report.cells)
        if (c.subset_label == s && c.condition == cond) cell = &c;
      if (cell)
        out << ' ' << format_percent(cell->dev.f1) << " | "
            << format_percent(cell->test.f1) << " |";
      else
        out << " - | - |";
    }
    out << '\n';
  }
  return out.str();
}

/// Learned-weight report: sources sorted by descending weight, 2-decimal
/// weights, then gamma. Weights are read at the best dev epoch.
inline std::string inspect_mix(const MixParams& params,
                               const std::vector<std::string>& names) {
  if (names.size() != params.logits.size())
    throw ValidationError("inspect_mix: need one name per source");
  const Vector weights = softmax_weights(params.logits);
  std::vector<std::size_t> order(names.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::ostringstream out;
  out << "mixture weights (softmax of logits, best dev epoch):\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) out << " / ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", weights[order[i]]);
    out << names[order[i]] << ' ' << buf;
  }
  out << '\n';
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", params.gamma);
    out << "gamma " << buf << '\n';
  }
  out << "note: rounded weights sum to 1.00 +/- 0.01\n";
  return out.str();
}

/// TSV metric dump, one row per cell (raw fractions, round-trip formatting).
inline std::string emit_metrics_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "setting\tsubset\tcondition\tdev_p\tdev_r\tdev_f1\ttest_p\ttest_r\ttest_f1\t"
         "best_epoch\n";
  for (const auto& c : report.cells) {
    out << setting_name(report.setting) << '\t' << c.subset_label << '\t'
        << condition_name(c.condition) << '\t' << format_double(c.dev.precision) << '\t'
        << format_double(c.dev.recall) << '\t' << format_double(c.dev.f1) << '\t'
        << format_double(c.test.precision) << '\t' << format_double(c.test.recall) << '\t'
        << format_double(c.test.f1) << '\t' << c.best_epoch << '\n';
  }
  return out.str();
}

inline std::string emit_weight_report(const ExperimentReport& report) {
  std::ostringstream out;
  for (const auto& c : report.cells) {
    if (c.weights.empty()) continue;
    out << "subset=" << c.subset_label << " condition=" << condition_name(c.condition)
        << '\n';
    MixParams view;
    view.logits.resize(c.weights.size());
    for (std::size_t i = 0; i < c.weights.size(); ++i)
      view.logits[i] = std::log(c.weights[i]);
    view.gamma = c.gamma;
    view.proj_dim = 0;
    out << inspect_mix(view, c.source_names) << '\n';
  }
  return out.str();
}

/// Writes table.md, metrics.tsv, weights.txt, the config echo and per-cell
/// prediction files under `dir`.
inline void write_report_files(const ExperimentReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "predictions", ec);
  if (ec) throw IoError("cannot create output directory: " + dir);

  write_file((fs::path(dir) / "table.md").string(), emit_table(report));
  write_file((fs::path(dir) / "metrics.tsv").string(), emit_metrics_tsv(report));
  write_file((fs::path(dir) / "weights.txt").string(), emit_weight_report(report));
  write_file((fs::path(dir) / "spec.echo").string(), report.config_echo);
  for (const auto& c : report.cells) {
    std::ostringstream pred;
    write_predictions(pred, report.test_data, c.test_pred);
    const std::string name = c.subset_label + "_" + condition_name(c.condition) + ".tsv";
    write_file((fs::path(dir) / "predictions" / name).string(), pred.str());
  }
}

}  // namespace srcmix
