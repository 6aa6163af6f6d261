#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "srcmix/adam.hpp"
#include "srcmix/config.hpp"
#include "srcmix/corpus.hpp"
#include "srcmix/embeddings.hpp"
#include "srcmix/encoders.hpp"
#include "srcmix/errors.hpp"
#include "srcmix/evaluation.hpp"
#include "srcmix/mixer.hpp"
#include "srcmix/tagger.hpp"
#include "srcmix/textio.hpp"

namespace srcmix {

/// Target-training hyperparameters. Zero means "derive the default": epochs
/// follow the decoder style (75 for the CRF tagger, 50 for the softmax one),
/// batch size follows the data scale (8 up to 1000 training sentences, 16
/// beyond), layers follow the decoder (1 for CRF, 2 for softmax).
struct TrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.001;
  std::uint64_t seed = 1;
  bool train_mixer = true;
  bool train_tagger = true;
  std::size_t hidden = 50;
  std::size_t layers = 0;
  std::size_t proj_dim = 300;
  DecoderKind decoder = DecoderKind::kCrf;

  std::size_t resolved_epochs() const {
    if (epochs) return epochs;
    return decoder == DecoderKind::kCrf ? 75 : 50;
  }
  std::size_t resolved_batch(std::size_t train_size) const {
    if (batch_size) return batch_size;
    return train_size <= 1000 ? 8 : 16;
  }
  std::size_t resolved_layers() const {
    if (layers) return layers;
    return decoder == DecoderKind::kCrf ? 1 : 2;
  }
};

inline const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "epochs", "batch_size", "lr",     "seed",    "trainable",
      "hidden", "layers",     "decoder", "proj_dim"};
  return keys;
}

inline TrainConfig train_config_from(const Config& cfg) {
  cfg.require_known(train_config_keys());
  TrainConfig tc;
  tc.epochs = cfg.get_u64("epochs", 0);
  tc.batch_size = cfg.get_u64("batch_size", 0);
  tc.lr = cfg.get_double("lr", 0.001);
  tc.seed = cfg.get_u64("seed", 1);
  tc.hidden = cfg.get_u64("hidden", 50);
  tc.layers = cfg.get_u64("layers", 0);
  tc.proj_dim = cfg.get_u64("proj_dim", 300);
  tc.decoder = decoder_kind_from_name(cfg.get_string("decoder", "crf"));
  if (cfg.has("trainable")) {
    tc.train_mixer = false;
    tc.train_tagger = false;
    for (const auto& g : split_csv(cfg.get_string("trainable"))) {
      if (g == "mixer")
        tc.train_mixer = true;
      else if (g == "tagger")
        tc.train_tagger = true;
      else
        throw ValidationError("config: unknown trainable group '" + g + "'");
    }
  }
  if (tc.epochs == 0 && cfg.has("epochs"))
    throw ValidationError("config: epochs must be >= 1");
  if (tc.hidden == 0) throw ValidationError("config: hidden must be >= 1");
  return tc;
}

// --- the target pipeline ----------------------------------------------------------

/// Frozen per-sentence features: the source stack (empty for the baseline),
/// the static embedding rows, and gold label ids.
struct SentenceExample {
  SourceStack stack;
  Matrix base;
  std::vector<std::size_t> label_ids;
  std::vector<std::string> gold_tags;
  const std::vector<std::string>* tokens = nullptr;
};

inline void add_into(MixParams& acc, const MixParams& g) {
  for (std::size_t k = 0; k < acc.projections.size(); ++k) {
    Vector& a = acc.projections[k].data();
    const Vector& b = g.projections[k].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  for (std::size_t k = 0; k < acc.logits.size(); ++k) acc.logits[k] += g.logits[k];
  acc.gamma += g.gamma;
}

/// Loss of one sentence through mix -> concat -> encoder -> decoder. With
/// grad outputs given, accumulates every trainable parameter's gradient.
/// A null mix means the static-only baseline (the tagger sees base alone).
inline double sentence_loss(const MixParams* mix, const TaggerParams& tagger,
                            const SentenceExample& ex, MixParams* mix_grad,
                            TaggerParams* tagger_grad) {
  Matrix input;
  MixTrace mix_trace;
  if (mix) {
    const Matrix mixed = mix_forward(*mix, ex.stack, &mix_trace);
    input = concat_with_base(mixed, ex.base);
  } else {
    input = ex.base;
  }
  TaggerTrace trace;
  encode(tagger, input, &trace);
  const Matrix emissions = emissions_from_states(tagger, trace.states);

  if (!tagger_grad) return decoder_nll(tagger, emissions, ex.label_ids);

  Matrix d_emissions(emissions.rows(), emissions.cols());
  const double loss =
      decoder_nll_backward(tagger, emissions, ex.label_ids, d_emissions, *tagger_grad);
  const Matrix d_input = encode_backward(tagger, trace, input, d_emissions, *tagger_grad);
  if (mix && mix_grad) {
    Matrix d_mixed(d_input.rows(), mix->proj_dim);
    for (std::size_t i = 0; i < d_input.rows(); ++i)
      for (std::size_t j = 0; j < mix->proj_dim; ++j) d_mixed(i, j) = d_input(i, j);
    add_into(*mix_grad, mix_backward(*mix, ex.stack, d_mixed, mix_trace));
  }
  return loss;
}

inline std::vector<std::size_t> sentence_decode(const MixParams* mix,
                                                const TaggerParams& tagger,
                                                const SentenceExample& ex) {
  Matrix input;
  if (mix) {
    const Matrix mixed = mix_forward(*mix, ex.stack, nullptr);
    input = concat_with_base(mixed, ex.base);
  } else {
    input = ex.base;
  }
  const Matrix states = encode(tagger, input, nullptr);
  return decode(tagger, emissions_from_states(tagger, states));
}

/// Precomputes frozen features for every sentence. Sources and static
/// vectors never receive gradients, so extracting once up front both speeds
/// training up and enforces the frozen-parameter contract.
inline std::vector<SentenceExample> build_examples(
    const Dataset& data, const std::vector<const SourceEncoder*>& encoders,
    const EmbeddingTable& statics,
    const std::unordered_map<std::string, std::size_t>& label_ids) {
  std::vector<SentenceExample> out;
  out.reserve(data.size());
  for (const auto& sent : data.sentences) {
    SentenceExample ex;
    if (!encoders.empty()) ex.stack = extract_stack(encoders, sent.tokens);
    ex.base = statics.embed(sent.tokens);
    ex.gold_tags = sent.labels;
    ex.tokens = &sent.tokens;
    ex.label_ids.reserve(sent.labels.size());
    for (const auto& tag : sent.labels) {
      auto it = label_ids.find(tag);
      ex.label_ids.push_back(it == label_ids.end() ? 0 : it->second);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::unordered_map<std::string, std::size_t> label_index(
    const std::vector<std::string>& vocab) {
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) ids.emplace(vocab[i], i);
  return ids;
}

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double dev_f1 = 0.0;
};

/// TSV trace: epoch, train_loss, dev_p, dev_r, dev_f1.
inline void write_metrics_tsv(std::ostream& out, const std::vector<EpochMetrics>& rows) {
  out << "epoch\ttrain_loss\tdev_p\tdev_r\tdev_f1\n";
  for (const auto& r : rows)
    out << r.epoch << '\t' << format_double(r.train_loss) << '\t'
        << format_double(r.dev_precision) << '\t' << format_double(r.dev_recall) << '\t'
        << format_double(r.dev_f1) << '\n';
}

struct TrainResult {
  MixParams mix;
  TaggerParams tagger;
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;  // 1-based
  double best_dev_f1 = 0.0;
};

namespace detail {
enum TrainStream : std::uint64_t { kShuffle = 101 };
}

/// Trains mixer + tagger on frozen features: seeded shuffles, mean
/// per-sentence NLL per batch, one Adam step per batch, dev span-F1 after
/// each epoch. Returns the parameters of the best dev epoch (earliest on
/// ties) plus the full metric trace. Only the groups enabled in the config
/// receive updates; sources and static embeddings are never touched.
inline TrainResult train_target(const TrainConfig& config, const Dataset& train_data,
                                const Dataset& dev_data,
                                const std::vector<const SourceEncoder*>& encoders,
                                const EmbeddingTable& statics, MixParams mix,
                                TaggerParams tagger) {
  if (train_data.size() == 0 || dev_data.size() == 0)
    throw ValidationError("train_target: empty train or dev dataset");

  const bool use_mix = !encoders.empty();
  const auto label_ids = label_index(train_data.label_vocab);
  const std::vector<SentenceExample> train_ex =
      build_examples(train_data, encoders, statics, label_ids);
  const std::vector<SentenceExample> dev_ex =
      build_examples(dev_data, encoders, statics, label_ids);

  MixParams mix_grad = zeros_like(mix);
  TaggerParams tagger_grad = zeros_like(tagger);
  std::vector<ParamView> params, grads;
  if (use_mix && config.train_mixer) {
    for (auto& v : param_views(mix)) params.push_back(v);
    for (auto& v : param_views(mix_grad)) grads.push_back(v);
  }
  if (config.train_tagger) {
    for (auto& v : param_views(tagger)) params.push_back(v);
    for (auto& v : param_views(tagger_grad)) grads.push_back(v);
  }
  AdamState adam;
  adam.lr = config.lr;
  adam.register_groups(params);

  const std::size_t batch = config.resolved_batch(train_data.size());
  const std::size_t epochs = config.resolved_epochs();
  Rng shuffle_rng(derive_seed(config.seed, detail::kShuffle));

  TrainResult result;
  result.mix = mix;
  result.tagger = tagger;

  std::vector<std::size_t> order(train_ex.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_index) {
      const std::size_t end = std::min(begin + batch, order.size());
      zero_grads(grads);
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const SentenceExample& ex = train_ex[order[i]];
        const double loss = sentence_loss(use_mix ? &mix : nullptr, tagger, ex,
                                          config.train_mixer ? &mix_grad : nullptr,
                                          &tagger_grad);
        if (!std::isfinite(loss))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
        batch_loss += loss;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      scale_grads(grads, inv);
      epoch_loss += batch_loss;
      adam_step(adam, params, grads);
    }

    // dev evaluation with the current parameters
    std::vector<std::vector<std::string>> gold, pred;
    gold.reserve(dev_ex.size());
    pred.reserve(dev_ex.size());
    for (const auto& ex : dev_ex) {
      const std::vector<std::size_t> path =
          sentence_decode(use_mix ? &mix : nullptr, tagger, ex);
      std::vector<std::string> tags(path.size());
      for (std::size_t i = 0; i < path.size(); ++i)
        tags[i] = train_data.label_vocab[path[i]];
      gold.push_back(ex.gold_tags);
      pred.push_back(std::move(tags));
    }
    const F1Result f1 = span_f1(gold, pred);

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<double>(train_ex.size());
    em.dev_precision = f1.precision;
    em.dev_recall = f1.recall;
    em.dev_f1 = f1.f1;
    result.metrics.push_back(em);

    if (result.best_epoch == 0 || f1.f1 > result.best_dev_f1) {
      result.best_epoch = epoch;
      result.best_dev_f1 = f1.f1;
      result.mix = mix;
      result.tagger = tagger;
    }
  }
  return result;
}

// --- source-task training -------------------------------------------------------

struct SourceTrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 0;  // 0 = derive (8 up to 1000 sentences, 16 beyond)
  double lr = 0.001;
  std::uint64_t seed = 1;
  std::size_t emb_dim = 16;
  std::size_t hidden = 16;

  std::size_t resolved_batch(std::size_t n) const {
    if (batch_size) return batch_size;
    return n <= 1000 ? 8 : 16;
  }
};

inline const std::vector<std::string>& source_config_keys() {
  static const std::vector<std::string> keys = {"epochs", "batch_size", "lr",
                                                "seed",   "emb_dim",    "hidden"};
  return keys;
}

inline SourceTrainConfig source_config_from(const Config& cfg) {
  cfg.require_known(source_config_keys());
  SourceTrainConfig sc;
  sc.epochs = cfg.get_u64("epochs", 3);
  sc.batch_size = cfg.get_u64("batch_size", 0);
  sc.lr = cfg.get_double("lr", 0.001);
  sc.seed = cfg.get_u64("seed", 1);
  sc.emb_dim = cfg.get_u64("emb_dim", 16);
  sc.hidden = cfg.get_u64("hidden", 16);
  if (sc.epochs == 0) throw ValidationError("config: epochs must be >= 1");
  return sc;
}

namespace detail {
enum SourceStream : std::uint64_t { kSourceInit = 201, kSourceShuffle = 202 };
}

/// Trains the toy reference encoder on its source task with per-token
/// softmax cross-entropy. With an external table the embeddings stay frozen
/// (kStatic mode); otherwise a trainable table is built over the corpus
/// vocabulary, initialized uniform in [-0.1, 0.1].
inline ToyEncoderParams train_source(const SourceTrainConfig& config, const Dataset& data,
                                     const EmbeddingTable* static_table = nullptr) {
  if (data.size() == 0) throw ValidationError("train_source: empty dataset");
  Rng init_rng(derive_seed(config.seed, detail::kSourceInit));

  ToyEncoderParams p;
  if (static_table) {
    p.mode = ToyInputMode::kStatic;
    p.emb = *static_table;
  } else {
    p.mode = ToyInputMode::kLookup;
    std::vector<std::pair<std::string, Vector>> rows;
    rows.reserve(data.token_vocab.size());
    for (const auto& tok : data.token_vocab) {
      Vector row(config.emb_dim);
      for (double& v : row) v = init_rng.next_range(-0.1, 0.1);
      rows.emplace_back(tok, std::move(row));
    }
    p.emb = build_embedding_table(rows, config.emb_dim);
  }
  p.label_vocab = data.label_vocab;
  p.layer = make_bigru_layer(p.emb.dim, config.hidden);
  init_bigru_layer(p.layer, init_rng);
  const std::size_t L = data.label_vocab.size();
  p.classifier = Matrix(2 * config.hidden, L);
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * config.hidden + L));
    for (double& v : p.classifier.data()) v = init_rng.next_range(-bound, bound);
  }

  const auto label_ids = label_index(data.label_vocab);
  const bool train_emb = p.mode == ToyInputMode::kLookup;

  // gradient twins
  BiGruLayer layer_grad = make_bigru_layer(p.emb.dim, config.hidden);
  Matrix classifier_grad(p.classifier.rows(), p.classifier.cols());
  Matrix emb_grad(p.emb.matrix.rows(), p.emb.matrix.cols());

  std::vector<ParamView> params, grads;
  if (train_emb) {
    append_view(params, "source.emb", p.emb.matrix);
    append_view(grads, "source.emb", emb_grad);
  }
  append_cell_views(params, "source.fwd", p.layer.fwd);
  append_cell_views(grads, "source.fwd", layer_grad.fwd);
  append_cell_views(params, "source.bwd", p.layer.bwd);
  append_cell_views(grads, "source.bwd", layer_grad.bwd);
  append_view(params, "source.classifier", p.classifier);
  append_view(grads, "source.classifier", classifier_grad);

  AdamState adam;
  adam.lr = config.lr;
  adam.register_groups(params);

  Rng shuffle_rng(derive_seed(config.seed, detail::kSourceShuffle));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = config.resolved_batch(data.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_index) {
      const std::size_t end = std::min(begin + batch, order.size());
      zero_grads(grads);
      for (std::size_t i = begin; i < end; ++i) {
        const TaggedSentence& sent = data.sentences[order[i]];
        const Matrix x = p.emb.embed(sent.tokens);
        BiGruTrace trace;
        const Matrix states = bigru_forward(p.layer, x, &trace);
        const Matrix logits = matmul(states, p.classifier);
        std::vector<std::size_t> ids(sent.labels.size());
        for (std::size_t n = 0; n < ids.size(); ++n) ids[n] = label_ids.at(sent.labels[n]);
        Matrix d_logits(logits.rows(), logits.cols());
        const double loss = softmax_nll_backward(logits, ids, d_logits);
        if (!std::isfinite(loss))
          throw NumericError("non-finite source loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
        add_transposed_product(classifier_grad, 1.0, states, d_logits);
        Matrix d_states(states.rows(), states.cols());
        for (std::size_t n = 0; n < d_logits.rows(); ++n)
          add_matvec(d_states.row(n), 1.0, p.classifier, d_logits.row(n));
        const Matrix dx = bigru_backward(p.layer, trace, d_states, layer_grad);
        if (train_emb) {
          for (std::size_t n = 0; n < sent.tokens.size(); ++n) {
            const std::optional<std::size_t> row = p.emb.lookup_row(sent.tokens[n]);
            if (!row) continue;  // UNK row stays zero
            double* g = emb_grad.row(*row);
            for (std::size_t j = 0; j < p.emb.dim; ++j) g[j] += dx(n, j);
          }
        }
      }
      scale_grads(grads, 1.0 / static_cast<double>(end - begin));
      adam_step(adam, params, grads);
    }
  }
  return p;
}

/// Token accuracy of the toy encoder's classifier head on a dataset.
inline double toy_token_accuracy(const ToyEncoderParams& p, const Dataset& data) {
  const auto label_ids = label_index(p.label_vocab);
  std::size_t total = 0, hit = 0;
  for (const auto& sent : data.sentences) {
    const Matrix states = toy_extract(p, sent.tokens);
    const Matrix logits = matmul(states, p.classifier);
    const std::vector<std::size_t> best = argmax_decode(logits);
    for (std::size_t n = 0; n < sent.labels.size(); ++n) {
      ++total;
      auto it = label_ids.find(sent.labels[n]);
      if (it != label_ids.end() && it->second == best[n]) ++hit;
    }
  }
  return total ? static_cast<double>(hit) / total : 0.0;
}

// --- finite-difference gradient checking ----------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates where |analytic| and |numeric| < 1e-12
};

/// Central-difference check of analytic gradients: per sampled coordinate,
/// numeric = (f(theta+s) - f(theta-s)) / 2s and the relative error is
/// |a - n| / max(|a|, |n|, 1e-12). When the parameter space is larger than
/// max_coords, a seeded uniform sample of max_coords coordinates (at least
/// 200) is checked instead of all of them.
inline GradCheckResult grad_check(const std::function<double()>& loss,
                                  const std::vector<ParamView>& params,
                                  const std::vector<ParamView>& analytic, double step,
                                  std::uint64_t seed = 1, std::size_t max_coords = 200) {
  if (params.size() != analytic.size())
    throw ValidationError("grad_check: view lists differ");
  if (max_coords < 200) max_coords = 200;
  std::size_t total = 0;
  for (const auto& v : params) total += v.size;

  std::vector<std::size_t> coords;
  if (total <= max_coords) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    Rng rng(seed);
    coords = rng.sample_indices(total, max_coords);
  }

  auto locate = [&](std::size_t flat) -> std::pair<std::size_t, std::size_t> {
    std::size_t g = 0;
    while (flat >= params[g].size) {
      flat -= params[g].size;
      ++g;
    }
    return {g, flat};
  };

  GradCheckResult result;
  for (std::size_t flat : coords) {
    const auto [g, i] = locate(flat);
    double& theta = params[g].data[i];
    const double saved = theta;
    theta = saved + step;
    const double up = loss();
    theta = saved - step;
    const double down = loss();
    theta = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[g].data[i];
    if (std::abs(a) < 1e-12 && std::abs(numeric) < 1e-12) {
      ++result.skipped;
      continue;
    }
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-12});
    result.max_rel_err = std::max(result.max_rel_err, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace srcmix
