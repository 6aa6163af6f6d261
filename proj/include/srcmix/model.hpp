#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srcmix/embeddings.hpp"
#include "srcmix/encoders.hpp"
#include "srcmix/errors.hpp"
#include "srcmix/mixer.hpp"
#include "srcmix/serialize.hpp"
#include "srcmix/tagger.hpp"

namespace srcmix {

// --- piecewise (de)serialization of parameter structs ------------------------------

inline void save_embedding_table(ParamWriter& w, const std::string& prefix,
                                 const EmbeddingTable& t) {
  w.scalar(prefix + ".dim", static_cast<double>(t.dim));
  w.strings(prefix + ".tokens", t.tokens);
  w.matrix(prefix + ".matrix", t.matrix);
}

inline EmbeddingTable load_embedding_table(const ParamReader& r, const std::string& prefix) {
  EmbeddingTable t;
  t.dim = static_cast<std::size_t>(r.scalar(prefix + ".dim"));
  t.tokens = r.strings(prefix + ".tokens");
  t.matrix = r.matrix(prefix + ".matrix");
  if (t.matrix.rows() != t.tokens.size() ||
      (t.matrix.rows() > 0 && t.matrix.cols() != t.dim))
    throw ParseError("embedding table '" + prefix + "': inconsistent shapes");
  t.unk_row.assign(t.dim, 0.0);
  for (std::size_t i = 0; i < t.tokens.size(); ++i) t.vocab.emplace(t.tokens[i], i);
  return t;
}

inline void save_gru_cell(ParamWriter& w, const std::string& prefix, const GruCell& c) {
  w.matrix(prefix + ".wz", c.wz);
  w.matrix(prefix + ".uz", c.uz);
  w.vector(prefix + ".bz", c.bz);
  w.matrix(prefix + ".wr", c.wr);
  w.matrix(prefix + ".ur", c.ur);
  w.vector(prefix + ".br", c.br);
  w.matrix(prefix + ".wh", c.wh);
  w.matrix(prefix + ".uh", c.uh);
  w.vector(prefix + ".bh", c.bh);
}

inline GruCell load_gru_cell(const ParamReader& r, const std::string& prefix) {
  GruCell c;
  c.wz = r.matrix(prefix + ".wz");
  c.uz = r.matrix(prefix + ".uz");
  c.bz = r.vector(prefix + ".bz");
  c.wr = r.matrix(prefix + ".wr");
  c.ur = r.matrix(prefix + ".ur");
  c.br = r.vector(prefix + ".br");
  c.wh = r.matrix(prefix + ".wh");
  c.uh = r.matrix(prefix + ".uh");
  c.bh = r.vector(prefix + ".bh");
  return c;
}

inline void save_bigru_layer(ParamWriter& w, const std::string& prefix, const BiGruLayer& l) {
  save_gru_cell(w, prefix + ".fwd", l.fwd);
  save_gru_cell(w, prefix + ".bwd", l.bwd);
}

inline BiGruLayer load_bigru_layer(const ParamReader& r, const std::string& prefix) {
  return BiGruLayer{load_gru_cell(r, prefix + ".fwd"), load_gru_cell(r, prefix + ".bwd")};
}

inline void save_toy_params(ParamWriter& w, const std::string& prefix,
                            const ToyEncoderParams& p) {
  w.string(prefix + ".mode", p.mode == ToyInputMode::kLookup ? "lookup" : "static");
  save_embedding_table(w, prefix + ".emb", p.emb);
  save_bigru_layer(w, prefix + ".layer", p.layer);
  w.matrix(prefix + ".classifier", p.classifier);
  w.strings(prefix + ".labels", p.label_vocab);
}

inline ToyEncoderParams load_toy_params(const ParamReader& r, const std::string& prefix) {
  ToyEncoderParams p;
  const std::string mode = r.string(prefix + ".mode");
  if (mode != "lookup" && mode != "static")
    throw ParseError("toy encoder '" + prefix + "': unknown mode '" + mode + "'");
  p.mode = mode == "lookup" ? ToyInputMode::kLookup : ToyInputMode::kStatic;
  p.emb = load_embedding_table(r, prefix + ".emb");
  p.layer = load_bigru_layer(r, prefix + ".layer");
  p.classifier = r.matrix(prefix + ".classifier");
  p.label_vocab = r.strings(prefix + ".labels");
  return p;
}

inline void save_mix_params(ParamWriter& w, const std::string& prefix, const MixParams& p) {
  w.scalar(prefix + ".sources", static_cast<double>(p.source_count()));
  w.scalar(prefix + ".proj_dim", static_cast<double>(p.proj_dim));
  for (std::size_t k = 0; k < p.projections.size(); ++k)
    w.matrix(prefix + ".proj." + std::to_string(k), p.projections[k]);
  w.vector(prefix + ".logits", p.logits);
  w.scalar(prefix + ".gamma", p.gamma);
}

inline MixParams load_mix_params(const ParamReader& r, const std::string& prefix) {
  MixParams p;
  const std::size_t k = static_cast<std::size_t>(r.scalar(prefix + ".sources"));
  p.proj_dim = static_cast<std::size_t>(r.scalar(prefix + ".proj_dim"));
  for (std::size_t i = 0; i < k; ++i)
    p.projections.push_back(r.matrix(prefix + ".proj." + std::to_string(i)));
  p.logits = r.vector(prefix + ".logits");
  p.gamma = r.scalar(prefix + ".gamma");
  if (p.logits.size() != k) throw ParseError("mix params '" + prefix + "': logit count");
  return p;
}

inline void save_tagger_params(ParamWriter& w, const std::string& prefix,
                               const TaggerParams& p) {
  w.string(prefix + ".decoder", decoder_kind_name(p.decoder));
  w.scalar(prefix + ".layers", static_cast<double>(p.layers.size()));
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    save_bigru_layer(w, prefix + ".layer." + std::to_string(l), p.layers[l]);
  w.matrix(prefix + ".emission_w", p.emission_w);
  w.vector(prefix + ".emission_b", p.emission_b);
  w.matrix(prefix + ".trans", p.trans);
  w.vector(prefix + ".start", p.start);
  w.vector(prefix + ".stop", p.stop);
}

inline TaggerParams load_tagger_params(const ParamReader& r, const std::string& prefix) {
  TaggerParams p;
  p.decoder = decoder_kind_from_name(r.string(prefix + ".decoder"));
  const std::size_t layers = static_cast<std::size_t>(r.scalar(prefix + ".layers"));
  for (std::size_t l = 0; l < layers; ++l)
    p.layers.push_back(load_bigru_layer(r, prefix + ".layer." + std::to_string(l)));
  p.emission_w = r.matrix(prefix + ".emission_w");
  p.emission_b = r.vector(prefix + ".emission_b");
  p.trans = r.matrix(prefix + ".trans");
  p.start = r.vector(prefix + ".start");
  p.stop = r.vector(prefix + ".stop");
  return p;
}

// --- standalone toy encoder files ---------------------------------------------------

inline void save_toy_encoder_file(const std::string& path, const std::string& name,
                                  const ToyEncoderParams& params) {
  std::ostringstream out;
  ParamWriter w(out);
  w.string("model_kind", "toy-encoder");
  w.string("name", name);
  save_toy_params(w, "toy", params);
  write_file(path, out.str());
}

inline std::pair<std::string, ToyEncoderParams> load_toy_encoder_file(
    const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  ParamReader r(in);
  if (r.string("model_kind") != "toy-encoder")
    throw ParseError(path + ": not a toy-encoder file");
  return {r.string("name"), load_toy_params(r, "toy")};
}

// --- the combined target model ------------------------------------------------------

/// Everything `evaluate` needs in one file: frozen sources (toy encoders
/// inline, caches by reference), the static table, the mixer and the tagger.
struct TargetModel {
  std::vector<std::shared_ptr<SourceEncoder>> sources;
  std::vector<std::string> source_kinds;  // "toy" or "cache", parallel to sources
  std::vector<std::string> source_paths;  // original path per source (caches reload)
  EmbeddingTable statics;
  MixParams mix;  // meaningful iff !sources.empty()
  TaggerParams tagger;
  std::vector<std::string> labels;

  bool uses_mix() const { return !sources.empty(); }

  std::vector<const SourceEncoder*> encoder_ptrs() const {
    std::vector<const SourceEncoder*> out;
    for (const auto& s : sources) out.push_back(s.get());
    return out;
  }
};

inline void save_target_model(const std::string& path, const TargetModel& m) {
  std::ostringstream out;
  ParamWriter w(out);
  w.string("model_kind", "target-tagger");
  w.strings("labels", m.labels);
  save_embedding_table(w, "static", m.statics);
  w.scalar("sources", static_cast<double>(m.sources.size()));
  for (std::size_t k = 0; k < m.sources.size(); ++k) {
    const std::string prefix = "source." + std::to_string(k);
    w.string(prefix + ".kind", m.source_kinds[k]);
    w.string(prefix + ".name", m.sources[k]->name());
    if (m.source_kinds[k] == "toy") {
      const auto* toy = dynamic_cast<const ToyEncoder*>(m.sources[k].get());
      if (!toy) throw ValidationError("source " + std::to_string(k) + " is not a toy encoder");
      save_toy_params(w, prefix + ".toy", toy->params());
    } else {
      w.string(prefix + ".path", m.source_paths[k]);
    }
  }
  if (m.uses_mix()) save_mix_params(w, "mixer", m.mix);
  save_tagger_params(w, "tagger", m.tagger);
  write_file(path, out.str());
}

inline TargetModel load_target_model(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  ParamReader r(in);
  if (r.string("model_kind") != "target-tagger")
    throw ParseError(path + ": not a target-tagger model file");
  TargetModel m;
  m.labels = r.strings("labels");
  m.statics = load_embedding_table(r, "static");
  const std::size_t sources = static_cast<std::size_t>(r.scalar("sources"));
  for (std::size_t k = 0; k < sources; ++k) {
    const std::string prefix = "source." + std::to_string(k);
    const std::string kind = r.string(prefix + ".kind");
    const std::string name = r.string(prefix + ".name");
    if (kind == "toy") {
      m.sources.push_back(
          std::make_shared<ToyEncoder>(name, load_toy_params(r, prefix + ".toy")));
      m.source_paths.push_back({});
    } else if (kind == "cache") {
      const std::string cache_path = r.string(prefix + ".path");
      m.sources.push_back(
          std::make_shared<CachedEncoder>(name, SentenceCache::load(cache_path)));
      m.source_paths.push_back(cache_path);
    } else {
      throw ParseError(path + ": unknown source kind '" + kind + "'");
    }
    m.source_kinds.push_back(kind);
  }
  if (!m.sources.empty()) m.mix = load_mix_params(r, "mixer");
  m.tagger = load_tagger_params(r, "tagger");
  return m;
}

}  // namespace srcmix
