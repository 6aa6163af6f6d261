#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "srcmix/corpus.hpp"
#include "srcmix/embeddings.hpp"
#include "srcmix/errors.hpp"
#include "srcmix/gru.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/source_stack.hpp"

namespace srcmix {

/// A frozen embedding extractor over a pre-existing model: given the tokens
/// of one sentence it returns an N x dim matrix, deterministically, without
/// ever mutating its own parameters.
class SourceEncoder {
 public:
  virtual ~SourceEncoder() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Matrix extract(const std::vector<std::string>& tokens) const = 0;
};

/// Runs every registered encoder over the sentence, in registration order.
inline SourceStack extract_stack(const std::vector<const SourceEncoder*>& encoders,
                                 const std::vector<std::string>& tokens) {
  if (encoders.empty()) throw ValidationError("extract_stack: need at least one encoder");
  if (tokens.empty()) throw ValidationError("extract_stack: empty sentence");
  SourceStack stack;
  for (const SourceEncoder* enc : encoders) {
    Matrix states = enc->extract(tokens);
    if (states.rows() != tokens.size() || states.cols() != enc->dim())
      throw ValidationError("encoder '" + enc->name() + "' broke its contract: returned " +
                            std::to_string(states.rows()) + "x" +
                            std::to_string(states.cols()) + " for " +
                            std::to_string(tokens.size()) + " tokens (dim " +
                            std::to_string(enc->dim()) + ")");
    stack.entries.push_back({enc->name(), std::move(states)});
  }
  return stack;
}

// --- toy reference encoder ------------------------------------------------------

/// How the toy encoder turns tokens into input vectors.
///   kLookup: its own trainable embedding table (built from the source corpus).
///   kStatic: a frozen external table, e.g. shared-space vectors, so the same
///            encoder can serve sentences from a renamed vocabulary.
enum class ToyInputMode { kLookup, kStatic };

/// A small trainable stand-in for a pre-existing supervised model: token
/// embeddings feeding one bidirectional gated recurrent layer, with a linear
/// classifier head used only while the source task is being trained. Its
/// per-token representation is the 2H-wide concatenated hidden state; the
/// classifier is dropped at extraction time.
struct ToyEncoderParams {
  ToyInputMode mode = ToyInputMode::kLookup;
  EmbeddingTable emb;        // vocab x e; frozen when mode == kStatic
  BiGruLayer layer;          // input e, hidden H per direction
  Matrix classifier;         // 2H x L_src, no bias
  std::vector<std::string> label_vocab;

  std::size_t out_dim() const { return layer.output(); }
};

/// Per-token hidden states (classifier head excluded): N x 2H.
inline Matrix toy_extract(const ToyEncoderParams& params,
                          const std::vector<std::string>& tokens) {
  const Matrix x = params.emb.embed(tokens);
  return bigru_forward(params.layer, x, nullptr);
}

class ToyEncoder : public SourceEncoder {
 public:
  ToyEncoder(std::string name, ToyEncoderParams params)
      : name_(std::move(name)), params_(std::move(params)) {}

  const std::string& name() const override { return name_; }
  std::size_t dim() const override { return params_.out_dim(); }
  Matrix extract(const std::vector<std::string>& tokens) const override {
    return toy_extract(params_, tokens);
  }

  const ToyEncoderParams& params() const { return params_; }

 private:
  std::string name_;
  ToyEncoderParams params_;
};

// --- extraction cache -------------------------------------------------------------

/// JSON-lines extraction cache, one record per sentence:
///   {"tokens": [...], "dim": d, "vectors": [[...], ...]}
/// Keys are exact (case-sensitive) token sequences. Decimal float
/// serialization round-trips the underlying binary doubles.
class SentenceCache {
 public:
  SentenceCache() = default;

  static SentenceCache load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cache: " + path);
    SentenceCache cache;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      cache.insert_record(line, path, line_no);
    }
    return cache;
  }

  void store(const std::vector<std::string>& tokens, const Matrix& states) {
    if (states.rows() != tokens.size())
      throw ValidationError("cache store: matrix rows != token count");
    if (dim_ == 0) dim_ = states.cols();
    const std::string key = key_of(tokens);
    if (!entries_.count(key)) order_.push_back(key);
    entries_[key] = states;
  }

  bool contains(const std::vector<std::string>& tokens) const {
    return entries_.count(key_of(tokens)) > 0;
  }

  Matrix fetch(const std::vector<std::string>& tokens) const {
    auto it = entries_.find(key_of(tokens));
    if (it == entries_.end())
      throw CacheMissError("cache miss for sentence: " + key_of(tokens));
    return it->second;
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write cache: " + path);
    // write in insertion order for reproducible files
    for (const auto& key : order_) {
      const Matrix& m = entries_.at(key);
      nlohmann::json rec;
      rec["tokens"] = nlohmann::json::parse(key);
      rec["dim"] = m.cols();
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      rec["vectors"] = std::move(rows);
      out << rec.dump() << '\n';
    }
  }

 private:
  static std::string key_of(const std::vector<std::string>& tokens) {
    return nlohmann::json(tokens).dump();
  }

  void insert_record(const std::string& line, const std::string& path, std::size_t line_no) {
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("tokens") || !rec.contains("dim") ||
        !rec.contains("vectors"))
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": record needs tokens/dim/vectors");
    const auto tokens = rec["tokens"].get<std::vector<std::string>>();
    const std::size_t dim = rec["dim"].get<std::size_t>();
    const auto& vectors = rec["vectors"];
    if (!vectors.is_array() || vectors.size() != tokens.size())
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": vector count != token count");
    Matrix m(tokens.size(), dim);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      const auto& row = vectors[r];
      if (!row.is_array() || row.size() != dim)
        throw ParseError(path + " line " + std::to_string(line_no) + ": row " +
                         std::to_string(r) + " has wrong width");
      for (std::size_t c = 0; c < dim; ++c) m(r, c) = row[c].get<double>();
    }
    if (dim_ == 0) dim_ = dim;
    store(tokens, m);
  }

  std::unordered_map<std::string, Matrix> entries_;
  std::vector<std::string> order_;
  std::size_t dim_ = 0;
};

/// Per-sentence convenience wrappers matching the operation contracts; the
/// CLI streams through SentenceCache instead of reopening per sentence.
inline void cache_store(const std::string& path, const std::vector<std::string>& tokens,
                        const Matrix& states) {
  SentenceCache cache;
  std::ifstream probe(path);
  if (probe.good()) {
    probe.close();
    cache = SentenceCache::load(path);
  }
  cache.store(tokens, states);
  cache.save(path);
}

inline Matrix cache_fetch(const std::string& path, const std::vector<std::string>& tokens) {
  return SentenceCache::load(path).fetch(tokens);
}

/// Serves cached extractions as a frozen encoder; unseen sentences miss.
class CachedEncoder : public SourceEncoder {
 public:
  CachedEncoder(std::string name, SentenceCache cache)
      : name_(std::move(name)), cache_(std::move(cache)) {}

  const std::string& name() const override { return name_; }
  std::size_t dim() const override { return cache_.dim(); }
  Matrix extract(const std::vector<std::string>& tokens) const override {
    return cache_.fetch(tokens);
  }

 private:
  std::string name_;
  SentenceCache cache_;
};

}  // namespace srcmix
