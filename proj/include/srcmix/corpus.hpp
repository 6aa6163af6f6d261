#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/rng.hpp"

namespace srcmix {

/// One sentence with per-token BIO tags. |tokens| == |labels| >= 1.
struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;

  bool operator==(const TaggedSentence& o) const {
    return tokens == o.tokens && labels == o.labels;
  }
};

/// Sentences plus first-occurrence-ordered vocabularies over tags and tokens.
struct Dataset {
  std::vector<TaggedSentence> sentences;
  std::vector<std::string> label_vocab;
  std::vector<std::string> token_vocab;

  std::size_t size() const { return sentences.size(); }

  bool operator==(const Dataset& o) const {
    return sentences == o.sentences && label_vocab == o.label_vocab &&
           token_vocab == o.token_vocab;
  }
};

// --- BIO tags ---------------------------------------------------------------

/// "O", or "B-"/"I-" followed by a nonempty type.
inline bool is_valid_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3) return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return tag[1] == '-';
}

inline std::string tag_type(const std::string& tag) {
  return tag.size() >= 2 && tag[1] == '-' ? tag.substr(2) : std::string();
}

/// Checks tag syntax and the BIO constraint: an I-X may only follow a B-X or
/// I-X of the same type. Returns an empty string when valid, otherwise a
/// description of the first violation.
inline std::string bio_violation(const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& tag = labels[i];
    if (!is_valid_tag(tag)) return "bad tag '" + tag + "' at token " + std::to_string(i);
    if (tag[0] == 'I') {
      if (i == 0 || labels[i - 1] == "O")
        return "dangling '" + tag + "' at token " + std::to_string(i);
      if (tag_type(labels[i - 1]) != tag_type(tag))
        return "'" + tag + "' follows a different type at token " + std::to_string(i);
    }
  }
  return {};
}

inline void validate_sentence(const TaggedSentence& s, std::size_t sentence_index) {
  if (s.tokens.empty() || s.tokens.size() != s.labels.size())
    throw ValidationError("sentence " + std::to_string(sentence_index) +
                          ": token/label count mismatch");
  const std::string why = bio_violation(s.labels);
  if (!why.empty())
    throw ValidationError("sentence " + std::to_string(sentence_index) + ": " + why);
}

/// Rebuilds both vocabularies in first-occurrence order.
inline Dataset make_dataset(std::vector<TaggedSentence> sentences) {
  Dataset d;
  d.sentences = std::move(sentences);
  std::unordered_map<std::string, bool> seen_label, seen_token;
  for (const auto& s : d.sentences) {
    for (const auto& t : s.tokens)
      if (seen_token.emplace(t, true).second) d.token_vocab.push_back(t);
    for (const auto& l : s.labels)
      if (seen_label.emplace(l, true).second) d.label_vocab.push_back(l);
  }
  return d;
}

// --- CoNLL text format -------------------------------------------------------

/// Reads "token<TAB>tag" lines, blank line between sentences, UTF-8.
/// Trailing blank lines are ignored. Throws ParseError with the 1-based line
/// number on a malformed line and ValidationError with the sentence index on
/// an invalid BIO sequence.
inline Dataset read_conll(std::istream& in) {
  std::vector<TaggedSentence> sentences;
  TaggedSentence current;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (current.tokens.empty()) return;
    validate_sentence(current, sentences.size());
    sentences.push_back(std::move(current));
    current = TaggedSentence{};
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'token<TAB>tag', got '" + line + "'");
    current.tokens.push_back(line.substr(0, tab));
    current.labels.push_back(line.substr(tab + 1));
  }
  flush();
  return make_dataset(std::move(sentences));
}

inline Dataset read_conll(const std::string& text) {
  std::istringstream in(text);
  return read_conll(in);
}

/// Inverse of read_conll up to blank-line normalization: one blank line
/// between sentences, a single trailing newline, none of either for an empty
/// dataset.
inline void write_conll(std::ostream& out, const Dataset& d) {
  for (std::size_t i = 0; i < d.sentences.size(); ++i) {
    if (i > 0) out << '\n';
    const auto& s = d.sentences[i];
    for (std::size_t n = 0; n < s.tokens.size(); ++n)
      out << s.tokens[n] << '\t' << s.labels[n] << '\n';
  }
}

inline std::string write_conll(const Dataset& d) {
  std::ostringstream out;
  write_conll(out, d);
  return out.str();
}

// --- low-resource subsampling -------------------------------------------------

/// Uniform random n-subset without replacement, original order preserved.
/// Generator: xoshiro256** seeded from `seed` via SplitMix64 (see rng.hpp),
/// partial Fisher-Yates over the index array. Returns the dataset unchanged
/// when n >= |dataset|.
inline Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed) {
  if (n >= d.size()) return d;
  Rng rng(seed);
  const std::vector<std::size_t> keep = rng.sample_indices(d.size(), n);
  std::vector<TaggedSentence> subset;
  subset.reserve(n);
  for (std::size_t i : keep) subset.push_back(d.sentences[i]);
  return make_dataset(std::move(subset));
}

// --- synthetic multi-task corpora ----------------------------------------------

/// Desk-scale corpus recipe. One hidden class per token drives every task:
/// the informative source tags tokens with their class, noise sources tag
/// uniformly at random, and the target marks runs of >= 2 equal-class tokens
/// as spans typed by that class.
struct SynthSpec {
  std::size_t vocab_size = 50;
  std::size_t n_classes = 4;
  std::size_t n_sentences = 5000;   // per source dataset
  std::size_t target_sentences = 100;
  std::size_t len_min = 4;
  std::size_t len_max = 9;
  std::size_t n_sources = 3;        // first one informative, rest noise
  std::uint64_t seed = 1;
  double noise_rate = 0.0;          // target-tag corruption probability

  void validate() const {
    if (n_classes < 2 || vocab_size < n_classes)
      throw ValidationError("synth spec: need vocab_size >= n_classes >= 2");
    if (len_min < 1 || len_max < len_min)
      throw ValidationError("synth spec: bad length range");
    if (noise_rate < 0.0 || noise_rate > 1.0)
      throw ValidationError("synth spec: noise_rate outside [0,1]");
    if (n_sources < 1) throw ValidationError("synth spec: need >= 1 source");
  }
};

namespace detail {
// Sub-stream tags for the synthetic generator; fixed so outputs are stable.
enum SynthStream : std::uint64_t {
  kClassMap = 1,
  kSourceBase = 16,   // + source index
  kTarget = 8,
  kTargetNoise = 9,
};
}  // namespace detail

inline std::string synth_token(std::size_t i) { return "t" + std::to_string(i); }

/// Balanced hidden class map: a seeded permutation of the vocabulary taken
/// modulo n_classes, so every class owns ~vocab_size/n_classes tokens.
inline std::vector<std::size_t> synth_class_map(const SynthSpec& spec) {
  std::vector<std::size_t> perm(spec.vocab_size);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(derive_seed(spec.seed, detail::kClassMap));
  rng.shuffle(perm);
  std::vector<std::size_t> cls(spec.vocab_size);
  for (std::size_t i = 0; i < perm.size(); ++i) cls[i] = perm[i] % spec.n_classes;
  return cls;
}

/// Target labels implied by the hidden classes of a token sequence: maximal
/// runs of one class with length >= 2 become spans "B-C<c> I-C<c>...",
/// everything else is "O".
inline std::vector<std::string> synth_target_labels(const std::vector<std::size_t>& classes) {
  const std::size_t n = classes.size();
  std::vector<std::string> labels(n, "O");
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && classes[j] == classes[i]) ++j;
    if (j - i >= 2) {
      const std::string type = "C" + std::to_string(classes[i]);
      labels[i] = "B-" + type;
      for (std::size_t k = i + 1; k < j; ++k) labels[k] = "I-" + type;
    }
    i = j;
  }
  return labels;
}

/// Repairs a dangling I-X (after O, start, or a different type) into B-X.
inline std::vector<std::string> repair_bio(std::vector<std::string> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].size() < 2 || labels[i][0] != 'I') continue;
    const bool dangling = i == 0 || labels[i - 1] == "O" ||
                          tag_type(labels[i - 1]) != tag_type(labels[i]);
    if (dangling) labels[i][0] = 'B';
  }
  return labels;
}

namespace detail {

inline std::vector<std::string> synth_sentence_tokens(Rng& rng, const SynthSpec& spec,
                                                      std::vector<std::size_t>* classes,
                                                      const std::vector<std::size_t>& class_map) {
  const std::size_t len =
      spec.len_min + static_cast<std::size_t>(rng.next_below(spec.len_max - spec.len_min + 1));
  std::vector<std::string> tokens(len);
  classes->resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t tok = static_cast<std::size_t>(rng.next_below(spec.vocab_size));
    tokens[i] = synth_token(tok);
    (*classes)[i] = class_map[tok];
  }
  return tokens;
}

}  // namespace detail

/// Generates K source datasets plus one target dataset, all driven by a
/// shared hidden class map; a pure function of the spec. Source k=0 tags each
/// token with its hidden class ("B-S0C<c>"); sources k>0 tag independent
/// random classes under their own alphabets ("B-S<k>C<c>") and carry no
/// signal. Target tags follow synth_target_labels, then each tag is replaced
/// by a uniformly random target-alphabet tag with probability noise_rate and
/// the sequence is BIO-repaired.
inline void gen_synthetic(const SynthSpec& spec, std::vector<Dataset>* sources,
                          Dataset* target) {
  spec.validate();
  const std::vector<std::size_t> class_map = synth_class_map(spec);

  sources->clear();
  for (std::size_t k = 0; k < spec.n_sources; ++k) {
    Rng rng(derive_seed(spec.seed, detail::kSourceBase + k));
    std::vector<TaggedSentence> sents(spec.n_sentences);
    for (auto& s : sents) {
      std::vector<std::size_t> classes;
      s.tokens = detail::synth_sentence_tokens(rng, spec, &classes, class_map);
      s.labels.resize(s.tokens.size());
      for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        const std::size_t c =
            k == 0 ? classes[i] : static_cast<std::size_t>(rng.next_below(spec.n_classes));
        s.labels[i] = "B-S" + std::to_string(k) + "C" + std::to_string(c);
      }
    }
    sources->push_back(make_dataset(std::move(sents)));
  }

  // Target tag alphabet for noise flips: O plus B-/I- per class.
  std::vector<std::string> alphabet{"O"};
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    alphabet.push_back("B-C" + std::to_string(c));
    alphabet.push_back("I-C" + std::to_string(c));
  }

  Rng rng(derive_seed(spec.seed, detail::kTarget));
  Rng noise_rng(derive_seed(spec.seed, detail::kTargetNoise));
  std::vector<TaggedSentence> sents(spec.target_sentences);
  for (auto& s : sents) {
    std::vector<std::size_t> classes;
    s.tokens = detail::synth_sentence_tokens(rng, spec, &classes, class_map);
    s.labels = synth_target_labels(classes);
    if (spec.noise_rate > 0.0) {
      for (auto& tag : s.labels)
        if (noise_rng.next_unit() < spec.noise_rate)
          tag = alphabet[noise_rng.next_below(alphabet.size())];
      s.labels = repair_bio(std::move(s.labels));
    }
  }
  *target = make_dataset(std::move(sents));
}

}  // namespace srcmix
