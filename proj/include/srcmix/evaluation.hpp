#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "srcmix/corpus.hpp"
#include "srcmix/errors.hpp"

namespace srcmix {

/// Half-open labeled span [start, end) over one sentence.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;

  bool operator<(const Span& o) const {
    return std::tie(start, end, type) < std::tie(o.start, o.end, o.type);
  }
  bool operator==(const Span& o) const {
    return start == o.start && end == o.end && type == o.type;
  }
};

/// CoNLL span semantics over a BIO sequence: a B-X opens a span, following
/// I-X of the same type extend it. A dangling I-X (after O, at the start, or
/// after a different type) is repaired to B-X, i.e. opens a new span.
inline std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
  std::vector<Span> spans;
  bool open = false;
  Span current;
  auto close = [&]() {
    if (open) spans.push_back(current);
    open = false;
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& tag = labels[i];
    if (tag == "O" || tag.size() < 3) {
      close();
      continue;
    }
    const std::string type = tag_type(tag);
    if (tag[0] == 'B' || !open || current.type != type) {
      close();
      open = true;
      current = Span{i, i + 1, type};
    } else {
      current.end = i + 1;
    }
  }
  close();
  return spans;
}

/// Inverse of extract_spans for non-overlapping spans: B- at each start, I-
/// inside, O elsewhere.
inline std::vector<std::string> spans_to_bio(const std::vector<Span>& spans, std::size_t n) {
  std::vector<std::string> labels(n, "O");
  for (const Span& s : spans) {
    labels[s.start] = "B-" + s.type;
    for (std::size_t i = s.start + 1; i < s.end; ++i) labels[i] = "I-" + s.type;
  }
  return labels;
}

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t gold_spans = 0;
  std::size_t pred_spans = 0;
  std::size_t matches = 0;
};

/// Micro-averaged exact-match span scores over a corpus: a predicted span
/// counts iff (start, end, type) all agree. Empty denominators score 0.
inline F1Result span_f1(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size())
    throw ValidationError("span_f1: corpus sizes differ (" + std::to_string(gold.size()) +
                          " vs " + std::to_string(pred.size()) + ")");
  F1Result r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size())
      throw ValidationError("span_f1: sentence " + std::to_string(s) + " lengths differ");
    std::vector<Span> g = extract_spans(gold[s]);
    std::vector<Span> p = extract_spans(pred[s]);
    r.gold_spans += g.size();
    r.pred_spans += p.size();
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    std::vector<Span> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    r.matches += both.size();
  }
  r.precision = r.pred_spans ? static_cast<double>(r.matches) / r.pred_spans : 0.0;
  r.recall = r.gold_spans ? static_cast<double>(r.matches) / r.gold_spans : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

/// Fraction of tokens whose predicted tag equals gold (debug metric only).
inline double token_accuracy(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred) {
  std::size_t total = 0, hit = 0;
  for (std::size_t s = 0; s < gold.size(); ++s)
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      ++total;
      if (gold[s][i] == pred[s][i]) ++hit;
    }
  return total ? static_cast<double>(hit) / total : 0.0;
}

// --- prediction files ---------------------------------------------------------

/// CoNLL evaluation layout: "token<TAB>gold<TAB>pred" per line, blank line
/// between sentences.
inline void write_predictions(std::ostream& out, const Dataset& data,
                              const std::vector<std::vector<std::string>>& pred) {
  for (std::size_t s = 0; s < data.sentences.size(); ++s) {
    if (s > 0) out << '\n';
    const auto& sent = data.sentences[s];
    for (std::size_t i = 0; i < sent.tokens.size(); ++i)
      out << sent.tokens[i] << '\t' << sent.labels[i] << '\t' << pred[s][i] << '\n';
  }
}

struct PredictionFile {
  std::vector<std::vector<std::string>> gold;
  std::vector<std::vector<std::string>> pred;
};

inline PredictionFile read_predictions(std::istream& in) {
  PredictionFile out;
  std::vector<std::string> gold, pred;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&]() {
    if (gold.empty()) return;
    out.gold.push_back(std::move(gold));
    out.pred.push_back(std::move(pred));
    gold.clear();
    pred.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'token<TAB>gold<TAB>pred'");
    gold.push_back(line.substr(t1 + 1, t2 - t1 - 1));
    pred.push_back(line.substr(t2 + 1));
  }
  flush();
  return out;
}

}  // namespace srcmix
