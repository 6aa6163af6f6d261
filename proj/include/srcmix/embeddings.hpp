#pragma once

#include <cctype>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/textio.hpp"

namespace srcmix {

/// Frozen static word vectors with a zero UNK row. Lookup never fails:
/// exact match, then ASCII-lowercased match, then the UNK row.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> tokens;                     // row order
  std::unordered_map<std::string, std::size_t> vocab;  // token -> row
  Matrix matrix;                                       // |vocab| x dim
  Vector unk_row;                                      // all zeros

  std::size_t size() const { return tokens.size(); }

  /// Row index under the lookup policy; nullopt means the UNK row.
  std::optional<std::size_t> lookup_row(const std::string& token) const {
    auto it = vocab.find(token);
    if (it != vocab.end()) return it->second;
    std::string lower = token;
    bool changed = false;
    for (char& c : lower)
      if (c >= 'A' && c <= 'Z') {
        c = static_cast<char>(c - 'A' + 'a');
        changed = true;
      }
    if (changed) {
      it = vocab.find(lower);
      if (it != vocab.end()) return it->second;
    }
    return std::nullopt;
  }

  const double* lookup(const std::string& token) const {
    const std::optional<std::size_t> row = lookup_row(token);
    return row ? matrix.row(*row) : unk_row.data();
  }

  /// Per-token rows for a sentence: N x dim.
  Matrix embed(const std::vector<std::string>& sentence_tokens) const {
    Matrix out(sentence_tokens.size(), dim);
    for (std::size_t n = 0; n < sentence_tokens.size(); ++n) {
      const double* row = lookup(sentence_tokens[n]);
      for (std::size_t j = 0; j < dim; ++j) out(n, j) = row[j];
    }
    return out;
  }
};

/// Builds a table from (token, row) pairs; duplicate tokens keep the first.
inline EmbeddingTable build_embedding_table(
    const std::vector<std::pair<std::string, Vector>>& rows, std::size_t dim) {
  EmbeddingTable t;
  t.dim = dim;
  t.unk_row.assign(dim, 0.0);
  for (const auto& [tok, row] : rows)
    if (!t.vocab.count(tok)) {
      t.vocab.emplace(tok, t.tokens.size());
      t.tokens.push_back(tok);
    }
  t.matrix = Matrix(t.tokens.size(), dim);
  std::vector<bool> written(t.tokens.size(), false);
  for (const auto& [tok, row] : rows) {
    const std::size_t r = t.vocab.at(tok);
    if (written[r]) continue;
    written[r] = true;
    for (std::size_t j = 0; j < dim; ++j) t.matrix(r, j) = row[j];
  }
  return t;
}

namespace detail {
inline bool integer_field(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}
}  // namespace detail

/// Loads GloVe-style text vectors: "token v1 v2 ... vd" per line, space
/// separated, no header. A first line of exactly two integer fields is
/// treated as a word2vec-style "count dim" header and skipped. Dimension
/// comes from the first data line unless expected_dim is given; any line
/// that disagrees raises ParseError with its 1-based line number.
inline EmbeddingTable load_text_embeddings(std::istream& in,
                                           std::optional<std::size_t> expected_dim = {}) {
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  std::vector<std::pair<std::string, Vector>> rows;
  std::size_t dim = expected_dim.value_or(0);

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_whitespace(line);
    if (first && fields.size() == 2 && detail::integer_field(fields[0]) &&
        detail::integer_field(fields[1])) {
      first = false;  // "count dim" header
      continue;
    }
    first = false;
    if (fields.size() < 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected token and vector");
    Vector row(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i)
      if (!parse_double(fields[i], &row[i - 1]))
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric field '" +
                         fields[i] + "'");
    if (dim == 0) dim = row.size();
    if (row.size() != dim)
      throw ParseError("line " + std::to_string(line_no) + ": dimension " +
                       std::to_string(row.size()) + " != expected " + std::to_string(dim));
    rows.emplace_back(fields[0], std::move(row));
  }
  return build_embedding_table(rows, dim);
}

inline EmbeddingTable load_text_embeddings(const std::string& text,
                                           std::optional<std::size_t> expected_dim = {}) {
  std::istringstream in(text);
  return load_text_embeddings(in, expected_dim);
}

/// Writes the table back in the same text format; vector entries use the
/// shortest round-tripping decimal form.
inline void write_text_embeddings(std::ostream& out, const EmbeddingTable& t) {
  for (std::size_t r = 0; r < t.tokens.size(); ++r) {
    out << t.tokens[r];
    for (std::size_t j = 0; j < t.dim; ++j) out << ' ' << format_double(t.matrix(r, j));
    out << '\n';
  }
}

}  // namespace srcmix
