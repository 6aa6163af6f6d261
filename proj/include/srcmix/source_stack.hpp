#pragma once

#include <string>
#include <utility>
#include <vector>

#include "srcmix/matrix.hpp"

namespace srcmix {

/// Per-sentence representations from K frozen source encoders, in encoder
/// registration order. All matrices share the row count N (one row per
/// token); widths d_k may differ per source.
struct SourceStack {
  struct Entry {
    std::string name;
    Matrix states;  // N x d_k
  };

  std::vector<Entry> entries;

  std::size_t source_count() const { return entries.size(); }
  std::size_t token_count() const { return entries.empty() ? 0 : entries[0].states.rows(); }
};

}  // namespace srcmix
