#pragma once

#include <string>
#include <vector>

#include "flimcl/common.hpp"

namespace flimcl::curation {

struct PruneResult {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
};

/// Drops flagged rows from a training split. `flags` and `labels` are indexed
/// like the full table; only `train_rows` are ever inspected.
inline PruneResult prune_training_set(const std::vector<std::size_t>& train_rows, const std::vector<char>& flags,
                                      const std::vector<Label>& labels, const std::vector<std::string>& names = {}) {
  PruneResult out;
  std::vector<int> before, after;
  for (auto r : train_rows) {
    const auto y = static_cast<std::size_t>(labels.at(r));
    if (y >= before.size()) {
      before.resize(y + 1, 0);
      after.resize(y + 1, 0);
    }
    before[y]++;
    if (flags.at(r)) {
      out.removed.push_back(r);
    } else {
      out.kept.push_back(r);
      after[y]++;
    }
  }
  for (std::size_t c = 0; c < before.size(); ++c)
    if (before[c] > 0 && after[c] == 0)
      throw TrainingError("pruning would remove every training point of class " + std::to_string(c) +
                          (c < names.size() ? " ('" + names[c] + "')" : ""));
  return out;
}

}  // namespace flimcl::curation
