#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>

#include "epx/types.hpp"

namespace epx {

// Symmetric, irreflexive relation over commands. Commuting pairs are simply
// absent. Immutable once built.
class ConflictRelation {
 public:
  ConflictRelation() = default;

  explicit ConflictRelation(std::initializer_list<std::pair<CommandId, CommandId>> pairs) {
    for (auto [a, b] : pairs) add(a, b);
  }

  void add(CommandId a, CommandId b) {
    if (a == b) throw std::invalid_argument("a command cannot conflict with itself");
    pairs_.insert(ordered(a, b));
  }

  bool conflicts(CommandId a, CommandId b) const {
    if (a == b) throw std::invalid_argument("conflicts() needs two distinct commands");
    return pairs_.contains(ordered(a, b));
  }

  const std::set<std::pair<CommandId, CommandId>>& pairs() const { return pairs_; }

 private:
  static std::pair<CommandId, CommandId> ordered(CommandId a, CommandId b) {
    return {std::min(a, b), std::max(a, b)};
  }

  std::set<std::pair<CommandId, CommandId>> pairs_;
};

}  // namespace epx
