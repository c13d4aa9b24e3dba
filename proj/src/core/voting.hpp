#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>

#include "errors.hpp"

namespace attribench {

// An item is selected when at least half of the non-abstaining voters chose
// it (votes / voters >= 0.5, compared exactly as 2 * votes >= voters). An
// abstaining voter is std::nullopt and does not count toward the denominator.
template <class T>
std::set<T> majority_vote(std::span<const std::optional<std::set<T>>> ballots) {
  std::size_t voters = 0;
  std::map<T, std::size_t> votes;
  for (const auto& ballot : ballots) {
    if (!ballot) continue;
    ++voters;
    for (const auto& item : *ballot) ++votes[item];
  }
  if (voters == 0) throw Error("no voter produced a ballot");
  std::set<T> out;
  for (const auto& [item, n] : votes) {
    if (2 * n >= voters) out.insert(item);
  }
  return out;
}

}  // namespace attribench
