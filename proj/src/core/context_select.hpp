#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"

namespace attribench {

/// Sentences along link hops, one per visited article, in hop order.
struct HopChain {
  std::vector<SentenceRef> refs;
  std::vector<std::string> article_ids;

  bool operator==(const HopChain&) const = default;
};

/// A single article's first paragraph, used for dialogue generation.
struct DialogueContext {
  std::string article_id;
  SentenceRange range;

  bool operator==(const DialogueContext&) const = default;
};

// Samples hop chains from a store produced by filter_linkable().
//
// Start sentences are the first-paragraph sentences of member articles that
// carry at least one link to another resolvable article; the start sentence is
// drawn uniformly over all of them. Each hop follows a uniformly chosen link of
// the current sentence to an article not yet visited. On the intermediate
// article a link-bearing first-paragraph sentence with an unvisited target is
// drawn uniformly; when none exists the chain ends there. The terminal
// article contributes a uniformly drawn first-paragraph sentence.
class HopSampler {
 public:
  explicit HopSampler(const ArticleStore& store);

  /// max_hops must be 1 or 2. Throws ValidationError("empty frontier") when no
  /// start sentence exists.
  HopChain sample(std::uint64_t seed, int max_hops) const;

  std::size_t frontier_size() const { return frontier_.size(); }

 private:
  const ArticleStore& store_;
  std::vector<SentenceRef> frontier_;
};

HopChain sample_hop_chain(const ArticleStore& store, std::uint64_t seed, int max_hops);

/// Uniform over member articles; range is the first paragraph.
DialogueContext select_dialogue_context(const ArticleStore& store, std::uint64_t seed);

/// Empty string when the chain satisfies every HopChain invariant against the
/// store, otherwise a description of the first violation.
std::string check_chain(const ArticleStore& store, const HopChain& chain);

nlohmann::json chain_to_json(const HopChain& chain);
HopChain chain_from_json(const nlohmann::json& j);
nlohmann::json dialogue_to_json(const DialogueContext& ctx);
DialogueContext dialogue_from_json(const nlohmann::json& j);

}  // namespace attribench
