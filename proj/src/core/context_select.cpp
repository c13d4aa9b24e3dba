#include "context_select.hpp"

#include <algorithm>

#include "errors.hpp"
#include "rng.hpp"

namespace attribench {

using nlohmann::json;

namespace {

bool visited(const std::vector<std::string>& ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// Distinct link targets of one sentence that are usable as the next hop, in
// order of first appearance.
std::vector<std::string> hop_targets(const ArticleStore& store, const Article& article,
                                     std::size_t sentence, const std::vector<std::string>& seen) {
  std::vector<std::string> out;
  for (const auto& l : article.links) {
    if (l.sentence_index != sentence || l.target_id == article.id) continue;
    if (visited(seen, l.target_id) || visited(out, l.target_id)) continue;
    const Article* target = store.find(l.target_id);
    if (!target || target->sentences.empty()) continue;
    out.push_back(l.target_id);
  }
  return out;
}

}  // namespace

HopSampler::HopSampler(const ArticleStore& store) : store_(store) {
  for (const auto& a : store.articles()) {
    if (a.sentences.empty()) continue;
    const auto fp = first_paragraph(a);
    for (std::size_t s = fp.begin; s < fp.end; ++s) {
      if (!hop_targets(store, a, s, {a.id}).empty()) frontier_.push_back({a.id, s});
    }
  }
}

HopChain HopSampler::sample(std::uint64_t seed, int max_hops) const {
  if (max_hops != 1 && max_hops != 2) throw ValidationError("max_hops must be 1 or 2");
  if (frontier_.empty()) throw ValidationError("empty frontier");
  Rng rng(seed);

  HopChain chain;
  SentenceRef current = frontier_[rng.index(frontier_.size())];
  chain.refs.push_back(current);
  chain.article_ids.push_back(current.article_id);

  for (int hop = 0; hop < max_hops; ++hop) {
    const Article& from = store_.at(current.article_id);
    const auto targets = hop_targets(store_, from, current.sentence_index, chain.article_ids);
    const Article& next = store_.at(targets[rng.index(targets.size())]);
    chain.article_ids.push_back(next.id);

    const auto fp = first_paragraph(next);
    std::vector<std::size_t> onward;
    if (hop + 1 < max_hops) {
      for (std::size_t s = fp.begin; s < fp.end; ++s) {
        if (!hop_targets(store_, next, s, chain.article_ids).empty()) onward.push_back(s);
      }
    }
    if (onward.empty()) {
      chain.refs.push_back({next.id, fp.begin + rng.index(fp.size())});
      break;
    }
    current = {next.id, onward[rng.index(onward.size())]};
    chain.refs.push_back(current);
  }
  return chain;
}

HopChain sample_hop_chain(const ArticleStore& store, std::uint64_t seed, int max_hops) {
  return HopSampler(store).sample(seed, max_hops);
}

DialogueContext select_dialogue_context(const ArticleStore& store, std::uint64_t seed) {
  if (store.empty()) throw ValidationError("cannot select a dialogue context from an empty store");
  Rng rng(seed);
  const Article& a = store.articles()[rng.index(store.size())];
  return {a.id, first_paragraph(a)};
}

std::string check_chain(const ArticleStore& store, const HopChain& chain) {
  if (chain.refs.size() < 2 || chain.refs.size() > 3) return "chain length outside [2, 3]";
  if (chain.article_ids.size() != chain.refs.size()) return "article_ids do not match refs";
  for (std::size_t i = 0; i < chain.refs.size(); ++i) {
    const auto& ref = chain.refs[i];
    if (ref.article_id != chain.article_ids[i]) return "article_ids out of hop order";
    const Article* a = store.find(ref.article_id);
    if (!a) return "unknown article '" + ref.article_id + "'";
    if (a->sentences.empty() || !first_paragraph(*a).contains(ref.sentence_index)) {
      return "ref " + std::to_string(i) + " outside the first paragraph";
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (chain.refs[j].article_id == ref.article_id) return "article visited twice";
    }
    if (i + 1 < chain.refs.size()) {
      const auto& next_id = chain.refs[i + 1].article_id;
      const bool linked = std::any_of(a->links.begin(), a->links.end(), [&](const LinkAnnotation& l) {
        return l.sentence_index == ref.sentence_index && l.target_id == next_id;
      });
      if (!linked) return "ref " + std::to_string(i) + " does not link to '" + next_id + "'";
    }
  }
  return {};
}

json chain_to_json(const HopChain& chain) {
  json refs = json::array();
  for (const auto& r : chain.refs) refs.push_back({r.article_id, r.sentence_index});
  return {{"refs", std::move(refs)}, {"article_ids", chain.article_ids}};
}

HopChain chain_from_json(const json& j) {
  HopChain chain;
  for (const auto& r : j.at("refs")) {
    chain.refs.push_back({r.at(0).get<std::string>(), r.at(1).get<std::size_t>()});
  }
  chain.article_ids = j.at("article_ids").get<std::vector<std::string>>();
  return chain;
}

json dialogue_to_json(const DialogueContext& ctx) {
  return {{"article_id", ctx.article_id}, {"range", {ctx.range.begin, ctx.range.end}}};
}

DialogueContext dialogue_from_json(const json& j) {
  DialogueContext ctx;
  ctx.article_id = j.at("article_id").get<std::string>();
  ctx.range = {j.at("range").at(0).get<std::size_t>(), j.at("range").at(1).get<std::size_t>()};
  if (ctx.range.end <= ctx.range.begin) throw ValidationError("dialogue context range is empty");
  return ctx;
}

}  // namespace attribench
