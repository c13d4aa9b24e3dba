#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "gateway.hpp"

namespace attribench {

// Article embeddings keyed by id. Vectors are unit-normalized and share one
// dimension; insertion order is kept so that serialization is stable.
class VectorIndex {
 public:
  /// Throws ValidationError on a duplicate id, a dimension mismatch or a norm
  /// outside 1 ± 1e-6.
  void add(std::string id, EmbeddingVector vector);

  std::size_t size() const { return ids_.size(); }
  std::size_t dimension() const { return dimension_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const EmbeddingVector& vector(std::size_t i) const { return vectors_[i]; }
  std::optional<std::size_t> position(const std::string& id) const;

  bool operator==(const VectorIndex& other) const { return ids_ == other.ids_ && vectors_ == other.vectors_; }

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> ids_;
  std::vector<EmbeddingVector> vectors_;
  std::unordered_map<std::string, std::size_t> positions_;
};

/// Title, a newline, then the first-paragraph sentences joined by spaces.
std::string embedding_input(const Article& article);

/// Embeds every article, reference articles included, in batches of
/// `batch_size`. A failed batch raises EndpointError listing the ids left without a
/// vector.
VectorIndex build_index(const ArticleStore& store, Gateway& gateway, std::size_t batch_size);

struct MineOptions {
  std::size_t pool_size = 10;
  std::size_t per_source = 3;
};

/// Non-source ids ordered by cosine similarity to `source`, ties by id.
std::vector<std::string> rank_neighbors(const VectorIndex& index, const std::string& source,
                                        const std::set<std::string>& excluded);

// For each source, the pool_size most similar non-source articles are taken
// and per_source of them drawn uniformly. Sources are visited in sorted order
// with a per-source stream of `seed`, so the result depends only on the
// source set, the index and the seed.
std::set<std::string> mine(std::span<const std::string> source_ids, const VectorIndex& index,
                           const MineOptions& options, std::uint64_t seed);

// Byte layout, all integers and floats little-endian:
//   "ABVX"  u32 version (1)  u32 dimension  u64 count
//   count × { u32 id_length  id bytes (UTF-8)  dimension × f64 }
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace attribench
