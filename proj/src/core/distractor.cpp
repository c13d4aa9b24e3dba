#include "distractor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "errors.hpp"
#include "jsonl.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace attribench {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'V', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ParseError(0, std::string("index file truncated while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void VectorIndex::add(std::string id, EmbeddingVector vector) {
  if (positions_.contains(id)) throw ValidationError("duplicate id '" + id + "' in vector index");
  if (vector.dimension() == 0) throw ValidationError("empty vector for '" + id + "'");
  if (!ids_.empty() && vector.dimension() != dimension_) {
    throw ValidationError("vector for '" + id + "' has dimension " + std::to_string(vector.dimension()) +
                          ", index has " + std::to_string(dimension_));
  }
  const double norm = std::sqrt(dot(vector, vector));
  if (std::abs(norm - 1.0) > 1e-6) throw ValidationError("vector for '" + id + "' is not unit-normalized");
  dimension_ = vector.dimension();
  positions_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  vectors_.push_back(std::move(vector));
}

std::optional<std::size_t> VectorIndex::position(const std::string& id) const {
  auto it = positions_.find(id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

std::string embedding_input(const Article& article) {
  std::string out = article.title + "\n";
  const auto range = first_paragraph(article);
  for (std::size_t i = range.begin; i < range.end; ++i) {
    if (i > range.begin) out += ' ';
    out += article.sentences[i];
  }
  return out;
}

VectorIndex build_index(const ArticleStore& store, Gateway& gateway, std::size_t batch_size) {
  if (store.empty()) throw ValidationError("cannot build an index over an empty store");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  const auto articles = store.all_articles();
  const std::size_t batches = (articles.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<EmbeddingVector>> results(batches);
  std::vector<std::string> failures(batches);

  parallel_for(batches, gateway.config().max_in_flight, [&](std::size_t b) {
    const std::size_t begin = b * batch_size;
    const std::size_t end = std::min(articles.size(), begin + batch_size);
    std::vector<std::string> inputs;
    for (std::size_t i = begin; i < end; ++i) inputs.push_back(embedding_input(articles[i]));
    try {
      results[b] = gateway.embed(inputs);
    } catch (const Error& e) {
      failures[b] = e.what();
    }
  });

  std::vector<std::string> missing;
  std::string cause;
  for (std::size_t b = 0; b < batches; ++b) {
    if (failures[b].empty()) continue;
    if (cause.empty()) cause = failures[b];
    const std::size_t end = std::min(articles.size(), (b + 1) * batch_size);
    for (std::size_t i = b * batch_size; i < end; ++i) missing.push_back(articles[i].id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw EndpointError(0, "embedding failed for " + std::to_string(missing.size()) + " article(s) [" + list + "]: " + cause);
  }

  VectorIndex index;
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < results[b].size(); ++k) {
      index.add(articles[b * batch_size + k].id, std::move(results[b][k]));
    }
  }
  return index;
}

std::vector<std::string> rank_neighbors(const VectorIndex& index, const std::string& source,
                                        const std::set<std::string>& excluded) {
  const auto pos = index.position(source);
  if (!pos) throw ValidationError("source '" + source + "' is not in the vector index");
  const EmbeddingVector& query = index.vector(*pos);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (excluded.contains(index.ids()[i])) continue;
    scored.emplace_back(dot(query, index.vector(i)), i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.ids()[a.second] < index.ids()[b.second];
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (const auto& [score, i] : scored) out.push_back(index.ids()[i]);
  return out;
}

std::set<std::string> mine(std::span<const std::string> source_ids, const VectorIndex& index,
                           const MineOptions& options, std::uint64_t seed) {
  if (options.per_source > 3) throw ValidationError("per_source must be at most 3");
  if (options.pool_size < options.per_source) throw ValidationError("pool_size must be at least per_source");
  const std::set<std::string> sources(source_ids.begin(), source_ids.end());
  std::set<std::string> out;
  for (const auto& source : sources) {
    auto ranked = rank_neighbors(index, source, sources);
    if (ranked.size() > options.pool_size) ranked.resize(options.pool_size);
    Rng rng(derive_seed(seed, fnv1a64(source)));
    for (std::size_t i : rng.sample(ranked.size(), options.per_source)) out.insert(ranked[i]);
  }
  return out;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  OutputFile file(path, true);
  auto& out = file.stream();
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dimension()));
  put_le<std::uint64_t>(out, index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& id = index.ids()[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double v : index.vector(i).values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  file.commit();
}

VectorIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file " + path.string());
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(0, path.string() + " is not a vector index file");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kFormatVersion) throw ParseError(0, "unsupported index version " + std::to_string(version));
  const auto dimension = get_le<std::uint32_t>(in, "dimension");
  const auto count = get_le<std::uint64_t>(in, "count");
  VectorIndex index;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = get_le<std::uint32_t>(in, "id length");
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw ParseError(0, "index file truncated in record " + std::to_string(r));
    EmbeddingVector vec;
    vec.values.resize(dimension);
    for (auto& v : vec.values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "vector"));
    index.add(std::move(id), std::move(vec));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after index records");
  return index;
}

}  // namespace attribench
