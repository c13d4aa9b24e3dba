#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attribench {

/// Sorted, distinct shingles.
using ShingleSet = std::vector<std::string>;

/// Lowercases ASCII, drops ASCII punctuation, splits on whitespace and returns
/// the distinct contiguous n-grams joined by single spaces. Fewer than n tokens
/// gives an empty set.
ShingleSet shingle(std::string_view text, std::size_t n);

double jaccard(const ShingleSet& a, const ShingleSet& b);

struct MinHashSignature {
  std::vector<std::uint64_t> values;
  std::size_t num_perms = 0;
  std::uint64_t seed = 0;

  bool operator==(const MinHashSignature&) const = default;
};

// Permutation i hashes a shingle as (a_i * x + b_i) mod (2^61 - 1), where x is
// the mixed FNV-1a hash of the shingle and (a_i, b_i) come from `seed`.
/// Throws ValidationError on an empty shingle set or num_perms == 0.
MinHashSignature minhash(const ShingleSet& shingles, std::size_t num_perms, std::uint64_t seed);

/// Fraction of agreeing slots. Throws ValidationError for signatures built
/// with different (num_perms, seed).
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

// Banded LSH over MinHash signatures: two documents become candidates when
// all `rows` values of at least one band agree.
class LshIndex {
 public:
  /// bands * rows must equal num_perms of every inserted signature.
  LshIndex(std::size_t bands, std::size_t rows);

  void insert(std::size_t doc, const MinHashSignature& signature);
  /// Distinct candidate documents, ascending.
  std::vector<std::size_t> query(const MinHashSignature& signature) const;

  std::size_t bands() const { return bands_; }
  std::size_t rows() const { return rows_; }

 private:
  std::uint64_t band_key(const MinHashSignature& signature, std::size_t band) const;
  void check(const MinHashSignature& signature) const;

  std::size_t bands_;
  std::size_t rows_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> tables_;
};

struct LeakDocument {
  std::string id;
  std::string text;
};

struct LeakOptions {
  double threshold = 0.8;
  std::size_t num_perms = 128;
  std::size_t bands = 32;
  std::size_t shingle_size = 3;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct LeakFlag {
  std::string train_id;
  std::string test_id;
  double exact_jaccard = 0.0;
  double estimated_jaccard = 0.0;
};

// Test documents are indexed and every train document is queried. Candidates
// are confirmed by exact Jaccard over shingle sets; pairs at or above the
// threshold are returned by descending exact Jaccard, then by ids. Documents
// shorter than shingle_size words are compared as a single shingle of all
// their words; documents with no words are skipped.
std::vector<LeakFlag> flag_leaks(std::span<const LeakDocument> train, std::span<const LeakDocument> test,
                                 const LeakOptions& options);

/// CSV: train_id,test_id,exact_jaccard,estimated_jaccard (6 decimals).
void write_leak_report(std::span<const LeakFlag> flags, const std::filesystem::path& path);

}  // namespace attribench
