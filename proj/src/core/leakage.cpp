#include "leakage.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <limits>
#include <optional>

#include "csv.hpp"
#include "errors.hpp"
#include "jsonl.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace attribench {

namespace {

constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

std::uint64_t mod_mersenne61(unsigned __int128 x) {
  std::uint64_t r = static_cast<std::uint64_t>(x & kMersenne61) + static_cast<std::uint64_t>(x >> 61);
  while (r >= kMersenne61) r -= kMersenne61;
  return r;
}

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(c)) {
      current += static_cast<char>(std::tolower(c));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

ShingleSet ngrams(const std::vector<std::string>& words, std::size_t n) {
  ShingleSet out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string gram = words[i];
    for (std::size_t k = 1; k < n; ++k) gram += ' ' + words[i + k];
    out.push_back(std::move(gram));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ShingleSet document_shingles(std::string_view text, std::size_t n) {
  const auto words = tokens(text);
  if (words.empty()) return {};
  return ngrams(words, std::min(n, words.size()));
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ShingleSet shingle(std::string_view text, std::size_t n) {
  if (n == 0) throw ValidationError("shingle size must be at least 1");
  return ngrams(tokens(text), n);
}

double jaccard(const ShingleSet& a, const ShingleSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

MinHashSignature minhash(const ShingleSet& shingles, std::size_t num_perms, std::uint64_t seed) {
  if (shingles.empty()) throw ValidationError("cannot sign an empty shingle set");
  if (num_perms == 0) throw ValidationError("num_perms must be positive");
  std::vector<std::uint64_t> a(num_perms), b(num_perms);
  for (std::size_t i = 0; i < num_perms; ++i) {
    a[i] = 1 + derive_seed(seed, 2 * i) % (kMersenne61 - 1);
    b[i] = derive_seed(seed, 2 * i + 1) % kMersenne61;
  }
  MinHashSignature sig{std::vector<std::uint64_t>(num_perms, std::numeric_limits<std::uint64_t>::max()), num_perms,
                       seed};
  for (const auto& s : shingles) {
    const std::uint64_t x = splitmix64(fnv1a64(s)) % kMersenne61;
    for (std::size_t i = 0; i < num_perms; ++i) {
      const std::uint64_t h = mod_mersenne61(static_cast<unsigned __int128>(a[i]) * x + b[i]);
      sig.values[i] = std::min(sig.values[i], h);
    }
  }
  return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.num_perms != b.num_perms || a.seed != b.seed) {
    throw ValidationError("signatures use different permutation families");
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.num_perms; ++i) same += a.values[i] == b.values[i];
  return static_cast<double>(same) / static_cast<double>(a.num_perms);
}

LshIndex::LshIndex(std::size_t bands, std::size_t rows) : bands_(bands), rows_(rows), tables_(bands) {
  if (bands == 0 || rows == 0) throw ValidationError("LSH bands and rows must be positive");
}

void LshIndex::check(const MinHashSignature& signature) const {
  if (signature.num_perms != bands_ * rows_) {
    throw ValidationError("signature has " + std::to_string(signature.num_perms) + " values, LSH expects " +
                          std::to_string(bands_ * rows_));
  }
}

std::uint64_t LshIndex::band_key(const MinHashSignature& signature, std::size_t band) const {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (std::size_t r = 0; r < rows_; ++r) h = splitmix64(h ^ signature.values[band * rows_ + r]);
  return h;
}

void LshIndex::insert(std::size_t doc, const MinHashSignature& signature) {
  check(signature);
  for (std::size_t band = 0; band < bands_; ++band) tables_[band][band_key(signature, band)].push_back(doc);
}

std::vector<std::size_t> LshIndex::query(const MinHashSignature& signature) const {
  check(signature);
  std::vector<std::size_t> out;
  for (std::size_t band = 0; band < bands_; ++band) {
    auto it = tables_[band].find(band_key(signature, band));
    if (it != tables_[band].end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<LeakFlag> flag_leaks(std::span<const LeakDocument> train, std::span<const LeakDocument> test,
                                 const LeakOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0)) throw ValidationError("threshold must be in (0, 1]");
  if (options.bands == 0 || options.num_perms % options.bands != 0) {
    throw ValidationError("bands must divide num_perms");
  }
  const std::size_t rows = options.num_perms / options.bands;

  struct Prepared {
    ShingleSet shingles;
    std::optional<MinHashSignature> signature;
  };
  auto prepare = [&](std::span<const LeakDocument> docs) {
    std::vector<Prepared> out(docs.size());
    parallel_for(docs.size(), options.workers, [&](std::size_t i) {
      out[i].shingles = document_shingles(docs[i].text, options.shingle_size);
      if (!out[i].shingles.empty()) out[i].signature = minhash(out[i].shingles, options.num_perms, options.seed);
    });
    return out;
  };
  const auto train_prep = prepare(train);
  const auto test_prep = prepare(test);

  LshIndex lsh(options.bands, rows);
  for (std::size_t j = 0; j < test_prep.size(); ++j) {
    if (test_prep[j].signature) lsh.insert(j, *test_prep[j].signature);
  }

  std::vector<std::vector<LeakFlag>> per_train(train_prep.size());
  parallel_for(train_prep.size(), options.workers, [&](std::size_t i) {
    if (!train_prep[i].signature) return;
    for (std::size_t j : lsh.query(*train_prep[i].signature)) {
      const double exact = jaccard(train_prep[i].shingles, test_prep[j].shingles);
      if (exact >= options.threshold) {
        per_train[i].push_back({train[i].id, test[j].id, exact,
                                estimate_jaccard(*train_prep[i].signature, *test_prep[j].signature)});
      }
    }
  });

  std::vector<LeakFlag> flags;
  for (auto& v : per_train) flags.insert(flags.end(), v.begin(), v.end());
  std::sort(flags.begin(), flags.end(), [](const LeakFlag& a, const LeakFlag& b) {
    if (a.exact_jaccard != b.exact_jaccard) return a.exact_jaccard > b.exact_jaccard;
    if (a.train_id != b.train_id) return a.train_id < b.train_id;
    return a.test_id < b.test_id;
  });
  return flags;
}

void write_leak_report(std::span<const LeakFlag> flags, const std::filesystem::path& path) {
  OutputFile file(path);
  auto& out = file.stream();
  out << "train_id,test_id,exact_jaccard,estimated_jaccard\n";
  for (const auto& f : flags) {
    out << csv_field(f.train_id) << ',' << csv_field(f.test_id) << ',' << fixed6(f.exact_jaccard) << ','
        << fixed6(f.estimated_jaccard) << '\n';
  }
  file.commit();
}

}  // namespace attribench
