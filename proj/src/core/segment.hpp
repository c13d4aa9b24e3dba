#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attribench {

// Bump when the boundary rules or the abbreviation table change; it is
// recorded in run manifests so segmented corpora can be traced to a rule set.
inline constexpr std::string_view kSegmenterVersion = "seg-1";

/// Lowercase tokens (with their trailing period) that never end a sentence.
std::span<const std::string_view> abbreviations();

/// Byte range [begin, end) of one sentence inside the segmented text.
struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// A boundary is a run of '.', '!' or '?' (plus closing quotes or brackets)
// followed by whitespace or end of text, unless the run is a single '.' that
// closes a token from abbreviations(). Sentences are trimmed of surrounding
// whitespace and are never empty.
std::vector<SentenceSpan> segment_spans(std::string_view text);
std::vector<std::string> segment(std::string_view text);

}  // namespace attribench
