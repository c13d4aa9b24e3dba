#include "segment.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace attribench {
namespace {

constexpr std::array<std::string_view, 48> kAbbreviations = {
    "mr.",   "mrs.",  "ms.",   "dr.",   "prof.", "sr.",    "jr.",   "st.",
    "mt.",   "ft.",   "gen.",  "col.",  "lt.",   "sgt.",   "capt.", "cmdr.",
    "adm.",  "gov.",  "sen.",  "rep.",  "rev.",  "hon.",   "pres.", "vs.",
    "etc.",  "e.g.",  "i.e.",  "cf.",   "approx.", "inc.", "ltd.",  "co.",
    "corp.", "vol.",  "pp.",   "fig.",  "jan.",  "feb.",   "apr.",  "aug.",
    "sep.",  "sept.", "oct.",  "nov.",  "dec.",  "u.s.",   "u.k.",  "ca."};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// True when the single '.' at `dot` terminates an abbreviation token.
bool ends_abbreviation(std::string_view text, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0 && !is_space(text[start - 1])) --start;
  // Leading punctuation such as "(" or a quote is not part of the token.
  while (start < dot && !std::isalnum(static_cast<unsigned char>(text[start]))) ++start;
  if (start >= dot) return false;
  const std::string token = lower(text.substr(start, dot - start + 1));
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

}  // namespace

std::span<const std::string_view> abbreviations() { return kAbbreviations; }

std::vector<SentenceSpan> segment_spans(std::string_view text) {
  std::vector<SentenceSpan> spans;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (e > b) spans.push_back({b, e});
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    const std::size_t run_begin = i;
    while (i < text.size() && is_terminal(text[i])) ++i;
    const std::size_t run_len = i - run_begin;
    while (i < text.size() && is_closer(text[i])) ++i;
    if (i < text.size() && !is_space(text[i])) continue;
    if (run_len == 1 && text[run_begin] == '.' && ends_abbreviation(text, run_begin)) continue;
    emit(start, i);
    start = i;
  }
  emit(start, text.size());
  return spans;
}

std::vector<std::string> segment(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& s : segment_spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
  return out;
}

}  // namespace attribench
