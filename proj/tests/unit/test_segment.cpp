#include <doctest.h>

#include "segment.hpp"

using namespace attribench;
using V = std::vector<std::string>;

TEST_CASE("segment: basic terminators") {
  CHECK(segment("One. Two! Three? Four") == V{"One.", "Two!", "Three?", "Four"});
  CHECK(segment("Wait... what?! Yes.") == V{"Wait...", "what?!", "Yes."});
}

TEST_CASE("segment: abbreviations do not split") {
  CHECK(segment("Dr. Smith met Mr. Jones at St. Paul. They talked.") ==
        V{"Dr. Smith met Mr. Jones at St. Paul.", "They talked."});
  CHECK(segment("Rivers, e.g. the Rhine, flow north. Others do not.") ==
        V{"Rivers, e.g. the Rhine, flow north.", "Others do not."});
  CHECK(segment("He left the U.S. in 1990. Then he returned.") ==
        V{"He left the U.S. in 1990.", "Then he returned."});
}

TEST_CASE("segment: closing quotes and brackets stay with the sentence") {
  CHECK(segment("He said \"stop.\" Then left.") == V{"He said \"stop.\"", "Then left."});
  CHECK(segment("It was big (very big.) Next one.") == V{"It was big (very big.)", "Next one."});
}

TEST_CASE("segment: no boundary inside numbers or without following space") {
  CHECK(segment("Pi is 3.14 roughly. Yes.") == V{"Pi is 3.14 roughly.", "Yes."});
  CHECK(segment("See example.com for details.") == V{"See example.com for details."});
}

TEST_CASE("segment: whitespace handling") {
  CHECK(segment("").empty());
  CHECK(segment("   \n\t ").empty());
  CHECK(segment("  Leading and trailing.   Next.  ") == V{"Leading and trailing.", "Next."});
  CHECK(segment("Line one.\nLine two.") == V{"Line one.", "Line two."});
}

TEST_CASE("segment: spans index the original text") {
  const std::string text = "  Alpha beta. Gamma!  ";
  const auto spans = segment_spans(text);
  REQUIRE(spans.size() == 2);
  CHECK(text.substr(spans[0].begin, spans[0].end - spans[0].begin) == "Alpha beta.");
  CHECK(text.substr(spans[1].begin, spans[1].end - spans[1].begin) == "Gamma!");
}

TEST_CASE("segment: abbreviation table is lowercase and dotted") {
  for (auto a : abbreviations()) {
    CHECK(!a.empty());
    CHECK(a.back() == '.');
    for (char c : a) CHECK(!(c >= 'A' && c <= 'Z'));
  }
}
