#include "thd/span_align.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "doctest.h"
#include "thd/errors.hpp"
#include "thd/rng.hpp"

using namespace thd;

namespace {

// Brute-force oracle for the overlap rule: a token is flagged iff its
// character interval strictly intersects any span interval.
std::vector<int> oracle_labels(const TokenizedResponse& resp,
                               const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  std::vector<int> labels(resp.tokens.size(), 0);
  for (std::size_t i = 0; i < resp.tokens.size(); ++i) {
    for (auto [s, e] : spans) {
      if (std::max(resp.tokens[i].start, s) < std::min(resp.tokens[i].end, e)) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

std::string random_text(Rng& rng, std::size_t max_len) {
  static const char alphabet[] = "ab 1.\n";
  std::string s;
  const std::size_t len = rng.next_below(max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.next_below(sizeof(alphabet) - 1)]);
  return s;
}

SpanSet make_spans(const std::string& text,
                   const std::vector<std::pair<std::size_t, std::size_t>>& intervals) {
  SpanSet set;
  set.source = "test";
  for (auto [s, e] : intervals) set.spans.push_back({s, e, text.substr(s, e - s)});
  return set;
}

SoftLabelSeq seq(std::vector<double> scores) {
  SoftLabelSeq s;
  s.scores = std::move(scores);
  return s;
}

}  // namespace

TEST_CASE("reference tokenizer splits word runs, whitespace runs, single punctuation") {
  CHECK(tokenize("").tokens.empty());

  const auto resp = tokenize("a b");
  REQUIRE(resp.tokens.size() == 3);
  CHECK(resp.tokens[0].text == "a");
  CHECK(resp.tokens[0].start == 0);
  CHECK(resp.tokens[0].end == 1);
  CHECK(resp.tokens[1].text == " ");
  CHECK(resp.tokens[1].start == 1);
  CHECK(resp.tokens[1].end == 2);
  CHECK(resp.tokens[2].text == "b");
  CHECK(resp.tokens[2].start == 2);
  CHECK(resp.tokens[2].end == 3);

  const auto punct = tokenize("x+=1");
  REQUIRE(punct.tokens.size() == 4);  // "x" "+" "=" "1"
  CHECK(punct.tokens[1].text == "+");
  CHECK(punct.tokens[2].text == "=");
}

TEST_CASE("tokenization is lossless on a random corpus") {
  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const std::string text = random_text(rng, 200);
    const auto resp = tokenize(text);
    std::string concat;
    for (const Token& t : resp.tokens) concat += t.text;
    REQUIRE(concat == text);
    validate_tokenization(resp);  // offsets contiguous by construction
  }
}

TEST_CASE("offset ingestion rejects non-contiguous tokens naming the bad index") {
  CHECK_NOTHROW(from_offsets("ok", "abcd", {{0, 2}, {2, 4}}));
  CHECK_THROWS_WITH_AS(from_offsets("bad", "abcd", {{0, 2}, {3, 4}}),
                       doctest::Contains("token 1"), ValidationError);
  CHECK_THROWS_AS(from_offsets("short", "abcd", {{0, 2}}), ValidationError);
}

TEST_CASE("label_from_spans matches the interval-intersection oracle") {
  const auto resp = from_offsets("t", "abcdefghi", {{0, 3}, {3, 6}, {6, 9}});
  const auto labels = label_from_spans(resp, make_spans(resp.response_text, {{4, 7}}));
  CHECK(labels.labels == std::vector<int>{0, 1, 1});

  SUBCASE("empty span set gives all zeros") {
    CHECK(label_from_spans(resp, {}).labels == std::vector<int>{0, 0, 0});
  }
  SUBCASE("full-cover span gives all ones") {
    const auto full = label_from_spans(resp, make_spans(resp.response_text, {{0, 9}}));
    CHECK(full.labels == std::vector<int>{1, 1, 1});
  }
  SUBCASE("zero-width touching does not count") {
    // span ends exactly where token 1 starts
    const auto touch = label_from_spans(resp, make_spans(resp.response_text, {{0, 3}}));
    CHECK(touch.labels == std::vector<int>{1, 0, 0});
  }
  SUBCASE("out-of-bounds span raises a range error") {
    SpanSet bad;
    bad.spans.push_back({5, 30, "x"});
    CHECK_THROWS_AS(label_from_spans(resp, bad), RangeError);
  }
}

TEST_CASE("label_from_spans random oracle equivalence") {
  Rng rng(202);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text = random_text(rng, 120);
    if (text.empty()) text = "x";
    const auto resp = tokenize(text);

    std::vector<std::pair<std::size_t, std::size_t>> intervals;
    const int span_count = static_cast<int>(rng.next_below(4));
    for (int s = 0; s < span_count; ++s) {
      const std::size_t a = rng.next_below(text.size() + 1);
      const std::size_t b = a + rng.next_below(text.size() - a + 1);
      intervals.emplace_back(a, b);
    }
    const auto got = label_from_spans(resp, make_spans(text, intervals));
    CHECK(got.labels == oracle_labels(resp, intervals));
  }
}

TEST_CASE("adding a span never flips a label to zero") {
  Rng rng(303);
  for (int trial = 0; trial < 100; ++trial) {
    std::string text = random_text(rng, 80);
    if (text.empty()) text = "abc";
    const auto resp = tokenize(text);
    const std::size_t a = rng.next_below(text.size());
    const std::size_t b = a + 1 + rng.next_below(text.size() - a);
    const std::size_t c = rng.next_below(text.size());
    const std::size_t d = c + 1 + rng.next_below(text.size() - c);

    const auto base = label_from_spans(resp, make_spans(text, {{a, b}}));
    const auto more = label_from_spans(resp, make_spans(text, {{a, b}, {c, d}}));
    for (std::size_t i = 0; i < base.labels.size(); ++i) {
      CHECK(more.labels[i] >= base.labels[i]);
    }
  }
}

TEST_CASE("segments_from_scores groups threshold-exceeding runs") {
  const auto resp = from_offsets("t", "aabbccdd", {{0, 2}, {2, 4}, {4, 6}, {6, 8}});

  SUBCASE("nothing above threshold") {
    CHECK(segments_from_scores(resp, seq({0, 0, 0, 0}), 0.5).spans.empty());
  }
  SUBCASE("two runs") {
    const auto set = segments_from_scores(resp, seq({0.9, 0.9, 0.1, 0.8}), 0.5);
    REQUIRE(set.spans.size() == 2);
    CHECK(set.spans[0] == Span{0, 4, "aabb"});
    CHECK(set.spans[1] == Span{6, 8, "dd"});
  }
  SUBCASE("all ones spans the full response") {
    const auto set = segments_from_scores(resp, seq({1, 1, 1, 1}), 0.5);
    REQUIRE(set.spans.size() == 1);
    CHECK(set.spans[0] == Span{0, 8, "aabbccdd"});
  }
  SUBCASE("score equal to threshold is not flagged") {
    CHECK(segments_from_scores(resp, seq({0.5, 0.5, 0.5, 0.5}), 0.5).spans.empty());
  }
  SUBCASE("length mismatch raises a shape error") {
    CHECK_THROWS_AS(segments_from_scores(resp, seq({1.0}), 0.5), ShapeError);
  }
}

TEST_CASE("segments round-trip through label_from_spans reproduces the binarization") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text = random_text(rng, 100);
    if (text.empty()) text = "ab 1";
    const auto resp = tokenize(text);

    SoftLabelSeq scores;
    for (std::size_t i = 0; i < resp.tokens.size(); ++i) scores.scores.push_back(rng.next_double());
    const double beta = rng.next_double();

    const auto segments = segments_from_scores(resp, scores, beta);
    // output spans are disjoint and sorted
    for (std::size_t s = 1; s < segments.spans.size(); ++s) {
      CHECK(segments.spans[s - 1].end < segments.spans[s].start + 1);
      CHECK(segments.spans[s - 1].start < segments.spans[s].start);
    }
    const auto labels = label_from_spans(resp, segments);
    for (std::size_t i = 0; i < resp.tokens.size(); ++i) {
      CHECK(labels.labels[i] == (scores.scores[i] > beta ? 1 : 0));
    }
  }
}

TEST_CASE("normalize_spans merges overlaps and sorts") {
  const std::string text = "0123456789";
  SpanSet raw = make_spans(text, {{5, 8}, {0, 3}, {2, 6}});
  const SpanSet norm = normalize_spans(raw, text);
  REQUIRE(norm.spans.size() == 1);
  CHECK(norm.spans[0] == Span{0, 8, "01234567"});

  // labeling is unchanged by normalization
  const auto resp = tokenize(text);
  CHECK(label_from_spans(resp, raw).labels == label_from_spans(resp, norm).labels);
}
