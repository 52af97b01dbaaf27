#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace thd {

// A response together with an offset-preserving token sequence. Offsets are
// byte offsets into response_text; tokens tile the text exactly, so
// concatenating token texts reproduces the response.
struct Token {
  std::string text;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

struct TokenizedResponse {
  std::string response_text;
  std::vector<Token> tokens;
  std::string tokenizer_id;

  std::size_t size() const { return tokens.size(); }
};

// Character-interval annotation on a response. `text` is always the verbatim
// slice response_text[start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::string text;

  friend bool operator==(const Span&, const Span&) = default;
};

struct SpanSet {
  std::vector<Span> spans;  // sorted by start after normalization
  std::string source;
};

// One binary annotation per token of the associated response.
struct BinaryLabelSeq {
  std::vector<int> labels;  // each 0 or 1
  std::string sample_id;
  std::string source;
};

// Per-token scores in [0,1]. `source` records provenance: a critic average,
// an ensembled sequence, labeler ground truth, or a detector prediction.
struct SoftLabelSeq {
  std::string sample_id;
  std::string source;
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

// Throws if the tokenization invariants do not hold; `where` names the input
// in the error message. Reports the first offending token index.
void validate_tokenization(const TokenizedResponse& resp, const std::string& where = "tokens");

// Throws if any span fails start < end bounds checks against `resp` or its
// text is not the verbatim slice.
void validate_spans(const SpanSet& spans, const TokenizedResponse& resp);

// Sorts spans by (start, end) and merges overlapping spans from the same
// source. Labeling is unchanged by this normalization.
SpanSet normalize_spans(const SpanSet& spans, const std::string& response_text);

}  // namespace thd
