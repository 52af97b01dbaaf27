#include "thd/span_align.hpp"

#include <algorithm>
#include <cctype>

#include "thd/errors.hpp"

namespace thd {

namespace {

enum class CharClass { Word, Space, Punct };

CharClass classify(unsigned char c) {
  if (c >= 0x80 || std::isalnum(c)) return CharClass::Word;
  if (std::isspace(c)) return CharClass::Space;
  return CharClass::Punct;
}

}  // namespace

void validate_tokenization(const TokenizedResponse& resp, const std::string& where) {
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < resp.tokens.size(); ++i) {
    const Token& t = resp.tokens[i];
    if (t.start != cursor || t.end < t.start || t.end > resp.response_text.size()) {
      throw ValidationError(where + ": token " + std::to_string(i) +
                            " breaks offset contiguity (start=" + std::to_string(t.start) +
                            ", expected " + std::to_string(cursor) + ")");
    }
    if (resp.response_text.compare(t.start, t.end - t.start, t.text) != 0) {
      throw ValidationError(where + ": token " + std::to_string(i) +
                            " text does not match its offsets");
    }
    cursor = t.end;
  }
  if (cursor != resp.response_text.size()) {
    throw ValidationError(where + ": tokens cover " + std::to_string(cursor) + " of " +
                          std::to_string(resp.response_text.size()) + " bytes");
  }
}

void validate_spans(const SpanSet& spans, const TokenizedResponse& resp) {
  for (std::size_t i = 0; i < spans.spans.size(); ++i) {
    const Span& s = spans.spans[i];
    if (s.start > s.end || s.end > resp.response_text.size()) {
      throw RangeError("span " + std::to_string(i) + " [" + std::to_string(s.start) + "," +
                       std::to_string(s.end) + ") out of bounds for response of length " +
                       std::to_string(resp.response_text.size()));
    }
    if (resp.response_text.compare(s.start, s.end - s.start, s.text) != 0) {
      throw ValidationError("span " + std::to_string(i) + " text is not the verbatim slice");
    }
  }
}

SpanSet normalize_spans(const SpanSet& spans, const std::string& response_text) {
  SpanSet out;
  out.source = spans.source;
  if (spans.spans.empty()) return out;

  std::vector<Span> sorted = spans.spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& a, const Span& b) { return a.start != b.start ? a.start < b.start : a.end < b.end; });

  for (const Span& s : sorted) {
    if (s.start == s.end) continue;  // cannot have a non-empty intersection
    if (!out.spans.empty() && s.start < out.spans.back().end) {
      Span& last = out.spans.back();
      if (s.end > last.end) {
        last.end = s.end;
        last.text = response_text.substr(last.start, last.end - last.start);
      }
    } else {
      out.spans.push_back(s);
    }
  }
  return out;
}

std::vector<Token> reference_tokenize(const std::string& text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    CharClass cls = classify(static_cast<unsigned char>(text[i]));
    std::size_t j = i + 1;
    if (cls != CharClass::Punct) {
      while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == cls) ++j;
    }
    tokens.push_back({text.substr(i, j - i), i, j});
    i = j;
  }
  return tokens;
}

TokenizedResponse tokenize(const std::string& text, const Tokenizer& tokenizer,
                           const std::string& tokenizer_id) {
  TokenizedResponse resp{text, tokenizer(text), tokenizer_id};
  validate_tokenization(resp, "tokenizer '" + tokenizer_id + "'");
  return resp;
}

TokenizedResponse tokenize(const std::string& text) {
  return tokenize(text, reference_tokenize, "whitespace-punct-v1");
}

TokenizedResponse from_offsets(const std::string& id, const std::string& text,
                               const std::vector<std::pair<std::size_t, std::size_t>>& offsets,
                               const std::string& tokenizer_id) {
  TokenizedResponse resp;
  resp.response_text = text;
  resp.tokenizer_id = tokenizer_id;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    auto [s, e] = offsets[i];
    if (s != cursor || e < s || e > text.size()) {
      throw ValidationError("offset record '" + id + "': token " + std::to_string(i) +
                            " violates contiguity (s=" + std::to_string(s) + ", e=" +
                            std::to_string(e) + ", expected start " + std::to_string(cursor) + ")");
    }
    resp.tokens.push_back({text.substr(s, e - s), s, e});
    cursor = e;
  }
  if (cursor != text.size()) {
    throw ValidationError("offset record '" + id + "': tokens cover " + std::to_string(cursor) +
                          " of " + std::to_string(text.size()) + " bytes");
  }
  return resp;
}

BinaryLabelSeq label_from_spans(const TokenizedResponse& resp, const SpanSet& spans) {
  validate_spans(spans, resp);
  SpanSet norm = normalize_spans(spans, resp.response_text);

  BinaryLabelSeq out;
  out.source = spans.source;
  out.labels.assign(resp.tokens.size(), 0);

  const std::size_t n = resp.tokens.size();
  const auto& sp = norm.spans;
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
    const Token& t = resp.tokens[static_cast<std::size_t>(ii)];
    // first span ending after the token start; spans are disjoint and sorted
    auto it = std::upper_bound(sp.begin(), sp.end(), t.start,
                               [](std::size_t pos, const Span& s) { return pos < s.end; });
    if (it != sp.end() && std::max(t.start, it->start) < std::min(t.end, it->end)) {
      out.labels[static_cast<std::size_t>(ii)] = 1;
    }
  }
  return out;
}

SpanSet segments_from_scores(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                             double threshold) {
  if (scores.scores.size() != resp.tokens.size()) {
    throw ShapeError("segments_from_scores: " + std::to_string(scores.scores.size()) +
                     " scores for " + std::to_string(resp.tokens.size()) + " tokens");
  }
  SpanSet out;
  out.source = scores.source;
  std::size_t i = 0;
  while (i < scores.scores.size()) {
    if (scores.scores[i] > threshold) {
      std::size_t j = i;
      while (j + 1 < scores.scores.size() && scores.scores[j + 1] > threshold) ++j;
      std::size_t s = resp.tokens[i].start;
      std::size_t e = resp.tokens[j].end;
      out.spans.push_back({s, e, resp.response_text.substr(s, e - s)});
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace thd
