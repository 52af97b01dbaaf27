#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "thd/types.hpp"

namespace thd {

// Maps character-level span annotations to per-token binary labels and
// thresholded score sequences back to text segments. Everything is keyed on
// byte offsets, so any tokenizer that reports offsets can be plugged in.

using Tokenizer = std::function<std::vector<Token>(const std::string&)>;

// Built-in reference tokenizer: runs of letters/digits (bytes >= 0x80 count
// as letters so UTF-8 sequences stay whole), runs of whitespace, and single
// punctuation characters. Offset-preserving by construction.
std::vector<Token> reference_tokenize(const std::string& text);

TokenizedResponse tokenize(const std::string& text, const Tokenizer& tokenizer,
                           const std::string& tokenizer_id);

// Reference tokenizer convenience overload (tokenizer_id "whitespace-punct-v1").
TokenizedResponse tokenize(const std::string& text);

// Builds a TokenizedResponse from externally supplied offsets. Throws a
// ValidationError naming the first bad token index if the offsets are not
// contiguous from 0 to text length.
TokenizedResponse from_offsets(const std::string& id, const std::string& text,
                               const std::vector<std::pair<std::size_t, std::size_t>>& offsets,
                               const std::string& tokenizer_id = "external");

// labels[i] = 1 iff token i's interval has a non-empty intersection with any
// span. Zero-width touching does not count. Empty span set -> all zeros.
BinaryLabelSeq label_from_spans(const TokenizedResponse& resp, const SpanSet& spans);

// Groups token indices with score > threshold into maximal consecutive runs
// and maps each run to its character interval.
SpanSet segments_from_scores(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                             double threshold);

}  // namespace thd
