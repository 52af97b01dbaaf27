#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thd/types.hpp"

namespace thd {

// Aligns critic-emitted text fragments (possibly paraphrased or reformatted)
// back to exact spans of the original response. The round loop mirrors the
// iterative scheme: propose candidates for every unresolved fragment, keep
// the ones that are verbatim substrings, feed the rest into the next round.

struct RestorationConfig {
  int max_rounds = 3;
  double max_normalized_edit_distance = 0.25;
  bool whitespace_fold = true;
};

struct RestorationReport {
  SpanSet restored;                      // every resolved fragment, sorted by start
  std::vector<std::string> unrestored;   // original texts of fragments never aligned
  std::size_t direct_match_count = 0;    // verbatim before any restorer call
  std::size_t post_restoration_count = 0;  // total resolved (direct + aligned)
  int rounds_used = 0;
  int failed_rounds = 0;                 // restorer threw or returned nothing
};

class Restorer {
 public:
  virtual ~Restorer() = default;
  virtual std::string name() const = 0;
  // One candidate per input fragment, paired by order. nullopt means no
  // proposal for that fragment this round.
  virtual std::vector<std::optional<std::string>> propose(
      const std::vector<std::string>& fragments, const std::string& response_text) = 0;
};

// Slides candidate windows over response_text (lengths within +-30% of the
// fragment length after optional whitespace folding), scores each window by
// normalized Levenshtein distance, and returns the minimal-distance window if
// it clears the threshold. Ties break by earliest start, then shortest
// window. Spans are reported in original (unfolded) coordinates.
std::optional<Span> fuzzy_restore(const std::string& fragment, const std::string& response_text,
                                  const RestorationConfig& cfg);

// Single-threaded reference for the window scan; bit-identical to the
// OpenMP path.
std::optional<Span> fuzzy_restore_serial(const std::string& fragment,
                                         const std::string& response_text,
                                         const RestorationConfig& cfg);

// Deterministic default restorer backed by fuzzy_restore.
class FuzzyRestorer : public Restorer {
 public:
  explicit FuzzyRestorer(RestorationConfig cfg) : cfg_(cfg) {}
  std::string name() const override { return "fuzzy"; }
  std::vector<std::optional<std::string>> propose(const std::vector<std::string>& fragments,
                                                  const std::string& response_text) override;

 private:
  RestorationConfig cfg_;
};

// Remote restorer speaking the <extractN>/<resultN> tag protocol. The
// completer maps a fully rendered prompt to the model's raw reply; the
// template must contain {original_text} and {extracted_text} placeholders.
class TagProtocolRestorer : public Restorer {
 public:
  using Completer = std::function<std::optional<std::string>(const std::string& prompt)>;
  TagProtocolRestorer(Completer completer, std::string prompt_template)
      : completer_(std::move(completer)), template_(std::move(prompt_template)) {}
  std::string name() const override { return "tag-protocol"; }
  std::vector<std::optional<std::string>> propose(const std::vector<std::string>& fragments,
                                                  const std::string& response_text) override;

  static std::string render_prompt(const std::string& prompt_template,
                                   const std::string& response_text,
                                   const std::vector<std::string>& fragments);
  // Parses <resultN>...</resultN> replies; "NO_MATCH_FOUND" bodies map to
  // nullopt. Missing indices are failures for the round.
  static std::vector<std::optional<std::string>> parse_reply(const std::string& reply,
                                                             std::size_t expected);

 private:
  Completer completer_;
  std::string template_;
};

// Iterative restoration over all fragments of one response. Fragments that
// are already verbatim substrings bypass the restorer entirely.
RestorationReport restore(const std::vector<std::string>& fragments,
                          const std::string& response_text, Restorer& restorer,
                          const RestorationConfig& cfg);

}  // namespace thd
