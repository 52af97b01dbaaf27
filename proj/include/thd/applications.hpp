#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thd/types.hpp"

namespace thd {

// Downstream consumers of token error scores: picking the least-flagged of N
// candidate solutions, and marking suspect regions inline so a correction
// model can retry with localized hints.

enum class AggregateStrategy { mean, min, worst10 };

AggregateStrategy aggregate_strategy_from_name(const std::string& name);
const char* aggregate_strategy_name(AggregateStrategy s);

struct Candidate {
  std::string candidate_id;
  TokenizedResponse response;
  SoftLabelSeq scores;  // aligned to response tokens
  std::optional<bool> is_correct;
};

struct CandidateSet {
  std::string sample_id;
  std::vector<Candidate> candidates;
};

// mean = token mean; min = lowest token score; worst10 = mean of the
// ceil(0.1*n) highest scores (at least one token).
double aggregate_candidate(const SoftLabelSeq& scores, AggregateStrategy strategy);

// Argmin of the aggregate; ties break toward the lowest candidate index.
std::string select_best(const CandidateSet& cands, AggregateStrategy strategy);

struct HintedText {
  std::string text_with_markers;
  SpanSet marked_spans;  // original coordinates
  double threshold = 0.5;
};

// Wraps every above-threshold token run in <<< >>> markers, inserting from
// the last span backwards so earlier offsets stay valid.
HintedText insert_hints(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                        double threshold);

// Paragraph-granularity variant: token scores are aggregated to each
// double-newline paragraph by max, and whole paragraphs are marked.
HintedText insert_step_hints(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                             double threshold);

// Removes every <<< and >>> marker.
std::string strip_hints(const std::string& marked_text);

enum class HintCondition { baseline, token, step, oracle };

HintCondition hint_condition_from_name(const std::string& name);
const char* hint_condition_name(HintCondition c);

struct CorrectionSample {
  std::string sample_id;
  std::string problem;
  TokenizedResponse response;    // the incorrect solution under revision
  SoftLabelSeq detector_scores;  // aligned to response (token/step conditions)
  SpanSet gt_spans;              // oracle condition
  std::string reference_answer;
};

class Corrector {
 public:
  virtual ~Corrector() = default;
  // Full corrected-solution text, or nullopt on client failure.
  virtual std::optional<std::string> correct(const std::string& sample_id, int iteration,
                                             const std::string& prompt) = 0;
};

// Recomputes detector scores for a revised solution between iterations. When
// absent, later iterations carry no markers (the original scores only apply
// to the original text).
using TokenScorer = std::function<SoftLabelSeq(const TokenizedResponse&)>;

struct CorrectionIteration {
  int iteration = 0;
  bool client_ok = false;
  bool success = false;
};

struct CorrectionLog {
  std::string sample_id;
  HintCondition condition = HintCondition::baseline;
  std::vector<CorrectionIteration> iterations;
  bool corrected = false;
  int success_iteration = 0;  // 0 when never corrected
};

struct CorrectionLoopOptions {
  HintCondition condition = HintCondition::token;
  double threshold = 0.5;
  int max_iterations = 3;
  TokenScorer rescorer;  // optional
};

CorrectionLog correction_loop(const CorrectionSample& sample, Corrector& corrector,
                              const std::string& prompt_template,
                              const CorrectionLoopOptions& opts);

struct CorrectionSummary {
  std::size_t samples = 0;
  double correction_rate = 0.0;  // corrected within max iterations
  double first_iteration_rate = 0.0;
};

CorrectionSummary correction_summary(const std::vector<CorrectionLog>& logs);

// Last \boxed{...} body of a solution, or nullopt when absent.
std::optional<std::string> extract_boxed_answer(const std::string& text);

// Exact comparison after stripping all whitespace.
bool answers_match(const std::string& a, const std::string& b);

std::string render_correction_prompt(const std::string& prompt_template, const std::string& problem,
                                     const std::string& previous_solution_with_hints);

}  // namespace thd
