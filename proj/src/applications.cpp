#include "thd/applications.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "thd/errors.hpp"
#include "thd/evaluation.hpp"
#include "thd/span_align.hpp"

namespace thd {

namespace {

constexpr const char* kOpen = "<<<";
constexpr const char* kClose = ">>>";

HintedText wrap_spans(const TokenizedResponse& resp, SpanSet spans, double threshold) {
  HintedText out;
  out.threshold = threshold;
  out.text_with_markers = resp.response_text;
  for (auto it = spans.spans.rbegin(); it != spans.spans.rend(); ++it) {
    out.text_with_markers.insert(it->end, kClose);
    out.text_with_markers.insert(it->start, kOpen);
  }
  out.marked_spans = std::move(spans);
  return out;
}

}  // namespace

AggregateStrategy aggregate_strategy_from_name(const std::string& name) {
  if (name == "mean") return AggregateStrategy::mean;
  if (name == "min") return AggregateStrategy::min;
  if (name == "worst10") return AggregateStrategy::worst10;
  throw ValidationError("unknown aggregation strategy '" + name + "'");
}

const char* aggregate_strategy_name(AggregateStrategy s) {
  switch (s) {
    case AggregateStrategy::mean: return "mean";
    case AggregateStrategy::min: return "min";
    case AggregateStrategy::worst10: return "worst10";
  }
  return "unknown";
}

double aggregate_candidate(const SoftLabelSeq& scores, AggregateStrategy strategy) {
  const std::size_t n = scores.size();
  if (n == 0) throw ShapeError("aggregate_candidate: empty score sequence");
  switch (strategy) {
    case AggregateStrategy::mean: {
      double acc = 0.0;
      for (double s : scores.scores) acc += s;
      return acc / static_cast<double>(n);
    }
    case AggregateStrategy::min:
      return *std::min_element(scores.scores.begin(), scores.scores.end());
    case AggregateStrategy::worst10: {
      const auto k = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n)));
      std::vector<double> sorted = scores.scores;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += sorted[i];
      return acc / static_cast<double>(k);
    }
  }
  throw ValidationError("aggregate_candidate: bad strategy");
}

std::string select_best(const CandidateSet& cands, AggregateStrategy strategy) {
  if (cands.candidates.empty()) throw ValidationError("select_best: no candidates");
  std::size_t best = 0;
  double best_score = aggregate_candidate(cands.candidates[0].scores, strategy);
  for (std::size_t i = 1; i < cands.candidates.size(); ++i) {
    const double s = aggregate_candidate(cands.candidates[i].scores, strategy);
    if (s < best_score) {
      best = i;
      best_score = s;
    }
  }
  return cands.candidates[best].candidate_id;
}

HintedText insert_hints(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                        double threshold) {
  return wrap_spans(resp, segments_from_scores(resp, scores, threshold), threshold);
}

HintedText insert_step_hints(const TokenizedResponse& resp, const SoftLabelSeq& scores,
                             double threshold) {
  if (scores.size() != resp.tokens.size()) {
    throw ShapeError("insert_step_hints: score/token length mismatch");
  }
  SpanSet spans;
  spans.source = "step-hints";
  for (auto [start, end] : double_newline_steps(resp.response_text)) {
    double step_max = 0.0;
    for (std::size_t i = 0; i < resp.tokens.size(); ++i) {
      if (resp.tokens[i].start >= start && resp.tokens[i].start < end) {
        step_max = std::max(step_max, scores.scores[i]);
      }
    }
    if (step_max > threshold) {
      std::size_t trimmed = end;  // keep the separator newlines outside the markers
      while (trimmed > start &&
             std::isspace(static_cast<unsigned char>(resp.response_text[trimmed - 1]))) {
        --trimmed;
      }
      if (trimmed > start) {
        spans.spans.push_back(
            {start, trimmed, resp.response_text.substr(start, trimmed - start)});
      }
    }
  }
  return wrap_spans(resp, std::move(spans), threshold);
}

std::string strip_hints(const std::string& marked_text) {
  std::string out;
  out.reserve(marked_text.size());
  std::size_t i = 0;
  while (i < marked_text.size()) {
    if (marked_text.compare(i, 3, kOpen) == 0 || marked_text.compare(i, 3, kClose) == 0) {
      i += 3;
    } else {
      out.push_back(marked_text[i]);
      ++i;
    }
  }
  return out;
}

HintCondition hint_condition_from_name(const std::string& name) {
  if (name == "baseline") return HintCondition::baseline;
  if (name == "token") return HintCondition::token;
  if (name == "step") return HintCondition::step;
  if (name == "oracle") return HintCondition::oracle;
  throw ValidationError("unknown hint condition '" + name + "'");
}

const char* hint_condition_name(HintCondition c) {
  switch (c) {
    case HintCondition::baseline: return "baseline";
    case HintCondition::token: return "token";
    case HintCondition::step: return "step";
    case HintCondition::oracle: return "oracle";
  }
  return "unknown";
}

std::optional<std::string> extract_boxed_answer(const std::string& text) {
  const std::string needle = "\\boxed{";
  std::size_t pos = std::string::npos;
  for (std::size_t at = text.find(needle); at != std::string::npos;
       at = text.find(needle, at + 1)) {
    pos = at;
  }
  if (pos == std::string::npos) return std::nullopt;

  std::size_t depth = 1;
  std::size_t start = pos + needle.size();
  for (std::size_t i = start; i < text.size(); ++i) {
    if (text[i] == '{') {
      ++depth;
    } else if (text[i] == '}') {
      if (--depth == 0) return text.substr(start, i - start);
    }
  }
  return std::nullopt;  // unbalanced
}

bool answers_match(const std::string& a, const std::string& b) {
  auto squeeze = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
  };
  return squeeze(a) == squeeze(b);
}

std::string render_correction_prompt(const std::string& prompt_template, const std::string& problem,
                                     const std::string& previous_solution_with_hints) {
  std::string prompt = prompt_template;
  for (auto [key, value] :
       {std::pair<std::string, const std::string*>{"{problem}", &problem},
        {"{previous_solution_with_hints}", &previous_solution_with_hints}}) {
    std::size_t pos;
    while ((pos = prompt.find(key)) != std::string::npos) {
      prompt.replace(pos, key.size(), *value);
    }
  }
  return prompt;
}

CorrectionLog correction_loop(const CorrectionSample& sample, Corrector& corrector,
                              const std::string& prompt_template,
                              const CorrectionLoopOptions& opts) {
  if (opts.max_iterations < 1) throw ValidationError("correction_loop: max_iterations must be >= 1");

  CorrectionLog log;
  log.sample_id = sample.sample_id;
  log.condition = opts.condition;

  TokenizedResponse current = sample.response;
  SoftLabelSeq current_scores = sample.detector_scores;
  bool scores_valid = true;  // scores align to `current`

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    std::string hinted = current.response_text;
    switch (opts.condition) {
      case HintCondition::baseline:
        break;
      case HintCondition::token:
        if (scores_valid) {
          hinted = insert_hints(current, current_scores, opts.threshold).text_with_markers;
        }
        break;
      case HintCondition::step:
        if (scores_valid) {
          hinted = insert_step_hints(current, current_scores, opts.threshold).text_with_markers;
        }
        break;
      case HintCondition::oracle:
        // ground-truth spans only describe the original solution
        if (current.response_text == sample.response.response_text) {
          SpanSet norm = normalize_spans(sample.gt_spans, current.response_text);
          TokenizedResponse copy = current;
          hinted = wrap_spans(copy, std::move(norm), opts.threshold).text_with_markers;
        }
        break;
    }

    const std::string prompt = render_correction_prompt(prompt_template, sample.problem, hinted);
    CorrectionIteration record;
    record.iteration = iter;

    std::optional<std::string> reply;
    try {
      reply = corrector.correct(sample.sample_id, iter, prompt);
    } catch (const std::exception&) {
      reply = std::nullopt;
    }

    if (reply) {
      record.client_ok = true;
      const auto answer = extract_boxed_answer(*reply);
      record.success = answer && answers_match(*answer, sample.reference_answer);
      if (record.success) {
        log.corrected = true;
        log.success_iteration = iter;
        log.iterations.push_back(record);
        break;
      }
      // the failed revision becomes the next previous solution
      current = tokenize(*reply);
      if (opts.rescorer) {
        current_scores = opts.rescorer(current);
        scores_valid = current_scores.size() == current.tokens.size();
      } else {
        scores_valid = false;
      }
    }
    log.iterations.push_back(record);
  }
  return log;
}

CorrectionSummary correction_summary(const std::vector<CorrectionLog>& logs) {
  CorrectionSummary out;
  out.samples = logs.size();
  if (logs.empty()) return out;
  std::size_t corrected = 0, first = 0;
  for (const auto& log : logs) {
    if (log.corrected) ++corrected;
    if (log.success_iteration == 1) ++first;
  }
  out.correction_rate = static_cast<double>(corrected) / static_cast<double>(logs.size());
  out.first_iteration_rate = static_cast<double>(first) / static_cast<double>(logs.size());
  return out;
}

}  // namespace thd
