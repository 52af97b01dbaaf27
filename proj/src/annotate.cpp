#include "thd/annotate.hpp"

#include <algorithm>
#include <cctype>

#include "thd/errors.hpp"
#include "thd/span_align.hpp"

namespace thd {

namespace {

struct TaggedFragment {
  long index;
  std::string body;
};

}  // namespace

TaskDomain task_domain_from_name(const std::string& name) {
  if (name == "math_stem") return TaskDomain::math_stem;
  if (name == "code") return TaskDomain::code;
  throw ValidationError("unknown task domain '" + name + "'");
}

const char* task_domain_name(TaskDomain d) {
  return d == TaskDomain::math_stem ? "math_stem" : "code";
}

std::size_t CritiqueBundle::valid_run_count() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const CritiqueRun& r) { return r.valid; }));
}

std::vector<std::string> parse_critique(const std::string& raw_text) {
  std::vector<TaggedFragment> tagged;
  std::size_t pos = 0;
  while ((pos = raw_text.find("<error", pos)) != std::string::npos) {
    const std::size_t open_at = pos;
    std::size_t i = pos + 6;
    while (i < raw_text.size() && raw_text[i] == ' ') ++i;
    std::size_t digits_start = i;
    while (i < raw_text.size() && std::isdigit(static_cast<unsigned char>(raw_text[i]))) ++i;
    if (i == digits_start) {
      throw ParseError("error tag without an index", open_at);
    }
    const std::string index_str = raw_text.substr(digits_start, i - digits_start);
    while (i < raw_text.size() && raw_text[i] == ' ') ++i;
    if (i >= raw_text.size() || raw_text[i] != '>') {
      throw ParseError("malformed error tag", open_at);
    }
    const std::size_t body_start = i + 1;
    const std::string close = "</error " + index_str + ">";
    const std::string close_tight = "</error" + index_str + ">";
    std::size_t body_end = raw_text.find(close, body_start);
    std::size_t close_len = close.size();
    if (body_end == std::string::npos) {
      body_end = raw_text.find(close_tight, body_start);
      close_len = close_tight.size();
    }
    if (body_end == std::string::npos) {
      throw ParseError("unclosed error tag " + index_str, open_at);
    }
    tagged.push_back({std::stol(index_str), raw_text.substr(body_start, body_end - body_start)});
    pos = body_end + close_len;
  }

  std::stable_sort(tagged.begin(), tagged.end(),
                   [](const TaggedFragment& a, const TaggedFragment& b) { return a.index < b.index; });
  std::vector<std::string> fragments;
  fragments.reserve(tagged.size());
  for (auto& t : tagged) fragments.push_back(std::move(t.body));
  return fragments;
}

std::string render_critique_prompt(const std::string& prompt_template, const std::string& problem,
                                   const std::string& solution) {
  std::string prompt = prompt_template;
  for (auto [key, value] : {std::pair<std::string, const std::string*>{"{problem}", &problem},
                            {"{solution}", &solution}}) {
    std::size_t pos;
    while ((pos = prompt.find(key)) != std::string::npos) {
      prompt.replace(pos, key.size(), *value);
    }
  }
  return prompt;
}

CritiqueBundle critique_sample(const SampleRecord& sample, const TokenizedResponse& resp,
                               CriticClient& critic, Restorer& restorer,
                               const AnnotateConfig& cfg) {
  if (cfg.critique_count < 1) throw ValidationError("critique_sample: critique count must be >= 1");
  if (resp.response_text != sample.response) {
    throw ValidationError("critique_sample: tokenization does not match sample '" + sample.id + "'");
  }

  const std::string prompt =
      render_critique_prompt(cfg.prompt_template, sample.prompt, sample.response);

  CritiqueBundle bundle;
  bundle.sample_id = sample.id;
  bundle.critic_id = critic.id();

  for (int c = 1; c <= cfg.critique_count; ++c) {
    CritiqueRun run;
    run.run = c;
    run.labels.sample_id = sample.id;
    run.labels.source = critic.id() + ":run" + std::to_string(c);

    const auto raw = critic.critique(sample, prompt, c);
    if (!raw) {
      bundle.runs.push_back(std::move(run));  // transport gave up: invalid
      continue;
    }

    std::vector<std::string> fragments;
    try {
      fragments = parse_critique(*raw);
    } catch (const ParseError&) {
      bundle.runs.push_back(std::move(run));  // corrupted critique: invalid
      continue;
    }

    run.raw_fragments = fragments;
    if (fragments.empty()) {
      run.labels.labels.assign(resp.tokens.size(), 0);
    } else {
      RestorationReport rep = restore(fragments, sample.response, restorer, cfg.restoration);
      run.dropped_fragments = rep.unrestored;
      run.restored_spans = std::move(rep.restored);
      run.restored_spans.source = run.labels.source;
      run.labels = label_from_spans(resp, run.restored_spans);
      run.labels.sample_id = sample.id;
    }
    run.valid = true;
    bundle.runs.push_back(std::move(run));
  }
  return bundle;
}

SoftLabelSeq average_runs(const CritiqueBundle& bundle) {
  std::size_t token_count = 0;
  std::size_t valid = 0;
  for (const CritiqueRun& run : bundle.runs) {
    if (!run.valid) continue;
    if (valid == 0) {
      token_count = run.labels.labels.size();
    } else if (run.labels.labels.size() != token_count) {
      throw ShapeError("average_runs: runs disagree on token count for sample '" +
                       bundle.sample_id + "'");
    }
    ++valid;
  }
  if (valid == 0) {
    throw ValidationError("average_runs: bundle for sample '" + bundle.sample_id +
                          "' has no valid runs");
  }

  SoftLabelSeq out;
  out.sample_id = bundle.sample_id;
  out.source = "critic:" + bundle.critic_id;
  out.scores.assign(token_count, 0.0);
  for (const CritiqueRun& run : bundle.runs) {
    if (!run.valid) continue;
    for (std::size_t i = 0; i < token_count; ++i) {
      out.scores[i] += static_cast<double>(run.labels.labels[i]);
    }
  }
  for (double& s : out.scores) s /= static_cast<double>(valid);
  return out;
}

const char* drop_reason_name(DropReason r) {
  switch (r) {
    case DropReason::none: return "none";
    case DropReason::invalid_trace: return "invalid_trace";
    case DropReason::no_hallucination_found: return "no_hallucination_found";
    case DropReason::low_consistency: return "low_consistency";
  }
  return "unknown";
}

FilterResult filter_dataset(const std::vector<FilterItem>& items) {
  FilterResult out;
  for (const FilterItem& item : items) {
    FilterDecision d;
    d.sample_id = item.sample.id;

    if (!item.trace_valid) {
      d.reason = DropReason::invalid_trace;
    } else {
      double max_score = 0.0;
      for (double s : item.aggregated.scores) max_score = std::max(max_score, s);
      if (max_score == 0.0) {
        if (!item.sample.final_answer_correct.has_value()) {
          throw ValidationError("filter: sample '" + item.sample.id +
                                "' has no flagged tokens and no final_answer_correct field");
        }
        if (!*item.sample.final_answer_correct) {
          d.reason = DropReason::no_hallucination_found;
        }
      } else if (max_score < 0.5) {
        d.reason = DropReason::low_consistency;
      }
    }

    d.kept = d.reason == DropReason::none;
    (d.kept ? out.kept_count : out.dropped_count) += 1;
    out.decisions.push_back(std::move(d));
  }
  return out;
}

}  // namespace thd
