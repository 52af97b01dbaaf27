#pragma once

#include <optional>
#include <string>
#include <vector>

#include "thd/restoration.hpp"
#include "thd/types.hpp"

namespace thd {

// Drives critic models over samples, parses their error tags, and turns
// repeated critiques into per-token soft scores. Also applies the dataset
// filtering rules before training-signal export.

enum class TaskDomain { math_stem, code };

TaskDomain task_domain_from_name(const std::string& name);
const char* task_domain_name(TaskDomain d);

struct SampleRecord {
  std::string id;
  TaskDomain domain = TaskDomain::math_stem;
  std::string prompt;
  std::string response;
  std::optional<bool> final_answer_correct;
  std::string policy_model;
};

class CriticClient {
 public:
  virtual ~CriticClient() = default;
  virtual std::string id() const = 0;
  // Raw critique text for one (sample, run), or nullopt after the transport
  // gave up.
  virtual std::optional<std::string> critique(const SampleRecord& sample,
                                              const std::string& prompt, int run) = 0;
};

struct CritiqueRun {
  int run = 0;
  bool valid = false;
  std::vector<std::string> raw_fragments;
  std::vector<std::string> dropped_fragments;  // unrestorable, logged and excluded
  SpanSet restored_spans;
  BinaryLabelSeq labels;
};

struct CritiqueBundle {
  std::string sample_id;
  std::string critic_id;
  std::vector<CritiqueRun> runs;  // length C

  std::size_t valid_run_count() const;
};

struct AnnotateConfig {
  int critique_count = 4;  // number of repeated critiques per sample
  std::string prompt_template;
  RestorationConfig restoration;
};

// Extracts the bodies of <error n>...</error n> tags in index order. Zero
// tags (e.g. the literal "No errors!") yield the empty list. Malformed or
// unclosed tags raise ParseError with the byte offset of the opening '<'.
std::vector<std::string> parse_critique(const std::string& raw_text);

std::string render_critique_prompt(const std::string& prompt_template, const std::string& problem,
                                   const std::string& solution);

// Runs C critiques of one sample: call the critic, parse the tags, restore
// fragments against the response, and label tokens. Transport or parse
// failures mark the run invalid; unrestorable fragments are dropped from
// their run.
CritiqueBundle critique_sample(const SampleRecord& sample, const TokenizedResponse& resp,
                               CriticClient& critic, Restorer& restorer,
                               const AnnotateConfig& cfg);

// Mean of the valid runs' binary labels. Throws when no run is valid.
SoftLabelSeq average_runs(const CritiqueBundle& bundle);

enum class DropReason { none, invalid_trace, no_hallucination_found, low_consistency };

const char* drop_reason_name(DropReason r);

struct FilterItem {
  SampleRecord sample;
  SoftLabelSeq aggregated;
  bool trace_valid = true;
};

struct FilterDecision {
  std::string sample_id;
  bool kept = false;
  DropReason reason = DropReason::none;
};

struct FilterResult {
  std::vector<FilterDecision> decisions;  // input order
  std::size_t kept_count = 0;
  std::size_t dropped_count = 0;
};

// Keeps correct all-zero samples (the clean supplement) and any sample whose
// maximum aggregated score reaches 0.5; drops corrupted traces, wrong-answer
// samples with no flagged token, and low-consistency annotations.
FilterResult filter_dataset(const std::vector<FilterItem>& items);

}  // namespace thd
