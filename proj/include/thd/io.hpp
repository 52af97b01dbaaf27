#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "thd/annotate.hpp"
#include "thd/applications.hpp"
#include "thd/ensemble.hpp"
#include "thd/evaluation.hpp"
#include "thd/losses.hpp"
#include "thd/types.hpp"

namespace thd {

// Record-level streaming over the JSONL formats. Readers parse one line at a
// time; parse failures raise ValidationError naming file and line.

using JsonlHandler = std::function<void(const nlohmann::json& record, std::size_t line_no)>;

void for_each_jsonl(const std::string& path, const JsonlHandler& handler);

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  ~JsonlWriter();
  JsonlWriter(const JsonlWriter&) = delete;
  JsonlWriter& operator=(const JsonlWriter&) = delete;
  void write(const nlohmann::json& record);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string load_text(const std::string& path);
void save_text(const std::string& path, const std::string& content);

// Shortest round-trip decimal form (CSV cells, stable across runs).
std::string format_double(double v);

// samples.jsonl: {"id","domain","prompt","response","final_answer_correct","policy_model"}
std::vector<SampleRecord> read_samples(const std::string& path);
void write_samples(const std::string& path, const std::vector<SampleRecord>& samples);

// tokens.jsonl: {"id","text","tokens":[{"s","e"}]}
std::map<std::string, TokenizedResponse> read_token_offsets(const std::string& path);
void write_token_offsets(const std::string& path,
                         const std::vector<std::pair<std::string, TokenizedResponse>>& entries);

// scores.jsonl: {"sample_id","source","scores":[...]}
std::vector<SoftLabelSeq> read_scores(const std::string& path);
void write_scores(const std::string& path, const std::vector<SoftLabelSeq>& scores);

// critiques.jsonl: {"sample_id","critic","run","fragments":[...],"spans":[{"s","e"}],"valid"}
struct CritiqueRecord {
  std::string sample_id;
  std::string critic;
  int run = 0;
  std::vector<std::string> fragments;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  bool valid = false;
};

std::vector<CritiqueRecord> read_critiques(const std::string& path);
void write_critiques(const std::string& path, const std::vector<CritiqueRecord>& records);

// weights.json: {"critics":[...],"weights":[...],"fit_loss":...,"seed":...}
void write_weights(const std::string& path, const EnsembleWeights& w, uint64_t seed);
EnsembleWeights read_weights(const std::string& path);

void write_weight_ci(const std::string& path, const WeightCI& ci);

nlohmann::json report_to_json(const EvalReport& report, const Thresholds& th);
void write_report_json(const std::string& path, const EvalReport& report, const Thresholds& th);
void write_detail_jsonl(const std::string& path, const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report);
void write_sweep_csv(const std::string& path, const SweepTable& table);
void write_length_bins_csv(const std::string& path, const std::vector<LengthBinRow>& rows);

void write_filter_decisions(const std::string& path, const FilterResult& result);

// candidates.jsonl: {"sample_id","candidate_id","text","scores":[...],"is_correct";
// optional "tokens":[{"s","e"}], reference tokenizer otherwise}
std::vector<CandidateSet> read_candidate_sets(const std::string& path);

// correction inputs: {"id","problem","response","reference_answer","scores":[...],
// optional "gt_spans":[{"s","e"}]}
std::vector<CorrectionSample> read_correction_samples(const std::string& path);
void write_correction_logs(const std::string& path, const std::vector<CorrectionLog>& logs);

}  // namespace thd
