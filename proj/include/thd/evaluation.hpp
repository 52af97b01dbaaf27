#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thd/types.hpp"

namespace thd {

// Evaluation protocol over detector score sequences: binarize ground truth
// and predictions at fixed thresholds, score flagged samples by token
// P/R/F1, score clean samples by inverted-label recall, and report pooled
// threshold-free ranking metrics over the flagged samples' tokens.

struct Thresholds {
  double beta_gt = 0.5;    // binarizes ground-truth scores
  double beta_pred = 0.5;  // binarizes predicted scores
};

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // empty prediction set, reported as 0
  bool recall_undefined = false;     // empty ground-truth set, reported as 0
};

enum class SampleCategory { hallucinated, non_hallucinated, excluded };

const char* category_name(SampleCategory c);

// One evaluation record: ground truth and prediction over the same tokens.
struct EvalSample {
  std::string id;
  SoftLabelSeq gt;
  SoftLabelSeq pred;
  std::optional<bool> final_answer_correct;
};

struct SampleResult {
  std::string id;
  SampleCategory category = SampleCategory::excluded;
  std::size_t token_count = 0;
  // hallucinated samples
  Prf1 prf;
  // non-hallucinated samples: inverted-label recall in [0,100]
  double clean_recall_pct = 0.0;
};

struct EvalReport {
  std::vector<SampleResult> per_sample;
  double s_incor = 0.0;        // mean F1 x100 over hallucinated samples (macro)
  double s_incor_micro = 0.0;  // token-pooled F1 x100 over the same samples
  double s_cor = 0.0;          // mean inverted recall x100 over non-hallucinated samples
  double auroc = 0.0;
  double auprc = 0.0;
  bool auroc_defined = false;
  bool auprc_defined = false;
  std::size_t n_hallucinated = 0;
  std::size_t n_non_hallucinated = 0;
  std::size_t n_excluded = 0;
};

// Token index sets are sorted, duplicate-free index vectors.
Prf1 prf1(const std::vector<std::size_t>& pred_idx, const std::vector<std::size_t>& gt_idx);

std::vector<std::size_t> indices_above(const SoftLabelSeq& scores, double threshold);

SampleCategory categorize(const SoftLabelSeq& gt, std::optional<bool> final_answer_correct,
                          const Thresholds& th);

// Inverted-label recall for one clean sample, as a percentage.
double s_cor(const SoftLabelSeq& pred, const Thresholds& th);

// Mann-Whitney rank statistic over a pooled (score, binary label) set; tied
// pairs contribute 0.5. Throws UndefinedMetricError on a single-class pool.
double auroc(const std::vector<std::pair<double, int>>& pooled);

// Average precision with equal scores processed as one block. Throws
// UndefinedMetricError when the pool has no positives.
double auprc(const std::vector<std::pair<double, int>>& pooled);

EvalReport evaluate(const std::vector<EvalSample>& samples, const Thresholds& th = {});

struct SweepRow {
  Thresholds thresholds;
  double s_incor = 0.0;
  bool is_default = false;
};

struct SweepTable {
  std::vector<SweepRow> rows;  // default first, then the four perturbed configs
  double max_abs_delta = 0.0;
};

// Varies each threshold by +-0.05 around the default, one at a time.
SweepTable threshold_sweep(const std::vector<EvalSample>& samples, const Thresholds& base = {});

// Step ranges as [start, end) byte intervals that tile the response text.
using StepSplitter = std::function<std::vector<std::pair<std::size_t, std::size_t>>(const std::string&)>;

// Splits at runs of two or more newlines; the separator belongs to the
// preceding step.
std::vector<std::pair<std::size_t, std::size_t>> double_newline_steps(const std::string& text);

enum class StepScoreKind {
  correctness,  // token score becomes 1 - step score
  error_prob,   // step score is used as-is
};

// Adapts per-step scores to a per-token sequence by assigning each step's
// error probability to every token whose start offset falls in the step.
SoftLabelSeq prm_step_to_token(const TokenizedResponse& resp, const std::vector<double>& step_scores,
                               const StepSplitter& splitter = double_newline_steps,
                               StepScoreKind kind = StepScoreKind::correctness);

struct LengthBinRow {
  std::string label;
  std::size_t count = 0;
  double mean_s_incor = 0.0;  // NaN when the bin is empty
};

// Hallucinated samples binned by token count: <500, 500-1000 (inclusive),
// >1000.
std::vector<LengthBinRow> length_bin_report(const EvalReport& report);

}  // namespace thd
