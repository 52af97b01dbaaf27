#include "thd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thd/errors.hpp"

namespace thd {

namespace {

std::size_t intersection_size(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t i = 0, j = 0, shared = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++shared;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return shared;
}

}  // namespace

const char* category_name(SampleCategory c) {
  switch (c) {
    case SampleCategory::hallucinated: return "hallucinated";
    case SampleCategory::non_hallucinated: return "non_hallucinated";
    case SampleCategory::excluded: return "excluded";
  }
  return "unknown";
}

namespace {

std::vector<std::size_t> as_sorted_set(std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

}  // namespace

Prf1 prf1(const std::vector<std::size_t>& pred_raw, const std::vector<std::size_t>& gt_raw) {
  Prf1 out;
  const auto pred_idx = as_sorted_set(pred_raw);
  const auto gt_idx = as_sorted_set(gt_raw);
  const std::size_t shared = intersection_size(pred_idx, gt_idx);
  if (pred_idx.empty()) {
    out.precision_undefined = true;
  } else {
    out.precision = static_cast<double>(shared) / static_cast<double>(pred_idx.size());
  }
  if (gt_idx.empty()) {
    out.recall_undefined = true;
  } else {
    out.recall = static_cast<double>(shared) / static_cast<double>(gt_idx.size());
  }
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

std::vector<std::size_t> indices_above(const SoftLabelSeq& scores, double threshold) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.scores[i] > threshold) idx.push_back(i);
  }
  return idx;
}

SampleCategory categorize(const SoftLabelSeq& gt, std::optional<bool> final_answer_correct,
                          const Thresholds& th) {
  for (double s : gt.scores) {
    if (s > th.beta_gt) return SampleCategory::hallucinated;
  }
  if (final_answer_correct.has_value() && *final_answer_correct) {
    return SampleCategory::non_hallucinated;
  }
  return SampleCategory::excluded;
}

double s_cor(const SoftLabelSeq& pred, const Thresholds& th) {
  if (pred.size() == 0) throw ShapeError("s_cor: empty prediction sequence");
  std::size_t at_or_below = 0;
  for (double s : pred.scores) {
    if (s <= th.beta_pred) ++at_or_below;
  }
  return 100.0 * static_cast<double>(at_or_below) / static_cast<double>(pred.size());
}

double auroc(const std::vector<std::pair<double, int>>& pooled) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& [score, label] : pooled) {
    (label != 0 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auroc: pool needs at least one positive and one negative");
  }

  // rank-sum form; average ranks within tie blocks give each tied
  // positive-negative pair exactly the 0.5 credit of the pairwise count
  std::vector<std::pair<double, int>> sorted = pooled;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    std::size_t block_pos = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      if (sorted[j].second != 0) ++block_pos;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    pos_rank_sum += avg_rank * static_cast<double>(block_pos);
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auprc(const std::vector<std::pair<double, int>>& pooled) {
  std::size_t n_pos = 0;
  for (const auto& [score, label] : pooled) {
    if (label != 0) ++n_pos;
  }
  if (n_pos == 0) throw UndefinedMetricError("auprc: pool has no positives");

  std::vector<std::pair<double, int>> sorted = pooled;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      if (sorted[j].second != 0) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

EvalReport evaluate(const std::vector<EvalSample>& samples, const Thresholds& th) {
  EvalReport report;
  report.per_sample.resize(samples.size());

  const long long n = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < n; ++ii) {
    const EvalSample& s = samples[static_cast<std::size_t>(ii)];
    if (s.gt.size() != s.pred.size()) {
      continue;  // validated below, serially, so the thrown error is deterministic
    }
    SampleResult r;
    r.id = s.id;
    r.token_count = s.gt.size();
    r.category = categorize(s.gt, s.final_answer_correct, th);
    if (r.category == SampleCategory::hallucinated) {
      r.prf = prf1(indices_above(s.pred, th.beta_pred), indices_above(s.gt, th.beta_gt));
    } else if (r.category == SampleCategory::non_hallucinated) {
      r.clean_recall_pct = s_cor(s.pred, th);
    }
    report.per_sample[static_cast<std::size_t>(ii)] = std::move(r);
  }

  for (const EvalSample& s : samples) {
    if (s.gt.size() != s.pred.size()) {
      throw ShapeError("evaluate: sample '" + s.id + "' has " + std::to_string(s.gt.size()) +
                       " ground-truth scores but " + std::to_string(s.pred.size()) + " predictions");
    }
  }

  double f1_sum = 0.0, clean_sum = 0.0;
  std::size_t pooled_tp = 0, pooled_pred = 0, pooled_gt = 0;
  std::vector<std::pair<double, int>> pool;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleResult& r = report.per_sample[i];
    switch (r.category) {
      case SampleCategory::hallucinated: {
        ++report.n_hallucinated;
        f1_sum += r.prf.f1;
        const auto pred_idx = indices_above(samples[i].pred, th.beta_pred);
        const auto gt_idx = indices_above(samples[i].gt, th.beta_gt);
        pooled_tp += intersection_size(pred_idx, gt_idx);
        pooled_pred += pred_idx.size();
        pooled_gt += gt_idx.size();
        for (std::size_t t = 0; t < samples[i].gt.size(); ++t) {
          pool.emplace_back(samples[i].pred.scores[t],
                            samples[i].gt.scores[t] > th.beta_gt ? 1 : 0);
        }
        break;
      }
      case SampleCategory::non_hallucinated:
        ++report.n_non_hallucinated;
        clean_sum += r.clean_recall_pct;
        break;
      case SampleCategory::excluded:
        ++report.n_excluded;
        break;
    }
  }

  if (report.n_hallucinated > 0) {
    report.s_incor = 100.0 * f1_sum / static_cast<double>(report.n_hallucinated);
    const double mp = pooled_pred > 0 ? static_cast<double>(pooled_tp) / static_cast<double>(pooled_pred) : 0.0;
    const double mr = pooled_gt > 0 ? static_cast<double>(pooled_tp) / static_cast<double>(pooled_gt) : 0.0;
    report.s_incor_micro = (mp + mr) > 0.0 ? 100.0 * 2.0 * mp * mr / (mp + mr) : 0.0;
  }
  if (report.n_non_hallucinated > 0) {
    report.s_cor = clean_sum / static_cast<double>(report.n_non_hallucinated);
  }
  if (!pool.empty()) {
    try {
      report.auroc = auroc(pool);
      report.auroc_defined = true;
    } catch (const UndefinedMetricError&) {
    }
    try {
      report.auprc = auprc(pool);
      report.auprc_defined = true;
    } catch (const UndefinedMetricError&) {
    }
  }
  return report;
}

SweepTable threshold_sweep(const std::vector<EvalSample>& samples, const Thresholds& base) {
  const double d = 0.05;
  const std::vector<Thresholds> configs = {
      base,
      {base.beta_gt - d, base.beta_pred},
      {base.beta_gt + d, base.beta_pred},
      {base.beta_gt, base.beta_pred - d},
      {base.beta_gt, base.beta_pred + d},
  };

  SweepTable table;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    SweepRow row;
    row.thresholds = configs[c];
    row.is_default = c == 0;
    row.s_incor = evaluate(samples, configs[c]).s_incor;
    table.rows.push_back(row);
  }
  for (std::size_t c = 1; c < table.rows.size(); ++c) {
    table.max_abs_delta =
        std::max(table.max_abs_delta, std::fabs(table.rows[c].s_incor - table.rows[0].s_incor));
  }
  return table;
}

std::vector<std::pair<std::size_t, std::size_t>> double_newline_steps(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> steps;
  std::size_t step_start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n') {
      std::size_t j = i;
      while (j < text.size() && text[j] == '\n') ++j;
      if (j - i >= 2) {
        steps.emplace_back(step_start, j);  // separator stays with the step it closes
        step_start = j;
      }
      i = j;
    } else {
      ++i;
    }
  }
  if (step_start < text.size()) steps.emplace_back(step_start, text.size());
  return steps;
}

SoftLabelSeq prm_step_to_token(const TokenizedResponse& resp, const std::vector<double>& step_scores,
                               const StepSplitter& splitter, StepScoreKind kind) {
  const auto steps = splitter(resp.response_text);
  if (steps.empty()) throw ValidationError("prm_step_to_token: splitter produced no steps");
  if (steps.size() != step_scores.size()) {
    throw ShapeError("prm_step_to_token: " + std::to_string(step_scores.size()) + " scores for " +
                     std::to_string(steps.size()) + " steps");
  }

  SoftLabelSeq out;
  out.source = "prm-adapted";
  out.scores.resize(resp.tokens.size());
  std::size_t step = 0;
  for (std::size_t i = 0; i < resp.tokens.size(); ++i) {
    while (step + 1 < steps.size() && resp.tokens[i].start >= steps[step].second) ++step;
    const double s = step_scores[step];
    out.scores[i] = kind == StepScoreKind::correctness ? 1.0 - s : s;
  }
  return out;
}

std::vector<LengthBinRow> length_bin_report(const EvalReport& report) {
  std::vector<LengthBinRow> rows = {{"<500", 0, 0.0}, {"500-1000", 0, 0.0}, {">1000", 0, 0.0}};
  std::vector<double> sums(3, 0.0);
  for (const SampleResult& r : report.per_sample) {
    if (r.category != SampleCategory::hallucinated) continue;
    std::size_t bin = r.token_count < 500 ? 0 : (r.token_count <= 1000 ? 1 : 2);
    ++rows[bin].count;
    sums[bin] += 100.0 * r.prf.f1;
  }
  for (std::size_t b = 0; b < rows.size(); ++b) {
    rows[b].mean_s_incor = rows[b].count > 0 ? sums[b] / static_cast<double>(rows[b].count)
                                             : std::numeric_limits<double>::quiet_NaN();
  }
  return rows;
}

}  // namespace thd
