#pragma once

#include <vector>

#include "thd/types.hpp"

namespace thd {

// Token cross-entropy objectives over soft targets, plus the per-sample
// reweighting that counters the sparsity of flagged tokens: pos_weight is the
// fraction of tokens at or below beta (it multiplies the positive log term,
// so sparse flagged tokens are upweighted), neg_weight the fraction above.

struct LossConfig {
  double beta = 0.5;
  double score_clip_epsilon = 1e-7;   // predictions clipped to [eps, 1-eps]
  double weight_floor_epsilon = 0.0;  // 0 keeps the exact weighting
};

struct LossBreakdown {
  std::vector<double> per_token_loss;
  std::vector<double> per_token_grad;  // d loss_i / d pred_i at the clipped point
  double pos_weight = 0.0;
  double neg_weight = 0.0;
  double total = 0.0;  // mean of per_token_loss
};

struct TokenWeights {
  double pos_weight = 0.0;
  double neg_weight = 0.0;
  // Convex-combination coefficient per token: pos_weight*target +
  // neg_weight*(1-target). For binary targets this is exactly the multiplier
  // an external trainer applies to that token's cross entropy.
  std::vector<double> per_token_coeff;
};

LossBreakdown standard_ce(const SoftLabelSeq& pred, const SoftLabelSeq& target,
                          const LossConfig& cfg = {});

LossBreakdown weighted_ce(const SoftLabelSeq& pred, const SoftLabelSeq& target,
                          const LossConfig& cfg = {});

TokenWeights export_token_weights(const SoftLabelSeq& target, const LossConfig& cfg = {});

}  // namespace thd
