#include "thd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "thd/errors.hpp"

namespace thd {

namespace {

void check_inputs(const SoftLabelSeq& pred, const SoftLabelSeq& target, const LossConfig& cfg) {
  if (pred.size() != target.size()) {
    throw ShapeError("loss: prediction length " + std::to_string(pred.size()) +
                     " != target length " + std::to_string(target.size()));
  }
  if (!(cfg.score_clip_epsilon > 0.0 && cfg.score_clip_epsilon < 0.5)) {
    throw ValidationError("loss: score_clip_epsilon must lie in (0, 0.5)");
  }
  for (double t : target.scores) {
    if (t < 0.0 || t > 1.0) {
      throw ValidationError("loss: target score " + std::to_string(t) + " outside [0,1]");
    }
  }
}

// pos_weight / neg_weight for one sample; optionally floored and
// renormalized so they still sum to 1.
std::pair<double, double> sample_weights(const SoftLabelSeq& target, const LossConfig& cfg) {
  const std::size_t n = target.size();
  std::size_t at_or_below = 0;
  for (double t : target.scores) {
    if (t <= cfg.beta) ++at_or_below;
  }
  double pos = static_cast<double>(at_or_below) / static_cast<double>(n);
  double neg = static_cast<double>(n - at_or_below) / static_cast<double>(n);
  if (cfg.weight_floor_epsilon > 0.0) {
    pos = std::max(pos, cfg.weight_floor_epsilon);
    neg = std::max(neg, cfg.weight_floor_epsilon);
    const double z = pos + neg;
    pos /= z;
    neg /= z;
  }
  return {pos, neg};
}

LossBreakdown ce_impl(const SoftLabelSeq& pred, const SoftLabelSeq& target, const LossConfig& cfg,
                      double pos_w, double neg_w) {
  const std::size_t n = pred.size();
  LossBreakdown out;
  out.pos_weight = pos_w;
  out.neg_weight = neg_w;
  out.per_token_loss.resize(n);
  out.per_token_grad.resize(n);

  const double eps = cfg.score_clip_epsilon;
  // the recorded pair is normalized metadata; the loss itself uses the raw
  // scale (1 for the standard objective, the token fractions for Eq-style
  // weighting), which both callers pass in directly
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = target.scores[i];
    const double p = std::clamp(pred.scores[i], eps, 1.0 - eps);
    out.per_token_loss[i] = -(pos_w * t * std::log(p) + neg_w * (1.0 - t) * std::log1p(-p));
    out.per_token_grad[i] = -pos_w * t / p + neg_w * (1.0 - t) / (1.0 - p);
    acc += out.per_token_loss[i];
  }
  out.total = n == 0 ? 0.0 : acc / static_cast<double>(n);
  return out;
}

}  // namespace

LossBreakdown standard_ce(const SoftLabelSeq& pred, const SoftLabelSeq& target,
                          const LossConfig& cfg) {
  check_inputs(pred, target, cfg);
  LossBreakdown out = ce_impl(pred, target, cfg, 1.0, 1.0);
  // both terms carry unit weight; the normalized record is 0.5/0.5
  out.pos_weight = 0.5;
  out.neg_weight = 0.5;
  return out;
}

LossBreakdown weighted_ce(const SoftLabelSeq& pred, const SoftLabelSeq& target,
                          const LossConfig& cfg) {
  check_inputs(pred, target, cfg);
  if (pred.size() == 0) throw ShapeError("weighted_ce: empty sequence");
  auto [pos_w, neg_w] = sample_weights(target, cfg);
  return ce_impl(pred, target, cfg, pos_w, neg_w);
}

TokenWeights export_token_weights(const SoftLabelSeq& target, const LossConfig& cfg) {
  if (target.size() == 0) throw ShapeError("export_token_weights: empty sequence");
  for (double t : target.scores) {
    if (t < 0.0 || t > 1.0) {
      throw ValidationError("export_token_weights: target score outside [0,1]");
    }
  }
  TokenWeights out;
  auto [pos_w, neg_w] = sample_weights(target, cfg);
  out.pos_weight = pos_w;
  out.neg_weight = neg_w;
  out.per_token_coeff.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target.scores[i];
    out.per_token_coeff[i] = pos_w * t + neg_w * (1.0 - t);
  }
  return out;
}

}  // namespace thd
