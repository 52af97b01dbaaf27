#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thd/types.hpp"

namespace thd {

// Aggregates per-critic soft scores into a single sequence, either uniformly
// or with weights fit by constrained least squares against labeler ground
// truth, and quantifies weight stability by bootstrap resampling.

struct EnsembleWeights {
  std::vector<std::string> critic_ids;
  std::vector<double> weights;  // sums to 1
  double fit_loss = 0.0;        // achieved objective (per-sample token-mean MSE)
  bool nonneg_enforced = true;
  bool ridge_applied = false;   // normal system was singular; solved with ridge 1e-8
};

// One validation tuple: the K critic score sequences plus ground truth, all
// over the same tokens.
struct ValidationSample {
  std::vector<SoftLabelSeq> per_critic;
  SoftLabelSeq ground_truth;
};

struct FitOptions {
  bool nonneg = true;
};

struct CriticInterval {
  std::string critic_id;
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct WeightCI {
  std::vector<CriticInterval> intervals;
  int resamples = 0;
  uint64_t seed = 0;
  int skipped = 0;  // degenerate resamples (singular normal system)
};

SoftLabelSeq uniform_ensemble(const std::vector<SoftLabelSeq>& per_critic);

// Minimizes the mean over samples of the token-mean squared error between
// the weighted combination and ground truth, subject to sum(w) = 1. Solved
// in closed form via the equality-constrained normal equations; if nonneg is
// requested and the solution leaves the simplex, re-solved by projected
// gradient descent on the probability simplex.
EnsembleWeights fit_weights(const std::vector<ValidationSample>& validation,
                            const std::vector<std::string>& critic_ids,
                            const FitOptions& opts = {});

// Objective from fit_weights evaluated at an arbitrary weight vector.
double ensemble_objective(const std::vector<ValidationSample>& validation,
                          const std::vector<double>& weights);

SoftLabelSeq apply_weights(const std::vector<SoftLabelSeq>& per_critic,
                           const std::vector<std::string>& critic_ids,
                           const EnsembleWeights& w);

// Percentile bootstrap (2.5/97.5) over validation tuples resampled with
// replacement at equal size. Resample r draws from the (seed, r) stream, so
// the parallel and serial paths agree bit-for-bit.
WeightCI bootstrap_weights(const std::vector<ValidationSample>& validation,
                           const std::vector<std::string>& critic_ids, int resamples,
                           uint64_t seed, const FitOptions& opts = {});

WeightCI bootstrap_weights_serial(const std::vector<ValidationSample>& validation,
                                  const std::vector<std::string>& critic_ids, int resamples,
                                  uint64_t seed, const FitOptions& opts = {});

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> v);

}  // namespace thd
