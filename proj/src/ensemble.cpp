#include "thd/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "thd/errors.hpp"
#include "thd/rng.hpp"

namespace thd {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kPivotTol = 1e-12;
constexpr double kKktTol = 1e-9;

// Sufficient statistics of one validation sample for the quadratic
// objective: A = (1/n) sum_i a_i a_i^T, b = (1/n) sum_i s_i a_i,
// c = (1/n) sum_i s_i^2. The full objective is the sample mean of
// w'Aw - 2 b'w + c.
struct Moments {
  std::vector<double> A;  // K*K row-major
  std::vector<double> b;  // K
  double c = 0.0;
};

Moments sample_moments(const ValidationSample& s, std::size_t k) {
  if (s.per_critic.size() != k) {
    throw ShapeError("validation sample has " + std::to_string(s.per_critic.size()) +
                     " critic sequences, expected " + std::to_string(k));
  }
  const std::size_t n = s.ground_truth.size();
  if (n == 0) throw ShapeError("validation sample with zero tokens");
  for (const auto& seq : s.per_critic) {
    if (seq.size() != n) {
      throw ShapeError("critic sequence length " + std::to_string(seq.size()) +
                       " does not match ground truth length " + std::to_string(n));
    }
  }

  Moments m;
  m.A.assign(k * k, 0.0);
  m.b.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double gt = s.ground_truth.scores[i];
    m.c += gt * gt;
    for (std::size_t p = 0; p < k; ++p) {
      const double ap = s.per_critic[p].scores[i];
      m.b[p] += gt * ap;
      for (std::size_t q = 0; q < k; ++q) {
        m.A[p * k + q] += ap * s.per_critic[q].scores[i];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : m.A) v *= inv_n;
  for (double& v : m.b) v *= inv_n;
  m.c *= inv_n;
  return m;
}

Moments average_moments(const std::vector<Moments>& per_sample, const std::vector<std::size_t>& idx,
                        std::size_t k) {
  Moments m;
  m.A.assign(k * k, 0.0);
  m.b.assign(k, 0.0);
  for (std::size_t s : idx) {
    const Moments& ms = per_sample[s];
    for (std::size_t i = 0; i < k * k; ++i) m.A[i] += ms.A[i];
    for (std::size_t i = 0; i < k; ++i) m.b[i] += ms.b[i];
    m.c += ms.c;
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (double& v : m.A) v *= inv;
  for (double& v : m.b) v *= inv;
  m.c *= inv;
  return m;
}

// Gaussian elimination with partial pivoting; false on a singular system.
bool solve_dense(std::vector<double> mat, std::vector<double> rhs, std::size_t n,
                 std::vector<double>& out) {
  double scale = 0.0;
  for (double v : mat) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) return false;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(mat[r * n + col]) > std::fabs(mat[pivot * n + col])) pivot = r;
    }
    if (std::fabs(mat[pivot * n + col]) < kPivotTol * scale) return false;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(mat[col * n + c], mat[pivot * n + c]);
      std::swap(rhs[col], rhs[pivot]);
    }
    const double inv_p = 1.0 / mat[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = mat[r * n + col] * inv_p;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) mat[r * n + c] -= f * mat[col * n + c];
      rhs[r] -= f * rhs[col];
    }
  }
  out.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = rhs[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= mat[r * n + c] * out[c];
    out[r] = acc / mat[r * n + r];
  }
  return true;
}

// Equality-constrained normal equations (sum w = 1) via the KKT system
//   [2A 1; 1' 0] [w; lambda] = [2b; 1].
bool solve_kkt(const Moments& m, std::size_t k, std::vector<double>& w) {
  const std::size_t n = k + 1;
  std::vector<double> mat(n * n, 0.0), rhs(n, 0.0), sol;
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = 0; q < k; ++q) mat[p * n + q] = 2.0 * m.A[p * k + q];
    mat[p * n + k] = 1.0;
    mat[k * n + p] = 1.0;
    rhs[p] = 2.0 * m.b[p];
  }
  rhs[k] = 1.0;
  if (!solve_dense(std::move(mat), std::move(rhs), n, sol)) return false;
  w.assign(sol.begin(), sol.begin() + static_cast<long>(k));
  return true;
}

double objective_from_moments(const Moments& m, const std::vector<double>& w) {
  const std::size_t k = w.size();
  double quad = 0.0, lin = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    lin += m.b[p] * w[p];
    for (std::size_t q = 0; q < k; ++q) quad += w[p] * m.A[p * k + q] * w[q];
  }
  return quad - 2.0 * lin + m.c;
}

// Fixed-step projected gradient descent on the probability simplex. The
// step is 1/L with L a Gershgorin bound on the Hessian 2A. Terminates on a
// KKT residual (equal gradient components on the support) or iterate
// stagnation.
std::vector<double> solve_simplex_pgd(const Moments& m, std::size_t k, std::vector<double> w0) {
  double lip = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    double row = 0.0;
    for (std::size_t q = 0; q < k; ++q) row += std::fabs(2.0 * m.A[p * k + q]);
    lip = std::max(lip, row);
  }
  const double step = lip > 0.0 ? 1.0 / lip : 1.0;

  std::vector<double> w = project_to_simplex(std::move(w0));
  std::vector<double> grad(k), next(k);
  for (int iter = 0; iter < 2000000; ++iter) {
    for (std::size_t p = 0; p < k; ++p) {
      double g = 0.0;
      for (std::size_t q = 0; q < k; ++q) g += m.A[p * k + q] * w[q];
      grad[p] = 2.0 * (g - m.b[p]);
    }

    if ((iter & 127) == 0) {
      double lambda = 0.0;
      int support = 0;
      for (std::size_t p = 0; p < k; ++p) {
        if (w[p] > 0.0) {
          lambda += grad[p];
          ++support;
        }
      }
      lambda /= std::max(support, 1);
      double resid = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        resid = std::max(resid, w[p] > 0.0 ? std::fabs(grad[p] - lambda)
                                           : std::max(0.0, lambda - grad[p]));
      }
      if (resid < kKktTol) break;
    }

    for (std::size_t p = 0; p < k; ++p) next[p] = w[p] - step * grad[p];
    next = project_to_simplex(std::move(next));
    double delta = 0.0;
    for (std::size_t p = 0; p < k; ++p) delta = std::max(delta, std::fabs(next[p] - w[p]));
    w.swap(next);
    if (delta < 1e-15) break;
  }
  return w;
}

EnsembleWeights fit_from_moments(const std::vector<Moments>& per_sample,
                                 const std::vector<std::size_t>& idx,
                                 const std::vector<std::string>& critic_ids,
                                 const FitOptions& opts) {
  const std::size_t k = critic_ids.size();
  Moments m = average_moments(per_sample, idx, k);

  EnsembleWeights out;
  out.critic_ids = critic_ids;
  out.nonneg_enforced = opts.nonneg;

  std::vector<double> w;
  if (!solve_kkt(m, k, w)) {
    for (std::size_t p = 0; p < k; ++p) m.A[p * k + p] += kRidge;
    out.ridge_applied = true;
    if (!solve_kkt(m, k, w)) {
      w.assign(k, 1.0 / static_cast<double>(k));  // unreachable for PSD + ridge
    }
  }

  if (opts.nonneg && std::any_of(w.begin(), w.end(), [](double v) { return v < 0.0; })) {
    w = solve_simplex_pgd(m, k, std::move(w));
  }

  out.weights = std::move(w);
  out.fit_loss = objective_from_moments(m, out.weights);
  return out;
}

double quantile(std::vector<double> sorted, double q) {
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  const double h = q * static_cast<double>(m - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, m - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

WeightCI bootstrap_impl(const std::vector<ValidationSample>& validation,
                        const std::vector<std::string>& critic_ids, int resamples, uint64_t seed,
                        const FitOptions& opts, bool parallel) {
  if (resamples < 1) throw ValidationError("bootstrap: resamples must be >= 1");
  const std::size_t k = critic_ids.size();
  const std::size_t s_count = validation.size();
  if (s_count == 0) throw ValidationError("bootstrap: empty validation set");

  std::vector<Moments> per_sample;
  per_sample.reserve(s_count);
  for (const auto& s : validation) per_sample.push_back(sample_moments(s, k));

  std::vector<std::size_t> all(s_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const EnsembleWeights point = fit_from_moments(per_sample, all, critic_ids, opts);

  std::vector<std::vector<double>> draws(static_cast<std::size_t>(resamples));
  std::vector<char> skipped(static_cast<std::size_t>(resamples), 0);

  auto run_one = [&](int r) {
    Rng rng(seed, static_cast<uint64_t>(r));
    std::vector<std::size_t> idx(s_count);
    for (std::size_t j = 0; j < s_count; ++j) idx[j] = rng.next_below(s_count);
    const EnsembleWeights fit = fit_from_moments(per_sample, idx, critic_ids, opts);
    if (fit.ridge_applied) {
      skipped[static_cast<std::size_t>(r)] = 1;
    } else {
      draws[static_cast<std::size_t>(r)] = fit.weights;
    }
  };

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < resamples; ++r) run_one(r);
  } else {
    for (int r = 0; r < resamples; ++r) run_one(r);
  }

  WeightCI ci;
  ci.resamples = resamples;
  ci.seed = seed;
  for (char s : skipped) ci.skipped += s;

  for (std::size_t p = 0; p < k; ++p) {
    std::vector<double> col;
    col.reserve(draws.size());
    for (const auto& d : draws) {
      if (!d.empty()) col.push_back(d[p]);
    }
    CriticInterval interval;
    interval.critic_id = critic_ids[p];
    interval.point = point.weights[p];
    if (col.empty()) {
      interval.lo = interval.hi = interval.point;
    } else {
      std::sort(col.begin(), col.end());
      interval.lo = quantile(col, 0.025);
      interval.hi = quantile(col, 0.975);
    }
    // the interval is documented to bracket the point estimate
    interval.lo = std::min(interval.lo, interval.point);
    interval.hi = std::max(interval.hi, interval.point);
    ci.intervals.push_back(std::move(interval));
  }
  return ci;
}

}  // namespace

std::vector<double> project_to_simplex(std::vector<double> v) {
  // Held-style projection: sort descending, find the largest prefix whose
  // shifted values stay positive, clip the rest to zero.
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double running = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    running += u[i];
    const double t = (running - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(0.0, x - theta);
  return v;
}

SoftLabelSeq uniform_ensemble(const std::vector<SoftLabelSeq>& per_critic) {
  if (per_critic.empty()) throw ShapeError("uniform_ensemble: no critic sequences");
  const std::size_t n = per_critic.front().size();
  for (const auto& seq : per_critic) {
    if (seq.size() != n) {
      throw ShapeError("uniform_ensemble: sequence lengths differ (" + std::to_string(seq.size()) +
                       " vs " + std::to_string(n) + ")");
    }
  }
  SoftLabelSeq out;
  out.sample_id = per_critic.front().sample_id;
  out.source = "ensemble:uniform";
  out.scores.assign(n, 0.0);
  for (const auto& seq : per_critic) {
    for (std::size_t i = 0; i < n; ++i) out.scores[i] += seq.scores[i];
  }
  const double inv_k = 1.0 / static_cast<double>(per_critic.size());
  for (double& s : out.scores) s *= inv_k;
  return out;
}

EnsembleWeights fit_weights(const std::vector<ValidationSample>& validation,
                            const std::vector<std::string>& critic_ids, const FitOptions& opts) {
  if (validation.empty()) throw ValidationError("fit_weights: empty validation set");
  if (critic_ids.empty()) throw ValidationError("fit_weights: no critics");

  std::vector<Moments> per_sample;
  per_sample.reserve(validation.size());
  for (const auto& s : validation) per_sample.push_back(sample_moments(s, critic_ids.size()));
  std::vector<std::size_t> all(validation.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_from_moments(per_sample, all, critic_ids, opts);
}

double ensemble_objective(const std::vector<ValidationSample>& validation,
                          const std::vector<double>& weights) {
  if (validation.empty()) throw ValidationError("ensemble_objective: empty validation set");
  double total = 0.0;
  for (const auto& s : validation) {
    const std::size_t n = s.ground_truth.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mix = 0.0;
      for (std::size_t p = 0; p < weights.size(); ++p) mix += weights[p] * s.per_critic[p].scores[i];
      const double diff = s.ground_truth.scores[i] - mix;
      acc += diff * diff;
    }
    total += acc / static_cast<double>(n);
  }
  return total / static_cast<double>(validation.size());
}

SoftLabelSeq apply_weights(const std::vector<SoftLabelSeq>& per_critic,
                           const std::vector<std::string>& critic_ids, const EnsembleWeights& w) {
  if (per_critic.size() != w.weights.size() || critic_ids.size() != w.weights.size()) {
    throw ShapeError("apply_weights: critic count mismatch");
  }
  for (std::size_t p = 0; p < critic_ids.size(); ++p) {
    if (critic_ids[p] != w.critic_ids[p]) {
      throw ValidationError("apply_weights: critic order mismatch at " + std::to_string(p) + " ('" +
                            critic_ids[p] + "' vs '" + w.critic_ids[p] + "')");
    }
  }
  const std::size_t n = per_critic.front().size();
  for (const auto& seq : per_critic) {
    if (seq.size() != n) throw ShapeError("apply_weights: sequence lengths differ");
  }

  SoftLabelSeq out;
  out.sample_id = per_critic.front().sample_id;
  out.source = "ensemble:adaptive";
  out.scores.assign(n, 0.0);
  for (std::size_t p = 0; p < per_critic.size(); ++p) {
    for (std::size_t i = 0; i < n; ++i) out.scores[i] += w.weights[p] * per_critic[p].scores[i];
  }
  if (!w.nonneg_enforced) {
    // negative weights can push a combination outside [0,1]
    bool clamped = false;
    for (double& s : out.scores) {
      const double c = std::clamp(s, 0.0, 1.0);
      clamped |= c != s;
      s = c;
    }
    if (clamped) out.source += ":clamped";
  }
  return out;
}

WeightCI bootstrap_weights(const std::vector<ValidationSample>& validation,
                           const std::vector<std::string>& critic_ids, int resamples, uint64_t seed,
                           const FitOptions& opts) {
  return bootstrap_impl(validation, critic_ids, resamples, seed, opts, true);
}

WeightCI bootstrap_weights_serial(const std::vector<ValidationSample>& validation,
                                  const std::vector<std::string>& critic_ids, int resamples,
                                  uint64_t seed, const FitOptions& opts) {
  return bootstrap_impl(validation, critic_ids, resamples, seed, opts, false);
}

}  // namespace thd
