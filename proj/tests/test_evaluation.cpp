#include "thd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "thd/errors.hpp"
#include "thd/rng.hpp"
#include "thd/span_align.hpp"

using namespace thd;

namespace {

SoftLabelSeq seq(std::vector<double> scores, std::string id = "s") {
  SoftLabelSeq s;
  s.sample_id = std::move(id);
  s.scores = std::move(scores);
  return s;
}

// Set-arithmetic oracle for precision/recall/F1.
std::tuple<double, double, double> oracle_prf(const std::set<std::size_t>& pred,
                                              const std::set<std::size_t>& gt) {
  std::size_t shared = 0;
  for (auto i : pred) shared += gt.count(i);
  const double p = pred.empty() ? 0.0 : double(shared) / double(pred.size());
  const double r = gt.empty() ? 0.0 : double(shared) / double(gt.size());
  const double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  return {p, r, f1};
}

// Pairwise Mann-Whitney oracle with 0.5 credit for ties.
double oracle_auroc(const std::vector<std::pair<double, int>>& pool) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (const auto& [sp, lp] : pool) {
    if (lp == 0) continue;
    for (const auto& [sn, ln] : pool) {
      if (ln != 0) continue;
      ++pairs;
      if (sp > sn) {
        credit += 1.0;
      } else if (sp == sn) {
        credit += 0.5;
      }
    }
  }
  return credit / double(pairs);
}

// Prefix-enumeration average precision, one rank at a time over distinct
// score blocks.
double oracle_auprc(std::vector<std::pair<double, int>> pool) {
  std::sort(pool.begin(), pool.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::size_t total_pos = 0;
  for (auto& [s, l] : pool) total_pos += l != 0;
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j < pool.size() && pool[j].first == pool[i].first) {
      tp += pool[j].second != 0;
      ++seen;
      ++j;
    }
    const double recall = double(tp) / double(total_pos);
    ap += (recall - prev_recall) * (double(tp) / double(seen));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<std::size_t> idx(std::initializer_list<std::size_t> v) { return {v}; }

}  // namespace

TEST_CASE("prf1 matches the set-arithmetic oracle") {
  SUBCASE("identical nonempty sets") {
    const auto r = prf1(idx({1, 2, 3}), idx({1, 2, 3}));
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
  }
  SUBCASE("disjoint nonempty sets") {
    const auto r = prf1(idx({0, 1}), idx({2, 3}));
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.f1 == 0.0);
  }
  SUBCASE("partial overlap") {
    const auto r = prf1(idx({3, 4, 5}), idx({2, 3, 4}));
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("empty prediction set flags undefined precision as zero") {
    const auto r = prf1({}, idx({1}));
    CHECK(r.precision == 0.0);
    CHECK(r.precision_undefined);
    CHECK(r.f1 == 0.0);
  }
  SUBCASE("random sets") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      std::set<std::size_t> p, g;
      for (int i = 0; i < 12; ++i) {
        if (rng.next_bernoulli(0.4)) p.insert(rng.next_below(20));
        if (rng.next_bernoulli(0.4)) g.insert(rng.next_below(20));
      }
      const auto r = prf1({p.begin(), p.end()}, {g.begin(), g.end()});
      const auto [op, orr, of1] = oracle_prf(p, g);
      CHECK(r.precision == doctest::Approx(op));
      CHECK(r.recall == doctest::Approx(orr));
      CHECK(r.f1 == doctest::Approx(of1));
      CHECK(r.f1 >= 0.0);
      CHECK(r.f1 <= std::min(2 * r.precision, 2 * r.recall) + 1e-12);
    }
  }
}

TEST_CASE("categorize follows the threshold-and-answer rule") {
  const Thresholds th;
  CHECK(categorize(seq({0.0, 0.0}), true, th) == SampleCategory::non_hallucinated);
  CHECK(categorize(seq({0.0, 0.6}), true, th) == SampleCategory::hallucinated);
  CHECK(categorize(seq({0.0, 0.0}), false, th) == SampleCategory::excluded);
  CHECK(categorize(seq({0.0, 0.0}), std::nullopt, th) == SampleCategory::excluded);
  // exactly at the threshold does not count as flagged
  CHECK(categorize(seq({0.5}), true, th) == SampleCategory::non_hallucinated);
}

TEST_CASE("s_cor is the inverted-label recall as a percentage") {
  const Thresholds th;
  CHECK(s_cor(seq({0.0, 0.0, 0.0}), th) == doctest::Approx(100.0));
  CHECK(s_cor(seq({0.9, 0.9}), th) == doctest::Approx(0.0));
  CHECK(s_cor(seq({0.1, 0.2, 0.5, 0.9}), th) == doctest::Approx(75.0));
}

TEST_CASE("auroc hand examples and the undefined pool") {
  CHECK(auroc({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}}) == doctest::Approx(1.0));
  CHECK(auroc({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}) == doctest::Approx(0.5));
  CHECK(auroc({{0.9, 1}, {0.4, 0}, {0.3, 1}, {0.1, 0}}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(auroc({{0.9, 1}, {0.8, 1}}), UndefinedMetricError);
}

TEST_CASE("auroc equals the brute-force pairwise fraction on random pools") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.next_below(499);
    std::vector<std::pair<double, int>> pool;
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores so ties actually happen
      const double score = double(rng.next_below(8)) / 7.0;
      const int label = rng.next_bernoulli(0.3) ? 1 : 0;
      has_pos |= label == 1;
      has_neg |= label == 0;
      pool.emplace_back(score, label);
    }
    if (!has_pos || !has_neg) continue;
    CHECK(auroc(pool) == doctest::Approx(oracle_auroc(pool)).epsilon(1e-12));
  }
}

TEST_CASE("auroc is invariant under strictly monotone transforms") {
  Rng rng(22);
  std::vector<std::pair<double, int>> pool;
  for (int i = 0; i < 60; ++i) {
    pool.emplace_back(rng.next_double(), i % 3 == 0 ? 1 : 0);
  }
  auto transformed = pool;
  for (auto& [s, l] : transformed) s = std::exp(3.0 * s) + 1.0;
  CHECK(auroc(pool) == doctest::Approx(auroc(transformed)).epsilon(1e-12));
}

TEST_CASE("binarizing scores changes auroc unless they already were binary") {
  const std::vector<std::pair<double, int>> graded = {
      {0.9, 1}, {0.6, 1}, {0.55, 0}, {0.3, 0}, {0.4, 1}, {0.2, 0}};
  auto binarized = graded;
  for (auto& [s, l] : binarized) s = s > 0.5 ? 1.0 : 0.0;
  CHECK(auroc(graded) != auroc(binarized));

  std::vector<std::pair<double, int>> already = {{1.0, 1}, {0.0, 0}, {1.0, 0}, {0.0, 1}};
  auto rebinarized = already;
  for (auto& [s, l] : rebinarized) s = s > 0.5 ? 1.0 : 0.0;
  CHECK(auroc(already) == auroc(rebinarized));
}

TEST_CASE("auprc hand examples and oracle equivalence") {
  CHECK(auprc({{0.9, 1}, {0.8, 1}, {0.2, 0}}) == doctest::Approx(1.0));
  CHECK(auprc({{0.9, 1}, {0.8, 0}, {0.7, 1}}) == doctest::Approx(0.5 + (2.0 / 3.0) * 0.5));
  CHECK(auprc({{0.9, 1}, {0.8, 1}}) == doctest::Approx(1.0));  // all-positive pool
  CHECK_THROWS_AS(auprc({{0.9, 0}}), UndefinedMetricError);

  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::pair<double, int>> pool;
    bool has_pos = false;
    for (int i = 0; i < 80; ++i) {
      const double score = double(rng.next_below(10)) / 9.0;
      const int label = rng.next_bernoulli(0.25) ? 1 : 0;
      has_pos |= label == 1;
      pool.emplace_back(score, label);
    }
    if (!has_pos) continue;
    CHECK(auprc(pool) == doctest::Approx(oracle_auprc(pool)).epsilon(1e-9));
  }
}

TEST_CASE("evaluate: self-evaluation yields S_incor = 100 and splits categories") {
  std::vector<EvalSample> samples;
  samples.push_back({"h1", seq({0.9, 0.0, 0.8}), seq({0.9, 0.0, 0.8}), false});
  samples.push_back({"h2", seq({0.0, 1.0}), seq({0.0, 1.0}), true});
  samples.push_back({"clean", seq({0.0, 0.0}), seq({0.0, 0.0}), true});
  samples.push_back({"excl", seq({0.0, 0.0}), seq({0.2, 0.1}), false});

  const auto report = evaluate(samples);
  CHECK(report.n_hallucinated == 2);
  CHECK(report.n_non_hallucinated == 1);
  CHECK(report.n_excluded == 1);
  CHECK(report.s_incor == doctest::Approx(100.0));
  CHECK(report.s_incor_micro == doctest::Approx(100.0));
  CHECK(report.s_cor == doctest::Approx(100.0));
  CHECK(report.auroc_defined);
  CHECK(report.auroc == doctest::Approx(1.0));
}

TEST_CASE("threshold sweep evaluates the four perturbed configs plus default") {
  std::vector<EvalSample> binary;
  binary.push_back({"a", seq({1.0, 0.0, 1.0}), seq({1.0, 0.0, 0.0}), true});
  binary.push_back({"b", seq({0.0, 1.0}), seq({0.0, 1.0}), true});

  const auto table = threshold_sweep(binary);
  REQUIRE(table.rows.size() == 5);
  CHECK(table.rows[0].is_default);
  CHECK(table.rows[0].thresholds.beta_gt == doctest::Approx(0.5));
  CHECK(table.rows[1].thresholds.beta_gt == doctest::Approx(0.45));
  CHECK(table.rows[2].thresholds.beta_gt == doctest::Approx(0.55));
  CHECK(table.rows[3].thresholds.beta_pred == doctest::Approx(0.45));
  CHECK(table.rows[4].thresholds.beta_pred == doctest::Approx(0.55));

  // all-binary scores: nothing lies between 0.45 and 0.55, so no deviation
  CHECK(table.max_abs_delta == doctest::Approx(0.0));

  // the default row is exactly the stand-alone evaluation
  CHECK(table.rows[0].s_incor == evaluate(binary).s_incor);

  SUBCASE("a 0.48 prediction reacts only to the beta_pred = 0.45 row") {
    std::vector<EvalSample> sensitive;
    sensitive.push_back({"a", seq({1.0, 0.0}), seq({1.0, 0.48}), true});
    const auto t = threshold_sweep(sensitive);
    CHECK(t.rows[0].s_incor == t.rows[1].s_incor);
    CHECK(t.rows[0].s_incor == t.rows[2].s_incor);
    CHECK(t.rows[3].s_incor != t.rows[0].s_incor);  // 0.48 > 0.45 becomes a false positive
    CHECK(t.rows[4].s_incor == t.rows[0].s_incor);
    CHECK(t.max_abs_delta > 0.0);
  }
}

TEST_CASE("double-newline step splitting") {
  const auto steps = double_newline_steps("first step\n\nsecond\n\n\nthird");
  REQUIRE(steps.size() == 3);
  CHECK(steps[0] == std::pair<std::size_t, std::size_t>{0, 12});
  CHECK(steps[1] == std::pair<std::size_t, std::size_t>{12, 21});
  CHECK(steps[2] == std::pair<std::size_t, std::size_t>{21, 26});

  CHECK(double_newline_steps("no breaks").size() == 1);
  CHECK(double_newline_steps("single\nnewline").size() == 1);
  CHECK(double_newline_steps("").empty());
}

TEST_CASE("prm_step_to_token spreads step scores over step tokens") {
  const auto resp = tokenize("aa bb\n\ncc dd");

  SUBCASE("single step becomes a constant sequence") {
    const auto out = prm_step_to_token(tokenize("one step only"), {0.75});
    for (double s : out.scores) CHECK(s == doctest::Approx(0.25));  // 1 - correctness
  }
  SUBCASE("two steps with the error-probability convention") {
    const auto out =
        prm_step_to_token(resp, {0.2, 0.8}, double_newline_steps, StepScoreKind::error_prob);
    // tokens: "aa", " ", "bb", "\n\n", "cc", " ", "dd"
    REQUIRE(out.scores.size() == 7);
    for (int i = 0; i < 4; ++i) CHECK(out.scores[i] == doctest::Approx(0.2));
    for (int i = 4; i < 7; ++i) CHECK(out.scores[i] == doctest::Approx(0.8));
  }
  SUBCASE("correctness convention flips the same fixture") {
    const auto out = prm_step_to_token(resp, {0.2, 0.8});
    CHECK(out.scores[0] == doctest::Approx(0.8));
    CHECK(out.scores[6] == doctest::Approx(0.2));
  }
  SUBCASE("step-count mismatch and empty splits are rejected") {
    CHECK_THROWS_AS(prm_step_to_token(resp, {0.2}), ShapeError);
    CHECK_THROWS_AS(prm_step_to_token(tokenize(""), {}), ValidationError);
  }
}

TEST_CASE("length bins: boundaries at 500 and 1000 belong to the middle bin") {
  auto make = [](std::string id, std::size_t tokens) {
    std::vector<double> gt(tokens, 0.0), pred(tokens, 0.0);
    gt[0] = 1.0;
    pred[0] = 1.0;  // perfect detection, F1 = 1
    return EvalSample{std::move(id), seq(gt), seq(pred), true};
  };
  std::vector<EvalSample> samples = {make("short", 499), make("lo", 500), make("hi", 1000),
                                     make("long", 1001)};
  const auto rows = length_bin_report(evaluate(samples));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].count == 1);
  CHECK(rows[1].count == 2);
  CHECK(rows[2].count == 1);
  CHECK(rows[0].mean_s_incor == doctest::Approx(100.0));

  SUBCASE("an empty bin reports count zero and a null metric") {
    std::vector<EvalSample> only_short = {make("s", 10)};
    const auto r = length_bin_report(evaluate(only_short));
    CHECK(r[0].count == 1);
    CHECK(r[1].count == 0);
    CHECK(std::isnan(r[1].mean_s_incor));
  }
}

TEST_CASE("mismatched gt/pred lengths are rejected deterministically") {
  std::vector<EvalSample> samples;
  samples.push_back({"bad", seq({0.9, 0.1}), seq({0.9}), true});
  CHECK_THROWS_AS(evaluate(samples), ShapeError);
}
