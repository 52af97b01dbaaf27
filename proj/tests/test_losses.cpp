#include "thd/losses.hpp"

#include <cmath>

#include "doctest.h"
#include "thd/errors.hpp"
#include "thd/rng.hpp"

using namespace thd;

namespace {

SoftLabelSeq seq(std::vector<double> scores) {
  SoftLabelSeq s;
  s.scores = std::move(scores);
  return s;
}

// Central finite difference of a loss total with respect to one prediction.
template <typename LossFn>
double fd_grad(LossFn&& fn, std::vector<double> pred, const std::vector<double>& target,
               std::size_t i, double h = 1e-5) {
  auto eval = [&](double p) {
    auto shifted = pred;
    shifted[i] = p;
    const LossBreakdown b = fn(seq(shifted), seq(target));
    return b.per_token_loss[i];
  };
  return (eval(pred[i] + h) - eval(pred[i] - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("standard cross entropy on hand-evaluated points") {
  const LossConfig cfg;

  SUBCASE("perfect binary predictions cost (almost) nothing") {
    const auto b = standard_ce(seq({1.0, 0.0}), seq({1.0, 0.0}), cfg);
    CHECK(b.per_token_loss[0] < 1e-6);  // only the clip keeps it above zero
    CHECK(b.per_token_loss[1] < 1e-6);
  }
  SUBCASE("symmetric halfway point is ln 2") {
    const auto b = standard_ce(seq({0.5}), seq({0.5}), cfg);
    CHECK(b.total == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("formula oracle") {
    const auto b = standard_ce(seq({0.9, 0.2}), seq({1.0, 0.0}), cfg);
    CHECK(b.per_token_loss[0] == doctest::Approx(-std::log(0.9)));
    CHECK(b.per_token_loss[1] == doctest::Approx(-std::log(0.8)));
    CHECK(b.total == doctest::Approx(0.5 * (-std::log(0.9) - std::log(0.8))));
    CHECK(b.pos_weight + b.neg_weight == doctest::Approx(1.0));
  }
  SUBCASE("targets outside the unit interval are rejected") {
    CHECK_THROWS_AS(standard_ce(seq({0.5}), seq({1.5}), cfg), ValidationError);
  }
}

TEST_CASE("weighted cross entropy computes the per-sample token fractions") {
  const LossConfig cfg;  // beta = 0.5

  SUBCASE("counting oracle") {
    const auto b = weighted_ce(seq({0.5, 0.5, 0.5, 0.5}), seq({1.0, 0.0, 0.0, 0.0}), cfg);
    CHECK(b.pos_weight == doctest::Approx(0.75));
    CHECK(b.neg_weight == doctest::Approx(0.25));
  }
  SUBCASE("all-clean sample has zero weighted loss regardless of predictions") {
    const auto b = weighted_ce(seq({0.9, 0.9, 0.9}), seq({0.0, 0.0, 0.0}), cfg);
    CHECK(b.neg_weight == doctest::Approx(0.0));
    CHECK(b.total == doctest::Approx(0.0));
  }
  SUBCASE("reference formula oracle") {
    const auto b = weighted_ce(seq({0.9, 0.1, 0.1, 0.1}), seq({1.0, 0.0, 0.0, 0.0}), cfg);
    CHECK(b.per_token_loss[0] == doctest::Approx(-0.75 * std::log(0.9)));
    for (int i = 1; i < 4; ++i) {
      CHECK(b.per_token_loss[i] == doctest::Approx(-0.25 * std::log(0.9)));
    }
  }
  SUBCASE("half-and-half weights reduce to half the standard loss") {
    const auto target = seq({0.2, 0.8});  // one at-or-below beta, one above
    const auto pred = seq({0.3, 0.6});
    const auto w = weighted_ce(pred, target, cfg);
    const auto s = standard_ce(pred, target, cfg);
    REQUIRE(w.pos_weight == doctest::Approx(0.5));
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(w.per_token_loss[i] == doctest::Approx(0.5 * s.per_token_loss[i]));
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(42);
  const LossConfig cfg;
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.next_below(6);
    std::vector<double> pred(n), target(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.next_double(0.01, 0.99);
      target[i] = rng.next_double();
    }

    const auto std_b = standard_ce(seq(pred), seq(target), cfg);
    const auto wgt_b = weighted_ce(seq(pred), seq(target), cfg);
    for (std::size_t i = 0; i < n; ++i) {
      const double fd_std = fd_grad([&](auto p, auto t) { return standard_ce(p, t, cfg); },
                                    pred, target, i);
      const double fd_wgt = fd_grad([&](auto p, auto t) { return weighted_ce(p, t, cfg); },
                                    pred, target, i);
      const double denom_std = std::max(1.0, std::fabs(fd_std));
      const double denom_wgt = std::max(1.0, std::fabs(fd_wgt));
      CHECK(std::fabs(std_b.per_token_grad[i] - fd_std) / denom_std < 1e-4);
      CHECK(std::fabs(wgt_b.per_token_grad[i] - fd_wgt) / denom_wgt < 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("losses are permutation-equivariant once the sample weights are fixed") {
  const LossConfig cfg;
  const auto fwd = weighted_ce(seq({0.9, 0.2, 0.4}), seq({1.0, 0.0, 0.3}), cfg);
  const auto rev = weighted_ce(seq({0.4, 0.2, 0.9}), seq({0.3, 0.0, 1.0}), cfg);
  CHECK(fwd.pos_weight == doctest::Approx(rev.pos_weight));
  CHECK(fwd.per_token_loss[0] == doctest::Approx(rev.per_token_loss[2]));
  CHECK(fwd.per_token_loss[2] == doctest::Approx(rev.per_token_loss[0]));
  CHECK(fwd.total == doctest::Approx(rev.total));
}

TEST_CASE("total is the mean of the per-token losses") {
  Rng rng(77);
  const LossConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.next_below(10);
    std::vector<double> pred(n), target(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.next_double();
      target[i] = rng.next_double();
    }
    const auto b = weighted_ce(seq(pred), seq(target), cfg);
    double mean = 0.0;
    for (double l : b.per_token_loss) mean += l;
    mean /= static_cast<double>(n);
    CHECK(b.total == doctest::Approx(mean).epsilon(1e-9));
    CHECK(b.pos_weight + b.neg_weight == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("export_token_weights emits the sample pair and per-token coefficients") {
  const LossConfig cfg;

  SUBCASE("all-zero targets") {
    const auto tw = export_token_weights(seq({0.0, 0.0}), cfg);
    CHECK(tw.pos_weight == doctest::Approx(1.0));
    CHECK(tw.neg_weight == doctest::Approx(0.0));
  }
  SUBCASE("all above beta") {
    const auto tw = export_token_weights(seq({0.9, 0.8}), cfg);
    CHECK(tw.pos_weight == doctest::Approx(0.0));
    CHECK(tw.neg_weight == doctest::Approx(1.0));
  }
  SUBCASE("mixed 3-of-4 below beta") {
    const auto tw = export_token_weights(seq({1.0, 0.0, 0.0, 0.0}), cfg);
    CHECK(tw.pos_weight == doctest::Approx(0.75));
    CHECK(tw.neg_weight == doctest::Approx(0.25));
    // binary targets: coefficient is the multiplier of that token's CE term
    CHECK(tw.per_token_coeff[0] == doctest::Approx(0.75));
    CHECK(tw.per_token_coeff[1] == doctest::Approx(0.25));
  }
}

TEST_CASE("weight floor keeps all-clean samples trainable when enabled") {
  LossConfig cfg;
  cfg.weight_floor_epsilon = 0.01;
  const auto b = weighted_ce(seq({0.9, 0.9}), seq({0.0, 0.0}), cfg);
  CHECK(b.neg_weight > 0.0);
  CHECK(b.total > 0.0);
  CHECK(b.pos_weight + b.neg_weight == doctest::Approx(1.0).epsilon(1e-9));
}
