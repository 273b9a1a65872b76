#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ikt/metrics.hpp"
#include "ikt/rng.hpp"

using namespace ikt;
using namespace ikt::metrics;

namespace {

// O(P*N) pair-counting oracle: correctly ordered pairs plus half the ties.
double auroc_bruteforce(const std::vector<double>& scores,
                        const std::vector<int>& labels) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / pairs;
}

// Quadratic rank-walk oracle: recounts the confusion at every distinct score
// cutoff and accumulates (delta recall) * precision.
double auprc_rankwalk(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  std::vector<double> cuts = scores;
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double total_pos = 0.0;
  for (int l : labels) total_pos += (l == 1);

  double ap = 0.0, prev_recall = 0.0;
  for (double cut : cuts) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < cut) continue;
      labels[i] == 1 ? tp += 1.0 : fp += 1.0;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

}  // namespace

TEST_CASE("confusion matrix") {
  SECTION("clean separation") {
    auto c = confusion({0.7, 0.3}, {1, 0});
    CHECK(c == Confusion{1, 0, 1, 0});
  }
  SECTION("tie at threshold counts positive") {
    auto c = confusion({0.5}, {0});
    CHECK(c.fp == 1);
  }
  SECTION("all positives scored zero are all misses") {
    auto c = confusion({0.0, 0.0, 0.0}, {1, 1, 1});
    CHECK(c.fn == 3);
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(confusion({}, {}), NumericError);
    CHECK_THROWS_AS(confusion({0.5}, {1, 0}), NumericError);
  }
}

TEST_CASE("auroc worked examples") {
  SECTION("perfect separation") {
    CHECK(*auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  }
  SECTION("all scores equal") {
    CHECK(*auroc({0.4, 0.4, 0.4}, {1, 0, 1}) == 0.5);
  }
  SECTION("three of four pairs ordered") {
    CHECK(*auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) ==
          Catch::Approx(0.75).margin(1e-15));
  }
  SECTION("single-class input is undefined") {
    CHECK(!auroc({0.1, 0.2}, {1, 1}).has_value());
    CHECK(!auroc({0.1, 0.2}, {0, 0}).has_value());
  }
}

TEST_CASE("auprc worked examples") {
  SECTION("all labels positive") {
    CHECK(*auprc({0.2, 0.9, 0.5}, {1, 1, 1}) == 1.0);
  }
  SECTION("alternating ranks") {
    CHECK(*auprc({0.8, 0.4, 0.35, 0.1}, {1, 0, 1, 0}) ==
          Catch::Approx(0.5 + 0.5 * (2.0 / 3.0)).margin(1e-15));
  }
  SECTION("no positives is undefined") {
    CHECK(!auprc({0.3, 0.6}, {0, 0}).has_value());
  }
  SECTION("perfect ranking has AP 1") {
    CHECK(*auprc({0.99, 0.98, 0.01, 0.02}, {1, 1, 0, 0}) == 1.0);
  }
}

TEST_CASE("auroc matches the brute-force pair oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.below(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores inject plenty of ties
      scores[i] = static_cast<double>(rng.below(12)) / 11.0;
      labels[i] = rng.uniform() < 0.4 ? 1 : 0;
      (labels[i] ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg) {
      CHECK(!auroc(scores, labels).has_value());
      continue;
    }
    auto fast = auroc(scores, labels);
    REQUIRE(fast.has_value());
    CHECK(std::fabs(*fast - auroc_bruteforce(scores, labels)) < 1e-12);
  }
}

TEST_CASE("auprc matches the rank-walk oracle") {
  Rng rng(102);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(200);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(9)) / 8.0;
      labels[i] = rng.uniform() < 0.35 ? 1 : 0;
      any_pos = any_pos || labels[i] == 1;
    }
    if (!any_pos) {
      CHECK(!auprc(scores, labels).has_value());
      continue;
    }
    auto fast = auprc(scores, labels);
    REQUIRE(fast.has_value());
    CHECK(std::fabs(*fast - auprc_rankwalk(scores, labels)) < 1e-12);
  }
}

TEST_CASE("auroc invariances") {
  Rng rng(103);
  std::vector<double> scores(60);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform();
    labels[i] = i % 3 == 0 ? 1 : 0;
  }

  SECTION("invariant under strictly monotone transforms") {
    std::vector<double> warped = scores;
    for (double& s : warped) s = std::exp(3.0 * s) + 7.0;
    CHECK(*auroc(scores, labels) == Catch::Approx(*auroc(warped, labels)).margin(1e-12));
  }
  SECTION("label flip symmetry") {
    std::vector<int> flipped = labels;
    for (int& l : flipped) l = 1 - l;
    CHECK(*auroc(scores, labels) ==
          Catch::Approx(1.0 - *auroc(scores, flipped)).margin(1e-12));
  }
}

TEST_CASE("random scores give auprc near the positive rate") {
  Rng rng(104);
  const std::size_t n = 10000;
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  double prate = 0.0;
  for (int l : labels) prate += l;
  prate /= static_cast<double>(n);
  CHECK(std::fabs(*auprc(scores, labels) - prate) < 0.05);
}

TEST_CASE("score_predictions assembles a coherent report") {
  std::vector<double> scores{0.9, 0.6, 0.5, 0.2};
  std::vector<int> labels{1, 0, 1, 0};
  auto r = score_predictions(scores, labels);
  CHECK(r.n == 4);
  CHECK(r.confusion.tp + r.confusion.fp + r.confusion.tn + r.confusion.fn == r.n);
  CHECK(r.acc == Catch::Approx((r.confusion.tp + r.confusion.tn) / 4.0));
  CHECK(r.positive_rate == 0.5);

  SECTION("constant 0.5 scorer: acc equals positive rate, auroc one half") {
    std::vector<double> flat(labels.size(), 0.5);
    auto rf = score_predictions(flat, labels);
    CHECK(rf.acc == rf.positive_rate);
    CHECK(*rf.auroc == 0.5);
  }
  SECTION("json round trip") {
    auto j = r.to_json();
    auto back = EvalReport::from_json(j);
    CHECK(back == r);
    CHECK(back.to_json().dump() == j.dump());
  }
}

TEST_CASE("average_reports pools folds") {
  EvalReport a = score_predictions({0.9, 0.1}, {1, 0});
  EvalReport b = score_predictions({0.2, 0.6, 0.7}, {1, 0, 1});
  auto avg = average_reports({a, b});
  CHECK(avg.n == 5);
  CHECK(avg.confusion.tp == a.confusion.tp + b.confusion.tp);
  CHECK(avg.acc == Catch::Approx(0.5 * (a.acc + b.acc)));
  CHECK(*avg.auroc == Catch::Approx(0.5 * (*a.auroc + *b.auroc)));
}
