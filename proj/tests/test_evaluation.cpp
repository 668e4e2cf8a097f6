#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "mitgnn/evaluation.hpp"
#include "oracle.hpp"

using namespace mitgnn;

namespace {

RankedList rank(const std::vector<double>& scores, std::vector<std::size_t> excluded = {}) {
  return rank_candidates(0, scores, excluded);
}

std::vector<std::size_t> order_of(const RankedList& r) {
  std::vector<std::size_t> out;
  for (const auto& e : r.entries) out.push_back(e.item);
  return out;
}

}  // namespace

TEST(Ranking, DescendingScores) {
  EXPECT_EQ(order_of(rank({0.5, 0.9, 0.1})), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Ranking, TiesByAscendingIndex) {
  EXPECT_EQ(order_of(rank({0.3, 0.3, 0.3, 0.3})), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(order_of(rank({0.1, 0.7, 0.1, 0.7})), (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(Ranking, ExcludedItemsNeverAppear) {
  EXPECT_EQ(order_of(rank({0.5, 99.0, 0.1}, {1})), (std::vector<std::size_t>{0, 2}));
}

TEST(Ranking, LimitKeepsTheBest) {
  const RankedList r = rank_candidates(0, std::vector<double>{0.2, 0.8, 0.5, 0.8, 0.1}, {}, 3);
  EXPECT_EQ(order_of(r), (std::vector<std::size_t>{1, 3, 2}));
}

TEST(Metrics, RecallHalf) {
  const RankedList r = rank({0.9, 0.8, 0.1, 0.05, 0.7, 0.6});
  const std::vector<std::size_t> truth{0, 2, 3, 4};  // top-3 = {0, 1, 4}
  EXPECT_DOUBLE_EQ(recall_at_k(r, truth, 3), 0.5);
  EXPECT_DOUBLE_EQ(hr_at_k(r, truth, 3), 1.0);
}

TEST(Metrics, PerfectNdcgIsOne) {
  const RankedList r = rank({0.9, 0.8, 0.7, 0.1, 0.0});
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, {0, 1, 2}, 3), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, {0, 1, 2}, 10), 1.0);
}

TEST(Metrics, SingleHitAtRankThree) {
  const RankedList r = rank({0.9, 0.8, 0.7, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(ndcg_at_k(r, {2}, 10), 0.5, 1e-15);
}

TEST(Metrics, EmptyTruthThrows) {
  const RankedList r = rank({0.1});
  EXPECT_THROW(recall_at_k(r, {}, 1), Error);
  EXPECT_THROW(ndcg_at_k(r, {}, 1), Error);
}

TEST(MetricsProperty, MatchBruteForce) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 5 + rng() % 40;
    std::vector<double> scores(m);
    // Coarse values force ties.
    for (double& s : scores) s = static_cast<double>(rng() % 7) / 7.0;
    std::set<std::size_t> excluded, truth;
    for (std::size_t i = 0; i < m; ++i) {
      const auto x = rng() % 5;
      if (x == 0) excluded.insert(i);
      else if (x == 1) truth.insert(i);
    }
    if (truth.empty()) truth.insert(m - 1), excluded.erase(m - 1);
    const std::size_t k = 1 + rng() % m;
    const RankedList r = rank(scores, {excluded.begin(), excluded.end()});
    const std::vector<std::size_t> tv(truth.begin(), truth.end());
    const oracle::Ranking b = oracle::ranking_metrics(scores, excluded, truth, k);
    EXPECT_NEAR(recall_at_k(r, tv, k), b.recall, 1e-12);
    EXPECT_NEAR(hr_at_k(r, tv, k), b.hr, 1e-12);
    EXPECT_NEAR(ndcg_at_k(r, tv, k), b.ndcg, 1e-12);
  }
}

TEST(MetricsProperty, Invariants) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 30;
    std::vector<double> scores(m);
    for (double& s : scores) s = n(rng);
    std::vector<std::size_t> truth;
    for (std::size_t i = 0; i < m; ++i)
      if (rng() % 4 == 0) truth.push_back(i);
    if (truth.empty()) truth.push_back(3);
    const RankedList r = rank(scores);
    double prev_recall = 0.0, prev_hr = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
      const double rec = recall_at_k(r, truth, k), hr = hr_at_k(r, truth, k), nd = ndcg_at_k(r, truth, k);
      EXPECT_GE(hr, rec);
      EXPECT_GE(rec, prev_recall);
      EXPECT_GE(hr, prev_hr);
      for (double v : {rec, hr, nd}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-15);
      }
      prev_recall = rec;
      prev_hr = hr;
    }
    EXPECT_DOUBLE_EQ(recall_at_k(r, truth, m), 1.0);

    // Reordering everything below rank K leaves NDCG@K unchanged.
    const std::size_t k = 10;
    RankedList shuffled = r;
    std::shuffle(shuffled.entries.begin() + k, shuffled.entries.end(), rng);
    EXPECT_EQ(ndcg_at_k(shuffled, truth, k), ndcg_at_k(r, truth, k));
  }
}

TEST(Evaluate, AveragesAndSkipsEmptyTruth) {
  std::vector<TestCase> cases(3);
  cases[0] = {0, 0, {}, {1}};
  cases[1] = {1, 0, {1}, {2}};
  cases[2] = {2, 0, {0}, {}};
  const CaseScorer scorer = [](const TestCase&) { return std::vector<double>{0.1, 0.9, 0.5, 0.2}; };
  const MetricReport rep = evaluate(cases, scorer, {1, 2}, true);
  EXPECT_EQ(rep.cases, 2u);
  EXPECT_EQ(rep.skipped, 1u);
  // Case 0 ranks (1, 2, 3, 0): hit at 1. Case 1 excludes 1, ranks (2, 3, 0): hit at 1.
  EXPECT_DOUBLE_EQ(rep.recall_at(1), 1.0);
  EXPECT_DOUBLE_EQ(rep.ndcg_at(2), 1.0);
  ASSERT_EQ(rep.per_case.size(), 2u);
  EXPECT_THROW(rep.recall_at(5), Error);
}

TEST(Evaluate, KSetSortedAndDeduplicated) {
  const std::vector<TestCase> cases{{0, 0, {}, {0}}};
  const MetricReport rep = evaluate(cases, [](const TestCase&) { return std::vector<double>{1, 0}; }, {2, 1, 2});
  EXPECT_EQ(rep.ks, (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(evaluate(cases, [](const TestCase&) { return std::vector<double>{1}; }, {}), Error);
}

TEST(Evaluate, ReportFormats) {
  const std::vector<TestCase> cases{{4, 0, {}, {0}}};
  const MetricReport rep =
      evaluate(cases, [](const TestCase&) { return std::vector<double>{0.0, 1.0, 0.5}; }, {2}, true);
  std::ostringstream csv, tsv;
  write_report_csv(csv, rep);
  EXPECT_EQ(csv.str(),
            "metric,K,value,cases\n"
            "recall,2,0,1\nhr,2,0,1\nndcg,2,0,1\n");
  write_per_case_tsv(tsv, rep);
  EXPECT_EQ(tsv.str(), "basket\tK\trecall\thr\tndcg\n4\t2\t0\t0\t0\n");
}

TEST(Evaluate, DefaultKSet) {
  EXPECT_EQ(default_k_set(), (std::vector<std::size_t>{10, 20, 30, 40, 60, 80, 100}));
}
