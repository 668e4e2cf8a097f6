#pragma once

// Top-K ranking and Recall / Hit Ratio / NDCG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mitgnn/basket_graph.hpp"
#include "mitgnn/error.hpp"

namespace mitgnn {

struct RankedEntry {
  std::size_t item;
  double score;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

// Candidates by descending score, ties by ascending item index.
struct RankedList {
  std::size_t basket = 0;
  std::vector<RankedEntry> entries;
};

inline const std::vector<std::size_t>& default_k_set() {
  static const std::vector<std::size_t> ks{10, 20, 30, 40, 60, 80, 100};
  return ks;
}

// `excluded` must be sorted. When limit is nonzero only the best `limit`
// candidates are kept.
inline RankedList rank_candidates(std::size_t basket, std::span<const double> scores,
                                  const std::vector<std::size_t>& excluded, std::size_t limit = 0) {
  RankedList ranked;
  ranked.basket = basket;
  ranked.entries.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::binary_search(excluded.begin(), excluded.end(), i)) continue;
    ranked.entries.push_back({i, scores[i]});
  }
  auto better = [](const RankedEntry& a, const RankedEntry& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  };
  if (limit > 0 && limit < ranked.entries.size()) {
    std::partial_sort(ranked.entries.begin(),
                      ranked.entries.begin() + static_cast<std::ptrdiff_t>(limit),
                      ranked.entries.end(), better);
    ranked.entries.resize(limit);
  } else {
    std::sort(ranked.entries.begin(), ranked.entries.end(), better);
  }
  return ranked;
}

namespace detail {

inline std::size_t hits_at_k(const RankedList& ranked, const std::vector<std::size_t>& truth,
                             std::size_t k) {
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.entries.size());
  for (std::size_t r = 0; r < n; ++r)
    if (std::binary_search(truth.begin(), truth.end(), ranked.entries[r].item)) ++hits;
  return hits;
}

}  // namespace detail

// `truth` must be sorted and nonempty.
inline double recall_at_k(const RankedList& ranked, const std::vector<std::size_t>& truth,
                          std::size_t k) {
  if (truth.empty()) throw Error(ErrorKind::usage, "recall of an empty ground truth");
  return static_cast<double>(detail::hits_at_k(ranked, truth, k)) /
         static_cast<double>(truth.size());
}

inline double hr_at_k(const RankedList& ranked, const std::vector<std::size_t>& truth,
                      std::size_t k) {
  if (truth.empty()) throw Error(ErrorKind::usage, "hit ratio of an empty ground truth");
  return detail::hits_at_k(ranked, truth, k) > 0 ? 1.0 : 0.0;
}

// Binary gain, discount 1/log2(rank+1), ideal DCG over min(K, |truth|) hits.
inline double ndcg_at_k(const RankedList& ranked, const std::vector<std::size_t>& truth,
                        std::size_t k) {
  if (truth.empty()) throw Error(ErrorKind::usage, "NDCG of an empty ground truth");
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked.entries.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(truth.begin(), truth.end(), ranked.entries[r].item))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, truth.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

struct CaseMetrics {
  std::size_t basket;
  std::vector<double> recall;
  std::vector<double> hr;
  std::vector<double> ndcg;
};

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t cases = 0;
  std::size_t skipped = 0;
  std::vector<CaseMetrics> per_case;

  double recall_at(std::size_t k) const { return recall.at(index_of(k)); }
  double hr_at(std::size_t k) const { return hr.at(index_of(k)); }
  double ndcg_at(std::size_t k) const { return ndcg.at(index_of(k)); }

  std::size_t index_of(std::size_t k) const {
    auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) throw Error(ErrorKind::lookup, "K=" + std::to_string(k) + " not evaluated");
    return static_cast<std::size_t>(it - ks.begin());
  }
};

// A scorer maps a test case to one score per item.
using CaseScorer = std::function<std::vector<double>(const TestCase&)>;

// Candidates exclude each case's seed items. Cases with empty truth are
// skipped and counted.
inline MetricReport evaluate(const std::vector<TestCase>& cases, const CaseScorer& scorer,
                             std::vector<std::size_t> ks = default_k_set(),
                             bool keep_per_case = false) {
  if (ks.empty()) throw Error(ErrorKind::config, "empty K set");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  MetricReport report;
  report.ks = ks;
  report.recall.assign(ks.size(), 0.0);
  report.hr.assign(ks.size(), 0.0);
  report.ndcg.assign(ks.size(), 0.0);
  const std::size_t kmax = ks.back();
  for (const TestCase& tc : cases) {
    if (tc.ground_truth.empty()) {
      ++report.skipped;
      continue;
    }
    std::vector<std::size_t> excluded = tc.seed_items;
    std::sort(excluded.begin(), excluded.end());
    std::vector<std::size_t> truth = tc.ground_truth;
    std::sort(truth.begin(), truth.end());
    const std::vector<double> scores = scorer(tc);
    const RankedList ranked = rank_candidates(tc.basket, scores, excluded, kmax);
    CaseMetrics cm{tc.basket, {}, {}, {}};
    for (std::size_t k = 0; k < ks.size(); ++k) {
      const double r = recall_at_k(ranked, truth, ks[k]);
      const double h = hr_at_k(ranked, truth, ks[k]);
      const double n = ndcg_at_k(ranked, truth, ks[k]);
      report.recall[k] += r;
      report.hr[k] += h;
      report.ndcg[k] += n;
      if (keep_per_case) {
        cm.recall.push_back(r);
        cm.hr.push_back(h);
        cm.ndcg.push_back(n);
      }
    }
    if (keep_per_case) report.per_case.push_back(std::move(cm));
    ++report.cases;
  }
  if (report.cases > 0) {
    const double n = static_cast<double>(report.cases);
    for (std::size_t k = 0; k < ks.size(); ++k) {
      report.recall[k] /= n;
      report.hr[k] /= n;
      report.ndcg[k] /= n;
    }
  }
  return report;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_report_csv(std::ostream& out, const MetricReport& report) {
  out << "metric,K,value,cases\n";
  auto emit = [&](const char* name, const std::vector<double>& values) {
    for (std::size_t k = 0; k < report.ks.size(); ++k)
      out << name << ',' << report.ks[k] << ',' << format_double(values[k]) << ',' << report.cases << '\n';
  };
  emit("recall", report.recall);
  emit("hr", report.hr);
  emit("ndcg", report.ndcg);
}

inline void write_per_case_tsv(std::ostream& out, const MetricReport& report,
                               const IdMap* baskets = nullptr) {
  out << "basket\tK\trecall\thr\tndcg\n";
  for (const auto& cm : report.per_case) {
    for (std::size_t k = 0; k < report.ks.size(); ++k) {
      out << (baskets ? baskets->name(cm.basket) : std::to_string(cm.basket)) << '\t'
          << report.ks[k] << '\t' << format_double(cm.recall[k]) << '\t' << format_double(cm.hr[k])
          << '\t' << format_double(cm.ndcg[k]) << '\n';
    }
  }
}

}  // namespace mitgnn
