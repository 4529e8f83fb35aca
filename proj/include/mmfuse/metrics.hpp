#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/error.hpp"

namespace mmfuse {

inline constexpr int kReportSchemaVersion = 1;

struct ClassScores {
  std::size_t support = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct Metrics {
  std::vector<ClassScores> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][pred]
  std::size_t total = 0;
};

namespace detail {
inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace detail

/**
 * Per-class precision TP/(TP+FP), recall TP/(TP+FN), F1 = 2PR/(P+R), any 0/0
 * taken as 0. Macro scores average over all M classes, including classes that
 * never occur.
 */
inline Metrics compute_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> golds, std::size_t m) {
  if (preds.size() != golds.size()) {
    fail(ErrorKind::shape_mismatch, "compute_metrics: " + std::to_string(preds.size()) + " predictions for " +
                                        std::to_string(golds.size()) + " gold labels");
  }
  if (m < 1) fail(ErrorKind::invalid_argument, "compute_metrics: need at least one class");
  Metrics out;
  out.total = preds.size();
  out.confusion.assign(m, std::vector<std::size_t>(m, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= m || golds[i] >= m) fail(ErrorKind::invalid_argument, "compute_metrics: label out of range");
    ++out.confusion[golds[i]][preds[i]];
  }
  out.per_class.resize(m);
  std::size_t correct = 0;
  for (std::size_t c = 0; c < m; ++c) {
    ClassScores& s = out.per_class[c];
    std::size_t row = 0, col = 0;
    for (std::size_t k = 0; k < m; ++k) {
      row += out.confusion[c][k];
      col += out.confusion[k][c];
    }
    s.tp = out.confusion[c][c];
    s.fp = col - s.tp;
    s.fn = row - s.tp;
    s.support = row;
    s.precision = detail::safe_ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fp));
    s.recall = detail::safe_ratio(static_cast<double>(s.tp), static_cast<double>(s.tp + s.fn));
    s.f1 = detail::safe_ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
    out.macro_precision += s.precision;
    out.macro_recall += s.recall;
    out.macro_f1 += s.f1;
    correct += s.tp;
  }
  out.macro_precision /= static_cast<double>(m);
  out.macro_recall /= static_cast<double>(m);
  out.macro_f1 /= static_cast<double>(m);
  out.accuracy = detail::safe_ratio(static_cast<double>(correct), static_cast<double>(out.total));
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorKind::invalid_argument, "mean_std of an empty sequence");
  MeanStd r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct MetricsSummary {
  MeanStd macro_f1, macro_precision, macro_recall, accuracy;
};

inline MetricsSummary summarize(std::span<const Metrics> runs) {
  auto collect = [&](double Metrics::*field) {
    std::vector<double> v;
    for (const auto& m : runs) v.push_back(m.*field);
    return mean_std(v);
  };
  return {collect(&Metrics::macro_f1), collect(&Metrics::macro_precision), collect(&Metrics::macro_recall),
          collect(&Metrics::accuracy)};
}

// Percentage rounded to 2 decimals, the reporting precision of all tables.
inline double percent_2dp(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

inline nlohmann::ordered_json metrics_to_json(const Metrics& m, const ClassCatalog& classes) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["total"] = m.total;
  j["macro"] = {{"f1", m.macro_f1},
                {"precision", m.macro_precision},
                {"recall", m.macro_recall},
                {"f1_pct", percent_2dp(m.macro_f1)},
                {"precision_pct", percent_2dp(m.macro_precision)},
                {"recall_pct", percent_2dp(m.macro_recall)}};
  j["accuracy"] = m.accuracy;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const ClassScores& s = m.per_class[c];
    per.push_back({{"class", classes.size() == m.per_class.size() ? classes.name(c) : std::to_string(c)},
                   {"support", s.support},
                   {"tp", s.tp},
                   {"fp", s.fp},
                   {"fn", s.fn},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1}});
  }
  j["per_class"] = per;
  j["confusion"] = m.confusion;
  return j;
}

inline nlohmann::ordered_json summary_to_json(const MetricsSummary& s) {
  auto ms = [](const MeanStd& x) {
    return nlohmann::ordered_json{{"mean", x.mean}, {"std", x.std}, {"mean_pct", percent_2dp(x.mean)},
                                  {"std_pct", percent_2dp(x.std)}};
  };
  return {{"macro_f1", ms(s.macro_f1)},
          {"macro_precision", ms(s.macro_precision)},
          {"macro_recall", ms(s.macro_recall)},
          {"accuracy", ms(s.accuracy)}};
}

struct ConfusedPair {
  std::size_t gold = 0;
  std::size_t pred = 0;
  std::size_t count = 0;
  std::vector<std::string> ids;
};

// Off-diagonal confusion cells by descending count (ties by gold, then pred),
// each with the ids of its examples in input order.
inline std::vector<ConfusedPair> error_report(const Metrics& metrics, std::span<const std::size_t> preds,
                                              std::span<const std::size_t> golds, std::span<const std::string> ids) {
  if (preds.size() != golds.size() || ids.size() != golds.size()) {
    fail(ErrorKind::shape_mismatch, "error_report: predictions, gold labels and ids differ in length");
  }
  const std::size_t m = metrics.confusion.size();
  std::vector<ConfusedPair> cells;
  for (std::size_t g = 0; g < m; ++g)
    for (std::size_t p = 0; p < m; ++p)
      if (g != p && metrics.confusion[g][p] > 0) cells.push_back({g, p, metrics.confusion[g][p], {}});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) continue;
    for (auto& c : cells)
      if (c.gold == golds[i] && c.pred == preds[i]) c.ids.push_back(ids[i]);
  }
  std::stable_sort(cells.begin(), cells.end(), [](const ConfusedPair& a, const ConfusedPair& b) {
    return std::tie(b.count, a.gold, a.pred) < std::tie(a.count, b.gold, b.pred);
  });
  return cells;
}

inline nlohmann::ordered_json error_report_to_json(const std::vector<ConfusedPair>& cells, const ClassCatalog& classes,
                                                   std::size_t total_errors) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["total_errors"] = total_errors;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    arr.push_back({{"gold", classes.name(c.gold)}, {"pred", classes.name(c.pred)}, {"count", c.count}, {"ids", c.ids}});
  }
  j["pairs"] = arr;
  return j;
}

}  // namespace mmfuse
