#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attribench {

struct AttributionPrediction;
struct TrainingSample;

struct ExampleScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t overlap = 0;
  std::size_t pred_size = 0;
  std::size_t gold_size = 0;
};

/// 0 when p + r == 0, else 2pr / (p + r).
double harmonic_mean(double p, double r);

// Empty-set conventions: both empty scores (1, 1, 1); an empty prediction
// against a non-empty gold set scores (0, 0, 0); a non-empty prediction
// against an empty gold set scores (0, 0, 0).
ExampleScore score_counts(std::size_t overlap, std::size_t pred_size, std::size_t gold_size);

template <class T>
ExampleScore prf(const std::set<T>& pred, const std::set<T>& gold) {
  std::size_t overlap = 0;
  for (const auto& x : pred) overlap += gold.contains(x);
  return score_counts(overlap, pred.size(), gold.size());
}

enum class AverageMode { micro, macro, macro_pr };
std::string_view to_string(AverageMode mode);

struct AggregateScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// micro: one score over the pooled overlap/pred/gold counts.
// macro: means of the per-example precision, recall and F1.
// macro_pr: means of precision and recall, F1 as their harmonic mean.
/// Throws ValidationError on an empty input.
AggregateScore aggregate(std::span<const ExampleScore> scores, AverageMode mode);

struct ReportRow {
  std::string method;
  std::string dataset;
  AverageMode mode = AverageMode::micro;
  double precision = 0.0;  // fractions; rendered as percentages
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_examples = 0;
  std::size_t n_unparseable = 0;
};

/// Scores each prediction against the sample with the same id. Every method
/// must cover every sample exactly once. Returns micro, macro and macro_pr
/// rows per method, methods in order of first appearance.
std::vector<ReportRow> evaluate(std::span<const AttributionPrediction> predictions,
                                std::span<const TrainingSample> samples, const std::string& dataset);

/// fraction * 100 with one decimal, e.g. 0.9605 -> "96.1".
std::string format_pct(double fraction);

std::string render_report_csv(std::span<const ReportRow> rows);
/// "method | dataset | mode | P | R | F1 | n | unparseable" rows with a footer
/// noting that F1 is computed before rounding.
std::string render_report_table(std::span<const ReportRow> rows);
std::vector<ReportRow> parse_report_csv(std::string_view text);

}  // namespace attribench
