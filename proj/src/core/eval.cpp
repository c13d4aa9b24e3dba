#include "eval.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "attribution.hpp"
#include "csv.hpp"
#include "datasets.hpp"
#include "errors.hpp"

namespace attribench {

double harmonic_mean(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

ExampleScore score_counts(std::size_t overlap, std::size_t pred_size, std::size_t gold_size) {
  if (overlap > pred_size || overlap > gold_size) throw ValidationError("overlap exceeds a set size");
  ExampleScore s{0.0, 0.0, 0.0, overlap, pred_size, gold_size};
  if (pred_size == 0 && gold_size == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  if (pred_size == 0 || gold_size == 0) return s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(pred_size);
  s.recall = static_cast<double>(overlap) / static_cast<double>(gold_size);
  s.f1 = harmonic_mean(s.precision, s.recall);
  return s;
}

std::string_view to_string(AverageMode mode) {
  switch (mode) {
    case AverageMode::micro: return "micro";
    case AverageMode::macro: return "macro";
    case AverageMode::macro_pr: return "macro_pr";
  }
  return "unknown";
}

AggregateScore aggregate(std::span<const ExampleScore> scores, AverageMode mode) {
  if (scores.empty()) throw ValidationError("cannot aggregate zero examples");
  if (mode == AverageMode::micro) {
    std::size_t overlap = 0, pred = 0, gold = 0;
    for (const auto& s : scores) {
      overlap += s.overlap;
      pred += s.pred_size;
      gold += s.gold_size;
    }
    const auto pooled = score_counts(overlap, pred, gold);
    return {pooled.precision, pooled.recall, pooled.f1};
  }
  AggregateScore mean;
  for (const auto& s : scores) {
    mean.precision += s.precision;
    mean.recall += s.recall;
    mean.f1 += s.f1;
  }
  const auto n = static_cast<double>(scores.size());
  mean.precision /= n;
  mean.recall /= n;
  mean.f1 = mode == AverageMode::macro ? mean.f1 / n : harmonic_mean(mean.precision, mean.recall);
  return mean;
}

std::vector<ReportRow> evaluate(std::span<const AttributionPrediction> predictions,
                                std::span<const TrainingSample> samples, const std::string& dataset) {
  std::map<std::string, const TrainingSample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.id, &s);

  struct MethodScores {
    std::vector<ExampleScore> scores;
    std::set<std::string> seen;
    std::size_t unparseable = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, MethodScores> methods;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end()) throw ValidationError("prediction for unknown sample '" + p.sample_id + "'");
    if (!methods.contains(p.method)) order.push_back(p.method);
    auto& m = methods[p.method];
    if (!m.seen.insert(p.sample_id).second) {
      throw ValidationError("method '" + p.method + "' has two predictions for '" + p.sample_id + "'");
    }
    const std::set<DocSentRef> empty;
    m.scores.push_back(prf(p.unparseable ? empty : p.refs, it->second->gold));
    m.unparseable += p.unparseable;
  }

  std::vector<ReportRow> rows;
  for (const auto& name : order) {
    const auto& m = methods[name];
    if (m.seen.size() != samples.size()) {
      throw ValidationError("method '" + name + "' covers " + std::to_string(m.seen.size()) + " of " +
                            std::to_string(samples.size()) + " samples");
    }
    for (auto mode : {AverageMode::micro, AverageMode::macro, AverageMode::macro_pr}) {
      const auto agg = aggregate(m.scores, mode);
      rows.push_back({name, dataset, mode, agg.precision, agg.recall, agg.f1, m.scores.size(), m.unparseable});
    }
  }
  return rows;
}

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

std::string render_report_csv(std::span<const ReportRow> rows) {
  std::string out = "method,dataset,mode,precision_pct,recall_pct,f1_pct,n_examples,n_unparseable\n";
  for (const auto& r : rows) {
    out += csv_field(r.method) + ',' + csv_field(r.dataset) + ',' + std::string(to_string(r.mode)) + ',' +
           format_pct(r.precision) + ',' + format_pct(r.recall) + ',' + format_pct(r.f1) + ',' +
           std::to_string(r.n_examples) + ',' + std::to_string(r.n_unparseable) + '\n';
  }
  return out;
}

std::string render_report_table(std::span<const ReportRow> rows) {
  std::ostringstream out;
  out << "method | dataset | mode | P | R | F1 | n | unparseable\n";
  for (const auto& r : rows) {
    out << r.method << " | " << r.dataset << " | " << to_string(r.mode) << " | " << format_pct(r.precision)
        << " | " << format_pct(r.recall) << " | " << format_pct(r.f1) << " | " << r.n_examples << " | "
        << r.n_unparseable << '\n';
  }
  out << "\nPercentages are rounded to one decimal. F1 is computed from unrounded precision and recall, so it "
         "can differ by 0.1 from the harmonic mean of the printed values.\n";
  return out.str();
}

namespace {

AverageMode mode_from_string(const std::string& s) {
  for (auto m : {AverageMode::micro, AverageMode::macro, AverageMode::macro_pr}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown averaging mode '" + s + "'");
}

}  // namespace

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw ParseError(line_no, "expected 8 report columns, got " + std::to_string(f.size()));
    try {
      rows.push_back({f[0], f[1], mode_from_string(f[2]), std::stod(f[3]) / 100.0, std::stod(f[4]) / 100.0,
                      std::stod(f[5]) / 100.0, std::stoull(f[6]), std::stoull(f[7])});
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, std::string("bad report value: ") + e.what());
    }
  }
  return rows;
}

}  // namespace attribench
