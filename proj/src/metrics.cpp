#include "sentinel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "sentinel/errors.hpp"

namespace sentinel::metrics {

using detector::Label;

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::InvalidArgument, "prediction and label counts differ");
  ConfusionCounts c;
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    const bool p = predicted[j] == Label::pushing;
    const bool t = truth[j] == Label::pushing;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error(ErrorCode::EmptyCounts, "confusion counts are all zero");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

namespace {

double ratio_or_zero(std::uint64_t num, std::uint64_t den, const std::string& what, std::vector<std::string>& warnings) {
  if (den == 0) {
    warnings.push_back(what + " undefined (zero denominator), reported as 0");
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassMetrics class_metrics(const ConfusionCounts& c, Label cls) {
  // Seen from the non-pushing side, TN plays TP and the error cells swap.
  const bool pos = cls == Label::pushing;
  const std::uint64_t tp = pos ? c.tp : c.tn;
  const std::uint64_t fp = pos ? c.fp : c.fn;
  const std::uint64_t fn = pos ? c.fn : c.fp;
  const std::string name = detector::to_string(cls);

  ClassMetrics m;
  m.precision = ratio_or_zero(tp, tp + fp, name + " precision", m.warnings);
  m.recall = ratio_or_zero(tp, tp + fn, name + " recall", m.warnings);
  if (m.precision + m.recall == 0.0) {
    m.warnings.push_back(name + " F1 undefined (precision + recall = 0), reported as 0");
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

MacroF1 macro_f1(const ConfusionCounts& c) {
  const auto p = class_metrics(c, Label::pushing);
  const auto n = class_metrics(c, Label::non_pushing);
  MacroF1 out{p.f1, n.f1, (p.f1 + n.f1) / 2.0, p.warnings};
  out.warnings.insert(out.warnings.end(), n.warnings.begin(), n.warnings.end());
  return out;
}

RocCurve roc_auc(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::size_t pos = 0;
  for (const auto& s : sorted) {
    if (!std::isfinite(s.delta)) throw Error(ErrorCode::InvalidArgument, "scores must be finite");
    pos += s.truth == Label::pushing ? 1 : 0;
  }
  const std::size_t neg = sorted.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClassInput, "ROC needs both pushing and non_pushing samples");

  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredSample& a, const ScoredSample& b) { return a.delta > b.delta; });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  for (std::size_t j = 0; j < sorted.size();) {
    const double score = sorted[j].delta;
    const std::size_t tp0 = tp;
    const std::size_t fp0 = fp;
    for (; j < sorted.size() && sorted[j].delta == score; ++j) (sorted[j].truth == Label::pushing ? tp : fp)++;
    // Trapezoid in count units; normalized once at the end.
    area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
  }
  curve.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

EvalReport report_from_counts(const ConfusionCounts& c) {
  EvalReport r;
  r.counts = c;
  r.accuracy = accuracy(c);
  r.pushing = class_metrics(c, Label::pushing);
  r.non_pushing = class_metrics(c, Label::non_pushing);
  r.macro_f1 = (r.pushing.f1 + r.non_pushing.f1) / 2.0;
  r.warnings = r.pushing.warnings;
  r.warnings.insert(r.warnings.end(), r.non_pushing.warnings.begin(), r.non_pushing.warnings.end());
  return r;
}

EvalReport evaluate(std::span<const ScoredSample> samples, double threshold) {
  std::vector<Label> predicted;
  std::vector<Label> truth;
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : samples) {
    predicted.push_back(detector::apply_threshold(s.delta, threshold));
    truth.push_back(s.truth);
    (s.truth == Label::pushing ? has_pos : has_neg) = true;
  }
  EvalReport r = report_from_counts(confusion(predicted, truth));
  if (has_pos && has_neg) {
    r.roc = roc_auc(samples);
  } else {
    r.warnings.push_back("ROC/AUC skipped: only one class present");
  }
  return r;
}

int percent(double ratio) { return static_cast<int>(std::floor(ratio * 100.0 + 0.5)); }

nlohmann::json to_json(const EvalReport& report) {
  auto cls = [](const ClassMetrics& m) {
    return nlohmann::json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  };
  nlohmann::json j{
      {"counts", {{"tp", report.counts.tp}, {"tn", report.counts.tn}, {"fp", report.counts.fp}, {"fn", report.counts.fn}}},
      {"accuracy", report.accuracy},
      {"pushing", cls(report.pushing)},
      {"non_pushing", cls(report.non_pushing)},
      {"macro_f1", report.macro_f1},
      {"warnings", report.warnings},
      {"percent",
       {{"accuracy", percent(report.accuracy)},
        {"macro_f1", percent(report.macro_f1)},
        {"macro_precision", percent((report.pushing.precision + report.non_pushing.precision) / 2.0)},
        {"macro_recall", percent((report.pushing.recall + report.non_pushing.recall) / 2.0)}}}};
  if (report.roc) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : report.roc->points) pts.push_back({p.fpr, p.tpr});
    j["auc"] = report.roc->auc;
    j["roc"] = pts;
    j["percent"]["auc"] = percent(report.roc->auc);
  }
  return j;
}

std::string to_text(const EvalReport& report) {
  std::string out;
  out += fmt::format("{:<14}{:>10}{:>10}{:>10}\n", "class", "precision", "recall", "f1");
  out += fmt::format("{:<14}{:>9}%{:>9}%{:>9}%\n", "pushing", percent(report.pushing.precision),
                     percent(report.pushing.recall), percent(report.pushing.f1));
  out += fmt::format("{:<14}{:>9}%{:>9}%{:>9}%\n", "non_pushing", percent(report.non_pushing.precision),
                     percent(report.non_pushing.recall), percent(report.non_pushing.f1));
  out += fmt::format("{:<14}{:>9}%{:>9}%{:>9}%\n", "macro",
                     percent((report.pushing.precision + report.non_pushing.precision) / 2.0),
                     percent((report.pushing.recall + report.non_pushing.recall) / 2.0), percent(report.macro_f1));
  out += fmt::format("accuracy {}%\n", percent(report.accuracy));
  if (report.roc) out += fmt::format("auc {}%\n", percent(report.roc->auc));
  out += fmt::format("TP={} TN={} FP={} FN={}\n", report.counts.tp, report.counts.tn, report.counts.fp,
                     report.counts.fn);
  for (const auto& w : report.warnings) out += "warning: " + w + "\n";
  return out;
}

namespace {

std::vector<std::pair<std::string, std::string>> read_pairs(std::istream& in, const char* what) {
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::ParseError, fmt::format("{} line {} needs two columns", what, line_no));
    std::string a = line.substr(0, comma);
    std::string b = line.substr(comma + 1);
    if (line_no == 1 && a == "id") continue;
    rows.emplace_back(std::move(a), std::move(b));
  }
  return rows;
}

}  // namespace

std::vector<ScoredSample> join_predictions(std::istream& predictions, std::istream& labels) {
  std::map<std::string, Label> truth;
  for (const auto& [id, label] : read_pairs(labels, "labels")) {
    if (!truth.emplace(id, detector::parse_label(label)).second)
      throw Error(ErrorCode::ParseError, "duplicate label id '" + id + "'");
  }
  std::vector<ScoredSample> out;
  for (const auto& [id, delta] : read_pairs(predictions, "predictions")) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorCode::ParseError, "no label for prediction id '" + id + "'");
    double d = 0.0;
    try {
      d = std::stod(delta);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad delta for id '" + id + "'");
    }
    out.push_back({d, it->second});
  }
  return out;
}

TimingStats summarize(std::span<const double> samples) {
  TimingStats s;
  s.samples.assign(samples.begin(), samples.end());
  if (samples.empty()) return s;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.max = *std::max_element(samples.begin(), samples.end());
  return s;
}

TimingStats run_harness(const std::function<void()>& fn, int runs) {
  if (runs < 1) throw Error(ErrorCode::InvalidArgument, "harness needs at least one run");
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(runs));
  for (int r = 0; r < runs; ++r) samples.push_back(time_stage(fn).seconds);
  return summarize(samples);
}

nlohmann::json to_json(const TimingReport& report) {
  return {{"preprocess_s", report.preprocess_s},
          {"descriptor_s", report.descriptor_s},
          {"detect_s", report.detect_s},
          {"total_s", report.total_s()},
          {"deadline_s", report.deadline_s},
          {"deadline_met", report.deadline_met()}};
}

}  // namespace sentinel::metrics
