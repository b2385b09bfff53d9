#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sentinel/detector.hpp"

namespace sentinel::metrics {

// Pushing is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const detector::Label> predicted, std::span<const detector::Label> truth);

// Throws EmptyCounts when every count is zero.
double accuracy(const ConfusionCounts& c);

// A zero denominator yields 0 and a warning instead of an error.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::string> warnings;
};

ClassMetrics class_metrics(const ConfusionCounts& c, detector::Label cls);

struct MacroF1 {
  double f1_pushing = 0.0;
  double f1_non_pushing = 0.0;
  double macro = 0.0;
  std::vector<std::string> warnings;
};

MacroF1 macro_f1(const ConfusionCounts& c);

struct ScoredSample {
  double delta = 0.0;
  detector::Label truth = detector::Label::non_pushing;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

// Threshold swept over the distinct scores, highest first. Tied scores move
// the curve diagonally, which gives half credit to tied pairs. Throws
// SingleClassInput unless both classes are present.
RocCurve roc_auc(std::span<const ScoredSample> samples);

struct EvalReport {
  ConfusionCounts counts;
  double accuracy = 0.0;
  ClassMetrics pushing;
  ClassMetrics non_pushing;
  double macro_f1 = 0.0;
  std::optional<RocCurve> roc;
  std::vector<std::string> warnings;
};

EvalReport report_from_counts(const ConfusionCounts& c);
// Labels by delta >= threshold, then adds the ROC when both classes occur.
EvalReport evaluate(std::span<const ScoredSample> samples, double threshold = 0.5);

// Integer percentage as reported in tables (half rounds up).
int percent(double ratio);

nlohmann::json to_json(const EvalReport& report);
std::string to_text(const EvalReport& report);

// pred.csv "id,delta" joined with gt.csv "id,label" on id; header lines
// starting with "id" are skipped.
std::vector<ScoredSample> join_predictions(std::istream& predictions, std::istream& labels);

// --- timing ---------------------------------------------------------------

using SteadyClock = std::chrono::steady_clock;

inline double seconds_between(SteadyClock::time_point a, SteadyClock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <class R>
struct Timed {
  R result;
  double seconds = 0.0;
};

template <>
struct Timed<void> {
  double seconds = 0.0;
};

template <class F, class... Args>
auto time_stage(F&& fn, Args&&... args) -> Timed<std::invoke_result_t<F, Args...>> {
  using R = std::invoke_result_t<F, Args...>;
  const auto start = SteadyClock::now();
  if constexpr (std::is_void_v<R>) {
    std::invoke(std::forward<F>(fn), std::forward<Args>(args)...);
    return {seconds_between(start, SteadyClock::now())};
  } else {
    R result = std::invoke(std::forward<F>(fn), std::forward<Args>(args)...);
    const double s = seconds_between(start, SteadyClock::now());
    return {std::move(result), s};
  }
}

struct TimingStats {
  std::vector<double> samples;
  double mean = 0.0;
  double max = 0.0;
};

TimingStats summarize(std::span<const double> samples);
// Runs `fn` `runs` times on the calling thread.
TimingStats run_harness(const std::function<void()>& fn, int runs = 20);

struct TimingReport {
  double preprocess_s = 0.0;
  double descriptor_s = 0.0;
  double detect_s = 0.0;  // detection and annotation
  double deadline_s = 2.0;

  double total_s() const { return preprocess_s + descriptor_s + detect_s; }
  bool deadline_met() const { return total_s() <= deadline_s; }
};

nlohmann::json to_json(const TimingReport& report);

}  // namespace sentinel::metrics
