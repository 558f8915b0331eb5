#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lastmile/extraction.hpp"
#include "lastmile/oracle.hpp"

namespace lastmile {

// Positive class: the problem is present.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  void add(bool predicted, bool actual);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// nullopt marks an undefined ratio (zero denominator).
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> precision;
  std::optional<double> recall;  // same value as tpr
};

Metrics compute_metrics(const ConfusionMatrix& cm);

enum class UnansweredPolicy {
  kAllFalse,  // unanswered legs count as "no" on every question
  kExclude,   // unanswered legs leave the denominators
};

struct ScoreResult {
  ConfusionMatrix micro;
  std::array<ConfusionMatrix, kQuestionCount> per_question{};
  std::size_t scored_legs = 0;
  std::size_t unanswered = 0;
};

// Throws kMissingLabel if any outcome's leg has no label.
ScoreResult score(std::span<const LegOutcome> outcomes, const std::map<std::string, GroundTruthLabel>& labels,
                  UnansweredPolicy policy = UnansweredPolicy::kAllFalse);
ScoreResult score(std::span<const Verdict> verdicts, const std::map<std::string, GroundTruthLabel>& labels);

struct LatencyStats {
  double mean_s = 0.0;
  double std_s = 0.0;  // sample standard deviation; 0 with fewer than two samples
  std::size_t successes = 0;
  std::size_t failures = 0;
};

LatencyStats latency_stats(std::span<const RawResponse> responses);

struct ModelReport {
  std::string model;
  std::optional<double> params_billions;
  ScoreResult scores;
  Metrics micro;
  std::array<Metrics, kQuestionCount> per_question{};
  LatencyStats latency;
  std::size_t parse_failures = 0;
  std::size_t unanswered = 0;
  std::size_t llm_extracted = 0;
};

ModelReport make_report(std::string model, std::optional<double> params_billions, const ScoreResult& scores,
                        const LatencyStats& latency, std::span<const LegOutcome> outcomes);

// Undefined metrics print as an em dash.
std::string format_metric(const std::optional<double>& v);

// Writes table2.csv, table3.csv, per_question.csv, accuracy_vs_latency.svg
// and report.json under `out_dir`. Reports are sorted by accuracy, highest
// first. `provenance` is embedded verbatim in report.json.
std::vector<std::filesystem::path> emit_report(std::span<const ModelReport> reports,
                                               const std::filesystem::path& out_dir,
                                               const nlohmann::json& provenance = nlohmann::json::object());

std::string render_accuracy_svg(std::span<const ModelReport> reports);

}  // namespace lastmile
