#include "lastmile/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lastmile/digest.hpp"
#include "lastmile/error.hpp"
#include "lastmile/serialize.hpp"

namespace lastmile {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

void ConfusionMatrix::add(bool predicted, bool actual) {
  if (predicted && actual) ++tp;
  else if (predicted) ++fp;
  else if (actual) ++fn;
  else ++tn;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics compute_metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.tpr = ratio(cm.tp, cm.tp + cm.fn);
  m.fpr = ratio(cm.fp, cm.fp + cm.tn);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = m.tpr;
  return m;
}

namespace {

const GroundTruthLabel& label_for(const std::string& leg_id, const std::map<std::string, GroundTruthLabel>& labels) {
  const auto it = labels.find(leg_id);
  if (it == labels.end()) throw Error(ErrorCode::kMissingLabel, "no label for leg " + leg_id);
  return it->second;
}

void score_leg(ScoreResult& out, const Answers& predicted, const Answers& actual) {
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    out.per_question[q].add(predicted[q], actual[q]);
    out.micro.add(predicted[q], actual[q]);
  }
  ++out.scored_legs;
}

}  // namespace

ScoreResult score(std::span<const LegOutcome> outcomes, const std::map<std::string, GroundTruthLabel>& labels,
                  UnansweredPolicy policy) {
  ScoreResult out;
  for (const auto& o : outcomes) {
    const auto& label = label_for(o.leg_id, labels);
    if (o.verdict) {
      score_leg(out, o.verdict->answers, label.answers);
      continue;
    }
    ++out.unanswered;
    if (policy == UnansweredPolicy::kAllFalse) score_leg(out, Answers{}, label.answers);
  }
  return out;
}

ScoreResult score(std::span<const Verdict> verdicts, const std::map<std::string, GroundTruthLabel>& labels) {
  ScoreResult out;
  for (const auto& v : verdicts) score_leg(out, v.answers, label_for(v.leg_id, labels).answers);
  return out;
}

LatencyStats latency_stats(std::span<const RawResponse> responses) {
  LatencyStats s;
  double sum = 0.0;
  for (const auto& r : responses) {
    if (!r.ok()) {
      ++s.failures;
      continue;
    }
    ++s.successes;
    sum += r.latency_s;
  }
  if (s.successes == 0) return s;
  s.mean_s = sum / static_cast<double>(s.successes);
  if (s.successes > 1) {
    double sq = 0.0;
    for (const auto& r : responses) {
      if (r.ok()) sq += (r.latency_s - s.mean_s) * (r.latency_s - s.mean_s);
    }
    s.std_s = std::sqrt(sq / static_cast<double>(s.successes - 1));
  }
  return s;
}

ModelReport make_report(std::string model, std::optional<double> params_billions, const ScoreResult& scores,
                        const LatencyStats& latency, std::span<const LegOutcome> outcomes) {
  ModelReport r;
  r.model = std::move(model);
  r.params_billions = params_billions;
  r.scores = scores;
  r.micro = compute_metrics(scores.micro);
  for (std::size_t q = 0; q < kQuestionCount; ++q) r.per_question[q] = compute_metrics(scores.per_question[q]);
  r.latency = latency;
  for (const auto& o : outcomes) {
    if (o.parse_failed) ++r.parse_failures;
    if (!o.verdict) ++r.unanswered;
    else if (o.verdict->source == VerdictSource::kLlmExtracted) ++r.llm_extracted;
  }
  return r;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "\xE2\x80\x94";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += csv_field(f);
    first = false;
  }
  return out + "\r\n";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<ModelReport> by_accuracy(std::span<const ModelReport> reports) {
  std::vector<ModelReport> sorted(reports.begin(), reports.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const ModelReport& a, const ModelReport& b) {
    const double x = a.micro.accuracy.value_or(-1.0);
    const double y = b.micro.accuracy.value_or(-1.0);
    if (x != y) return x > y;
    return a.model < b.model;
  });
  return sorted;
}

}  // namespace

std::string render_accuracy_svg(std::span<const ModelReport> reports) {
  const auto sorted = by_accuracy(reports);
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 30, kTop = 30, kBottom = 60;
  double max_latency = 0.0;
  for (const auto& r : sorted) max_latency = std::max(max_latency, r.latency.mean_s);
  const double x_max = max_latency > 0 ? max_latency * 1.1 : 1.0;
  auto sx = [&](double v) { return kLeft + v / x_max * (kW - kLeft - kRight); };
  auto sy = [&](double v) { return kH - kBottom - v * (kH - kTop - kBottom); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#FFFFFF\"/>\n"
      << "<g stroke=\"#333333\" stroke-width=\"1\">\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << sy(0) << "\" x2=\"" << kW - kRight << "\" y2=\"" << sy(0) << "\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << sy(0) << "\" x2=\"" << kLeft << "\" y2=\"" << sy(1) << "\"/>\n"
      << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double a = i / 5.0;
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fixed(sy(a) + 4, 2) << "\" text-anchor=\"end\">" << fixed(a, 1)
        << "</text>\n";
    const double t = x_max * i / 5.0;
    svg << "<text class=\"xtick\" x=\"" << fixed(sx(t), 2) << "\" y=\"" << sy(0) + 16 << "\" text-anchor=\"middle\">"
        << short_number(t) << "</text>\n";
  }
  svg << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 18
      << "\" text-anchor=\"middle\">mean inference time (s)</text>\n"
      << "<text x=\"18\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (kTop + kH - kBottom) / 2 << ")\">accuracy</text>\n</g>\n";
  for (const auto& r : sorted) {
    const double acc = r.micro.accuracy.value_or(0.0);
    const double radius = r.params_billions ? 4.0 + 2.0 * std::sqrt(std::max(0.0, *r.params_billions)) : 5.0;
    const double cx = sx(r.latency.mean_s);
    const double cy = sy(acc);
    svg << "<circle cx=\"" << fixed(cx, 2) << "\" cy=\"" << fixed(cy, 2) << "\" r=\"" << fixed(radius, 2)
        << "\" fill=\"#D62728\" fill-opacity=\"0.6\" stroke=\"#7F1416\"/>\n"
        << "<text x=\"" << fixed(cx + radius + 3, 2) << "\" y=\"" << fixed(cy + 4, 2)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(r.model) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> emit_report(std::span<const ModelReport> reports,
                                               const std::filesystem::path& out_dir, const nlohmann::json& provenance) {
  if (reports.empty()) throw Error(ErrorCode::kInvalidArgument, "no reports to emit");
  const auto sorted = by_accuracy(reports);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& body) {
    const auto path = out_dir / name;
    try {
      write_file(path, body);
    } catch (const std::filesystem::filesystem_error& e) {
      throw Error(ErrorCode::kIoError, e.what());
    }
    written.push_back(path);
  };

  std::string t2 = csv_row({"model", "accuracy", "mean_inference_s", "std_inference_s", "model_size_b", "legs",
                            "unanswered", "parse_failures", "llm_extracted"});
  std::string t3 = csv_row({"model", "tpr", "fpr", "precision", "recall"});
  std::string pq = csv_row({"model", "question", "tp", "fp", "tn", "fn", "accuracy", "tpr", "fpr", "precision",
                            "recall"});
  for (const auto& r : sorted) {
    t2 += csv_row({r.model, format_metric(r.micro.accuracy), fixed(r.latency.mean_s, 3), fixed(r.latency.std_s, 3),
                   r.params_billions ? fixed(*r.params_billions, 1) : format_metric(std::nullopt),
                   std::to_string(r.scores.scored_legs), std::to_string(r.unanswered),
                   std::to_string(r.parse_failures), std::to_string(r.llm_extracted)});
    t3 += csv_row({r.model, format_metric(r.micro.tpr), format_metric(r.micro.fpr), format_metric(r.micro.precision),
                   format_metric(r.micro.recall)});
    for (std::size_t q = 0; q < kQuestionCount; ++q) {
      const auto& cm = r.scores.per_question[q];
      const auto& m = r.per_question[q];
      pq += csv_row({r.model, std::string(kQuestions[q].key), std::to_string(cm.tp), std::to_string(cm.fp),
                     std::to_string(cm.tn), std::to_string(cm.fn), format_metric(m.accuracy), format_metric(m.tpr),
                     format_metric(m.fpr), format_metric(m.precision), format_metric(m.recall)});
    }
  }
  put("table2.csv", t2);
  put("table3.csv", t3);
  put("per_question.csv", pq);
  put("accuracy_vs_latency.svg", render_accuracy_svg(sorted));

  json bundle{{"provenance", provenance}, {"models", json::array()}};
  for (const auto& r : sorted) bundle["models"].push_back(r);
  put("report.json", bundle.dump(2) + "\n");
  return written;
}

}  // namespace lastmile
