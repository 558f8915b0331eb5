#include <cmath>

#include "doctest.h"
#include "lastmile/error.hpp"
#include "lastmile/evaluation.hpp"
#include "lastmile/extraction.hpp"
#include "lastmile/rng.hpp"
#include "lastmile/serialize.hpp"
#include "support.hpp"

using namespace lastmile;

namespace {

struct Gemma {
  std::vector<GroundTruthLabel> labels;
  std::vector<Verdict> verdicts;
};

const Gemma& gemma() {
  static const Gemma g{from_jsonl<GroundTruthLabel>(read_file(testing::fixture("gemma3_labels.jsonl"))),
                       from_jsonl<Verdict>(read_file(testing::fixture("gemma3_verdicts.jsonl")))};
  return g;
}

std::map<std::string, GroundTruthLabel> random_labels(Rng& rng, std::size_t n) {
  std::vector<GroundTruthLabel> out;
  for (std::size_t i = 0; i < n; ++i) {
    GroundTruthLabel l;
    l.leg_id = "leg" + std::to_string(i);
    for (auto& a : l.answers) a = rng.below(3) == 0;
    out.push_back(l);
  }
  return labels_by_leg(out);
}

ModelReport report_named(const std::string& name, double accuracy_target, double latency) {
  // 100 legs; `k` of them wrong on q1.
  Rng rng(1);
  auto labels = random_labels(rng, 100);
  std::vector<Verdict> vs;
  const auto wrong = static_cast<std::size_t>(std::lround((1 - accuracy_target) * 400));
  std::size_t i = 0;
  for (const auto& [id, l] : labels) {
    Verdict v{id, l.answers, VerdictSource::kDirectParse, ""};
    for (std::size_t q = 0; q < kQuestionCount; ++q) {
      if (i * 4 + q < wrong) v.answers[q] = !v.answers[q];
    }
    vs.push_back(v);
    ++i;
  }
  std::vector<RawResponse> rs(3);
  for (std::size_t k = 0; k < 3; ++k) rs[k].latency_s = latency + 0.1 * static_cast<double>(k);
  return make_report(name, 7.0, score(vs, labels), latency_stats(rs), {});
}

}  // namespace

TEST_CASE("metrics from counts") {
  const ConfusionMatrix cm{853, 84, 298, 365};
  const auto m = compute_metrics(cm);
  const auto expected = testing::load_json(testing::fixture("gemma3_counts.json"))["metrics"];
  CHECK(*m.accuracy == doctest::Approx(expected["accuracy"].get<double>()).epsilon(1e-12));
  CHECK(*m.tpr == doctest::Approx(expected["tpr"].get<double>()).epsilon(1e-12));
  CHECK(*m.fpr == doctest::Approx(expected["fpr"].get<double>()).epsilon(1e-12));
  CHECK(*m.precision == doctest::Approx(expected["precision"].get<double>()).epsilon(1e-12));
  CHECK(*m.recall == *m.tpr);
}

TEST_CASE("zero denominators are undefined") {
  const auto empty = compute_metrics({});
  CHECK_FALSE(empty.accuracy);
  CHECK_FALSE(empty.precision);
  CHECK(format_metric(empty.tpr) == "\xE2\x80\x94");
  CHECK(format_metric(0.71937) == "0.7194");
  const auto negatives_only = compute_metrics({0, 0, 5, 0});
  CHECK(*negatives_only.accuracy == 1.0);
  CHECK(*negatives_only.fpr == 0.0);
  CHECK_FALSE(negatives_only.tpr);
  CHECK_FALSE(negatives_only.precision);
}

TEST_CASE("perfect and all-no predictors") {
  Rng rng(4);
  const auto labels = random_labels(rng, 200);
  std::vector<Verdict> perfect, silent;
  std::size_t positives = 0;
  for (const auto& [id, l] : labels) {
    perfect.push_back({id, l.answers, VerdictSource::kDirectParse, ""});
    silent.push_back({id, {}, VerdictSource::kDirectParse, ""});
    for (bool a : l.answers) positives += a;
  }
  const auto p = compute_metrics(score(perfect, labels).micro);
  CHECK(*p.accuracy == 1.0);
  CHECK(*p.tpr == 1.0);
  CHECK(*p.fpr == 0.0);
  CHECK(*p.precision == 1.0);
  const auto s = score(silent, labels).micro;
  CHECK(s.tp == 0);
  CHECK(s.fp == 0);
  CHECK(s.fn == positives);
  const auto sm = compute_metrics(s);
  CHECK(*sm.tpr == 0.0);
  CHECK_FALSE(sm.precision);
  CHECK(*sm.accuracy == doctest::Approx(1.0 - positives / 800.0));
}

TEST_CASE("micro counts are the sum of per-question counts") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto labels = random_labels(rng, 30);
    std::vector<Verdict> vs;
    std::size_t agree = 0;
    for (const auto& [id, l] : labels) {
      Verdict v{id, {}, VerdictSource::kDirectParse, ""};
      for (std::size_t q = 0; q < kQuestionCount; ++q) {
        v.answers[q] = rng.below(2) == 1;
        agree += v.answers[q] == l.answers[q];
      }
      vs.push_back(v);
    }
    const auto r = score(vs, labels);
    ConfusionMatrix sum;
    for (const auto& cm : r.per_question) sum += cm;
    CHECK(sum == r.micro);
    CHECK(r.micro.total() == 120);
    // Accuracy two ways: from the matrix and from direct agreement.
    CHECK(*compute_metrics(r.micro).accuracy == doctest::Approx(agree / 120.0).epsilon(1e-15));
  }
}

TEST_CASE("gemma fixture reproduces its frozen counts") {
  const auto& g = gemma();
  REQUIRE(g.labels.size() == 400);
  const auto r = score(g.verdicts, labels_by_leg(g.labels));
  const auto counts = testing::load_json(testing::fixture("gemma3_counts.json"))["counts"];
  CHECK(r.micro.tp == counts["tp"].get<std::size_t>());
  CHECK(r.micro.fp == counts["fp"].get<std::size_t>());
  CHECK(r.micro.tn == counts["tn"].get<std::size_t>());
  CHECK(r.micro.fn == counts["fn"].get<std::size_t>());
  CHECK(r.scored_legs == 400);
}

TEST_CASE("unknown legs are an error") {
  const std::map<std::string, GroundTruthLabel> labels;
  const std::vector<Verdict> vs{{"ghost", {}, VerdictSource::kDirectParse, ""}};
  try {
    (void)score(vs, labels);
    FAIL("expected MissingLabel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingLabel);
  }
}

TEST_CASE("unanswered legs under both policies") {
  GroundTruthLabel l{"a", {true, false, true, false}, {}};
  GroundTruthLabel m{"b", {true, true, true, true}, {}};
  const auto labels = labels_by_leg(std::vector{l, m});
  std::vector<LegOutcome> outcomes(2);
  outcomes[0].leg_id = "a";
  outcomes[0].verdict = Verdict{"a", {true, false, true, false}, VerdictSource::kDirectParse, ""};
  outcomes[1].leg_id = "b";
  outcomes[1].parse_failed = true;

  const auto all_false = score(outcomes, labels, UnansweredPolicy::kAllFalse);
  CHECK(all_false.scored_legs == 2);
  CHECK(all_false.unanswered == 1);
  CHECK(all_false.micro == ConfusionMatrix{2, 0, 2, 4});
  const auto excluded = score(outcomes, labels, UnansweredPolicy::kExclude);
  CHECK(excluded.scored_legs == 1);
  CHECK(excluded.micro == ConfusionMatrix{2, 0, 2, 0});

  const auto rep = make_report("m", std::nullopt, all_false, {}, outcomes);
  CHECK(rep.unanswered == 1);
  CHECK(rep.parse_failures == 1);
  CHECK(rep.llm_extracted == 0);
}

TEST_CASE("latency statistics use the sample deviation") {
  std::vector<RawResponse> rs(5);
  for (int i = 0; i < 4; ++i) rs[i].latency_s = i + 1;
  rs[4].failure = EndpointFailure{ErrorCode::kTimeout, 0, ""};
  rs[4].latency_s = 99;
  const auto s = latency_stats(rs);
  CHECK(s.successes == 4);
  CHECK(s.failures == 1);
  CHECK(s.mean_s == doctest::Approx(2.5));
  CHECK(s.std_s == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(latency_stats(std::span<const RawResponse>(rs.data(), 1)).std_s == 0.0);
}

TEST_CASE("report files") {
  const std::vector<ModelReport> reports{report_named("small, quoted \"one\"", 0.70, 1.0),
                                         report_named("big", 0.90, 4.0), report_named("alpha", 0.70, 2.0)};
  const auto dir = testing::scratch("report");
  const auto files = emit_report(reports, dir, {{"seed", 7}});
  CHECK(files.size() == 5);
  for (const char* name : {"table2.csv", "table3.csv", "per_question.csv", "accuracy_vs_latency.svg", "report.json"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
  const auto t2 = read_file(dir / "table2.csv");
  CHECK(t2.rfind("model,accuracy,mean_inference_s,std_inference_s,model_size_b,legs,unanswered,parse_failures,"
                 "llm_extracted\r\n",
                 0) == 0);
  const auto big = t2.find("\r\nbig,0.9000,");
  const auto alpha = t2.find("\r\nalpha,");
  const auto quoted = t2.find("\r\n\"small, quoted \"\"one\"\"\",0.7000,");
  CHECK(big != std::string::npos);
  CHECK(alpha != std::string::npos);
  CHECK(quoted != std::string::npos);
  CHECK(big < alpha);
  CHECK(alpha < quoted);
  const auto pq = read_file(dir / "per_question.csv");
  CHECK(std::count(pq.begin(), pq.end(), '\n') == 1 + 3 * 4);
  const auto json = testing::load_json(dir / "report.json");
  CHECK(json["provenance"]["seed"] == 7);
  CHECK(json["models"][0]["model"] == "big");

  const auto svg = read_file(dir / "accuracy_vs_latency.svg");
  CHECK(svg == render_accuracy_svg(reports));
  std::vector<ModelReport> shuffled{reports[2], reports[0], reports[1]};
  CHECK(render_accuracy_svg(shuffled) == svg);
  CHECK(svg.find("width=\"640\" height=\"420\"") != std::string::npos);
  CHECK_THROWS_AS(emit_report({}, dir), Error);
}
