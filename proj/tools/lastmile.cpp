#include <CLI11.hpp>

#include <iostream>

#include "lastmile/digest.hpp"
#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"
#include "lastmile/pipeline.hpp"
#include "lastmile/serialize.hpp"
#include "lastmile/vrp.hpp"

using namespace lastmile;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Options {
  std::string config;
  std::string out;
  std::string stage;
  std::string model;
  bool mock = false;
  std::optional<int> resolution;
  std::optional<std::uint64_t> seed;

  // File mode, for single stages outside a configured run.
  std::string stops, legs, map, verdicts, labels, output;
  std::size_t vehicles = 1;
  int capacity = 0;
};

void add_run_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "pipeline TOML");
  cmd->add_option("--out", o.out, "output directory (overrides output_dir)");
  cmd->add_option("--model", o.model, "evaluate only this configured model");
  cmd->add_flag("--mock", o.mock, "answer from the bundled mock server fixture");
  cmd->add_option("--resolution", o.resolution, "render resolution override");
  cmd->add_option("--seed", o.seed, "seed override");
}

void emit(const std::string& text, const std::string& output) {
  if (output.empty()) {
    std::cout << text;
  } else {
    write_file(output, text);
  }
}

int solve_file(const Options& o) {
  const auto stops = json::parse(read_file(o.stops)).get<StopSet>();
  Instance inst{build_matrix(stops), stops.demands, o.capacity ? o.capacity : stops.capacity, o.vehicles};
  const auto plan = solve_heuristic(inst, o.seed.value_or(0));
  const auto report = validate(inst, plan);
  if (!report.feasible()) throw Error(ErrorCode::kInfeasible, "plan fails validation");
  emit(json(plan).dump(2) + "\n", o.output);
  return kExitOk;
}

int label_file(const Options& o) {
  const auto features = load_geojson(o.map);
  const auto legs = legs_from_geojson(json::parse(read_file(o.legs)));
  std::vector<GroundTruthLabel> labels;
  for (const auto& leg : legs) labels.push_back(label_leg(leg, features));
  emit(to_jsonl<GroundTruthLabel>(labels), o.output);
  return kExitOk;
}

int score_file(const Options& o) {
  const auto labels = labels_by_leg(from_jsonl<GroundTruthLabel>(read_file(o.labels)));
  const auto verdicts = from_jsonl<Verdict>(read_file(o.verdicts));
  const auto s = score(verdicts, labels);
  std::string csv = "question,tp,fp,tn,fn,accuracy,tpr,fpr,precision,recall\r\n";
  auto row = [&](const std::string& name, const ConfusionMatrix& cm) {
    const auto m = compute_metrics(cm);
    csv += name + "," + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," + std::to_string(cm.tn) + "," +
           std::to_string(cm.fn) + "," + format_metric(m.accuracy) + "," + format_metric(m.tpr) + "," +
           format_metric(m.fpr) + "," + format_metric(m.precision) + "," + format_metric(m.recall) + "\r\n";
  };
  for (std::size_t q = 0; q < kQuestionCount; ++q) row(std::string(kQuestions[q].key), s.per_question[q]);
  row("micro", s.micro);
  emit(csv, o.output);
  return kExitOk;
}

int run_pipeline(const Options& o, std::optional<Stage> single, Stage last) {
  if (o.config.empty()) throw Error(ErrorCode::kConfigError, "--config is required");
  auto cfg = load_config(o.config);
  if (!o.out.empty()) cfg.out_dir = fs::absolute(o.out);
  if (o.seed) cfg.seed = *o.seed;
  if (o.resolution) {
    if (*o.resolution < kMinResolution || *o.resolution > kMaxResolution) {
      throw Error(ErrorCode::kConfigError, "--resolution out of range");
    }
    cfg.resolution = *o.resolution;
  }
  Pipeline p(std::move(cfg), o.mock, o.model.empty() ? std::nullopt : std::optional(o.model));
  auto report = [](const StageResult& r) {
    std::cerr << to_string(r.stage) << ": " << (r.cached ? "cached" : "ran") << " (" << r.outputs.size()
              << " artifacts)\n";
  };
  if (single) {
    report(p.run_stage(*single));
  } else {
    p.run_until(last, report);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Last-mile route generation and map-reading evaluation pipeline"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "run every stage in order (resumable)");
  add_run_flags(run, o);
  run->add_option("--stage", o.stage, "stop after this stage");

  std::vector<std::pair<Stage, CLI::App*>> stage_cmds;
  for (auto s : kAllStages) {
    auto* cmd = app.add_subcommand(std::string(to_string(s)), "run the " + std::string(to_string(s)) + " stage only");
    add_run_flags(cmd, o);
    stage_cmds.emplace_back(s, cmd);
  }
  auto* solve = stage_cmds[2].second;
  solve->add_option("--stops", o.stops, "StopSet JSON (file mode)");
  solve->add_option("--vehicles", o.vehicles, "vehicle count in file mode");
  solve->add_option("--capacity", o.capacity, "capacity override in file mode");
  solve->add_option("--output", o.output, "write here instead of stdout");
  auto* label = stage_cmds[5].second;
  label->add_option("--legs", o.legs, "legs GeoJSON (file mode)");
  label->add_option("--map", o.map, "map GeoJSON (file mode)");
  label->add_option("--output", o.output, "write here instead of stdout");
  auto* score_cmd = stage_cmds[7].second;
  score_cmd->add_option("--verdicts", o.verdicts, "verdicts JSONL (file mode)");
  score_cmd->add_option("--labels", o.labels, "labels JSONL (file mode)");
  score_cmd->add_option("--output", o.output, "write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      Stage last = Stage::kReport;
      if (!o.stage.empty()) {
        const auto s = stage_from_string(o.stage);
        if (!s) throw Error(ErrorCode::kConfigError, "unknown stage '" + o.stage + "'");
        last = *s;
      }
      return run_pipeline(o, std::nullopt, last);
    }
    if (solve->parsed() && !o.stops.empty()) return solve_file(o);
    if (label->parsed() && (!o.legs.empty() || !o.map.empty())) {
      if (o.legs.empty() || o.map.empty()) throw Error(ErrorCode::kConfigError, "label needs both --legs and --map");
      return label_file(o);
    }
    if (score_cmd->parsed() && (!o.verdicts.empty() || !o.labels.empty())) {
      if (o.verdicts.empty() || o.labels.empty()) {
        throw Error(ErrorCode::kConfigError, "score needs both --verdicts and --labels");
      }
      return score_file(o);
    }
    for (const auto& [s, cmd] : stage_cmds) {
      if (cmd->parsed()) return run_pipeline(o, s, s);
    }
  } catch (const Error& e) {
    std::cerr << "lastmile: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfigError ? kExitConfig : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "lastmile: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
