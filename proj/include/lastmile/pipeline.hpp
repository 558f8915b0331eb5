#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lastmile/evaluation.hpp"
#include "lastmile/llm_client.hpp"
#include "lastmile/oracle.hpp"
#include "lastmile/sampling.hpp"

namespace lastmile {

struct ModelConfig {
  std::string name;
  ModelEndpoint endpoint;
  std::optional<double> params_billions;
};

struct PipelineConfig {
  std::filesystem::path source;  // the TOML file; relative paths resolve against its directory
  std::filesystem::path map_path;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> style_path;
  std::optional<std::filesystem::path> mock_fixture;
  std::uint64_t seed = 0;

  double densify_m = 25.0;
  std::size_t clusters = 50;  // K
  SampleConfig sampling;      // seed is replaced per route
  std::size_t routes = 10;

  std::size_t vehicle_count = 1;
  int capacity = 0;  // 0: the StopSet's own 10n rule

  int resolution = 1024;
  OracleBuffers buffers;

  std::vector<ModelConfig> models;
  std::optional<ModelConfig> extractor;
  std::size_t parallelism = 4;
  QuestionMode mode = QuestionMode::kGrouped;
  UnansweredPolicy unanswered = UnansweredPolicy::kAllFalse;
};

// Throws kConfigError for bad syntax, missing keys, out-of-range values or
// referenced files that do not exist. The seed is mandatory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir);

enum class Stage { kIngest, kSample, kSolve, kExpand, kRender, kLabel, kEvaluate, kScore, kReport };

inline constexpr Stage kAllStages[] = {Stage::kIngest, Stage::kSample,   Stage::kSolve,
                                       Stage::kExpand, Stage::kRender,   Stage::kLabel,
                                       Stage::kEvaluate, Stage::kScore,  Stage::kReport};

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);

struct StageResult {
  Stage stage;
  bool cached = false;
  std::vector<std::string> outputs;  // relative to the output directory
};

// Digest of an artifact with run-dependent timing masked: JSON keys
// timestamp, latency_s, mean_s, std_s and elapsed_s; CSV columns named
// *_inference_s; the latency axis of the SVG plot. Transcript lines are
// compared as a set, since they land in completion order.
std::string artifact_digest(const std::filesystem::path& path);

// Every artifact under `out_dir` except the manifest and the cache,
// keyed by relative path.
nlohmann::json artifact_digests(const std::filesystem::path& out_dir);

using ProgressFn = std::function<void(const StageResult&)>;

class Pipeline {
 public:
  // `mock`: evaluate against a local MockServer loaded from the config's
  // mock fixture instead of the configured endpoints.
  Pipeline(PipelineConfig cfg, bool mock, std::optional<std::string> only_model = std::nullopt);

  // Stages skip when their recorded input digest and output digests match.
  // Throws Error on stage failure, naming the artifact involved.
  StageResult run_stage(Stage s);
  std::vector<StageResult> run_until(Stage last, const ProgressFn& progress = {});

  const PipelineConfig& config() const noexcept { return cfg_; }

 private:
  std::string inputs_digest(Stage s) const;
  void execute(Stage s, std::vector<std::string>& outputs);
  void write_manifest(const std::vector<StageResult>& results) const;
  std::vector<const ModelConfig*> selected_models() const;

  PipelineConfig cfg_;
  bool mock_;
  std::optional<std::string> only_model_;
};

// "gemma3:4b" -> "gemma3_4b"
std::string file_stem_for(std::string_view model_name);

}  // namespace lastmile
