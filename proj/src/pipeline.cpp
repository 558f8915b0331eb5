#include "lastmile/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "lastmile/digest.hpp"
#include "lastmile/distance.hpp"
#include "lastmile/error.hpp"
#include "lastmile/extraction.hpp"
#include "lastmile/mock_server.hpp"
#include "lastmile/render.hpp"
#include "lastmile/rng.hpp"
#include "lastmile/router.hpp"
#include "lastmile/serialize.hpp"
#include "lastmile/vrp.hpp"

namespace lastmile {

namespace fs = std::filesystem;

namespace {

Error config_error(const std::string& msg) { return Error(ErrorCode::kConfigError, msg); }

using KeySet = std::set<std::string>;

void check_keys(const toml::table& t, const KeySet& allowed, const std::string& where) {
  for (const auto& [k, v] : t) {
    if (!allowed.count(std::string(k.str()))) throw config_error("unknown key '" + std::string(k.str()) + "' in " + where);
  }
}

const toml::table* sub_table(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  if (!node->is_table()) throw config_error(std::string("[") + name + "] must be a table");
  return node->as_table();
}

template <typename T>
std::optional<T> get(const toml::table* t, const char* key, const std::string& where) {
  if (!t) return std::nullopt;
  const auto* node = t->get(key);
  if (!node) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node->value<double>()) return *v;  // integers widen
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) return *v;
  } else {
    if (node->is_integer()) return static_cast<T>(*node->value<std::int64_t>());
  }
  throw config_error(where + "." + key + " has the wrong type");
}

std::size_t positive(std::optional<std::int64_t> v, std::size_t fallback, const std::string& name) {
  if (!v) return fallback;
  if (*v < 1) throw config_error(name + " must be >= 1");
  return static_cast<std::size_t>(*v);
}

fs::path existing(const fs::path& base, const std::string& rel, const std::string& what) {
  const auto p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw config_error(what + " '" + p.string() + "' does not exist");
  return p;
}

ModelConfig parse_model(const toml::table& t, const std::string& where) {
  check_keys(t,
             {"name", "base_url", "params_b", "temperature", "top_k", "max_tokens", "timeout_s", "max_retries",
              "backoff_s", "api_key_env"},
             where);
  ModelConfig m;
  const auto name = get<std::string>(&t, "name", where);
  const auto url = get<std::string>(&t, "base_url", where);
  if (!name || name->empty()) throw config_error(where + ".name is required");
  if (!url) throw config_error(where + ".base_url is required");
  m.name = *name;
  m.endpoint.model = *name;
  m.endpoint.base_url = *url;
  m.params_billions = get<double>(&t, "params_b", where);
  m.endpoint.temperature = get<double>(&t, "temperature", where).value_or(m.endpoint.temperature);
  m.endpoint.top_k = get<int>(&t, "top_k", where).value_or(m.endpoint.top_k);
  m.endpoint.max_tokens = get<int>(&t, "max_tokens", where).value_or(m.endpoint.max_tokens);
  m.endpoint.timeout_s = get<double>(&t, "timeout_s", where).value_or(m.endpoint.timeout_s);
  m.endpoint.max_retries = get<int>(&t, "max_retries", where).value_or(m.endpoint.max_retries);
  m.endpoint.backoff_initial_s = get<double>(&t, "backoff_s", where).value_or(m.endpoint.backoff_initial_s);
  if (const auto env = get<std::string>(&t, "api_key_env", where)) {
    if (const char* key = std::getenv(env->c_str())) m.endpoint.api_key = key;
  }
  try {
    check_endpoint(m.endpoint);
  } catch (const Error& e) {
    throw config_error(where + ": " + e.detail());
  }
  return m;
}

}  // namespace

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML line " << e.source().begin.line << ": " << e.description();
    throw config_error(msg.str());
  }
  check_keys(root,
             {"seed", "output_dir", "map", "sampling", "solver", "render", "oracle", "evaluate", "models", "extractor"},
             "config");
  PipelineConfig c;
  c.source = base_dir;

  const auto seed = get<std::int64_t>(&root, "seed", "config");
  if (!seed) throw config_error("seed is required");
  if (*seed < 0) throw config_error("seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(*seed);
  c.out_dir = base_dir / get<std::string>(&root, "output_dir", "config").value_or("out");

  const auto* map = sub_table(root, "map");
  if (!map) throw config_error("[map] is required");
  check_keys(*map, {"path", "densify_m"}, "[map]");
  const auto map_path = get<std::string>(map, "path", "map");
  if (!map_path) throw config_error("map.path is required");
  c.map_path = existing(base_dir, *map_path, "map");
  c.densify_m = get<double>(map, "densify_m", "map").value_or(c.densify_m);
  if (!(c.densify_m > 0)) throw config_error("map.densify_m must be positive");

  const auto* s = sub_table(root, "sampling");
  if (s) check_keys(*s, {"clusters", "clusters_selected", "n_min", "n_max", "per_cluster_cap", "routes"}, "[sampling]");
  c.clusters = positive(get<std::int64_t>(s, "clusters", "sampling"), c.clusters, "sampling.clusters");
  c.sampling.m = positive(get<std::int64_t>(s, "clusters_selected", "sampling"), c.sampling.m, "sampling.clusters_selected");
  c.sampling.n_min = positive(get<std::int64_t>(s, "n_min", "sampling"), c.sampling.n_min, "sampling.n_min");
  c.sampling.n_max = positive(get<std::int64_t>(s, "n_max", "sampling"), c.sampling.n_max, "sampling.n_max");
  c.sampling.per_cluster_cap =
      positive(get<std::int64_t>(s, "per_cluster_cap", "sampling"), c.sampling.per_cluster_cap, "sampling.per_cluster_cap");
  c.routes = positive(get<std::int64_t>(s, "routes", "sampling"), c.routes, "sampling.routes");
  if (c.sampling.n_min > c.sampling.n_max) throw config_error("sampling.n_min exceeds n_max");
  if (c.sampling.m > c.clusters) throw config_error("sampling.clusters_selected exceeds clusters");

  const auto* sv = sub_table(root, "solver");
  if (sv) check_keys(*sv, {"vehicle_count", "capacity"}, "[solver]");
  c.vehicle_count = positive(get<std::int64_t>(sv, "vehicle_count", "solver"), c.vehicle_count, "solver.vehicle_count");
  c.capacity = static_cast<int>(get<std::int64_t>(sv, "capacity", "solver").value_or(0));
  if (c.capacity < 0) throw config_error("solver.capacity must be >= 0");

  const auto* r = sub_table(root, "render");
  if (r) check_keys(*r, {"resolution", "style"}, "[render]");
  c.resolution = static_cast<int>(get<std::int64_t>(r, "resolution", "render").value_or(c.resolution));
  if (c.resolution < kMinResolution || c.resolution > kMaxResolution) {
    throw config_error("render.resolution must be in [" + std::to_string(kMinResolution) + ", " +
                       std::to_string(kMaxResolution) + "]");
  }
  if (const auto style = get<std::string>(r, "style", "render")) c.style_path = existing(base_dir, *style, "style");

  const auto* o = sub_table(root, "oracle");
  if (o) check_keys(*o, {"water_m", "railway_m", "pedestrian_m", "park_forest_m"}, "[oracle]");
  c.buffers.water_m = get<double>(o, "water_m", "oracle").value_or(c.buffers.water_m);
  c.buffers.railway_m = get<double>(o, "railway_m", "oracle").value_or(c.buffers.railway_m);
  c.buffers.pedestrian_m = get<double>(o, "pedestrian_m", "oracle").value_or(c.buffers.pedestrian_m);
  c.buffers.park_forest_m = get<double>(o, "park_forest_m", "oracle").value_or(c.buffers.park_forest_m);
  for (auto cls : {FeatureClass::kWater, FeatureClass::kRailway, FeatureClass::kPedestrian, FeatureClass::kParkForest}) {
    if (!(c.buffers.of(cls) >= 0)) throw config_error("oracle buffers must be >= 0");
  }

  const auto* e = sub_table(root, "evaluate");
  if (e) check_keys(*e, {"parallelism", "mode", "unanswered", "mock_fixture"}, "[evaluate]");
  c.parallelism = positive(get<std::int64_t>(e, "parallelism", "evaluate"), c.parallelism, "evaluate.parallelism");
  const auto mode = get<std::string>(e, "mode", "evaluate").value_or("grouped");
  if (mode == "grouped") c.mode = QuestionMode::kGrouped;
  else if (mode == "per-question") c.mode = QuestionMode::kPerQuestion;
  else throw config_error("evaluate.mode must be \"grouped\" or \"per-question\"");
  const auto policy = get<std::string>(e, "unanswered", "evaluate").value_or("all-false");
  if (policy == "all-false") c.unanswered = UnansweredPolicy::kAllFalse;
  else if (policy == "exclude") c.unanswered = UnansweredPolicy::kExclude;
  else throw config_error("evaluate.unanswered must be \"all-false\" or \"exclude\"");
  if (const auto mock = get<std::string>(e, "mock_fixture", "evaluate")) {
    c.mock_fixture = existing(base_dir, *mock, "mock fixture");
  }

  if (const auto* models = root.get("models")) {
    const auto* arr = models->as_array();
    if (!arr) throw config_error("models must be an array of tables ([[models]])");
    std::set<std::string> names, stems;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (!t) throw config_error("models[" + std::to_string(i) + "] must be a table");
      auto m = parse_model(*t, "models[" + std::to_string(i) + "]");
      if (!names.insert(m.name).second) throw config_error("duplicate model name '" + m.name + "'");
      if (!stems.insert(file_stem_for(m.name)).second) {
        throw config_error("model names '" + m.name + "' collide after filename sanitising");
      }
      c.models.push_back(std::move(m));
    }
  }
  if (const auto* x = sub_table(root, "extractor")) c.extractor = parse_model(*x, "[extractor]");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw config_error(e.detail());
  }
  const auto base = fs::absolute(path).parent_path();
  auto cfg = parse_config(text, base);
  cfg.source = fs::absolute(path);
  return cfg;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kSample: return "sample";
    case Stage::kSolve: return "solve";
    case Stage::kExpand: return "expand";
    case Stage::kRender: return "render";
    case Stage::kLabel: return "label";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kScore: return "score";
    case Stage::kReport: return "report";
  }
  return "?";
}

std::optional<Stage> stage_from_string(std::string_view s) {
  for (auto st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::string file_stem_for(std::string_view name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

// --- timing-masked digests -------------------------------------------------

namespace {

const std::set<std::string> kTimingKeys{"timestamp", "latency_s", "mean_s", "std_s", "elapsed_s"};

void strip_timing(json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (kTimingKeys.count(it.key())) {
        it = j.erase(it);
      } else {
        strip_timing(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& x : j) strip_timing(x);
  }
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// RFC 4180 fields of one record; quotes kept so re-joining is lossless.
std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.emplace_back();
      continue;
    }
    out.back() += c;
  }
  return out;
}

std::string masked_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) return text;
  const auto header = csv_fields(lines[0]);
  std::vector<bool> mask(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    mask[i] = h.size() >= 12 && h.compare(h.size() - 12, 12, "_inference_s") == 0;
  }
  std::string out;
  for (const auto& line : lines) {
    auto fields = csv_fields(line);
    for (std::size_t i = 0; i < fields.size() && i < mask.size(); ++i) {
      if (mask[i] && &line != &lines[0]) fields[i] = "*";
    }
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
    out += '\n';
  }
  return out;
}

std::string masked_svg(const std::string& text) {
  static const std::regex kX(R"re(\b(cx|x)="[^"]*")re");
  static const std::regex kTick(R"re((<text class="xtick"[^>]*>)[^<]*)re");
  return std::regex_replace(std::regex_replace(text, kX, "$1=\"*\""), kTick, "$1*");
}

}  // namespace

std::string artifact_digest(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json" || ext == ".geojson") {
    auto j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) return sha256_file(path);
    strip_timing(j);
    return sha256_hex(j.dump());
  }
  if (ext == ".jsonl") {
    std::vector<std::string> lines;
    for (const auto& line : split_lines(read_file(path))) {
      if (line.empty()) continue;
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded()) return sha256_file(path);
      strip_timing(j);
      lines.push_back(j.dump());
    }
    // Transcripts are appended as calls finish.
    if (path.parent_path().filename() == "transcripts") std::sort(lines.begin(), lines.end());
    std::string canon;
    for (const auto& l : lines) canon += l + "\n";
    return sha256_hex(canon);
  }
  if (ext == ".csv") return sha256_hex(masked_csv(read_file(path)));
  if (ext == ".svg") return sha256_hex(masked_svg(read_file(path)));
  return sha256_file(path);
}

json artifact_digests(const fs::path& out_dir) {
  std::map<std::string, std::string> sorted;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out_dir).generic_string();
    if (rel == "manifest.json" || rel.rfind(".cache/", 0) == 0) continue;
    sorted[rel] = artifact_digest(entry.path());
  }
  return json(sorted);
}

// --- pipeline ---------------------------------------------------------------

namespace {

std::string route_id(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "route%03zu", r);
  return buf;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedFile, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

// Sorted regular files directly under `dir` with the given extension.
std::vector<fs::path> files_in(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json outcome_json(const LegOutcome& o) {
  json j{{"leg_id", o.leg_id},
         {"verdict", o.verdict ? json(*o.verdict) : json(nullptr)},
         {"failure", o.failure},
         {"endpoint_error", o.endpoint_error},
         {"parse_failed", o.parse_failed}};
  return j;
}

LegOutcome outcome_from_json(const json& j) {
  LegOutcome o;
  o.leg_id = j.at("leg_id").get<std::string>();
  if (!j.at("verdict").is_null()) o.verdict = j["verdict"].get<Verdict>();
  o.failure = j.value("failure", "");
  o.endpoint_error = j.value("endpoint_error", false);
  o.parse_failed = j.value("parse_failed", false);
  return o;
}

ConfusionMatrix cm_from_json(const json& j) {
  return {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("tn").get<std::size_t>(),
          j.at("fn").get<std::size_t>()};
}

std::string metrics_csv(const ScoreResult& s) {
  std::string out = "question,tp,fp,tn,fn,accuracy,tpr,fpr,precision,recall\r\n";
  auto row = [&](const std::string& name, const ConfusionMatrix& cm) {
    const auto m = compute_metrics(cm);
    out += name + "," + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," + std::to_string(cm.tn) + "," +
           std::to_string(cm.fn) + "," + format_metric(m.accuracy) + "," + format_metric(m.tpr) + "," +
           format_metric(m.fpr) + "," + format_metric(m.precision) + "," + format_metric(m.recall) + "\r\n";
  };
  for (std::size_t q = 0; q < kQuestionCount; ++q) row(std::string(kQuestions[q].key), s.per_question[q]);
  row("micro", s.micro);
  return out;
}

json endpoint_json(const ModelConfig& m, bool mock) {
  const auto& e = m.endpoint;
  json j{{"name", m.name},
         {"params_b", m.params_billions ? json(*m.params_billions) : json(nullptr)},
         {"temperature", e.temperature},
         {"top_k", e.top_k},
         {"max_tokens", e.max_tokens},
         {"max_retries", e.max_retries}};
  // The mock's port changes every run; its fixture digest stands in.
  if (!mock) j["base_url"] = e.base_url;
  return j;
}

StyleSheet load_style(const PipelineConfig& c) {
  if (!c.style_path) return default_style();
  StyleSheet s;
  try {
    s = read_json(*c.style_path).get<StyleSheet>();
  } catch (const json::exception& e) {
    throw config_error(c.style_path->string() + ": " + e.what());
  }
  try {
    check_style(s);
  } catch (const Error& e) {
    throw config_error(c.style_path->string() + ": " + e.detail());
  }
  return s;
}

RoadGraph road_graph(const FeatureSet& features, double densify_m) {
  return extract_road_graph(densify_roads(features, densify_m));
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg, bool mock, std::optional<std::string> only_model)
    : cfg_(std::move(cfg)), mock_(mock), only_model_(std::move(only_model)) {
  if (mock_ && !cfg_.mock_fixture) throw config_error("--mock needs evaluate.mock_fixture in the config");
  if (only_model_) {
    const bool known = std::any_of(cfg_.models.begin(), cfg_.models.end(),
                                   [&](const ModelConfig& m) { return m.name == *only_model_; });
    if (!known) throw config_error("no model named '" + *only_model_ + "' in the config");
  }
}

std::vector<const ModelConfig*> Pipeline::selected_models() const {
  std::vector<const ModelConfig*> out;
  for (const auto& m : cfg_.models) {
    if (!only_model_ || m.name == *only_model_) out.push_back(&m);
  }
  return out;
}

std::string Pipeline::inputs_digest(Stage s) const {
  const auto& out = cfg_.out_dir;
  json inputs = json::object();
  auto add_file = [&](const fs::path& p) {
    inputs[fs::relative(p, out).generic_string()] = fs::exists(p) ? sha256_file(p) : "missing";
  };
  auto add_dir = [&](const char* dir, const char* ext) {
    for (const auto& p : files_in(out / dir, ext)) add_file(p);
  };
  json params = json::object();
  switch (s) {
    case Stage::kIngest:
      inputs["map"] = sha256_file(cfg_.map_path);
      break;
    case Stage::kSample:
      add_file(out / "features.json");
      params = {{"seed", cfg_.seed},          {"densify_m", cfg_.densify_m},     {"clusters", cfg_.clusters},
                {"m", cfg_.sampling.m},       {"n_min", cfg_.sampling.n_min},    {"n_max", cfg_.sampling.n_max},
                {"cap", cfg_.sampling.per_cluster_cap}, {"routes", cfg_.routes}};
      break;
    case Stage::kSolve:
      add_dir("stops", ".json");
      params = {{"seed", cfg_.seed}, {"vehicle_count", cfg_.vehicle_count}, {"capacity", cfg_.capacity}};
      break;
    case Stage::kExpand:
      add_file(out / "features.json");
      add_dir("stops", ".json");
      add_dir("plans", ".json");
      params = {{"densify_m", cfg_.densify_m}};
      break;
    case Stage::kRender:
      add_file(out / "features.json");
      add_dir("legs", ".geojson");
      params = {{"resolution", cfg_.resolution}, {"style", style_digest(load_style(cfg_))}};
      break;
    case Stage::kLabel:
      add_file(out / "features.json");
      add_dir("legs", ".geojson");
      params = {{"buffers", cfg_.buffers}};
      break;
    case Stage::kEvaluate: {
      add_dir("legs", ".geojson");
      add_dir("images", ".png");
      json models = json::array();
      for (const auto* m : selected_models()) models.push_back(endpoint_json(*m, mock_));
      params = {{"models", models},
                {"extractor", cfg_.extractor ? endpoint_json(*cfg_.extractor, mock_) : json(nullptr)},
                {"prompt", prompt_digest()},
                {"mode", cfg_.mode == QuestionMode::kGrouped ? "grouped" : "per-question"},
                {"mock", mock_ ? json(sha256_file(*cfg_.mock_fixture)) : json(false)}};
      break;
    }
    case Stage::kScore:
      add_file(out / "labels.jsonl");
      add_dir("outcomes", ".jsonl");
      params = {{"unanswered", cfg_.unanswered == UnansweredPolicy::kAllFalse ? "all-false" : "exclude"}};
      break;
    case Stage::kReport: {
      add_dir("scores", ".json");
      add_dir("outcomes", ".jsonl");
      for (const auto& p : files_in(out / "responses", ".jsonl")) inputs[fs::relative(p, out).generic_string()] = artifact_digest(p);
      json models = json::array();
      for (const auto* m : selected_models()) models.push_back(endpoint_json(*m, mock_));
      params = {{"models", models}, {"style", style_digest(load_style(cfg_))}, {"buffers", cfg_.buffers},
                {"seed", cfg_.seed}, {"mock", mock_}};
      break;
    }
  }
  return sha256_hex(json{{"stage", std::string(to_string(s))}, {"inputs", inputs}, {"params", params}}.dump());
}

StageResult Pipeline::run_stage(Stage s) {
  const auto& out = cfg_.out_dir;
  fs::create_directories(out / ".cache");
  const auto cache_path = out / ".cache" / (std::string(to_string(s)) + ".json");
  const auto digest = inputs_digest(s);

  StageResult result{s, false, {}};
  if (fs::exists(cache_path)) {
    const auto cache = json::parse(read_file(cache_path), nullptr, false);
    if (!cache.is_discarded() && cache.value("inputs", "") == digest) {
      bool intact = true;
      for (const auto& [rel, d] : cache.at("outputs").items()) {
        if (!fs::exists(out / rel) || sha256_file(out / rel) != d.get<std::string>()) {
          intact = false;
          break;
        }
        result.outputs.push_back(rel);
      }
      if (intact) {
        result.cached = true;
        return result;
      }
      result.outputs.clear();
    }
  }

  fs::remove(cache_path);
  try {
    execute(s, result.outputs);
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + std::string(to_string(s)) + " failed: " + e.detail());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kIoError, "stage " + std::string(to_string(s)) + " failed: " + e.what());
  }
  json outputs = json::object();
  for (const auto& rel : result.outputs) outputs[rel] = sha256_file(out / rel);
  write_json(cache_path, {{"inputs", digest}, {"outputs", outputs}});
  return result;
}

std::vector<StageResult> Pipeline::run_until(Stage last, const ProgressFn& progress) {
  std::vector<StageResult> results;
  for (auto s : kAllStages) {
    results.push_back(run_stage(s));
    if (progress) progress(results.back());
    if (s == last) break;
  }
  write_manifest(results);
  return results;
}

void Pipeline::write_manifest(const std::vector<StageResult>& results) const {
  json stages = json::array();
  for (const auto& r : results) {
    stages.push_back({{"stage", std::string(to_string(r.stage))},
                      {"status", r.cached ? "cached" : "ran"},
                      {"outputs", r.outputs.size()}});
  }
  write_json(cfg_.out_dir / "manifest.json",
             {{"seed", cfg_.seed}, {"mock", mock_}, {"stages", stages}, {"artifacts", artifact_digests(cfg_.out_dir)}});
}

void Pipeline::execute(Stage s, std::vector<std::string>& outputs) {
  const auto& out = cfg_.out_dir;
  auto emit = [&](const fs::path& p) { outputs.push_back(fs::relative(p, out).generic_string()); };
  auto fresh_dir = [&](const char* name) {
    fs::remove_all(out / name);
    fs::create_directories(out / name);
    return out / name;
  };
  auto need = [&](const fs::path& p) {
    if (!fs::exists(p)) {
      throw Error(ErrorCode::kIoError, "missing input artifact " + fs::relative(p, out).generic_string() +
                                           " (run the earlier stages first)");
    }
    return p;
  };
  auto features = [&] { return read_json(need(out / "features.json")).get<FeatureSet>(); };
  auto stop_files = [&] {
    auto f = files_in(out / "stops", ".json");
    if (f.empty()) need(out / "stops");
    return f;
  };
  auto legs_of = [&](const fs::path& stops_file) {
    const auto p = need(out / "legs" / (stops_file.stem().string() + ".geojson"));
    try {
      return legs_from_geojson(read_json(p));
    } catch (const Error& e) {
      throw Error(e.code(), fs::relative(p, out).generic_string() + ": " + e.detail());
    }
  };
  auto all_legs = [&] {
    std::vector<Leg> legs;
    for (const auto& f : stop_files()) {
      auto part = legs_of(f);
      legs.insert(legs.end(), part.begin(), part.end());
    }
    return legs;
  };

  switch (s) {
    case Stage::kIngest: {
      const auto fset = load_geojson(cfg_.map_path);
      write_json(out / "features.json", fset);
      emit(out / "features.json");
      break;
    }
    case Stage::kSample: {
      const auto fset = features();
      const auto g = road_graph(fset, cfg_.densify_m);
      const auto nodes = g.nodes();
      const auto clusters = cluster_points({nodes.begin(), nodes.end()}, cfg_.clusters, cfg_.seed);
      const auto dir = fresh_dir("stops");
      for (std::size_t r = 0; r < cfg_.routes; ++r) {
        auto sc = cfg_.sampling;
        sc.seed = derive_seed(cfg_.seed, r);
        const auto path = dir / (route_id(r) + ".json");
        try {
          write_json(path, two_stage_sample(clusters, sc));
        } catch (const Error& e) {
          throw Error(e.code(), fs::relative(path, out).generic_string() + ": " + e.detail());
        }
        emit(path);
      }
      break;
    }
    case Stage::kSolve: {
      const auto dir = fresh_dir("plans");
      for (const auto& f : stop_files()) {
        const auto path = dir / f.filename();
        try {
          const auto stops = read_json(f).get<StopSet>();
          Instance inst{build_matrix(stops), stops.demands, cfg_.capacity ? cfg_.capacity : stops.capacity,
                        cfg_.vehicle_count};
          const auto plan = solve_heuristic(inst, cfg_.seed);
          const auto report = validate(inst, plan);
          if (!report.feasible()) {
            throw Error(ErrorCode::kInfeasible, std::to_string(report.violations.size()) + " constraint violations (" +
                                                    to_string(report.violations[0].kind) + ")");
          }
          write_json(path, plan);
        } catch (const Error& e) {
          throw Error(e.code(), fs::relative(path, out).generic_string() + ": " + e.detail());
        }
        emit(path);
      }
      break;
    }
    case Stage::kExpand: {
      const auto g = road_graph(features(), cfg_.densify_m);
      const auto dir = fresh_dir("legs");
      for (const auto& f : stop_files()) {
        const auto path = dir / (f.stem().string() + ".geojson");
        try {
          const auto stops = read_json(f).get<StopSet>();
          const auto plan = read_json(need(out / "plans" / f.filename())).get<RoutePlan>();
          write_json(path, legs_to_geojson(expand(g, stops, plan, f.stem().string())));
        } catch (const Error& e) {
          throw Error(e.code(), fs::relative(path, out).generic_string() + ": " + e.detail());
        }
        emit(path);
      }
      break;
    }
    case Stage::kRender: {
      const auto fset = features();
      const auto style = load_style(cfg_);
      const auto dir = fresh_dir("images");
      for (const auto& f : stop_files()) {
        const auto legs = legs_of(f);
        const auto overview = dir / (f.stem().string() + ".png");
        write_png(render_plan(fset, legs, style, cfg_.resolution), overview);
        emit(overview);
        for (const auto& leg : legs) {
          const auto path = dir / (leg.id + ".png");
          write_png(render_leg(fset, leg, style, cfg_.resolution), path);
          emit(path);
        }
      }
      break;
    }
    case Stage::kLabel: {
      const auto fset = features();
      std::vector<GroundTruthLabel> labels;
      for (const auto& leg : all_legs()) labels.push_back(label_leg(leg, fset, cfg_.buffers));
      write_file(out / "labels.jsonl", to_jsonl<GroundTruthLabel>(labels));
      emit(out / "labels.jsonl");
      break;
    }
    case Stage::kEvaluate: {
      std::vector<LegImage> images;
      for (const auto& leg : all_legs()) {
        const auto png = read_file(need(out / "images" / (leg.id + ".png")));
        images.push_back({leg.id, {png.begin(), png.end()}});
      }
      std::unique_ptr<MockServer> server;
      if (mock_) {
        server = std::make_unique<MockServer>(MockFixture::load(*cfg_.mock_fixture));
        server->start();
      }
      auto resolve_endpoint = [&](const ModelConfig& m) {
        auto ep = m.endpoint;
        if (server) ep.base_url = server->base_url();
        return ep;
      };
      std::optional<ModelEndpoint> extractor;
      if (cfg_.extractor) extractor = resolve_endpoint(*cfg_.extractor);

      const auto responses_dir = fresh_dir("responses");
      const auto outcomes_dir = fresh_dir("outcomes");
      const auto transcripts_dir = fresh_dir("transcripts");
      for (const auto* m : selected_models()) {
        const auto stem = file_stem_for(m->name);
        Transcript transcript(transcripts_dir / (stem + ".jsonl"));
        const auto responses = batch_evaluate(resolve_endpoint(*m), images, cfg_.parallelism, cfg_.mode, &transcript);
        write_file(responses_dir / (stem + ".jsonl"), to_jsonl<RawResponse>(responses));
        std::string lines;
        for (const auto& r : responses) {
          lines += outcome_json(resolve_response(r, extractor ? &*extractor : nullptr, &transcript)).dump() + "\n";
        }
        write_file(outcomes_dir / (stem + ".jsonl"), lines);
        emit(responses_dir / (stem + ".jsonl"));
        emit(outcomes_dir / (stem + ".jsonl"));
        emit(transcripts_dir / (stem + ".jsonl"));
      }
      break;
    }
    case Stage::kScore: {
      const auto labels = labels_by_leg(from_jsonl<GroundTruthLabel>(read_file(need(out / "labels.jsonl"))));
      const auto dir = fresh_dir("scores");
      for (const auto* m : selected_models()) {
        const auto stem = file_stem_for(m->name);
        std::vector<LegOutcome> outcomes;
        for (const auto& line : split_lines(read_file(need(out / "outcomes" / (stem + ".jsonl"))))) {
          if (!line.empty()) outcomes.push_back(outcome_from_json(json::parse(line)));
        }
        const auto scored = score(outcomes, labels, cfg_.unanswered);
        json per_question = json::object();
        for (std::size_t q = 0; q < kQuestionCount; ++q) {
          per_question[std::string(kQuestions[q].key)] = scored.per_question[q];
        }
        write_json(dir / (stem + ".json"), {{"model", m->name},
                                            {"counts", scored.micro},
                                            {"per_question", per_question},
                                            {"metrics", compute_metrics(scored.micro)},
                                            {"scored_legs", scored.scored_legs},
                                            {"unanswered", scored.unanswered}});
        write_file(dir / (stem + ".csv"), metrics_csv(scored));
        emit(dir / (stem + ".json"));
        emit(dir / (stem + ".csv"));
      }
      break;
    }
    case Stage::kReport: {
      std::vector<ModelReport> reports;
      for (const auto* m : selected_models()) {
        const auto stem = file_stem_for(m->name);
        const auto sj = read_json(need(out / "scores" / (stem + ".json")));
        ScoreResult scored;
        scored.micro = cm_from_json(sj.at("counts"));
        for (std::size_t q = 0; q < kQuestionCount; ++q) {
          scored.per_question[q] = cm_from_json(sj.at("per_question").at(std::string(kQuestions[q].key)));
        }
        scored.scored_legs = sj.at("scored_legs").get<std::size_t>();
        scored.unanswered = sj.at("unanswered").get<std::size_t>();
        const auto responses = from_jsonl<RawResponse>(read_file(need(out / "responses" / (stem + ".jsonl"))));
        std::vector<LegOutcome> outcomes;
        for (const auto& line : split_lines(read_file(need(out / "outcomes" / (stem + ".jsonl"))))) {
          if (!line.empty()) outcomes.push_back(outcome_from_json(json::parse(line)));
        }
        reports.push_back(make_report(m->name, m->params_billions, scored, latency_stats(responses), outcomes));
      }
      if (reports.empty()) throw Error(ErrorCode::kInvalidArgument, "no models configured");
      json route_seeds = json::array();
      for (std::size_t r = 0; r < cfg_.routes; ++r) route_seeds.push_back(derive_seed(cfg_.seed, r));
      const json provenance{{"seed", cfg_.seed},
                            {"route_seeds", route_seeds},
                            {"map_sha256", sha256_file(cfg_.map_path)},
                            {"prompt_sha256", prompt_digest()},
                            {"style_sha256", style_digest(load_style(cfg_))},
                            {"buffers_sha256", sha256_hex(json(cfg_.buffers).dump())},
                            {"buffers", cfg_.buffers},
                            {"resolution", cfg_.resolution},
                            {"mock", mock_},
                            {"mock_fixture_sha256", mock_ ? json(sha256_file(*cfg_.mock_fixture)) : json(nullptr)}};
      const auto dir = fresh_dir("report");
      for (const auto& p : emit_report(reports, dir, provenance)) emit(p);
      break;
    }
  }
}

}  // namespace lastmile
