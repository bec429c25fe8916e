#include "kipg/run_config.hpp"

#include "kipg/jsonl.hpp"

namespace kipg::config {

using jsonl::Json;

namespace {

std::filesystem::path path_or_empty(const Json& obj, const char* key) {
  return std::filesystem::path(obj.value(key, ""));
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& path) const {
  if (path.empty() || path.is_absolute()) return path;
  return config_dir / path;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  auto root = Json::parse(jsonl::read_text(path), nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::config_invalid, "config file is not a JSON object: " + path.string());
  }

  RunConfig cfg;
  cfg.config_dir = std::filesystem::absolute(path).parent_path();

  const Json paths = root.value("paths", Json::object());
  cfg.documents_path = path_or_empty(paths, "documents");
  cfg.instances_path = path_or_empty(paths, "instances");
  cfg.programs_path = path_or_empty(paths, "programs");
  cfg.scores_path = path_or_empty(paths, "scores");
  cfg.traces_path = path_or_empty(paths, "traces");
  cfg.output_dir = path_or_empty(paths, "output_dir");
  cfg.index_path = path_or_empty(paths, "index");

  const Json backends_json = root.value("backends", Json::object());
  for (const auto& [role_name, binding] : backends_json.items()) {
    auto role = gateway::model_role_from_name(role_name);
    if (!role) {
      throw Error(ErrorCode::config_invalid, "unknown backend role \"" + role_name + "\"");
    }
    BackendBinding bound;
    bound.type = binding.value("type", "mock");
    if (bound.type == "mock") {
      bound.mock_dir = std::filesystem::path(binding.value("dir", ""));
      if (bound.mock_dir.empty()) {
        throw Error(ErrorCode::config_invalid,
                    "mock backend for role \"" + role_name + "\" needs \"dir\"");
      }
    } else if (bound.type == "http") {
      bound.http.base_url = binding.value("base_url", "");
      bound.http.model = binding.value("model", "");
      bound.http.supports_diverse_beam = binding.value("supports_diverse_beam", false);
      bound.http.max_concurrency = binding.value("max_concurrency", 4);
      bound.http.requests_per_second = binding.value("requests_per_second", 0.0);
      bound.http.timeout_secs = binding.value("timeout_secs", 60.0);
      if (binding.contains("api_key_env")) {
        bound.http.api_key_env = binding.value("api_key_env", "KIPG_API_KEY");
      }
      if (bound.http.base_url.empty()) {
        throw Error(ErrorCode::config_invalid,
                    "http backend for role \"" + role_name + "\" needs \"base_url\"");
      }
    } else {
      throw Error(ErrorCode::config_invalid, "unknown backend type \"" + bound.type + "\"");
    }
    cfg.backends[*role] = std::move(bound);
  }

  const Json prompts_json = root.value("prompts", Json::object());
  for (const auto& [role_name, override_path] : prompts_json.items()) {
    auto role = gateway::model_role_from_name(role_name);
    if (!role) {
      throw Error(ErrorCode::config_invalid, "unknown prompt role \"" + role_name + "\"");
    }
    cfg.prompt_overrides[*role] = std::filesystem::path(override_path.get<std::string>());
  }

  const Json sampling = root.value("sampling", Json::object());
  cfg.sampling.n_samples = sampling.value("n_samples", 8);
  cfg.sampling.strategy = sampling.value("strategy", "diverse_beam") == "temperature"
                              ? gateway::SamplingStrategy::temperature
                              : gateway::SamplingStrategy::diverse_beam;
  cfg.sampling.diversity_penalty = sampling.value("diversity_penalty", 1.0);
  cfg.sampling.temperature = sampling.value("temperature", 0.7);
  cfg.sampling.max_tokens = sampling.value("max_tokens", 1024);
  if (cfg.sampling.n_samples < 1) {
    throw Error(ErrorCode::config_invalid, "sampling.n_samples must be >= 1");
  }

  const Json executor = root.value("executor", Json::object());
  cfg.limits.wall_timeout =
      std::chrono::duration<double>(executor.value("timeout_secs", 5.0));
  cfg.limits.interpreter_command =
      executor.value("interpreter_cmd", std::string("python3 {source_path}"));
  cfg.limits.max_output_bytes = executor.value("max_output_bytes", std::size_t{64 * 1024});
  cfg.parallelism = executor.value("parallelism", 4);
  if (cfg.limits.wall_timeout.count() <= 0.0) {
    throw Error(ErrorCode::config_invalid, "executor.timeout_secs must be > 0");
  }

  const Json retrieval = root.value("retrieval", Json::object());
  if (auto mode = pipeline::retrieval_mode_from_name(retrieval.value("mode", "oracle"))) {
    cfg.retrieval_mode = *mode;
  } else {
    throw Error(ErrorCode::config_invalid, "unknown retrieval.mode");
  }
  cfg.retrieval_k = retrieval.value("k", std::size_t{1});
  cfg.llm_similarity_threshold = retrieval.value("similarity_threshold", 0.5);

  const Json scoring = root.value("scoring", Json::object());
  cfg.scoring_split = scoring.value("split", "train");
  cfg.use_small_set_filter = scoring.value("small_set_filter", false);
  cfg.small_set_threshold = scoring.value("small_threshold", 0.25);
  cfg.small_fraction = scoring.value("small_fraction", 0.16);

  const Json lint = root.value("lint", Json::object());
  if (lint.contains("hallucination_lexicon")) {
    cfg.lint.hallucination_lexicon =
        lint.at("hallucination_lexicon").get<std::vector<std::string>>();
  }
  if (lint.contains("citation_markers")) {
    cfg.lint.citation_markers = lint.at("citation_markers").get<std::vector<std::string>>();
  }

  const Json training = root.value("training", Json::object());
  cfg.manifest_defaults.beta = training.value("beta", 0.1);
  cfg.manifest_defaults.epochs = training.value("epochs", 3);
  cfg.manifest_defaults.learning_rate = training.value("learning_rate", 5e-5);
  cfg.manifest_defaults.adapter_rank = training.value("adapter_rank", 8);
  cfg.manifest_defaults.batch_size = training.value("batch_size", 16);

  cfg.extraction_retries = root.value("extraction_retries", 2);
  cfg.iteration_index = root.value("iteration_index", 1);
  cfg.seed = root.value("seed", std::uint64_t{1});
  return cfg;
}

std::unique_ptr<gateway::Gateway> RunConfig::build_gateway() const {
  auto gw = std::make_unique<gateway::Gateway>();
  for (const auto& [role, binding] : backends) {
    if (binding.type == "mock") {
      gw->bind(role, std::make_shared<gateway::MockBackend>(resolve(binding.mock_dir)));
    } else {
      gw->bind(role, std::make_shared<gateway::HttpBackend>(binding.http));
    }
  }
  for (const auto& [role, override_path] : prompt_overrides) {
    gateway::PromptTemplate tmpl = gw->prompt_template(role);
    tmpl.text = jsonl::read_text(resolve(override_path));
    gw->set_template(role, std::move(tmpl));
  }
  return gw;
}

}  // namespace kipg::config
