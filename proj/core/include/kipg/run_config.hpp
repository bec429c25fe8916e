#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "kipg/executor.hpp"
#include "kipg/model_gateway.hpp"
#include "kipg/pipeline.hpp"
#include "kipg/preference_builder.hpp"

namespace kipg::config {

struct BackendBinding {
  std::string type = "mock";  // "mock" | "http"
  std::filesystem::path mock_dir;
  gateway::HttpBackendConfig http;
};

// One experiment run, loaded from a JSON config file. Secrets (the API key)
// come only from the environment, never from the file.
struct RunConfig {
  std::filesystem::path config_dir;  // directory of the config file; anchors relative paths

  std::filesystem::path documents_path;
  std::filesystem::path instances_path;
  std::filesystem::path programs_path;
  std::filesystem::path scores_path;
  std::filesystem::path traces_path;
  std::filesystem::path output_dir;
  std::filesystem::path index_path;

  std::map<gateway::ModelRole, BackendBinding> backends;
  std::map<gateway::ModelRole, std::filesystem::path> prompt_overrides;

  gateway::SamplingConfig sampling;
  exec::ExecutionLimits limits;
  int parallelism = 4;
  int extraction_retries = 2;

  pipeline::RetrievalMode retrieval_mode = pipeline::RetrievalMode::oracle;
  std::size_t retrieval_k = 1;
  double llm_similarity_threshold = 0.5;

  std::string scoring_split = "train";  // train | small_train | test | all
  bool use_small_set_filter = false;
  double small_set_threshold = 0.25;
  double small_fraction = 0.16;

  program::LintOptions lint;
  pref::TrainingManifest manifest_defaults;

  int iteration_index = 1;
  std::uint64_t seed = 1;

  static RunConfig load(const std::filesystem::path& path);

  // Builds the gateway with backends and prompt overrides bound. Roles with
  // no binding stay unbound and fail on first use.
  std::unique_ptr<gateway::Gateway> build_gateway() const;

  // Resolves a possibly relative path against the config file's directory.
  std::filesystem::path resolve(const std::filesystem::path& path) const;
};

}  // namespace kipg::config
