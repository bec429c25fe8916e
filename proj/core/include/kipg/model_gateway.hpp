#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kipg/executor.hpp"
#include "kipg/knowledge_store.hpp"
#include "kipg/program_model.hpp"

namespace kipg::gateway {

enum class ModelRole { generator, extractor, concluder, llm_retriever };

const char* model_role_name(ModelRole role);
std::optional<ModelRole> model_role_from_name(std::string_view name);

enum class SamplingStrategy { diverse_beam, temperature };

struct SamplingConfig {
  int n_samples = 8;
  SamplingStrategy strategy = SamplingStrategy::diverse_beam;
  double diversity_penalty = 1.0;  // diverse_beam only
  double temperature = 0.7;
  int max_tokens = 1024;
};

// Text template with {name} placeholders; "{{" and "}}" render literal
// braces. Rendering throws when a required placeholder is unbound or the
// template references a name missing from the binding map — placeholders
// never silently vanish.
struct PromptTemplate {
  ModelRole role = ModelRole::generator;
  std::string text;
  std::vector<std::string> required_placeholders;

  std::string render(const std::map<std::string, std::string>& values) const;
};

namespace prompts {
PromptTemplate default_template(ModelRole role);
// Degraded conclusion: no variables available, answer from the document.
PromptTemplate degraded_concluder_template();
}  // namespace prompts

struct CompletionReply {
  std::string text;
  bool truncated = false;  // max_tokens reached; candidate kept, flagged
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

// One model endpoint serving chat-style completions. complete() must be a
// pure function of (role, prompt, sample_index) for mock backends.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionReply complete(ModelRole role, const std::string& prompt,
                                   int sample_index, const SamplingConfig& sampling) = 0;
  virtual bool supports_diverse_beam() const { return false; }
  virtual std::string name() const = 0;
};

// Deterministic fixture backend. The directory holds manifest.json:
//
//   {"entries": [{"role": "generator",
//                 "prompt_sha256": "...",          // optional exact match
//                 "contains": "art-13",            // optional substring match
//                 "contains_all": ["a", "b"],      // optional conjunction
//                 "replies": ["inline text", {"file": "gen/a.py"}, ...]}]}
//
// Lookup order: exact prompt hash, then the first entry (manifest order)
// whose substring condition holds, then an entry with no condition at all
// (role default). sample_index selects from the reply sequence, clamping to
// the last entry, so replies are a pure function of (role, prompt, index).
class MockBackend : public Backend {
 public:
  explicit MockBackend(const std::filesystem::path& directory);

  CompletionReply complete(ModelRole role, const std::string& prompt, int sample_index,
                           const SamplingConfig& sampling) override;
  bool supports_diverse_beam() const override { return true; }
  std::string name() const override { return "mock:" + directory_.string(); }

 private:
  struct Entry {
    std::string prompt_sha256;
    std::vector<std::string> contains_all;
    std::vector<std::string> replies;
  };

  std::filesystem::path directory_;
  std::map<ModelRole, std::vector<Entry>> entries_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. "http://localhost:8000/v1"
  std::string model;
  std::string api_key_env = "KIPG_API_KEY";
  bool supports_diverse_beam = false;
  int max_concurrency = 4;
  double requests_per_second = 0.0;  // 0 disables the token bucket
  double timeout_secs = 60.0;
};

// Chat-completion HTTP client. Applies a per-backend concurrency cap and an
// optional token-bucket rate limit. Transport and server failures throw
// BackendUnavailableError.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  CompletionReply complete(ModelRole role, const std::string& prompt, int sample_index,
                           const SamplingConfig& sampling) override;
  bool supports_diverse_beam() const override { return config_.supports_diverse_beam; }
  std::string name() const override { return "http:" + config_.base_url; }

 private:
  class Impl;
  HttpBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

struct GatewayTraceEntry {
  ModelRole role = ModelRole::generator;
  std::string backend;
  int sample_index = 0;
  std::size_t prompt_chars = 0;
  std::size_t reply_chars = 0;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
  std::chrono::duration<double> latency{0.0};
};

struct GeneratedCandidate {
  std::string source_text;
  bool truncated = false;
};

struct ExtractionOutcome {
  exec::VariableBindings bindings;
  bool extraction_failed = false;
  int attempts = 0;
};

// Uniform front door to the generator / extractor / concluder / retriever
// roles. Holds one backend binding and one prompt template per role.
class Gateway {
 public:
  Gateway();

  void bind(ModelRole role, std::shared_ptr<Backend> backend);
  void set_template(ModelRole role, PromptTemplate tmpl);
  const PromptTemplate& prompt_template(ModelRole role) const;
  bool is_bound(ModelRole role) const;

  // Samples up to sampling.n_samples candidates and deduplicates them by
  // exact text. Falls back (and flags the run) to independent temperature
  // samples when the backend cannot honor diverse beam search.
  std::vector<GeneratedCandidate> generate_programs(const store::KnowledgeDocument& document,
                                                    const SamplingConfig& sampling);
  bool diverse_beam_fallback_used() const { return diverse_beam_fallback_used_; }

  // Renders the query plus the declared input specs, parses the reply as one
  // JSON object, coerces values to the declared types, and retries on an
  // unusable reply. A program with no declared inputs short-circuits to an
  // empty success.
  ExtractionOutcome extract_variables(const std::string& query,
                                      const program::ProgramMetadata& metadata, int retries = 2);

  std::string render_extraction_prompt(const std::string& query,
                                       const program::ProgramMetadata& metadata) const;

  // Concludes the answer from (query, document, bindings, outcome); when
  // outcome is absent the degraded template (query + document only) is used.
  std::string conclude(const std::string& query, const store::KnowledgeDocument& document,
                       const exec::VariableBindings& bindings,
                       const std::optional<exec::OutcomeMap>& outcome);

  std::string recall_article(const std::string& query);

  std::string render_generation_prompt(const store::KnowledgeDocument& document) const;

  std::vector<GatewayTraceEntry> trace_log() const;
  void clear_trace_log();

 private:
  CompletionReply call(ModelRole role, const std::string& prompt, int sample_index,
                       const SamplingConfig& sampling);
  Backend& backend_for(ModelRole role);

  std::map<ModelRole, std::shared_ptr<Backend>> backends_;
  std::map<ModelRole, PromptTemplate> templates_;
  bool diverse_beam_fallback_used_ = false;
  mutable std::mutex log_mutex_;
  std::vector<GatewayTraceEntry> log_;
};

// Coerces a raw JSON value to the declared semantic type (e.g. numeric
// strings to numbers, integral doubles to integers). Returns nullopt when
// the value cannot represent the type.
std::optional<exec::Json> coerce_value(const exec::Json& value, program::SemanticType type);

std::string sha256_hex(std::string_view data);

}  // namespace kipg::gateway
