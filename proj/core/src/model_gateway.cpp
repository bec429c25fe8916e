#include "kipg/model_gateway.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "kipg/jsonl.hpp"

namespace kipg::gateway {

using exec::Json;

const char* model_role_name(ModelRole role) {
  switch (role) {
    case ModelRole::generator: return "generator";
    case ModelRole::extractor: return "extractor";
    case ModelRole::concluder: return "concluder";
    case ModelRole::llm_retriever: return "llm_retriever";
  }
  return "generator";
}

std::optional<ModelRole> model_role_from_name(std::string_view name) {
  if (name == "generator") return ModelRole::generator;
  if (name == "extractor") return ModelRole::extractor;
  if (name == "concluder") return ModelRole::concluder;
  if (name == "llm_retriever") return ModelRole::llm_retriever;
  return std::nullopt;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  for (const auto& name : required_placeholders) {
    if (!values.count(name)) {
      throw Error(ErrorCode::missing_placeholder,
                  "prompt template for role " + std::string(model_role_name(role)) +
                      " requires placeholder \"" + name + "\"");
    }
  }
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      auto close = text.find('}', i + 1);
      if (close == std::string::npos) {
        throw Error(ErrorCode::missing_placeholder, "unterminated placeholder in template");
      }
      std::string name = text.substr(i + 1, close - i - 1);
      auto it = values.find(name);
      if (it == values.end()) {
        throw Error(ErrorCode::missing_placeholder,
                    "template references unbound placeholder \"" + name + "\"");
      }
      out += it->second;
      i = close;
      continue;
    }
    if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      out.push_back('}');
      ++i;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

namespace prompts {

PromptTemplate default_template(ModelRole role) {
  PromptTemplate t;
  t.role = role;
  switch (role) {
    case ModelRole::generator:
      t.text =
          "Write one self-contained program that encodes every rule of the document "
          "below.\n"
          "\n"
          "Rules for the program:\n"
          "- Start with one leading comment block holding exactly these labelled "
          "fields:\n"
          "  Source: <one-sentence citation of the document>\n"
          "  Inputs:\n"
          "    <name> (<type>, <unit>): <definition>\n"
          "  Outputs:\n"
          "    <name> (<type>, <unit>): <definition>\n"
          "- Allowed types: integer, decimal, boolean, string, list-of-decimal. Use "
          "the unit token \"dimensionless\" for unitless quantities, and write a "
          "precise definition for every argument.\n"
          "- The program reads one JSON object {{\"inputs\": {{...}}}} from standard "
          "input; missing values arrive as null.\n"
          "- It prints one JSON object {{\"outputs\": {{...}}}} carrying every outcome "
          "the document can produce, then exits with status 0.\n"
          "- Before each calculation taken from the document, add a comment citing "
          "the rule, starting with \"According to\" or \"The law states\".\n"
          "- Never invent facts that are not in the document, and never use words "
          "like \"assuming\".\n"
          "\n"
          "Document ID: {document_id}\n"
          "Title: {title}\n"
          "Category: {case_type} / {subtype}\n"
          "Document:\n"
          "{body}\n";
      t.required_placeholders = {"document_id", "title", "case_type", "subtype", "body"};
      break;
    case ModelRole::extractor:
      t.text =
          "Extract the input variables for a calculation from the user query.\n"
          "Reply with exactly one JSON object mapping variable names to values, and "
          "nothing else. Use null when the query does not determine a value, and "
          "convert quantities to the declared units.\n"
          "\n"
          "Variables:\n"
          "{input_specs}\n"
          "\n"
          "Query: {query}\n";
      t.required_placeholders = {"input_specs", "query"};
      break;
    case ModelRole::concluder:
      t.text =
          "Answer the user query using the document and the calculated variables "
          "below.\n"
          "The variables were produced by a program that encodes the document's "
          "rules; they answer the document's calculation, not necessarily the query "
          "itself, so apply any further arithmetic the query needs.\n"
          "Finish with the exact sentence \"So the answer is {{answer}}.\" where "
          "{{answer}} is the final number with its unit.\n"
          "\n"
          "Query: {query}\n"
          "Document:\n"
          "{body}\n"
          "Calculated variables:\n"
          "{variables}\n";
      t.required_placeholders = {"query", "body", "variables"};
      break;
    case ModelRole::llm_retriever:
      t.text =
          "Recall the full text of the domain article that best answers the query. "
          "Reply with the article text only.\n"
          "\n"
          "Query: {query}\n";
      t.required_placeholders = {"query"};
      break;
  }
  return t;
}

PromptTemplate degraded_concluder_template() {
  PromptTemplate t;
  t.role = ModelRole::concluder;
  t.text =
      "Answer the user query using only the document below. Work step by step and "
      "finish with the exact sentence \"So the answer is {{answer}}.\" where "
      "{{answer}} is the final number with its unit.\n"
      "\n"
      "Query: {query}\n"
      "Document:\n"
      "{body}\n";
  t.required_placeholders = {"query", "body"};
  return t;
}

}  // namespace prompts

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(const std::filesystem::path& directory) : directory_(directory) {
  auto manifest_path = directory / "manifest.json";
  auto manifest = Json::parse(jsonl::read_text(manifest_path), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw ParseError("malformed mock manifest: " + manifest_path.string());
  }
  for (const auto& raw : manifest.value("entries", Json::array())) {
    auto role = model_role_from_name(raw.value("role", ""));
    if (!role) {
      throw ParseError("mock manifest entry with unknown role in " + manifest_path.string());
    }
    Entry entry;
    entry.prompt_sha256 = raw.value("prompt_sha256", "");
    if (raw.contains("contains")) {
      entry.contains_all.push_back(raw.at("contains").get<std::string>());
    }
    for (const auto& fragment : raw.value("contains_all", Json::array())) {
      entry.contains_all.push_back(fragment.get<std::string>());
    }
    for (const auto& reply : raw.value("replies", Json::array())) {
      if (reply.is_string()) {
        entry.replies.push_back(reply.get<std::string>());
      } else if (reply.is_object() && reply.contains("file")) {
        entry.replies.push_back(
            jsonl::read_text(directory / reply.at("file").get<std::string>()));
      } else {
        throw ParseError("mock manifest reply must be a string or {\"file\": ...}");
      }
    }
    if (entry.replies.empty()) {
      throw ParseError("mock manifest entry has no replies");
    }
    entries_[*role].push_back(std::move(entry));
  }
}

CompletionReply MockBackend::complete(ModelRole role, const std::string& prompt,
                                      int sample_index, const SamplingConfig&) {
  auto it = entries_.find(role);
  if (it == entries_.end()) {
    throw BackendUnavailableError("mock backend has no entries for role " +
                                  std::string(model_role_name(role)));
  }
  const std::string prompt_hash = sha256_hex(prompt);
  const Entry* chosen = nullptr;
  for (const auto& entry : it->second) {
    if (!entry.prompt_sha256.empty() && entry.prompt_sha256 == prompt_hash) {
      chosen = &entry;
      break;
    }
  }
  if (chosen == nullptr) {
    for (const auto& entry : it->second) {
      if (entry.contains_all.empty()) continue;
      bool all = true;
      for (const auto& fragment : entry.contains_all) {
        if (prompt.find(fragment) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (all) {
        chosen = &entry;
        break;
      }
    }
  }
  if (chosen == nullptr) {
    for (const auto& entry : it->second) {
      if (entry.prompt_sha256.empty() && entry.contains_all.empty()) {
        chosen = &entry;
        break;
      }
    }
  }
  if (chosen == nullptr) {
    throw BackendUnavailableError("no mock fixture matches prompt for role " +
                                  std::string(model_role_name(role)));
  }
  std::size_t index = sample_index < 0 ? 0 : static_cast<std::size_t>(sample_index);
  if (index >= chosen->replies.size()) index = chosen->replies.size() - 1;
  CompletionReply reply;
  reply.text = chosen->replies[index];
  return reply;
}

// ---------------------------------------------------------------------------
// HttpBackend

class HttpBackend::Impl {
 public:
  explicit Impl(const HttpBackendConfig& config) : config_(config) {
    auto pos = config.base_url.find("://");
    if (pos == std::string::npos) {
      throw Error(ErrorCode::config_invalid, "base_url must include a scheme");
    }
    auto path_start = config.base_url.find('/', pos + 3);
    if (path_start == std::string::npos) {
      origin_ = config.base_url;
      path_prefix_ = "";
    } else {
      origin_ = config.base_url.substr(0, path_start);
      path_prefix_ = config.base_url.substr(path_start);
      while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
    client_ = std::make_unique<httplib::Client>(origin_);
    auto secs = static_cast<time_t>(config.timeout_secs);
    client_->set_read_timeout(secs, 0);
    client_->set_connection_timeout(secs, 0);
    if (const char* key = std::getenv(config.api_key_env.c_str());
        key != nullptr && key[0] != '\0') {
      api_key_ = key;
    }
  }

  Json post_chat(const Json& body) {
    acquire_slot();
    take_token();
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res =
        client_->Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                      "application/json");
    release_slot();
    if (!res) {
      throw BackendUnavailableError("chat completion request failed: " +
                                    httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendUnavailableError("chat completion HTTP " + std::to_string(res->status) +
                                    ": " + res->body.substr(0, 512));
    }
    auto parsed = Json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      throw BackendUnavailableError("chat completion reply is not JSON");
    }
    return parsed;
  }

 private:
  void acquire_slot() {
    std::unique_lock lock(mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < config_.max_concurrency; });
    ++in_flight_;
  }
  void release_slot() {
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
    }
    slots_cv_.notify_one();
  }
  void take_token() {
    if (config_.requests_per_second <= 0.0) return;
    for (;;) {
      std::unique_lock lock(mutex_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      tokens_ = std::min(config_.requests_per_second,
                         tokens_ + elapsed * config_.requests_per_second);
      last_refill_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      double wait = (1.0 - tokens_) / config_.requests_per_second;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
  }

  HttpBackendConfig config_;
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
  double tokens_ = 0.0;
  std::chrono::steady_clock::time_point last_refill_ = std::chrono::steady_clock::now();
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

HttpBackend::~HttpBackend() = default;

CompletionReply HttpBackend::complete(ModelRole, const std::string& prompt, int,
                                      const SamplingConfig& sampling) {
  Json body;
  body["model"] = config_.model;
  body["messages"] = Json::array({Json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = sampling.temperature;
  body["max_tokens"] = sampling.max_tokens;
  if (sampling.strategy == SamplingStrategy::diverse_beam && config_.supports_diverse_beam) {
    body["use_beam_search"] = true;
    body["diversity_penalty"] = sampling.diversity_penalty;
  }

  auto parsed = impl_->post_chat(body);
  auto choices = parsed.value("choices", Json::array());
  if (choices.empty()) {
    throw BackendUnavailableError("chat completion reply has no choices");
  }
  CompletionReply reply;
  reply.text = choices[0].value("message", Json::object()).value("content", "");
  reply.truncated = choices[0].value("finish_reason", "") == "length";
  if (parsed.contains("usage")) {
    const auto& usage = parsed["usage"];
    if (usage.contains("prompt_tokens")) reply.prompt_tokens = usage["prompt_tokens"].get<int>();
    if (usage.contains("completion_tokens"))
      reply.completion_tokens = usage["completion_tokens"].get<int>();
  }
  return reply;
}

// ---------------------------------------------------------------------------
// Value coercion

std::optional<Json> coerce_value(const Json& value, program::SemanticType type) {
  using program::SemanticType;
  switch (type) {
    case SemanticType::integer: {
      if (value.is_number_integer()) return value;
      if (value.is_number_float()) {
        double d = value.get<double>();
        if (std::floor(d) == d && std::fabs(d) < 9.0e15) {
          return Json(static_cast<std::int64_t>(d));
        }
        return std::nullopt;
      }
      if (value.is_string()) {
        auto parsed = Decimal::parse(value.get<std::string>());
        if (parsed && parsed->scale() == 0) return Json(parsed->units());
      }
      return std::nullopt;
    }
    case SemanticType::decimal: {
      if (value.is_number()) return value;
      if (value.is_string()) {
        auto parsed = Decimal::parse(value.get<std::string>());
        if (parsed) {
          if (parsed->scale() == 0) return Json(parsed->units());
          return Json(parsed->to_double());
        }
      }
      return std::nullopt;
    }
    case SemanticType::boolean: {
      if (value.is_boolean()) return value;
      if (value.is_string()) {
        const auto& s = value.get_ref<const std::string&>();
        if (s == "true") return Json(true);
        if (s == "false") return Json(false);
      }
      return std::nullopt;
    }
    case SemanticType::string: {
      if (value.is_string()) return value;
      if (value.is_number() || value.is_boolean()) return Json(value.dump());
      return std::nullopt;
    }
    case SemanticType::list_of_decimal: {
      if (!value.is_array()) return std::nullopt;
      Json out = Json::array();
      for (const auto& v : value) {
        auto coerced = coerce_value(v, SemanticType::decimal);
        if (!coerced) return std::nullopt;
        out.push_back(*coerced);
      }
      return out;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway() {
  for (auto role : {ModelRole::generator, ModelRole::extractor, ModelRole::concluder,
                    ModelRole::llm_retriever}) {
    templates_[role] = prompts::default_template(role);
  }
}

void Gateway::bind(ModelRole role, std::shared_ptr<Backend> backend) {
  backends_[role] = std::move(backend);
}

void Gateway::set_template(ModelRole role, PromptTemplate tmpl) {
  templates_[role] = std::move(tmpl);
}

const PromptTemplate& Gateway::prompt_template(ModelRole role) const {
  return templates_.at(role);
}

bool Gateway::is_bound(ModelRole role) const {
  auto it = backends_.find(role);
  return it != backends_.end() && it->second != nullptr;
}

Backend& Gateway::backend_for(ModelRole role) {
  auto it = backends_.find(role);
  if (it == backends_.end() || it->second == nullptr) {
    throw BackendUnavailableError(std::string("no backend bound for role ") +
                                  model_role_name(role));
  }
  return *it->second;
}

CompletionReply Gateway::call(ModelRole role, const std::string& prompt, int sample_index,
                              const SamplingConfig& sampling) {
  auto& backend = backend_for(role);
  auto started = std::chrono::steady_clock::now();
  auto reply = backend.complete(role, prompt, sample_index, sampling);
  GatewayTraceEntry entry;
  entry.role = role;
  entry.backend = backend.name();
  entry.sample_index = sample_index;
  entry.prompt_chars = prompt.size();
  entry.reply_chars = reply.text.size();
  entry.prompt_tokens = reply.prompt_tokens;
  entry.completion_tokens = reply.completion_tokens;
  entry.latency = std::chrono::steady_clock::now() - started;
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(std::move(entry));
  }
  return reply;
}

std::string Gateway::render_generation_prompt(const store::KnowledgeDocument& document) const {
  return templates_.at(ModelRole::generator)
      .render({{"document_id", document.id},
               {"title", document.title},
               {"case_type", document.case_type},
               {"subtype", document.subtype},
               {"body", document.body}});
}

std::vector<GeneratedCandidate> Gateway::generate_programs(
    const store::KnowledgeDocument& document, const SamplingConfig& sampling) {
  const std::string prompt = render_generation_prompt(document);
  auto& backend = backend_for(ModelRole::generator);

  SamplingConfig effective = sampling;
  if (sampling.strategy == SamplingStrategy::diverse_beam && !backend.supports_diverse_beam()) {
    effective.strategy = SamplingStrategy::temperature;
    diverse_beam_fallback_used_ = true;
  }

  std::vector<GeneratedCandidate> candidates;
  for (int i = 0; i < sampling.n_samples; ++i) {
    auto reply = call(ModelRole::generator, prompt, i, effective);
    bool duplicate = false;
    for (const auto& existing : candidates) {
      if (existing.source_text == reply.text) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      candidates.push_back({std::move(reply.text), reply.truncated});
    }
  }
  return candidates;
}

std::string Gateway::render_extraction_prompt(const std::string& query,
                                              const program::ProgramMetadata& metadata) const {
  std::string specs;
  for (const auto& p : metadata.inputs) {
    specs += "- " + p.name + " (" + program::semantic_type_name(p.semantic_type);
    if (!p.unit.empty()) specs += ", " + p.unit;
    specs += "): " + p.definition + "\n";
  }
  if (!specs.empty() && specs.back() == '\n') specs.pop_back();
  return templates_.at(ModelRole::extractor).render({{"input_specs", specs}, {"query", query}});
}

ExtractionOutcome Gateway::extract_variables(const std::string& query,
                                             const program::ProgramMetadata& metadata,
                                             int retries) {
  ExtractionOutcome outcome;
  if (metadata.inputs.empty()) {
    return outcome;  // nothing to extract
  }
  const std::string prompt = render_extraction_prompt(query, metadata);
  const int max_attempts = retries < 0 ? 1 : retries + 1;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    outcome.attempts = attempt + 1;
    auto reply = call(ModelRole::extractor, prompt, attempt, SamplingConfig{});

    Json parsed = Json::parse(reply.text, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
      // Tolerate replies that wrap the object in prose.
      auto open = reply.text.find('{');
      auto close = reply.text.rfind('}');
      if (open != std::string::npos && close != std::string::npos && close > open) {
        parsed = Json::parse(reply.text.substr(open, close - open + 1), nullptr, false);
      }
    }
    if (parsed.is_discarded() || !parsed.is_object()) continue;

    exec::VariableBindings bindings;
    for (const auto& [name, value] : parsed.items()) {
      const auto* spec = metadata.find_input(name);
      if (spec == nullptr || value.is_null()) continue;
      auto coerced = coerce_value(value, spec->semantic_type);
      if (coerced) bindings.bind(name, std::move(*coerced), metadata);
    }
    if (!bindings.empty()) {
      outcome.bindings = std::move(bindings);
      return outcome;
    }
  }
  outcome.extraction_failed = true;
  return outcome;
}

std::string Gateway::conclude(const std::string& query,
                              const store::KnowledgeDocument& document,
                              const exec::VariableBindings& bindings,
                              const std::optional<exec::OutcomeMap>& outcome) {
  std::string prompt;
  if (outcome.has_value()) {
    Json pack;
    pack["inputs"] = bindings.to_json();
    pack["outputs"] = outcome->to_json();
    prompt = templates_.at(ModelRole::concluder)
                 .render({{"query", query},
                          {"body", document.body},
                          {"variables", pack.dump(2)}});
  } else {
    prompt = prompts::degraded_concluder_template().render(
        {{"query", query}, {"body", document.body}});
  }
  return call(ModelRole::concluder, prompt, 0, SamplingConfig{}).text;
}

std::string Gateway::recall_article(const std::string& query) {
  const std::string prompt =
      templates_.at(ModelRole::llm_retriever).render({{"query", query}});
  return call(ModelRole::llm_retriever, prompt, 0, SamplingConfig{}).text;
}

std::vector<GatewayTraceEntry> Gateway::trace_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

void Gateway::clear_trace_log() {
  std::lock_guard lock(log_mutex_);
  log_.clear();
}

}  // namespace kipg::gateway
