#include "kipg/pipeline.hpp"

#include <chrono>

#include "kipg/evaluation.hpp"

namespace kipg::pipeline {

using Clock = std::chrono::steady_clock;
using jsonl::Json;

const char* degraded_reason_name(DegradedReason reason) {
  switch (reason) {
    case DegradedReason::none: return "none";
    case DegradedReason::extraction_failed: return "extraction_failed";
    case DegradedReason::execution_failed: return "execution_failed";
    case DegradedReason::no_program: return "no_program";
  }
  return "none";
}

const char* retrieval_mode_name(RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::oracle: return "oracle";
    case RetrievalMode::lexical: return "lexical";
    case RetrievalMode::llm: return "llm";
  }
  return "oracle";
}

std::optional<RetrievalMode> retrieval_mode_from_name(std::string_view name) {
  if (name == "oracle") return RetrievalMode::oracle;
  if (name == "lexical") return RetrievalMode::lexical;
  if (name == "llm") return RetrievalMode::llm;
  return std::nullopt;
}

void ProgramStore::deploy(program::KnowledgeIntensiveProgram program) {
  by_document_[program.document_id] = std::move(program);
}

const program::KnowledgeIntensiveProgram* ProgramStore::find(
    const std::string& document_id) const {
  auto it = by_document_.find(document_id);
  return it == by_document_.end() ? nullptr : &it->second;
}

ProgramStore ProgramStore::from_jsonl(const std::filesystem::path& path,
                                      const std::map<std::string, std::string>& selected) {
  ProgramStore store;
  std::map<std::string, std::string> chosen_id;  // document -> program id
  std::map<std::string, program::KnowledgeIntensiveProgram> chosen;

  jsonl::for_each_record(path, [&](std::size_t, const Json& record) {
    std::string id = record.value("id", "");
    std::string document_id = record.value("document_id", "");
    std::string source = record.value("source_text", "");
    if (id.empty() || document_id.empty()) return;

    auto want = selected.find(document_id);
    if (want != selected.end()) {
      if (want->second != id) return;
    } else {
      auto existing = chosen_id.find(document_id);
      if (existing != chosen_id.end() && existing->second <= id) return;
    }
    program::MetadataIssue issue;
    if (!program::try_parse_metadata(source, &issue)) return;
    chosen_id[document_id] = id;
    chosen[document_id] =
        program::KnowledgeIntensiveProgram::from_source(id, document_id, std::move(source));
  });

  for (auto& [doc_id, prog] : chosen) store.deploy(std::move(prog));
  return store;
}

PipelineTrace answer_query(const store::CalculationInstance& instance,
                           const store::KnowledgeDocument& document,
                           const program::KnowledgeIntensiveProgram& program,
                           gateway::Gateway& gateway, const exec::ExecutionLimits& limits,
                           int extraction_retries) {
  PipelineTrace trace;
  trace.instance_id = instance.id;
  trace.document_id = document.id;
  trace.program_id = program.id;

  auto t0 = Clock::now();
  auto extraction =
      gateway.extract_variables(instance.query, program.metadata, extraction_retries);
  trace.stage_timings["extraction"] = Clock::now() - t0;
  trace.extraction_failed = extraction.extraction_failed;
  trace.bindings = extraction.bindings;

  std::optional<exec::OutcomeMap> outcome;
  if (extraction.extraction_failed) {
    trace.degraded = true;
    trace.degraded_reason = DegradedReason::extraction_failed;
  } else {
    auto t1 = Clock::now();
    trace.execution = exec::execute(program, trace.bindings, limits);
    trace.stage_timings["execution"] = Clock::now() - t1;
    if (trace.execution->ok()) {
      outcome = trace.execution->outcome;
    } else {
      trace.degraded = true;
      trace.degraded_reason = DegradedReason::execution_failed;
    }
  }

  auto t2 = Clock::now();
  trace.response_text = gateway.conclude(instance.query, document, trace.bindings, outcome);
  trace.stage_timings["conclusion"] = Clock::now() - t2;

  trace.extracted_numeric = eval::extract_numeric(trace.response_text);
  return trace;
}

namespace {

PipelineTrace degraded_document_only(const store::CalculationInstance& instance,
                                     const store::KnowledgeDocument& document,
                                     gateway::Gateway& gateway) {
  PipelineTrace trace;
  trace.instance_id = instance.id;
  trace.document_id = document.id;
  trace.degraded = true;
  trace.degraded_reason = DegradedReason::no_program;
  auto t0 = Clock::now();
  trace.response_text =
      gateway.conclude(instance.query, document, exec::VariableBindings{}, std::nullopt);
  trace.stage_timings["conclusion"] = Clock::now() - t0;
  trace.extracted_numeric = eval::extract_numeric(trace.response_text);
  return trace;
}

}  // namespace

PipelineTrace answer_with_retrieval(const store::CalculationInstance& instance,
                                    const store::DocumentCollection& collection,
                                    const ProgramStore& programs, RetrievalMode mode,
                                    gateway::Gateway& gateway,
                                    const exec::ExecutionLimits& limits,
                                    const RetrievalContext& context, int extraction_retries) {
  const std::string oracle_id =
      instance.document_ids.empty() ? "" : instance.document_ids.front();

  auto t0 = Clock::now();
  const store::KnowledgeDocument* document = nullptr;
  bool hallucination_flag = false;
  switch (mode) {
    case RetrievalMode::oracle:
      document = collection.find(oracle_id);
      break;
    case RetrievalMode::lexical: {
      if (context.index == nullptr) {
        throw Error(ErrorCode::config_invalid, "lexical retrieval requires an index");
      }
      auto ranked = context.index->retrieve(instance.query, std::max<std::size_t>(context.k, 1));
      if (!ranked.empty()) document = collection.find(ranked.front().document_id);
      break;
    }
    case RetrievalMode::llm: {
      auto recall = gateway.recall_article(instance.query);
      auto match = retrieval::match_recalled_article(recall, collection,
                                                     context.llm_similarity_threshold);
      hallucination_flag = match.hallucination_suspected;
      if (!match.matched_document_id.empty()) {
        document = collection.find(match.matched_document_id);
      }
      break;
    }
  }
  auto retrieval_elapsed = Clock::now() - t0;

  PipelineTrace trace;
  if (document == nullptr) {
    // Nothing retrieved at all: answer from the bare query.
    store::KnowledgeDocument empty_doc;
    trace = degraded_document_only(instance, empty_doc, gateway);
  } else {
    const auto* program = programs.find(document->id);
    if (program == nullptr) {
      trace = degraded_document_only(instance, *document, gateway);
    } else {
      trace = answer_query(instance, *document, *program, gateway, limits, extraction_retries);
    }
  }

  trace.retrieval_mode = mode;
  trace.retrieved_document_id = document == nullptr ? "" : document->id;
  trace.retrieval_matched_oracle = document != nullptr && document->id == oracle_id;
  trace.retrieval_hallucination_suspected = hallucination_flag;
  trace.stage_timings["retrieval"] = retrieval_elapsed;
  return trace;
}

Json trace_to_json(const PipelineTrace& trace) {
  Json r;
  r["instance_id"] = trace.instance_id;
  r["document_id"] = trace.document_id;
  r["program_id"] = trace.program_id;
  r["bindings"] = trace.bindings.to_json();
  r["extraction_failed"] = trace.extraction_failed;
  if (trace.execution.has_value()) {
    Json e;
    e["status"] = exec::exec_status_name(trace.execution->status);
    if (trace.execution->ok()) e["outcome"] = trace.execution->outcome.to_json();
    e["detail"] = trace.execution->detail;
    e["exit_code"] = trace.execution->exit_code;
    r["execution"] = std::move(e);
  } else {
    r["execution"] = nullptr;
  }
  r["response_text"] = trace.response_text;
  r["extracted_numeric"] =
      trace.extracted_numeric ? Json(trace.extracted_numeric->to_string()) : Json(nullptr);
  r["degraded"] = trace.degraded;
  r["degraded_reason"] = degraded_reason_name(trace.degraded_reason);
  if (trace.retrieval_mode.has_value()) {
    Json retrieval;
    retrieval["mode"] = retrieval_mode_name(*trace.retrieval_mode);
    retrieval["document_id"] = trace.retrieved_document_id;
    retrieval["matched_oracle"] = trace.retrieval_matched_oracle;
    retrieval["hallucination_suspected"] = trace.retrieval_hallucination_suspected;
    r["retrieval"] = std::move(retrieval);
  } else {
    r["retrieval"] = nullptr;
  }
  return r;
}

Json trace_timings_to_json(const PipelineTrace& trace) {
  Json timings = Json::object();
  for (const auto& [stage, duration] : trace.stage_timings) {
    timings[stage] = duration.count();
  }
  Json r;
  r["instance_id"] = trace.instance_id;
  r["stage_seconds"] = std::move(timings);
  return r;
}

PipelineTrace trace_from_json(const Json& record) {
  PipelineTrace trace;
  trace.instance_id = record.value("instance_id", "");
  trace.document_id = record.value("document_id", "");
  trace.program_id = record.value("program_id", "");
  if (record.contains("bindings") && record.at("bindings").is_object()) {
    for (const auto& [name, value] : record.at("bindings").items()) {
      trace.bindings.bind_unchecked(name, value);
    }
  }
  trace.extraction_failed = record.value("extraction_failed", false);
  if (record.contains("execution") && record.at("execution").is_object()) {
    const auto& e = record.at("execution");
    exec::ExecutionResult result;
    std::string status = e.value("status", "runtime_error");
    if (status == "success") result.status = exec::ExecStatus::success;
    else if (status == "timeout") result.status = exec::ExecStatus::timeout;
    else if (status == "protocol_error") result.status = exec::ExecStatus::protocol_error;
    else result.status = exec::ExecStatus::runtime_error;
    if (e.contains("outcome") && e.at("outcome").is_object()) {
      for (const auto& [name, value] : e.at("outcome").items()) {
        result.outcome.values[name] = value;
      }
    }
    result.detail = e.value("detail", "");
    result.exit_code = e.value("exit_code", 0);
    trace.execution = std::move(result);
  }
  trace.response_text = record.value("response_text", "");
  if (record.contains("extracted_numeric") && record.at("extracted_numeric").is_string()) {
    trace.extracted_numeric =
        Decimal::parse(record.at("extracted_numeric").get<std::string>());
  }
  trace.degraded = record.value("degraded", false);
  std::string reason = record.value("degraded_reason", "none");
  if (reason == "extraction_failed") trace.degraded_reason = DegradedReason::extraction_failed;
  else if (reason == "execution_failed") trace.degraded_reason = DegradedReason::execution_failed;
  else if (reason == "no_program") trace.degraded_reason = DegradedReason::no_program;
  if (record.contains("retrieval") && record.at("retrieval").is_object()) {
    const auto& retrieval = record.at("retrieval");
    trace.retrieval_mode = retrieval_mode_from_name(retrieval.value("mode", "oracle"));
    trace.retrieved_document_id = retrieval.value("document_id", "");
    trace.retrieval_matched_oracle = retrieval.value("matched_oracle", false);
    trace.retrieval_hallucination_suspected =
        retrieval.value("hallucination_suspected", false);
  }
  return trace;
}

}  // namespace kipg::pipeline
