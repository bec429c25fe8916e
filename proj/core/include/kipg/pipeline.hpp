#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kipg/executor.hpp"
#include "kipg/jsonl.hpp"
#include "kipg/knowledge_store.hpp"
#include "kipg/model_gateway.hpp"
#include "kipg/program_model.hpp"
#include "kipg/retrieval.hpp"
#include "kipg/trace.hpp"

namespace kipg::pipeline {

// Deployed programs, one per document.
class ProgramStore {
 public:
  void deploy(program::KnowledgeIntensiveProgram program);
  const program::KnowledgeIntensiveProgram* find(const std::string& document_id) const;
  std::size_t size() const { return by_document_.size(); }

  // Loads programs.jsonl. When `selected` maps a document to a program id,
  // that candidate is deployed; otherwise the lexicographically smallest
  // parseable candidate per document wins. Unparseable candidates are
  // skipped.
  static ProgramStore from_jsonl(const std::filesystem::path& path,
                                 const std::map<std::string, std::string>& selected = {});

 private:
  std::map<std::string, program::KnowledgeIntensiveProgram> by_document_;
};

// Runs extract -> execute -> conclude for one query against one program.
// Extraction or execution failure falls to degraded mode: the concluder
// answers from (query, document) alone and the trace says why. Only
// BackendUnavailableError escapes.
PipelineTrace answer_query(const store::CalculationInstance& instance,
                           const store::KnowledgeDocument& document,
                           const program::KnowledgeIntensiveProgram& program,
                           gateway::Gateway& gateway, const exec::ExecutionLimits& limits,
                           int extraction_retries = 2);

struct RetrievalContext {
  const retrieval::LexicalIndex* index = nullptr;  // required for lexical mode
  std::size_t k = 1;
  double llm_similarity_threshold = 0.5;
};

// Chooses the document per `mode` (oracle: the instance's first document;
// lexical: BM25 top-1; llm: gateway recall matched onto the collection),
// then delegates to answer_query. A retrieved document with no deployed
// program degrades to a document-only answer.
PipelineTrace answer_with_retrieval(const store::CalculationInstance& instance,
                                    const store::DocumentCollection& collection,
                                    const ProgramStore& programs, RetrievalMode mode,
                                    gateway::Gateway& gateway,
                                    const exec::ExecutionLimits& limits,
                                    const RetrievalContext& context = {},
                                    int extraction_retries = 2);

// Primary trace record: deterministic, no timing fields.
jsonl::Json trace_to_json(const PipelineTrace& trace);
// Timing sidecar record (instance id + per-stage seconds).
jsonl::Json trace_timings_to_json(const PipelineTrace& trace);
PipelineTrace trace_from_json(const jsonl::Json& record);

}  // namespace kipg::pipeline
