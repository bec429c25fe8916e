#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include "kipg/decimal.hpp"
#include "kipg/executor.hpp"

namespace kipg::pipeline {

enum class DegradedReason { none, extraction_failed, execution_failed, no_program };

const char* degraded_reason_name(DegradedReason reason);

enum class RetrievalMode { oracle, lexical, llm };

const char* retrieval_mode_name(RetrievalMode mode);
std::optional<RetrievalMode> retrieval_mode_from_name(std::string_view name);

// End-to-end record of answering one query through one program. Timing
// fields are carried in memory but serialized separately from the primary
// trace record, so trace files stay byte-reproducible.
struct PipelineTrace {
  std::string instance_id;
  std::string document_id;
  std::string program_id;
  exec::VariableBindings bindings;
  bool extraction_failed = false;
  std::optional<exec::ExecutionResult> execution;
  std::string response_text;
  std::optional<Decimal> extracted_numeric;
  bool degraded = false;
  DegradedReason degraded_reason = DegradedReason::none;

  // Retrieval diagnostics (answer_with_retrieval only).
  std::optional<RetrievalMode> retrieval_mode;
  std::string retrieved_document_id;
  bool retrieval_matched_oracle = false;
  bool retrieval_hallucination_suspected = false;

  std::map<std::string, std::chrono::duration<double>> stage_timings;
};

}  // namespace kipg::pipeline
