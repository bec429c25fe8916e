#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kipg/program_model.hpp"

namespace kipg::exec {

using Json = nlohmann::ordered_json;

// Extracted input variables for one program invocation. Keys are a subset of
// the program's declared input names; values are JSON scalars/arrays that
// satisfy the declared semantic types.
class VariableBindings {
 public:
  VariableBindings() = default;

  // Validates name membership and value type against the declared inputs.
  // Returns false (and skips the value) when either check fails.
  bool bind(const std::string& name, Json value, const program::ProgramMetadata& metadata);

  // No validation; only for rehydrating persisted traces.
  void bind_unchecked(const std::string& name, Json value) { values_[name] = std::move(value); }

  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }
  const std::map<std::string, Json>& values() const { return values_; }
  const Json* find(const std::string& name) const;

  // Wire form: every declared input present, absent ones as explicit null.
  Json to_wire(const program::ProgramMetadata& metadata) const;
  Json to_json() const;  // bound values only, sorted by name

  static bool value_matches_type(const Json& value, program::SemanticType type);

 private:
  std::map<std::string, Json> values_;
};

// Program outputs. Keys are a subset of the declared output names.
struct OutcomeMap {
  std::map<std::string, Json> values;

  bool empty() const { return values.empty(); }
  const Json* find(const std::string& name) const;
  Json to_json() const;
};

enum class ExecStatus { success, runtime_error, timeout, protocol_error };

const char* exec_status_name(ExecStatus status);

struct ExecutionResult {
  ExecStatus status = ExecStatus::runtime_error;
  OutcomeMap outcome;  // populated iff status == success
  std::string detail;  // stderr / raw stdout / diagnostic
  std::chrono::duration<double> wall_time{0.0};
  int exit_code = 0;

  bool ok() const { return status == ExecStatus::success; }
};

struct ExecutionLimits {
  std::chrono::duration<double> wall_timeout{5.0};
  std::size_t max_output_bytes = 64 * 1024;
  // Whitespace-split command template; "{source_path}" is replaced with the
  // path of the program source written into the run directory.
  std::string interpreter_command = "python3 {source_path}";
};

// Runs the program in an isolated subprocess: source written to a fresh
// temporary directory, bindings delivered as one JSON object on stdin,
// outputs read as one JSON object from stdout. The child runs in its own
// process group, which is killed in full before returning, so no orphans
// survive. All program-level failures come back classified inside the
// result; only host faults (fork/spawn failure) throw.
ExecutionResult execute(const program::KnowledgeIntensiveProgram& program,
                        const VariableBindings& bindings, const ExecutionLimits& limits);

struct ExecutionJob {
  const program::KnowledgeIntensiveProgram* program;
  const VariableBindings* bindings;
};

// Bounded worker pool; results are returned in job order and jobs are fully
// isolated from one another.
std::vector<ExecutionResult> execute_batch(const std::vector<ExecutionJob>& jobs,
                                           const ExecutionLimits& limits, int parallelism);

}  // namespace kipg::exec
