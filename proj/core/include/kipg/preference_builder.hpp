#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kipg/evaluation.hpp"
#include "kipg/jsonl.hpp"
#include "kipg/pipeline.hpp"

namespace kipg::pref {

// Exact correctness fraction; keeps the -1 sentinel and the pair ordering
// free of floating-point ambiguity.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double to_double() const { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den == static_cast<__int128>(b.num) * a.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
};

enum class NegativeReason { runtime_error, fuzzy_params, hallucination_keyword };

const char* negative_reason_name(NegativeReason reason);
std::optional<NegativeReason> negative_reason_from_name(std::string_view name);

// Correctness score of one sampled program: n_correct / n_instances exactly,
// or the -1 sentinel when any negative-filter rule fired.
struct ProgramScore {
  std::string program_id;
  int logic_line_count = 0;
  std::size_t n_instances = 0;
  std::size_t n_correct = 0;
  std::vector<NegativeReason> negative_reasons;

  bool is_negative() const { return !negative_reasons.empty(); }
  Rational score() const {
    if (is_negative()) return {-1, 1};
    return {static_cast<std::int64_t>(n_correct),
            static_cast<std::int64_t>(n_instances == 0 ? 1 : n_instances)};
  }
  // "-1" for negatives, otherwise the fraction rendered to 6 decimal places.
  std::string score_text() const;

  jsonl::Json to_json() const;
  static ProgramScore from_json(const jsonl::Json& record);
};

enum class PairKind { score_ordered, valid_over_negative };

const char* pair_kind_name(PairKind kind);

struct PreferencePair {
  std::string prompt;
  std::string chosen_id;
  std::string rejected_id;
  std::string chosen_source;
  std::string rejected_source;
  Rational chosen_score;
  Rational rejected_score;
  PairKind kind = PairKind::score_ordered;
};

struct TrainingManifest {
  std::string dataset_path;
  double beta = 0.1;
  int epochs = 3;
  double learning_rate = 5e-5;
  int adapter_rank = 8;
  int batch_size = 16;
  int iteration_index = 1;
  std::size_t pair_count = 0;

  jsonl::Json to_json() const;
};

// Scores one program over the given instances (all of which must cite the
// program's document). Negative rules come first: a lint hit (fuzzy params,
// hallucination keywords) marks the program negative without running it; any
// execution failure during the runs marks it negative as runtime_error.
// Extraction failures count as wrong answers, never as program negativity.
// Per-instance traces are appended to *collected_traces when given.
ProgramScore score_program(const program::KnowledgeIntensiveProgram& program,
                           const std::vector<const store::CalculationInstance*>& instances,
                           const store::KnowledgeDocument& document,
                           gateway::Gateway& gateway, const exec::ExecutionLimits& limits,
                           const program::LintReport& lint, int extraction_retries = 2,
                           std::vector<pipeline::PipelineTrace>* collected_traces = nullptr);

// All preference pairs for one document's candidate set:
//   { (w, l) : both valid and score(w) > score(l) }  union
//   { (w, l) : w valid, l negative }.
// Equal scores pair with nothing; negatives never pair with each other.
// Output is sorted by (chosen_id, rejected_id).
std::vector<PreferencePair> build_pairs(const std::vector<ProgramScore>& scored,
                                        const std::string& prompt,
                                        const std::map<std::string, std::string>& sources);

// Writes dpo.jsonl ({"prompt","chosen","rejected"} per line) plus
// manifest.json next to it. Throws empty_pair_set on an empty input.
TrainingManifest emit_dpo_dataset(const std::vector<PreferencePair>& pairs,
                                  const std::filesystem::path& dataset_path,
                                  int iteration_index = 1,
                                  const TrainingManifest& defaults = {});

// Highest non-negative score; ties prefer fewer logic lines, then the
// lexicographically smaller id. nullopt when every candidate is negative.
std::optional<std::string> select_best_program(const std::vector<ProgramScore>& scored);

// Appendix-style prefilter: keeps programs whose small-set score is valid
// and >= threshold.
std::vector<std::string> small_set_filter(const std::vector<ProgramScore>& scored_on_small,
                                          double threshold);

struct IterationConfig {
  int iteration_index = 1;
  gateway::SamplingConfig sampling;
  exec::ExecutionLimits limits;
  program::LintOptions lint;
  int extraction_retries = 2;
  bool use_small_set_filter = false;
  double small_set_threshold = 0.25;
  std::filesystem::path output_dir;
  TrainingManifest manifest_defaults;
};

struct DocumentIteration {
  std::string document_id;
  std::string case_type;
  std::size_t candidate_count = 0;
  std::vector<ProgramScore> scores;
  std::vector<std::string> retained;  // small-set filter survivors (when enabled)
  std::size_t pair_count = 0;
  std::optional<std::string> selected_program_id;
  std::string selected_score_text;
  std::vector<std::string> errors;
};

struct IterationReport {
  int iteration_index = 1;
  std::vector<DocumentIteration> documents;
  std::map<std::string, eval::CaseTypeAccuracy> accuracy_per_case_type;
  std::size_t total_pairs = 0;
  std::string dataset_path;

  jsonl::Json to_json() const;
};

// One full loop pass: generate -> parse/lint -> score (small set first when
// enabled) -> pair -> emit dataset + manifest. The loop then waits for an
// externally retrained generator endpoint; the operator re-invokes with
// iteration_index + 1. Per-document failures are recorded, not fatal;
// BackendUnavailableError propagates.
IterationReport run_iteration(const IterationConfig& config,
                              const store::DocumentCollection& collection,
                              const store::InstanceSet& instances,
                              gateway::Gateway& gateway);

// Instruction-tuning records for initializing the extractor: prompt is the
// rendered extraction prompt, completion is the bindings object. Only traces
// whose bindings are verified end-to-end (not degraded, final numeric
// matches the reference) are emitted. Throws empty_trace_set when none
// qualify.
std::size_t emit_extraction_sft_dataset(const std::vector<pipeline::PipelineTrace>& traces,
                                        const store::InstanceSet& instances,
                                        const pipeline::ProgramStore& programs,
                                        const gateway::Gateway& gateway,
                                        const std::filesystem::path& path);

}  // namespace kipg::pref
