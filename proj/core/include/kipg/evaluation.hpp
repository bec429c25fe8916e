#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kipg/decimal.hpp"
#include "kipg/knowledge_store.hpp"
#include "kipg/trace.hpp"

namespace kipg::eval {

// Pulls the final numeric answer out of a response sentence: the last
// numeric literal wins, thousands separators are stripped, adjacent currency
// or unit text is ignored. Scientific notation is out of scope. Returns
// nullopt when the text carries no parseable number.
std::optional<Decimal> extract_numeric(std::string_view response);

// Tolerant comparison: |predicted - reference| <= max(5e-5 * |reference|, 5e-3).
// The absolute floor forgives final-digit rounding of 4-decimal answers.
bool numeric_match(const Decimal& predicted, const Decimal& reference);

struct CaseTypeAccuracy {
  std::size_t n = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
};

struct AccuracyReport {
  std::map<std::string, CaseTypeAccuracy> per_case_type;
  double macro_average = 0.0;  // mean of per-type accuracies (the AVG row)
  std::size_t n_total = 0;
  std::size_t n_correct_total = 0;
  std::size_t n_degraded = 0;
  std::vector<std::string> failure_instance_ids;
};

// Scores traces against their instances' reference answers. A trace with no
// extracted numeric counts as incorrect. Throws on an unknown instance id.
AccuracyReport evaluate(const std::vector<pipeline::PipelineTrace>& traces,
                        const store::InstanceSet& instances);

std::string render_report_table(const AccuracyReport& report);

struct ComplexityBucket {
  int logic_line_count = 0;
  double mean_score = 0.0;
  std::size_t count = 0;
};

struct ComplexityDistribution {
  std::vector<ComplexityBucket> buckets;  // ascending line count
  // Spearman rank correlation between line count and mean bucket score;
  // nullopt when fewer than two buckets exist.
  std::optional<double> rank_correlation;
};

struct ScoredProgramSize {
  int logic_line_count = 0;
  double score = 0.0;  // non-negative; negatives are excluded upstream
};

// Buckets programs by exact line count and reports per-bucket mean score,
// count, and the line-count/score rank correlation.
ComplexityDistribution complexity_distribution(const std::vector<ScoredProgramSize>& programs);

std::string render_complexity_csv(const ComplexityDistribution& distribution);

}  // namespace kipg::eval
