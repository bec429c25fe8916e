#include "kipg/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "kipg/errors.hpp"

namespace kipg::eval {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Scans one numeric literal starting at `pos` (which must point at a digit).
// Accepts thousands separators only as comma groups of exactly three digits.
// Returns the literal with separators stripped and advances `pos` past it.
std::string scan_number(std::string_view text, std::size_t& pos) {
  std::string digits;
  while (pos < text.size() && is_digit(text[pos])) {
    digits.push_back(text[pos]);
    ++pos;
  }
  while (pos < text.size() && text[pos] == ',') {
    if (pos + 3 < text.size() && is_digit(text[pos + 1]) && is_digit(text[pos + 2]) &&
        is_digit(text[pos + 3]) && !(pos + 4 < text.size() && is_digit(text[pos + 4]))) {
      digits += text.substr(pos + 1, 3);
      pos += 4;
    } else {
      break;
    }
  }
  if (pos + 1 < text.size() && text[pos] == '.' && is_digit(text[pos + 1])) {
    digits.push_back('.');
    ++pos;
    while (pos < text.size() && is_digit(text[pos])) {
      digits.push_back(text[pos]);
      ++pos;
    }
  }
  return digits;
}

double rank_mean(const std::vector<double>& values, std::size_t i) {
  // Average rank of values[i] among equal values (1-based ranks).
  double less = 0, equal = 0;
  for (double v : values) {
    if (v < values[i]) ++less;
    if (v == values[i]) ++equal;
  }
  return less + (equal + 1.0) / 2.0;
}

}  // namespace

std::optional<Decimal> extract_numeric(std::string_view response) {
  std::optional<Decimal> last;
  std::size_t pos = 0;
  while (pos < response.size()) {
    if (!is_digit(response[pos])) {
      ++pos;
      continue;
    }
    bool negative = false;
    if (pos > 0 && response[pos - 1] == '-') {
      // A minus directly attached to the digits is a sign unless it follows
      // another digit (as in "5-3").
      negative = !(pos >= 2 && is_digit(response[pos - 2]));
    }
    std::string literal = scan_number(response, pos);
    if (negative) literal.insert(0, 1, '-');
    if (auto parsed = Decimal::parse(literal)) last = parsed;
  }
  return last;
}

bool numeric_match(const Decimal& predicted, const Decimal& reference) {
  const double p = predicted.to_double();
  const double r = reference.to_double();
  if (!std::isfinite(p) || !std::isfinite(r)) return false;
  const double tolerance = std::max(5e-5 * std::fabs(r), 5e-3);
  return std::fabs(p - r) <= tolerance;
}

AccuracyReport evaluate(const std::vector<pipeline::PipelineTrace>& traces,
                        const store::InstanceSet& instances) {
  AccuracyReport report;
  for (const auto& trace : traces) {
    const auto* instance = instances.find(trace.instance_id);
    if (instance == nullptr) {
      throw Error(ErrorCode::unknown_instance,
                  "trace references unknown instance \"" + trace.instance_id + "\"");
    }
    auto& bucket = report.per_case_type[instance->case_type];
    ++bucket.n;
    ++report.n_total;
    if (trace.degraded) ++report.n_degraded;
    const bool correct = trace.extracted_numeric.has_value() &&
                         numeric_match(*trace.extracted_numeric, instance->reference_answer);
    if (correct) {
      ++bucket.n_correct;
      ++report.n_correct_total;
    } else {
      report.failure_instance_ids.push_back(trace.instance_id);
    }
  }

  double sum = 0.0;
  for (auto& [case_type, bucket] : report.per_case_type) {
    bucket.accuracy =
        bucket.n == 0 ? 0.0 : static_cast<double>(bucket.n_correct) / bucket.n;
    sum += bucket.accuracy;
  }
  report.macro_average =
      report.per_case_type.empty() ? 0.0 : sum / report.per_case_type.size();
  return report;
}

std::string render_report_table(const AccuracyReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %10s\n", "case_type", "n", "correct",
                "accuracy");
  out += line;
  for (const auto& [case_type, bucket] : report.per_case_type) {
    std::snprintf(line, sizeof(line), "%-24s %8zu %8zu %9.2f%%\n", case_type.c_str(),
                  bucket.n, bucket.n_correct, 100.0 * bucket.accuracy);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %8zu %8zu %9.2f%%\n", "AVG", report.n_total,
                report.n_correct_total, 100.0 * report.macro_average);
  out += line;
  return out;
}

ComplexityDistribution complexity_distribution(
    const std::vector<ScoredProgramSize>& programs) {
  std::map<int, std::pair<double, std::size_t>> acc;  // lines -> (sum, count)
  for (const auto& p : programs) {
    if (p.score < 0.0) continue;
    auto& [sum, count] = acc[p.logic_line_count];
    sum += p.score;
    ++count;
  }

  ComplexityDistribution dist;
  for (const auto& [lines, sum_count] : acc) {
    dist.buckets.push_back({lines, sum_count.first / static_cast<double>(sum_count.second),
                            sum_count.second});
  }

  if (dist.buckets.size() >= 2) {
    std::vector<double> x, y;
    for (const auto& b : dist.buckets) {
      x.push_back(static_cast<double>(b.logic_line_count));
      y.push_back(b.mean_score);
    }
    const std::size_t n = x.size();
    std::vector<double> rx(n), ry(n);
    for (std::size_t i = 0; i < n; ++i) {
      rx[i] = rank_mean(x, i);
      ry[i] = rank_mean(y, i);
    }
    const double mean_rank = (n + 1.0) / 2.0;
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (rx[i] - mean_rank) * (ry[i] - mean_rank);
      dx += (rx[i] - mean_rank) * (rx[i] - mean_rank);
      dy += (ry[i] - mean_rank) * (ry[i] - mean_rank);
    }
    if (dx > 0 && dy > 0) {
      dist.rank_correlation = num / std::sqrt(dx * dy);
    } else {
      dist.rank_correlation = 0.0;  // constant ranks on one axis
    }
  }
  return dist;
}

std::string render_complexity_csv(const ComplexityDistribution& distribution) {
  std::string out = "logic_lines,mean_accuracy,count\n";
  char line[96];
  for (const auto& b : distribution.buckets) {
    std::snprintf(line, sizeof(line), "%d,%.6f,%zu\n", b.logic_line_count, b.mean_score,
                  b.count);
    out += line;
  }
  return out;
}

}  // namespace kipg::eval
