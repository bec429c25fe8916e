#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kipg/errors.hpp"

namespace kipg::program {

enum class SemanticType { integer, decimal, boolean, string, list_of_decimal };

const char* semantic_type_name(SemanticType type);
std::optional<SemanticType> semantic_type_from_name(std::string_view name);

// One declared input or output argument. A spec is well-defined when it has
// both a unit (possibly the explicit token "dimensionless") and a non-empty
// definition; anything else is fuzzy and trips lint rule F.
struct ParamSpec {
  std::string name;
  SemanticType semantic_type = SemanticType::decimal;
  std::string unit;
  std::string definition;

  bool well_defined() const { return !unit.empty() && !definition.empty(); }

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ProgramMetadata {
  std::string knowledge_source;
  std::vector<ParamSpec> inputs;
  std::vector<ParamSpec> outputs;

  const ParamSpec* find_input(std::string_view name) const;
  const ParamSpec* find_output(std::string_view name) const;

  friend bool operator==(const ProgramMetadata&, const ProgramMetadata&) = default;
};

enum class MetadataErrorCode {
  no_header_comment,
  missing_source,
  malformed_param_line,
  no_outputs,
};

const char* metadata_error_code_name(MetadataErrorCode code);

class MetadataParseError : public Error {
 public:
  MetadataParseError(MetadataErrorCode code, std::string message, std::size_t line = 0)
      : Error(ErrorCode::parse_error, std::move(message)),
        metadata_code_(code),
        line_(line) {}

  MetadataErrorCode metadata_code() const noexcept { return metadata_code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  MetadataErrorCode metadata_code_;
  std::size_t line_;
};

// Extracts and parses the structured header from the program's leading
// comment block. The block may use contiguous '#' lines, contiguous '//'
// lines, a '/* ... */' block, or a '""" ... """' block, and must contain:
//
//   Source: <one-sentence citation of the document>
//   Inputs:
//     <name> (<type>, <unit>): <definition>
//   Outputs:
//     <name> (<type>, <unit>): <definition>
//
// A param line may omit ", <unit>" and may have an empty definition; the
// result parses but is fuzzy. Throws MetadataParseError otherwise.
ProgramMetadata parse_metadata(std::string_view source_text);

struct MetadataIssue {
  MetadataErrorCode code = MetadataErrorCode::no_header_comment;
  std::size_t line = 0;
  std::string message;
};

std::optional<ProgramMetadata> try_parse_metadata(std::string_view source_text,
                                                  MetadataIssue* issue = nullptr);

// Canonical '#'-comment rendering of a header. parse_metadata(render_header(m))
// reproduces m for any metadata whose strings are single-line.
std::string render_header(const ProgramMetadata& metadata);

// Lines that are neither blank nor pure comment ('#', '//', '/*...*/',
// '"""..."""' forms recognized).
int count_logic_lines(std::string_view source_text);

struct KnowledgeIntensiveProgram {
  std::string id;
  std::string document_id;
  std::string source_text;
  ProgramMetadata metadata;
  int logic_line_count = 0;

  // Parses source_text and counts logic lines, keeping the cached metadata
  // consistent with the source by construction.
  static KnowledgeIntensiveProgram from_source(std::string id, std::string document_id,
                                               std::string source_text);
};

struct LintHit {
  std::size_t line = 0;
  std::string keyword;

  friend bool operator==(const LintHit&, const LintHit&) = default;
};

struct LintReport {
  std::vector<std::string> fuzzy_params;
  std::vector<LintHit> hallucination_hits;
  bool missing_citation_comments = false;

  bool is_clean() const {
    return fuzzy_params.empty() && hallucination_hits.empty() && !missing_citation_comments;
  }
};

struct LintOptions {
  std::vector<std::string> hallucination_lexicon = {"assuming", "assume", "suppose",
                                                    "假设"};
  std::vector<std::string> citation_markers = {"The law states", "According to"};
};

// Total over parsed programs. Rule F: params missing a unit or definition.
// Rule H: lexicon keywords anywhere outside the header's Source line(s).
// Citation check: at least one comment line in the program body carries a
// citation marker.
LintReport lint_program(const KnowledgeIntensiveProgram& program,
                        const LintOptions& options = {});

}  // namespace kipg::program
