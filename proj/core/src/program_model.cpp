#include "kipg/program_model.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace kipg::program {

namespace {

struct HeaderLine {
  std::size_t source_line;  // 1-based line in the original source
  std::string text;         // comment payload with the comment marker stripped
};

struct HeaderBlock {
  std::vector<HeaderLine> lines;
  std::size_t first_body_line = 1;  // 1-based first line after the block
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  return lines;
}

// Collects the leading comment block. Returns nullopt when the first
// non-blank line is not a comment.
std::optional<HeaderBlock> extract_header(const std::vector<std::string>& lines) {
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i >= lines.size()) return std::nullopt;

  std::string_view first = trim(lines[i]);
  HeaderBlock block;

  auto strip_marker = [](std::string_view line, std::string_view marker) {
    std::string_view t = trim(line);
    if (t.substr(0, marker.size()) != marker) return std::optional<std::string>{};
    t.remove_prefix(marker.size());
    if (!t.empty() && t.front() == ' ') t.remove_prefix(1);
    return std::optional<std::string>{std::string(t)};
  };

  if (first.starts_with("#") || first.starts_with("//")) {
    std::string marker = first.starts_with("//") ? "//" : "#";
    while (i < lines.size()) {
      auto payload = strip_marker(lines[i], marker);
      if (!payload) break;
      block.lines.push_back({i + 1, *payload});
      ++i;
    }
    block.first_body_line = i + 1;
    return block;
  }

  std::string_view open, close;
  if (first.starts_with("/*")) {
    open = "/*";
    close = "*/";
  } else if (first.starts_with("\"\"\"")) {
    open = "\"\"\"";
    close = "\"\"\"";
  } else if (first.starts_with("'''")) {
    open = "'''";
    close = "'''";
  } else {
    return std::nullopt;
  }

  // Block comment: strip the delimiters, keep interior lines. A leading '*'
  // decoration on '/* */' interior lines is removed.
  std::string_view rest = trim(first.substr(open.size()));
  bool closed = false;
  if (auto pos = rest.find(close); pos != std::string_view::npos) {
    rest = trim(rest.substr(0, pos));
    closed = true;
  }
  if (!rest.empty()) block.lines.push_back({i + 1, std::string(rest)});
  ++i;
  while (!closed && i < lines.size()) {
    std::string_view line = lines[i];
    std::string_view t = trim(line);
    if (auto pos = t.find(close); pos != std::string_view::npos) {
      t = trim(t.substr(0, pos));
      closed = true;
    }
    if (close == "*/" && t.starts_with("*")) {
      t.remove_prefix(1);
      if (!t.empty() && t.front() == ' ') t.remove_prefix(1);
    }
    block.lines.push_back({i + 1, std::string(t)});
    ++i;
  }
  block.first_body_line = i + 1;
  return block;
}

const std::regex kParamLine(
    R"(^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*([A-Za-z-]+)\s*(?:,\s*([^)]*?)\s*)?\)\s*:\s*(.*?)\s*$)");

bool parse_param_line(const std::string& text, ParamSpec& out) {
  std::smatch m;
  if (!std::regex_match(text, m, kParamLine)) return false;
  auto type = semantic_type_from_name(m[2].str());
  if (!type) return false;
  out.name = m[1].str();
  out.semantic_type = *type;
  out.unit = m[3].matched ? m[3].str() : "";
  out.definition = m[4].str();
  return true;
}

enum class Section { preamble, source, inputs, outputs };

}  // namespace

const char* semantic_type_name(SemanticType type) {
  switch (type) {
    case SemanticType::integer: return "integer";
    case SemanticType::decimal: return "decimal";
    case SemanticType::boolean: return "boolean";
    case SemanticType::string: return "string";
    case SemanticType::list_of_decimal: return "list-of-decimal";
  }
  return "decimal";
}

std::optional<SemanticType> semantic_type_from_name(std::string_view name) {
  if (name == "integer") return SemanticType::integer;
  if (name == "decimal") return SemanticType::decimal;
  if (name == "boolean") return SemanticType::boolean;
  if (name == "string") return SemanticType::string;
  if (name == "list-of-decimal") return SemanticType::list_of_decimal;
  return std::nullopt;
}

const char* metadata_error_code_name(MetadataErrorCode code) {
  switch (code) {
    case MetadataErrorCode::no_header_comment: return "no_header_comment";
    case MetadataErrorCode::missing_source: return "missing_source";
    case MetadataErrorCode::malformed_param_line: return "malformed_param_line";
    case MetadataErrorCode::no_outputs: return "no_outputs";
  }
  return "no_header_comment";
}

const ParamSpec* ProgramMetadata::find_input(std::string_view name) const {
  for (const auto& p : inputs) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const ParamSpec* ProgramMetadata::find_output(std::string_view name) const {
  for (const auto& p : outputs) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

ProgramMetadata parse_metadata(std::string_view source_text) {
  if (trim(source_text).empty()) {
    throw MetadataParseError(MetadataErrorCode::no_header_comment, "empty program source");
  }
  auto lines = split_lines(source_text);
  auto block = extract_header(lines);
  if (!block || block->lines.empty()) {
    throw MetadataParseError(MetadataErrorCode::no_header_comment,
                             "program source has no leading comment block");
  }

  ProgramMetadata meta;
  Section section = Section::preamble;
  bool saw_inputs_label = false;
  bool saw_outputs_label = false;

  for (const auto& line : block->lines) {
    std::string_view t = trim(line.text);
    if (t.empty()) continue;

    if (t.starts_with("Source:")) {
      meta.knowledge_source = std::string(trim(t.substr(7)));
      section = Section::source;
      continue;
    }
    if (t == "Inputs:") {
      section = Section::inputs;
      saw_inputs_label = true;
      continue;
    }
    if (t == "Outputs:") {
      section = Section::outputs;
      saw_outputs_label = true;
      continue;
    }

    switch (section) {
      case Section::preamble:
        // Free text before Source: is tolerated.
        break;
      case Section::source:
        // Continuation of a long citation sentence.
        if (!meta.knowledge_source.empty()) meta.knowledge_source += ' ';
        meta.knowledge_source += std::string(t);
        break;
      case Section::inputs:
      case Section::outputs: {
        ParamSpec spec;
        if (!parse_param_line(std::string(t), spec)) {
          throw MetadataParseError(MetadataErrorCode::malformed_param_line,
                                   "malformed param line: \"" + std::string(t) + "\"",
                                   line.source_line);
        }
        auto& params = section == Section::inputs ? meta.inputs : meta.outputs;
        bool duplicate = std::any_of(params.begin(), params.end(), [&](const ParamSpec& p) {
          return p.name == spec.name;
        });
        if (duplicate) {
          throw MetadataParseError(MetadataErrorCode::malformed_param_line,
                                   "duplicate param name \"" + spec.name + "\"",
                                   line.source_line);
        }
        params.push_back(std::move(spec));
        break;
      }
    }
  }

  if (meta.knowledge_source.empty()) {
    throw MetadataParseError(MetadataErrorCode::missing_source,
                             "header has no Source: field");
  }
  if (!saw_outputs_label || meta.outputs.empty()) {
    throw MetadataParseError(MetadataErrorCode::no_outputs,
                             "header declares no outputs");
  }
  (void)saw_inputs_label;  // programs may legitimately take no inputs
  return meta;
}

std::optional<ProgramMetadata> try_parse_metadata(std::string_view source_text,
                                                  MetadataIssue* issue) {
  try {
    return parse_metadata(source_text);
  } catch (const MetadataParseError& e) {
    if (issue) {
      issue->code = e.metadata_code();
      issue->line = e.line();
      issue->message = e.what();
    }
    return std::nullopt;
  }
}

std::string render_header(const ProgramMetadata& metadata) {
  std::string out;
  out += "# Source: " + metadata.knowledge_source + "\n";
  auto render_params = [&](const char* label, const std::vector<ParamSpec>& params) {
    out += std::string("# ") + label + "\n";
    for (const auto& p : params) {
      out += "#   " + p.name + " (" + semantic_type_name(p.semantic_type);
      if (!p.unit.empty()) out += ", " + p.unit;
      out += "): " + p.definition + "\n";
    }
  };
  render_params("Inputs:", metadata.inputs);
  render_params("Outputs:", metadata.outputs);
  return out;
}

int count_logic_lines(std::string_view source_text) {
  auto lines = split_lines(source_text);
  int count = 0;
  bool in_block = false;
  std::string_view block_close;

  for (const auto& raw : lines) {
    std::string_view t = trim(raw);
    if (in_block) {
      if (auto pos = t.find(block_close); pos != std::string_view::npos) {
        in_block = false;
        std::string_view after = trim(t.substr(pos + block_close.size()));
        if (!after.empty()) ++count;
      }
      continue;
    }
    if (t.empty()) continue;
    if (t.starts_with("#") || t.starts_with("//")) continue;
    if (t.starts_with("/*") || t.starts_with("\"\"\"") || t.starts_with("'''")) {
      std::string_view close = t.starts_with("/*") ? "*/" : t.substr(0, 3);
      std::string_view rest = t.substr(t.starts_with("/*") ? 2 : 3);
      if (auto pos = rest.find(close); pos != std::string_view::npos) {
        std::string_view after = trim(rest.substr(pos + close.size()));
        if (!after.empty()) ++count;
      } else {
        in_block = true;
        block_close = close;
      }
      continue;
    }
    ++count;
  }
  return count;
}

KnowledgeIntensiveProgram KnowledgeIntensiveProgram::from_source(std::string id,
                                                                 std::string document_id,
                                                                 std::string source_text) {
  KnowledgeIntensiveProgram p;
  p.id = std::move(id);
  p.document_id = std::move(document_id);
  p.metadata = parse_metadata(source_text);
  p.logic_line_count = count_logic_lines(source_text);
  p.source_text = std::move(source_text);
  return p;
}

namespace {

bool contains_ci(std::string_view haystack, std::string_view needle, std::size_t& pos_out,
                 std::size_t start) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  for (std::size_t i = start; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (lower(haystack[i + j]) != lower(needle[j])) {
        match = false;
        break;
      }
    }
    if (match) {
      pos_out = i;
      return true;
    }
  }
  return false;
}

struct Span {
  std::size_t start;
  std::size_t length;
  const std::string* keyword;
};

}  // namespace

LintReport lint_program(const KnowledgeIntensiveProgram& program, const LintOptions& options) {
  LintReport report;

  for (const auto& p : program.metadata.inputs) {
    if (!p.well_defined()) report.fuzzy_params.push_back(p.name);
  }
  for (const auto& p : program.metadata.outputs) {
    if (!p.well_defined()) report.fuzzy_params.push_back(p.name);
  }

  auto lines = split_lines(program.source_text);

  // Lines belonging to the header's Source field are exempt from keyword
  // scanning: the citation sentence may quote the document freely.
  std::vector<bool> exempt(lines.size() + 1, false);
  if (auto block = extract_header(lines)) {
    Section section = Section::preamble;
    for (const auto& line : block->lines) {
      std::string_view t = trim(line.text);
      if (t.starts_with("Source:")) {
        section = Section::source;
      } else if (t == "Inputs:" || t == "Outputs:") {
        section = Section::preamble;
        continue;
      }
      if (section == Section::source) exempt[line.source_line] = true;
    }

    // Citation comments are searched below the header block.
    bool found_citation = false;
    for (std::size_t i = block->first_body_line; i <= lines.size() && !found_citation; ++i) {
      std::string_view t = trim(lines[i - 1]);
      if (!(t.starts_with("#") || t.starts_with("//"))) continue;
      for (const auto& marker : options.citation_markers) {
        std::size_t pos;
        if (contains_ci(t, marker, pos, 0)) {
          found_citation = true;
          break;
        }
      }
    }
    report.missing_citation_comments = !found_citation;
  } else {
    report.missing_citation_comments = true;
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (exempt[i + 1]) continue;
    const std::string& line = lines[i];

    std::vector<Span> spans;
    for (const auto& keyword : options.hallucination_lexicon) {
      std::size_t pos = 0;
      std::size_t found;
      while (contains_ci(line, keyword, found, pos)) {
        spans.push_back({found, keyword.size(), &keyword});
        pos = found + 1;
      }
    }
    // Longest match wins at each position, so "assume" does not double-count
    // inside "assuming".
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
      if (a.start != b.start) return a.start < b.start;
      return a.length > b.length;
    });
    std::size_t cursor = 0;
    for (const auto& span : spans) {
      if (span.start < cursor) continue;
      report.hallucination_hits.push_back({i + 1, *span.keyword});
      cursor = span.start + span.length;
    }
  }

  return report;
}

}  // namespace kipg::program
