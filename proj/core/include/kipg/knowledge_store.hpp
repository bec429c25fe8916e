#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kipg/decimal.hpp"
#include "kipg/errors.hpp"

namespace kipg::store {

// A domain rule or article. `domain` is "legal", "medical", or any other
// domain name.
struct KnowledgeDocument {
  std::string id;
  std::string domain;
  std::string case_type;
  std::string subtype;
  std::string title;
  std::string body;
};

enum class Split { train, small_train, test };

const char* split_name(Split split);
std::optional<Split> split_from_name(std::string_view name);

// One calculation query with its gold reasoning chain and exact numeric
// answer. reference_answer keeps the corpus string form (at most 4 fractional
// digits) alongside the parsed exact value.
struct CalculationInstance {
  std::string id;
  std::string query;
  std::string reference_response;
  Decimal reference_answer;
  std::string reference_answer_text;
  std::string unit;
  std::vector<std::string> document_ids;
  std::string case_type;
  Split split = Split::train;

  // Instances marked small_train belong to the train split as well.
  bool in_train() const noexcept { return split != Split::test; }
  bool in_small_train() const noexcept { return split == Split::small_train; }
};

// Immutable after load; safe to share across threads.
class DocumentCollection {
 public:
  const std::vector<KnowledgeDocument>& documents() const { return docs_; }
  const KnowledgeDocument* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }

  // (case_type, subtype) pairs declared by the loaded documents.
  const std::set<std::pair<std::string, std::string>>& taxonomy() const {
    return taxonomy_;
  }
  bool taxonomy_has_case_type(const std::string& case_type) const;

  // 64-bit content fingerprint over the canonical serialization; used to
  // detect stale retrieval indexes.
  std::uint64_t fingerprint() const;

  void add(KnowledgeDocument doc);  // throws on duplicate id / empty body

 private:
  std::vector<KnowledgeDocument> docs_;
  std::map<std::string, std::size_t> by_id_;
  std::set<std::pair<std::string, std::string>> taxonomy_;
};

class InstanceSet {
 public:
  const std::vector<CalculationInstance>& instances() const { return items_; }
  std::vector<CalculationInstance>& instances() { return items_; }
  const CalculationInstance* find(const std::string& id) const;
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  std::vector<const CalculationInstance*> for_document(const std::string& document_id) const;
  std::vector<const CalculationInstance*> with_split(Split split) const;

  void add(CalculationInstance instance);  // throws on duplicate id

 private:
  std::vector<CalculationInstance> items_;
  std::map<std::string, std::size_t> by_id_;
};

// Corpus loading. Both formats are line-delimited JSON, one record per line
// (schemas in the README). Errors: ParseError with line number, and Error
// with codes duplicate_id / empty_body / dangling_document_ref /
// malformed_answer.
DocumentCollection load_documents(const std::filesystem::path& path);
InstanceSet load_instances(const std::filesystem::path& path,
                           const DocumentCollection& collection);

// Canonical re-rendering: fixed field order, compact JSON, one trailing
// newline per record. serialize(load(path)) is the canonical form of path.
std::string serialize_documents(const DocumentCollection& collection);
std::string serialize_instances(const InstanceSet& set);

// Marks a stratified random subset of the train split as small_train.
// Deterministic in (set, small_fraction, seed). Per case_type the subset size
// is round(fraction * n), at least 1 when the stratum is nonempty.
InstanceSet split_instances(InstanceSet set, double small_fraction, std::uint64_t seed);

}  // namespace kipg::store
