#include "kipg/knowledge_store.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

#include "kipg/jsonl.hpp"

namespace kipg::store {

namespace {

using jsonl::Json;

// Matches the corpus rule for decimal answers: optional sign, integer part,
// at most 4 fractional digits.
const std::regex kAnswerPattern(R"(-?[0-9]+(\.[0-9]{1,4})?)");

std::string require_string(const Json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw ParseError(std::string("missing or non-string field \"") + key + "\"", line);
  }
  return it->get<std::string>();
}

// FNV-1a, 64-bit.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::small_train: return "small_train";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> split_from_name(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "small_train") return Split::small_train;
  if (name == "test") return Split::test;
  return std::nullopt;
}

const KnowledgeDocument* DocumentCollection::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

bool DocumentCollection::taxonomy_has_case_type(const std::string& case_type) const {
  return std::any_of(taxonomy_.begin(), taxonomy_.end(),
                     [&](const auto& pair) { return pair.first == case_type; });
}

std::uint64_t DocumentCollection::fingerprint() const {
  return fnv1a(serialize_documents(*this));
}

void DocumentCollection::add(KnowledgeDocument doc) {
  if (doc.body.empty()) {
    throw Error(ErrorCode::empty_body, "document \"" + doc.id + "\" has an empty body");
  }
  if (by_id_.count(doc.id)) {
    throw Error(ErrorCode::duplicate_id, "duplicate document id \"" + doc.id + "\"");
  }
  taxonomy_.emplace(doc.case_type, doc.subtype);
  by_id_.emplace(doc.id, docs_.size());
  docs_.push_back(std::move(doc));
}

const CalculationInstance* InstanceSet::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

std::vector<const CalculationInstance*> InstanceSet::for_document(
    const std::string& document_id) const {
  std::vector<const CalculationInstance*> out;
  for (const auto& inst : items_) {
    if (!inst.document_ids.empty() && inst.document_ids.front() == document_id) {
      out.push_back(&inst);
    }
  }
  return out;
}

std::vector<const CalculationInstance*> InstanceSet::with_split(Split split) const {
  std::vector<const CalculationInstance*> out;
  for (const auto& inst : items_) {
    if (split == Split::train ? inst.in_train() : inst.split == split) {
      out.push_back(&inst);
    }
  }
  return out;
}

void InstanceSet::add(CalculationInstance instance) {
  if (by_id_.count(instance.id)) {
    throw Error(ErrorCode::duplicate_id, "duplicate instance id \"" + instance.id + "\"");
  }
  by_id_.emplace(instance.id, items_.size());
  items_.push_back(std::move(instance));
}

DocumentCollection load_documents(const std::filesystem::path& path) {
  DocumentCollection collection;
  jsonl::for_each_record(path, [&](std::size_t line, const Json& record) {
    KnowledgeDocument doc;
    doc.id = require_string(record, "id", line);
    doc.domain = require_string(record, "domain", line);
    doc.case_type = require_string(record, "case_type", line);
    doc.subtype = require_string(record, "subtype", line);
    doc.title = require_string(record, "title", line);
    doc.body = require_string(record, "body", line);
    collection.add(std::move(doc));
  });
  return collection;
}

InstanceSet load_instances(const std::filesystem::path& path,
                           const DocumentCollection& collection) {
  InstanceSet set;
  jsonl::for_each_record(path, [&](std::size_t line, const Json& record) {
    CalculationInstance inst;
    inst.id = require_string(record, "id", line);
    inst.query = require_string(record, "query", line);
    inst.reference_response = require_string(record, "reference_response", line);
    inst.unit = require_string(record, "unit", line);
    inst.case_type = require_string(record, "case_type", line);

    inst.reference_answer_text = require_string(record, "reference_answer", line);
    if (!std::regex_match(inst.reference_answer_text, kAnswerPattern)) {
      throw Error(ErrorCode::malformed_answer,
                  "instance \"" + inst.id + "\": reference_answer \"" +
                      inst.reference_answer_text + "\" is not a decimal");
    }
    auto parsed = Decimal::parse(inst.reference_answer_text);
    if (!parsed) {
      throw Error(ErrorCode::malformed_answer,
                  "instance \"" + inst.id + "\": reference_answer out of range");
    }
    inst.reference_answer = *parsed;

    auto docs_it = record.find("document_ids");
    if (docs_it == record.end() || !docs_it->is_array() || docs_it->empty()) {
      throw ParseError("instance \"" + inst.id + "\": document_ids must be a non-empty array",
                       line);
    }
    for (const auto& d : *docs_it) {
      if (!d.is_string()) {
        throw ParseError("instance \"" + inst.id + "\": document_ids entries must be strings",
                         line);
      }
      std::string doc_id = d.get<std::string>();
      if (!collection.contains(doc_id)) {
        throw Error(ErrorCode::dangling_document_ref,
                    "instance \"" + inst.id + "\" references unknown document \"" +
                        doc_id + "\"");
      }
      inst.document_ids.push_back(std::move(doc_id));
    }

    std::string split_text = require_string(record, "split", line);
    auto split = split_from_name(split_text);
    if (!split) {
      throw ParseError("instance \"" + inst.id + "\": unknown split \"" + split_text + "\"",
                       line);
    }
    inst.split = *split;

    set.add(std::move(inst));
  });
  return set;
}

std::string serialize_documents(const DocumentCollection& collection) {
  std::vector<Json> records;
  records.reserve(collection.size());
  for (const auto& doc : collection.documents()) {
    Json r;
    r["id"] = doc.id;
    r["domain"] = doc.domain;
    r["case_type"] = doc.case_type;
    r["subtype"] = doc.subtype;
    r["title"] = doc.title;
    r["body"] = doc.body;
    records.push_back(std::move(r));
  }
  return jsonl::render(records);
}

std::string serialize_instances(const InstanceSet& set) {
  std::vector<Json> records;
  records.reserve(set.size());
  for (const auto& inst : set.instances()) {
    Json r;
    r["id"] = inst.id;
    r["query"] = inst.query;
    r["reference_response"] = inst.reference_response;
    r["reference_answer"] = inst.reference_answer_text;
    r["unit"] = inst.unit;
    r["document_ids"] = inst.document_ids;
    r["case_type"] = inst.case_type;
    r["split"] = split_name(inst.split);
    records.push_back(std::move(r));
  }
  return jsonl::render(records);
}

namespace {

// Deterministic bounded draw (rejection sampling), independent of any
// library's distribution implementation.
std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

}  // namespace

InstanceSet split_instances(InstanceSet set, double small_fraction, std::uint64_t seed) {
  if (!(small_fraction > 0.0 && small_fraction < 1.0)) {
    throw Error(ErrorCode::config_invalid, "small_fraction must lie in (0, 1)");
  }

  // Group train-split indices by case_type, in a deterministic order.
  std::map<std::string, std::vector<std::size_t>> strata;
  auto& items = set.instances();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].split == Split::test) continue;
    items[i].split = Split::train;  // reset any previous small_train mark
    strata[items[i].case_type].push_back(i);
  }

  std::mt19937_64 rng(seed);
  for (auto& [case_type, indices] : strata) {
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      return items[a].id < items[b].id;
    });
    std::size_t n = indices.size();
    auto k = static_cast<std::size_t>(std::llround(small_fraction * static_cast<double>(n)));
    if (k == 0) k = 1;
    if (k > n) k = n;
    // Partial Fisher-Yates: the first k slots are the sample.
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + draw_below(rng, n - i);
      std::swap(indices[i], indices[j]);
    }
    for (std::size_t i = 0; i < k; ++i) {
      items[indices[i]].split = Split::small_train;
    }
  }
  return set;
}

}  // namespace kipg::store
