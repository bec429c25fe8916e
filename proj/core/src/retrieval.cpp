#include "kipg/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kipg/jsonl.hpp"

namespace kipg::retrieval {

namespace {

bool is_cjk(char32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) ||   // CJK extension A
         (cp >= 0x4E00 && cp <= 0x9FFF) ||   // CJK unified
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // CJK compatibility
         (cp >= 0x3040 && cp <= 0x30FF) ||   // kana
         (cp >= 0xAC00 && cp <= 0xD7AF);     // hangul
}

// Minimal UTF-8 decoding; invalid bytes are treated as separators.
struct Utf8Cursor {
  std::string_view text;
  std::size_t pos = 0;

  bool next(char32_t& cp, std::size_t& start, std::size_t& length) {
    while (pos < text.size()) {
      start = pos;
      unsigned char c = static_cast<unsigned char>(text[pos]);
      std::size_t len;
      char32_t value;
      if (c < 0x80) {
        len = 1;
        value = c;
      } else if ((c >> 5) == 0x6) {
        len = 2;
        value = c & 0x1F;
      } else if ((c >> 4) == 0xE) {
        len = 3;
        value = c & 0x0F;
      } else if ((c >> 3) == 0x1E) {
        len = 4;
        value = c & 0x07;
      } else {
        ++pos;
        continue;
      }
      if (pos + len > text.size()) {
        ++pos;
        continue;
      }
      bool valid = true;
      for (std::size_t i = 1; i < len; ++i) {
        unsigned char cc = static_cast<unsigned char>(text[pos + i]);
        if ((cc >> 6) != 0x2) {
          valid = false;
          break;
        }
        value = (value << 6) | (cc & 0x3F);
      }
      if (!valid) {
        ++pos;
        continue;
      }
      pos += len;
      cp = value;
      length = len;
      return true;
    }
    return false;
  }
};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string ascii_run;
  std::vector<std::string> cjk_run;  // one UTF-8 char per element

  auto flush_ascii = [&]() {
    if (!ascii_run.empty()) {
      tokens.push_back(ascii_run);
      ascii_run.clear();
    }
  };
  auto flush_cjk = [&]() {
    if (cjk_run.size() == 1) {
      tokens.push_back(cjk_run[0]);
    } else {
      for (std::size_t i = 0; i + 1 < cjk_run.size(); ++i) {
        tokens.push_back(cjk_run[i] + cjk_run[i + 1]);
      }
    }
    cjk_run.clear();
  };

  Utf8Cursor cursor{text};
  char32_t cp;
  std::size_t start, length;
  while (cursor.next(cp, start, length)) {
    if (cp < 0x80 && (std::isalnum(static_cast<int>(cp)) != 0)) {
      if (!cjk_run.empty()) flush_cjk();
      ascii_run.push_back(
          static_cast<char>(std::tolower(static_cast<int>(cp))));
    } else if (is_cjk(cp)) {
      flush_ascii();
      cjk_run.emplace_back(text.substr(start, length));
    } else {
      flush_ascii();
      if (!cjk_run.empty()) flush_cjk();
    }
  }
  flush_ascii();
  if (!cjk_run.empty()) flush_cjk();
  return tokens;
}

LexicalIndex LexicalIndex::build(const store::DocumentCollection& collection,
                                 const Bm25Params& params) {
  if (collection.empty()) {
    throw Error(ErrorCode::empty_collection, "cannot index an empty collection");
  }
  LexicalIndex index;
  index.params_ = params;
  index.fingerprint_ = collection.fingerprint();

  std::size_t total_length = 0;
  for (const auto& doc : collection.documents()) {
    DocEntry entry;
    entry.id = doc.id;
    auto tokens = tokenize(doc.title + " " + doc.body);
    entry.length = tokens.size();
    total_length += tokens.size();
    for (auto& t : tokens) ++entry.term_freqs[t];
    for (const auto& [term, tf] : entry.term_freqs) ++index.doc_freqs_[term];
    index.docs_.push_back(std::move(entry));
  }
  index.avg_doc_length_ =
      index.docs_.empty() ? 0.0 : static_cast<double>(total_length) / index.docs_.size();
  return index;
}

std::vector<ScoredDocument> LexicalIndex::retrieve(std::string_view query,
                                                   std::size_t k) const {
  if (k == 0) {
    throw Error(ErrorCode::config_invalid, "retrieve requires k >= 1");
  }
  auto query_tokens = tokenize(query);
  std::map<std::string, std::uint32_t> query_tf;
  for (auto& t : query_tokens) ++query_tf[t];

  const double n_docs = static_cast<double>(docs_.size());
  std::vector<ScoredDocument> scored;
  for (const auto& doc : docs_) {
    double score = 0.0;
    const double len_norm =
        1.0 - params_.b +
        params_.b * (avg_doc_length_ > 0 ? static_cast<double>(doc.length) / avg_doc_length_
                                         : 0.0);
    for (const auto& [term, qtf] : query_tf) {
      auto df_it = doc_freqs_.find(term);
      if (df_it == doc_freqs_.end()) continue;
      auto tf_it = doc.term_freqs.find(term);
      if (tf_it == doc.term_freqs.end()) continue;
      const double df = static_cast<double>(df_it->second);
      const double tf = static_cast<double>(tf_it->second);
      const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
      score += idf * static_cast<double>(qtf) * (tf * (params_.k1 + 1.0)) /
               (tf + params_.k1 * len_norm);
    }
    if (score > 0.0) scored.push_back({doc.id, score});
  }

  std::sort(scored.begin(), scored.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.document_id < b.document_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

void LexicalIndex::save(const std::filesystem::path& path) const {
  jsonl::Json j;
  j["format"] = "kipg-lexical-index-v1";
  j["fingerprint"] = fingerprint_;
  j["k1"] = params_.k1;
  j["b"] = params_.b;
  j["avg_doc_length"] = avg_doc_length_;
  jsonl::Json docs = jsonl::Json::array();
  for (const auto& doc : docs_) {
    jsonl::Json d;
    d["id"] = doc.id;
    d["length"] = doc.length;
    d["tf"] = doc.term_freqs;
    docs.push_back(std::move(d));
  }
  j["documents"] = std::move(docs);
  j["df"] = doc_freqs_;
  jsonl::write_text(path, j.dump());
}

LexicalIndex LexicalIndex::load(const std::filesystem::path& path) {
  auto j = jsonl::Json::parse(jsonl::read_text(path), nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "kipg-lexical-index-v1") {
    throw ParseError("not a lexical index file: " + path.string());
  }
  LexicalIndex index;
  index.fingerprint_ = j.at("fingerprint").get<std::uint64_t>();
  index.params_.k1 = j.at("k1").get<double>();
  index.params_.b = j.at("b").get<double>();
  index.avg_doc_length_ = j.at("avg_doc_length").get<double>();
  for (const auto& d : j.at("documents")) {
    DocEntry entry;
    entry.id = d.at("id").get<std::string>();
    entry.length = d.at("length").get<std::size_t>();
    for (const auto& [term, tf] : d.at("tf").items()) {
      entry.term_freqs[term] = tf.get<std::uint32_t>();
    }
    index.docs_.push_back(std::move(entry));
  }
  for (const auto& [term, df] : j.at("df").items()) {
    index.doc_freqs_[term] = df.get<std::uint32_t>();
  }
  return index;
}

LexicalIndex LexicalIndex::load_or_build(const std::filesystem::path& path,
                                         const store::DocumentCollection& collection,
                                         const Bm25Params& params) {
  if (std::filesystem::exists(path)) {
    try {
      auto index = load(path);
      if (index.source_fingerprint() == collection.fingerprint()) return index;
    } catch (const Error&) {
      // fall through to rebuild
    }
  }
  auto index = build(collection, params);
  index.save(path);
  return index;
}

double lexical_similarity(std::string_view a, std::string_view b) {
  auto ta = tokenize(a);
  auto tb = tokenize(b);
  if (ta.empty() || tb.empty()) return 0.0;
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  return 2.0 * static_cast<double>(common) / static_cast<double>(sa.size() + sb.size());
}

LlmRecallMatch match_recalled_article(const std::string& recalled_text,
                                      const store::DocumentCollection& collection,
                                      double similarity_threshold) {
  LlmRecallMatch match;
  match.recalled_text = recalled_text;
  if (recalled_text.empty() || collection.empty()) {
    return match;  // no match, flagged
  }
  for (const auto& doc : collection.documents()) {
    double sim = lexical_similarity(recalled_text, doc.title + " " + doc.body);
    if (sim > match.similarity ||
        (sim == match.similarity && match.matched_document_id.empty())) {
      match.similarity = sim;
      match.matched_document_id = doc.id;
    }
  }
  match.hallucination_suspected = match.similarity < similarity_threshold;
  return match;
}

}  // namespace kipg::retrieval
