#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kipg/knowledge_store.hpp"

namespace kipg::retrieval {

// Tokenizer: lowercased ASCII alphanumeric runs, plus overlapping bigrams
// over CJK codepoint runs (a lone CJK character becomes a unigram). The
// corpus is Chinese-first with English translations, so both script families
// must index well.
std::vector<std::string> tokenize(std::string_view text);

struct ScoredDocument {
  std::string document_id;
  double score = 0.0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Immutable probabilistic-relevance (BM25) index over title + body.
class LexicalIndex {
 public:
  static LexicalIndex build(const store::DocumentCollection& collection,
                            const Bm25Params& params = {});

  // Descending score, ties broken by ascending document id; only documents
  // with score > 0 appear. k is clamped to the corpus size.
  std::vector<ScoredDocument> retrieve(std::string_view query, std::size_t k) const;

  std::size_t size() const { return docs_.size(); }
  std::uint64_t source_fingerprint() const { return fingerprint_; }
  const Bm25Params& params() const { return params_; }

  // Persistence with a fingerprint of the source collection; load_or_build
  // rebuilds (and rewrites the file) when the fingerprint is stale.
  void save(const std::filesystem::path& path) const;
  static LexicalIndex load(const std::filesystem::path& path);
  static LexicalIndex load_or_build(const std::filesystem::path& path,
                                    const store::DocumentCollection& collection,
                                    const Bm25Params& params = {});

 private:
  struct DocEntry {
    std::string id;
    std::size_t length = 0;
    std::map<std::string, std::uint32_t> term_freqs;
  };

  Bm25Params params_;
  std::vector<DocEntry> docs_;
  std::map<std::string, std::uint32_t> doc_freqs_;
  double avg_doc_length_ = 0.0;
  std::uint64_t fingerprint_ = 0;
};

// Token-set similarity (Dice coefficient) in [0, 1]; used to anchor model
// recall onto stored documents.
double lexical_similarity(std::string_view a, std::string_view b);

struct LlmRecallMatch {
  std::string recalled_text;
  std::string matched_document_id;  // empty when nothing matched at all
  double similarity = 0.0;
  bool hallucination_suspected = true;
};

// Matches a model-recalled article against the collection. Flags a suspected
// hallucination when the best similarity falls below the threshold.
LlmRecallMatch match_recalled_article(const std::string& recalled_text,
                                      const store::DocumentCollection& collection,
                                      double similarity_threshold = 0.5);

}  // namespace kipg::retrieval
