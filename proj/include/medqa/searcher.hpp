#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "medqa/kb.hpp"
#include "medqa/text.hpp"
#include "medqa/types.hpp"

namespace medqa::searcher {

// Case-folded whole-phrase matching over entity names and aliases.
class EntityIndex {
 public:
  static EntityIndex build(const kb::KnowledgeBase& kb);

  // Exact phrase equality wins; otherwise the longest name/alias appearing
  // token-aligned inside the phrase; ambiguity at equal length -> no match.
  std::optional<std::string> match(const std::string& phrase) const;

 private:
  // token-joined name -> entity key
  std::unordered_map<std::string, std::string> names_;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 over flattened trees, Lucene-style idf.
class Bm25Index {
 public:
  static Bm25Index build(const kb::KnowledgeBase& kb, Bm25Params params = {});

  int doc_count() const { return static_cast<int>(entities_.size()); }
  const std::string& entity(int tree_id) const { return entities_[tree_id]; }
  std::optional<int> tree_id(const std::string& entity_key) const;

  // Sum over the query token list of idf(t) * tf*(k1+1) / (tf + k1*(1-b+b*len/avgdl)),
  // idf(t) = ln(1 + (N-df+0.5)/(df+0.5)).
  double score(const std::vector<std::string>& query, int tree_id) const;

  // Descending score, ties by entity name ascending, zero scores dropped.
  std::vector<std::pair<std::string, double>> search(const std::vector<std::string>& query,
                                                     int top_k) const;

  // Full-scan scoring of every tree; the serial variant is the reference the
  // tests compare against, search() dispatches like the kernels do.
  std::vector<double> scan(const std::vector<std::string>& query) const;
  std::vector<double> scan_serial(const std::vector<std::string>& query) const;
  std::vector<double> scan_parallel(const std::vector<std::string>& query) const;

 private:
  std::vector<std::string> entities_;  // tree id -> entity key, sorted
  std::unordered_map<std::string, int> id_of_;
  std::unordered_map<std::string, std::unordered_map<int, int>> postings_;  // token -> tree -> tf
  std::vector<int64_t> lengths_;
  double avgdl_ = 0.0;
  Bm25Params params_;
};

struct ResolvedPath {
  std::vector<std::string> path;
  QuestionType type;
};

// (template, question type) -> ordered attribute paths, primary first.
struct AttributeLookupTable {
  std::map<std::string, std::map<QuestionType, std::vector<std::vector<std::string>>>> entries;

  static AttributeLookupTable defaults();
  static AttributeLookupTable load(const std::string& path);
  void save(const std::string& path) const;

  // Every listed path must exist in the named template.
  void validate(const kb::KnowledgeBase& kb) const;

  // Concatenation in fixed type-priority order, de-duplicated.
  std::vector<ResolvedPath> resolve(const std::string& template_id,
                                    const std::set<QuestionType>& types) const;
};

// Structure-aware retrieval: entity match (confidence 1.0) or best BM25 tree
// (confidence score/(score+1)), then attribute paths in order with sibling
// fallback; candidate score = confidence * 0.9^path_rank.
std::vector<Candidate> retrieve(const std::optional<text::FocusCandidate>& focus,
                                const std::vector<std::string>& question_content_tokens,
                                const kb::KnowledgeBase& kb, const EntityIndex& entities,
                                const Bm25Index& bm25, const AttributeLookupTable& table,
                                const std::set<QuestionType>& types);

}  // namespace medqa::searcher
