#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "medqa/answer.hpp"
#include "medqa/classifier.hpp"
#include "medqa/federated.hpp"
#include "medqa/kb.hpp"
#include "medqa/searcher.hpp"
#include "medqa/text.hpp"
#include "medqa/types.hpp"

namespace medqa::service {

struct QuestionRequest {
  std::string qid;
  std::string title;
  std::string body;
  std::chrono::steady_clock::time_point received_at = std::chrono::steady_clock::now();
};

struct StageBudgets {
  std::chrono::milliseconds total{60000};
  std::chrono::milliseconds safety_margin{5000};
  std::chrono::milliseconds classify{2000};
  std::chrono::milliseconds kb_retrieval{10000};
  std::chrono::milliseconds external{30000};
  std::chrono::milliseconds compose{1000};

  void validate() const;
  std::chrono::milliseconds deadline_window() const { return total - safety_margin; }
};

struct SourceConfig {
  std::string type;  // "stub" or "http"
  std::string name;
  std::string fixture_path;  // stub
  std::string base_url;      // http
  bool enabled = true;
  int timeout_ms = 5000;
};

struct PipelineConfig {
  std::string model_path;
  std::string kb_path;
  std::string lookup_table_path;
  std::string background_corpus_path;
  std::string fallback_text;
  StageBudgets budgets;
  federated::MergePolicy merge;
  searcher::Bm25Params bm25;
  int port = 8080;
  int max_concurrent = 8;
  std::vector<SourceConfig> sources;
  std::optional<std::set<QuestionType>> forced_types;

  static PipelineConfig from_file(const std::string& path);
  // MEDQA_MODEL, MEDQA_KB, MEDQA_PORT, MEDQA_CORPUS override the file values.
  void apply_env_overrides();
};

// Loaded, immutable dependencies shared read-only across requests.
struct Pipeline {
  std::shared_ptr<const classifier::ClassifierModel> model;  // may be null
  std::optional<std::set<QuestionType>> forced_types;
  std::shared_ptr<const kb::KnowledgeBase> knowledge;
  std::shared_ptr<const searcher::EntityIndex> entities;
  std::shared_ptr<const searcher::Bm25Index> bm25;
  searcher::AttributeLookupTable table;
  text::BackgroundStats stats;
  std::vector<std::shared_ptr<federated::ExternalSource>> sources;
  federated::MergePolicy merge;
  StageBudgets budgets;
  std::string fallback = answer::kDefaultFallback;

  static Pipeline load(const PipelineConfig& config);
};

// Full question pipeline under the deadline budget; never throws, degrades
// to the fallback answer instead.
answer::Answer handle_question(const QuestionRequest& request, const Pipeline& pipeline);

// --- evaluation ---------------------------------------------------------------

struct JudgmentRecord {
  std::string qid;
  bool answered = false;
  int score = 0;  // 1..4 when answered
};

struct JudgmentSet {
  int64_t received = 0;
  std::vector<JudgmentRecord> records;

  // JSON lines: a header {"received": N}, then {"qid", "answered", "score"?}.
  static JudgmentSet load(const std::string& path);
  void validate() const;
};

struct Metrics {
  double avg_score = 0.0;                 // 0-3 shifted scale, unanswered count as 0
  std::map<int, double> success_at;       // i in {2,3,4}: |score >= i| / received
  std::map<int, double> precision_at;     // i in {2,3,4}: |score >= i| / answered
  int64_t received = 0;
  int64_t answered = 0;
  std::map<int, int64_t> hits;            // |answered && score >= i|
  bool precision_undefined = false;       // answered == 0
};

Metrics evaluate(const JudgmentSet& judgments);

// --- http ----------------------------------------------------------------------

// POST /question {qid,title,body} -> {qid, answer, elapsed_ms, provenance};
// GET /health. Requests beyond max_concurrent get 503.
class QaServer {
 public:
  QaServer(std::shared_ptr<const Pipeline> pipeline, int max_concurrent);
  ~QaServer();

  int start(int port);  // port 0 picks a free one; returns the bound port
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int serve(const PipelineConfig& config);  // blocking

}  // namespace medqa::service
