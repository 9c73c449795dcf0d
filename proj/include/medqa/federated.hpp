#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "medqa/types.hpp"

namespace medqa::federated {

// An online answer source. query() may block; callers bound it with
// query_external and abandon it past its budget.
class ExternalSource {
 public:
  virtual ~ExternalSource() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Candidate> query(const std::string& question,
                                       std::chrono::milliseconds budget) = 0;
};

// Runs source->query on a worker thread and waits at most `budget`.
// Timeouts and exceptions yield an empty list; they never propagate.
std::vector<Candidate> query_external(std::shared_ptr<ExternalSource> source,
                                      const std::string& question,
                                      std::chrono::milliseconds budget);

struct MergePolicy {
  double kb_tier_bonus = 1000.0;  // added to kb candidate scores in the output
  double min_kb_score = 0.1;      // kb candidates below this rank after externals
  int max_candidates = 10;
};

// Tiered merge: kb candidates scoring >= min_kb_score, then external
// candidates, then the remaining kb candidates; score-descending inside each
// tier with the incoming order as tiebreak.
std::vector<Candidate> merge_rank(std::vector<Candidate> kb_candidates,
                                  std::vector<Candidate> external_candidates,
                                  const MergePolicy& policy);

// Fixture-backed source: a JSON object mapping a question substring to a list
// of canned answer strings.
class StubSource : public ExternalSource {
 public:
  StubSource(std::string name, std::string fixture_path);
  std::string name() const override { return name_; }
  std::vector<Candidate> query(const std::string& question,
                               std::chrono::milliseconds budget) override;

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::vector<std::string>>> fixtures_;  // key order
};

// Minimal HTTP client for a search endpoint returning
// {"results": [{"title": ..., "snippet": ...}]}. Disabled sources answer
// nothing.
class HttpSource : public ExternalSource {
 public:
  HttpSource(std::string name, std::string base_url, bool enabled,
             std::chrono::milliseconds timeout);
  std::string name() const override { return name_; }
  std::vector<Candidate> query(const std::string& question,
                               std::chrono::milliseconds budget) override;

 private:
  std::string name_;
  std::string base_url_;
  bool enabled_;
  std::chrono::milliseconds timeout_;
};

}  // namespace medqa::federated
