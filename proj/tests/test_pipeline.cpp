#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "medqa/service.hpp"

using namespace medqa;
using namespace medqa::service;
using namespace std::chrono_literals;

namespace {

StageBudgets fast_budgets() {
  StageBudgets b;
  b.total = 3000ms;
  b.safety_margin = 500ms;
  b.classify = 100ms;
  b.kb_retrieval = 400ms;
  b.external = 1500ms;
  b.compose = 100ms;
  return b;
}

Pipeline fixture_pipeline() {
  PipelineConfig cfg;
  cfg.kb_path = "fixtures/kb_fixture.json";
  cfg.background_corpus_path = "fixtures/background_corpus.txt";
  cfg.budgets = fast_budgets();
  cfg.forced_types = std::set<QuestionType>{QuestionType::Treatment};
  return Pipeline::load(cfg);
}

class SleepSource : public federated::ExternalSource {
 public:
  explicit SleepSource(std::chrono::milliseconds delay) : delay_(delay) {}
  std::string name() const override { return "sleepy"; }
  std::vector<Candidate> query(const std::string&, std::chrono::milliseconds) override {
    std::this_thread::sleep_for(delay_);
    Candidate c;
    c.text = "slow answer";
    c.score = 1.0;
    return {c};
  }

 private:
  std::chrono::milliseconds delay_;
};

class PanicSource : public federated::ExternalSource {
 public:
  std::string name() const override { return "panicky"; }
  std::vector<Candidate> query(const std::string&, std::chrono::milliseconds) override {
    throw std::runtime_error("boom");
  }
};

}  // namespace

TEST_CASE("budget validation") {
  StageBudgets b = fast_budgets();
  CHECK_NOTHROW(b.validate());
  b.safety_margin = 3000ms;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = fast_budgets();
  b.external = 10000ms;  // stages exceed total - margin
  CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("treatment question over the fixture kb walks the tree") {
  const auto pipe = fixture_pipeline();
  QuestionRequest req;
  req.qid = "t1";
  req.title = "what is the treatment for hypertension";
  const auto ans = handle_question(req, pipe);
  CHECK(ans.text.find("thiazide diuretics") != std::string::npos);
  CHECK(ans.text.find("Lifestyle changes") != std::string::npos);
  CHECK(answer::u8_length(ans.text) <= 1000);
  REQUIRE(!ans.provenance.empty());
  CHECK(ans.provenance[0].source == "kb");
  CHECK(ans.provenance[0].entity == "Hypertension");
}

TEST_CASE("alias questions reach the same tree") {
  auto pipe = fixture_pipeline();
  QuestionRequest req;
  req.qid = "t2";
  req.title = "best treatment for high blood pressure";
  const auto ans = handle_question(req, pipe);
  CHECK(ans.text.find("thiazide diuretics") != std::string::npos);
}

TEST_CASE("kb miss with a stub answer falls back to the external source") {
  auto pipe = fixture_pipeline();
  pipe.forced_types = std::set<QuestionType>{QuestionType::Information};
  pipe.sources.push_back(
      std::make_shared<federated::StubSource>("yahoo-style", "fixtures/stub_answers.json"));
  QuestionRequest req;
  req.qid = "t3";
  req.title = "what is zika";
  const auto ans = handle_question(req, pipe);
  CHECK(ans.text.find("mosquito") != std::string::npos);
  REQUIRE(!ans.provenance.empty());
  CHECK(ans.provenance[0].source == "yahoo-style");
}

TEST_CASE("everything empty degrades to the fallback within budget") {
  auto pipe = fixture_pipeline();
  pipe.forced_types = std::set<QuestionType>{QuestionType::Information};
  QuestionRequest req;
  req.qid = "t4";
  req.title = "qqqq zzzz wwww";  // no overlap with any tree
  const auto ans = handle_question(req, pipe);
  CHECK(ans.text == answer::kDefaultFallback);
  CHECK(ans.elapsed <= pipe.budgets.deadline_window());
}

TEST_CASE("a source sleeping past twice its stage budget cannot break the deadline") {
  auto pipe = fixture_pipeline();
  pipe.sources.push_back(std::make_shared<SleepSource>(2 * pipe.budgets.external));
  pipe.sources.push_back(std::make_shared<PanicSource>());

  QuestionRequest req;
  req.qid = "t5";
  req.title = "what is the treatment for hypertension";
  const auto t0 = std::chrono::steady_clock::now();
  const auto ans = handle_question(req, pipe);
  const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - t0);

  CHECK(wall <= pipe.budgets.deadline_window());
  // the kb answer still made it
  CHECK(ans.text.find("thiazide diuretics") != std::string::npos);
}

TEST_CASE("end-to-end determinism with fixed inputs") {
  auto pipe = fixture_pipeline();
  pipe.sources.push_back(
      std::make_shared<federated::StubSource>("stub", "fixtures/stub_answers.json"));
  QuestionRequest req;
  req.qid = "t6";
  req.title = "how is diabetes diagnosed";
  pipe.forced_types = std::set<QuestionType>{QuestionType::Diagnosis};
  const auto a = handle_question(req, pipe);
  const auto b = handle_question(req, pipe);
  CHECK(a.text == b.text);
  REQUIRE(a.provenance.size() == b.provenance.size());
}

TEST_CASE("config file parsing with env overrides") {
  const std::string path = "build/test_config.json";
  {
    std::ofstream out(path);
    out << R"({
      "kb": "fixtures/kb_fixture.json",
      "background_corpus": "fixtures/background_corpus.txt",
      "port": 9999,
      "budgets": {"total_ms": 3000, "safety_margin_ms": 500, "classify_ms": 100,
                  "kb_ms": 400, "external_ms": 1500, "compose_ms": 100},
      "merge": {"min_kb_score": 0.25, "max_candidates": 5},
      "forced_types": ["Treatment"],
      "sources": [{"type": "stub", "name": "canned", "fixtures": "fixtures/stub_answers.json"}]
    })";
  }
  auto cfg = PipelineConfig::from_file(path);
  CHECK(cfg.port == 9999);
  CHECK(cfg.merge.min_kb_score == doctest::Approx(0.25));
  CHECK(cfg.budgets.total == 3000ms);
  REQUIRE(cfg.forced_types.has_value());
  CHECK(cfg.forced_types->count(QuestionType::Treatment) == 1);
  REQUIRE(cfg.sources.size() == 1);
  CHECK(cfg.sources[0].type == "stub");

  setenv("MEDQA_PORT", "7777", 1);
  cfg.apply_env_overrides();
  CHECK(cfg.port == 7777);
  unsetenv("MEDQA_PORT");

  const auto pipe = Pipeline::load(cfg);
  CHECK(pipe.sources.size() == 1);
  CHECK(pipe.merge.max_candidates == 5);
}

TEST_CASE("invalid stage budgets are rejected at config load") {
  const std::string path = "build/test_config_bad.json";
  {
    std::ofstream out(path);
    out << R"({"kb": "fixtures/kb_fixture.json",
               "budgets": {"total_ms": 1000, "safety_margin_ms": 2000}})";
  }
  CHECK_THROWS_AS(PipelineConfig::from_file(path), ConfigError);
}
