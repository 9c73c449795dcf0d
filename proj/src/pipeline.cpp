#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>

#include <json.hpp>

#include "medqa/service.hpp"

namespace medqa::service {

using nlohmann::json;

void StageBudgets::validate() const {
  if (total.count() <= 0) throw ConfigError("total budget must be positive");
  if (safety_margin.count() < 0 || safety_margin >= total)
    throw ConfigError("safety margin must be in [0, total)");
  const auto stage_sum = classify + kb_retrieval + external + compose;
  if (stage_sum > total - safety_margin)
    throw ConfigError("stage budgets exceed total - safety_margin");
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config file: ") + e.what());
  }

  PipelineConfig cfg;
  try {
    cfg.model_path = j.value("model", "");
    cfg.kb_path = j.value("kb", "");
    cfg.lookup_table_path = j.value("lookup_table", "");
    cfg.background_corpus_path = j.value("background_corpus", "");
    cfg.fallback_text = j.value("fallback_text", "");
    cfg.port = j.value("port", 8080);
    cfg.max_concurrent = j.value("max_concurrent", 8);
    if (j.contains("budgets")) {
      const json& b = j.at("budgets");
      auto ms = [&](const char* key, std::chrono::milliseconds def) {
        return std::chrono::milliseconds(b.value(key, static_cast<int64_t>(def.count())));
      };
      cfg.budgets.total = ms("total_ms", cfg.budgets.total);
      cfg.budgets.safety_margin = ms("safety_margin_ms", cfg.budgets.safety_margin);
      cfg.budgets.classify = ms("classify_ms", cfg.budgets.classify);
      cfg.budgets.kb_retrieval = ms("kb_ms", cfg.budgets.kb_retrieval);
      cfg.budgets.external = ms("external_ms", cfg.budgets.external);
      cfg.budgets.compose = ms("compose_ms", cfg.budgets.compose);
    }
    if (j.contains("merge")) {
      const json& m = j.at("merge");
      cfg.merge.kb_tier_bonus = m.value("kb_tier_bonus", cfg.merge.kb_tier_bonus);
      cfg.merge.min_kb_score = m.value("min_kb_score", cfg.merge.min_kb_score);
      cfg.merge.max_candidates = m.value("max_candidates", cfg.merge.max_candidates);
    }
    if (j.contains("bm25")) {
      cfg.bm25.k1 = j.at("bm25").value("k1", cfg.bm25.k1);
      cfg.bm25.b = j.at("bm25").value("b", cfg.bm25.b);
    }
    if (j.contains("forced_types")) {
      std::set<QuestionType> forced;
      for (const auto& tj : j.at("forced_types")) {
        auto t = parse_type(tj.get<std::string>());
        if (!t) throw ConfigError("unknown forced type: " + tj.get<std::string>());
        forced.insert(*t);
      }
      cfg.forced_types = std::move(forced);
    }
    for (const auto& sj : j.value("sources", json::array())) {
      SourceConfig sc;
      sc.type = sj.at("type").get<std::string>();
      sc.name = sj.at("name").get<std::string>();
      sc.fixture_path = sj.value("fixtures", "");
      sc.base_url = sj.value("base_url", "");
      sc.enabled = sj.value("enabled", true);
      sc.timeout_ms = sj.value("timeout_ms", 5000);
      cfg.sources.push_back(std::move(sc));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config file: ") + e.what());
  }
  cfg.budgets.validate();
  return cfg;
}

void PipelineConfig::apply_env_overrides() {
  if (const char* v = std::getenv("MEDQA_MODEL")) model_path = v;
  if (const char* v = std::getenv("MEDQA_KB")) kb_path = v;
  if (const char* v = std::getenv("MEDQA_PORT")) port = std::atoi(v);
  if (const char* v = std::getenv("MEDQA_CORPUS")) background_corpus_path = v;
}

Pipeline Pipeline::load(const PipelineConfig& config) {
  config.budgets.validate();
  Pipeline pipe;
  pipe.budgets = config.budgets;
  pipe.merge = config.merge;
  pipe.forced_types = config.forced_types;
  if (!config.fallback_text.empty()) pipe.fallback = config.fallback_text;

  if (config.kb_path.empty()) throw ConfigError("config is missing the kb path");
  pipe.knowledge = std::make_shared<kb::KnowledgeBase>(kb::load_kb(config.kb_path));
  pipe.entities =
      std::make_shared<searcher::EntityIndex>(searcher::EntityIndex::build(*pipe.knowledge));
  pipe.bm25 = std::make_shared<searcher::Bm25Index>(
      searcher::Bm25Index::build(*pipe.knowledge, config.bm25));

  pipe.table = config.lookup_table_path.empty()
                   ? searcher::AttributeLookupTable::defaults()
                   : searcher::AttributeLookupTable::load(config.lookup_table_path);
  pipe.table.validate(*pipe.knowledge);

  if (!config.model_path.empty())
    pipe.model = std::make_shared<classifier::ClassifierModel>(
        classifier::load_model(config.model_path));

  if (!config.background_corpus_path.empty()) {
    pipe.stats = text::load_background_corpus(config.background_corpus_path);
  } else {
    // No corpus configured: the flattened trees stand in as one.
    std::vector<std::vector<text::Token>> docs;
    for (const auto& [key, tree] : pipe.knowledge->trees())
      docs.push_back(text::tokenize(kb::flatten_tree(tree)));
    if (!docs.empty()) pipe.stats = text::build_background_stats(docs);
    else pipe.stats.doc_count = 1;
  }

  for (const auto& sc : config.sources) {
    if (!sc.enabled) continue;
    if (sc.type == "stub") {
      pipe.sources.push_back(std::make_shared<federated::StubSource>(sc.name, sc.fixture_path));
    } else if (sc.type == "http") {
      pipe.sources.push_back(std::make_shared<federated::HttpSource>(
          sc.name, sc.base_url, sc.enabled, std::chrono::milliseconds(sc.timeout_ms)));
    } else {
      throw ConfigError("unknown source type: " + sc.type);
    }
  }
  return pipe;
}

answer::Answer handle_question(const QuestionRequest& request, const Pipeline& pipe) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto deadline = t0 + pipe.budgets.deadline_window() - pipe.budgets.compose;
  const std::string qid = request.qid.empty() ? "?" : request.qid;

  std::string question = request.title;
  if (!request.body.empty()) {
    if (!question.empty()) question.push_back(' ');
    question += request.body;
  }

  std::vector<text::Token> tokens;
  std::optional<text::FocusCandidate> focus;
  std::set<QuestionType> types;
  std::vector<Candidate> kb_candidates;
  std::vector<Candidate> external_candidates;

  try {
    tokens = text::tokenize(question);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[medqa] qid=%s tokenize failed: %s\n", qid.c_str(), e.what());
  }

  // External sources run concurrently with the local stages; each call is
  // bounded so the joins below cannot overshoot the deadline.
  std::vector<std::future<std::vector<Candidate>>> pending;
  for (const auto& source : pipe.sources) {
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    const auto budget = std::min(pipe.budgets.external, remaining);
    if (budget.count() <= 0) break;
    pending.push_back(std::async(std::launch::async, [source, question, budget] {
      return federated::query_external(source, question, budget);
    }));
  }

  try {
    focus = text::select_focus(text::extract_focus_candidates(tokens, pipe.stats));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[medqa] qid=%s focus extraction failed: %s\n", qid.c_str(), e.what());
  }

  try {
    if (pipe.forced_types) {
      types = *pipe.forced_types;
    } else if (pipe.model) {
      std::vector<std::string> surfaces;
      for (const auto& tok : tokens) surfaces.push_back(tok.surface);
      types = classifier::predict_types(*pipe.model, surfaces);
    }
    if (types.empty()) types = {QuestionType::Information};
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[medqa] qid=%s type inference failed: %s\n", qid.c_str(), e.what());
    types = {QuestionType::Information};
  }

  try {
    if (clock::now() < deadline) {
      kb_candidates = searcher::retrieve(focus, text::content_surfaces(tokens), *pipe.knowledge,
                                         *pipe.entities, *pipe.bm25, pipe.table, types);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[medqa] qid=%s kb retrieval failed: %s\n", qid.c_str(), e.what());
  }

  for (auto& fut : pending) {
    try {
      auto got = fut.get();
      external_candidates.insert(external_candidates.end(),
                                 std::make_move_iterator(got.begin()),
                                 std::make_move_iterator(got.end()));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[medqa] qid=%s external join failed: %s\n", qid.c_str(), e.what());
    }
  }

  answer::Answer ans;
  try {
    const auto merged =
        federated::merge_rank(std::move(kb_candidates), std::move(external_candidates), pipe.merge);
    ans = answer::compose_answer(merged, answer::kMaxAnswerChars, pipe.fallback);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[medqa] qid=%s composition failed: %s\n", qid.c_str(), e.what());
    ans.text = pipe.fallback;
  }
  ans.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0);
  return ans;
}

}  // namespace medqa::service
