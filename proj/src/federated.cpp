#include "medqa/federated.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "medqa/kb.hpp"

namespace medqa::federated {

using nlohmann::json;

std::vector<Candidate> query_external(std::shared_ptr<ExternalSource> source,
                                      const std::string& question,
                                      std::chrono::milliseconds budget) {
  if (!source || budget.count() <= 0) return {};
  const std::string name = source->name();

  auto promise = std::make_shared<std::promise<std::vector<Candidate>>>();
  auto future = promise->get_future();
  // Detached so a stalled source is abandoned, not joined; the shared_ptrs
  // keep the source and promise alive until the worker finishes.
  std::thread([source, promise, question, budget] {
    try {
      promise->set_value(source->query(question, budget));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[medqa] external source %s failed: %s\n", source->name().c_str(),
                   e.what());
      promise->set_value({});
    } catch (...) {
      std::fprintf(stderr, "[medqa] external source %s failed\n", source->name().c_str());
      promise->set_value({});
    }
  }).detach();

  if (future.wait_for(budget) != std::future_status::ready) {
    std::fprintf(stderr, "[medqa] external source %s timed out after %lld ms\n", name.c_str(),
                 static_cast<long long>(budget.count()));
    return {};
  }
  auto candidates = future.get();
  for (auto& c : candidates) {
    c.from_kb = false;
    c.source = name;
  }
  std::erase_if(candidates, [](const Candidate& c) { return c.text.empty(); });
  return candidates;
}

std::vector<Candidate> merge_rank(std::vector<Candidate> kb_candidates,
                                  std::vector<Candidate> external_candidates,
                                  const MergePolicy& policy) {
  std::vector<Candidate> good, low;
  for (auto& c : kb_candidates)
    (c.score >= policy.min_kb_score ? good : low).push_back(std::move(c));

  auto by_score = [](const Candidate& a, const Candidate& b) { return a.score > b.score; };
  std::stable_sort(good.begin(), good.end(), by_score);
  std::stable_sort(external_candidates.begin(), external_candidates.end(), by_score);
  std::stable_sort(low.begin(), low.end(), by_score);

  std::vector<Candidate> merged;
  merged.reserve(good.size() + external_candidates.size() + low.size());
  for (auto& c : good) {
    c.score += policy.kb_tier_bonus;
    merged.push_back(std::move(c));
  }
  for (auto& c : external_candidates) merged.push_back(std::move(c));
  for (auto& c : low) merged.push_back(std::move(c));
  if (policy.max_candidates >= 0 && static_cast<int>(merged.size()) > policy.max_candidates)
    merged.resize(policy.max_candidates);
  return merged;
}

// --- stub source --------------------------------------------------------------

StubSource::StubSource(std::string name, std::string fixture_path) : name_(std::move(name)) {
  std::ifstream in(fixture_path);
  if (!in) throw ConfigError("cannot open stub fixture: " + fixture_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed stub fixture: ") + e.what());
  }
  for (const auto& [needle, answers] : j.items())
    fixtures_.emplace_back(kb::fold_case(needle), answers.get<std::vector<std::string>>());
}

std::vector<Candidate> StubSource::query(const std::string& question,
                                         std::chrono::milliseconds) {
  const std::string folded = kb::fold_case(question);
  std::vector<Candidate> out;
  for (const auto& [needle, answers] : fixtures_) {
    if (folded.find(needle) == std::string::npos) continue;
    for (size_t i = 0; i < answers.size(); ++i) {
      Candidate c;
      c.text = answers[i];
      c.score = 1.0 / double(1 + out.size());
      out.push_back(std::move(c));
    }
  }
  return out;
}

// --- http source ----------------------------------------------------------------

HttpSource::HttpSource(std::string name, std::string base_url, bool enabled,
                       std::chrono::milliseconds timeout)
    : name_(std::move(name)), base_url_(std::move(base_url)), enabled_(enabled),
      timeout_(timeout) {}

std::vector<Candidate> HttpSource::query(const std::string& question,
                                         std::chrono::milliseconds budget) {
  if (!enabled_) return {};
  const auto limit = std::min(budget, timeout_);
  httplib::Client client(base_url_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(limit).count(),
                                (limit.count() % 1000) * 1000);
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(limit).count(),
                          (limit.count() % 1000) * 1000);

  httplib::Params params{{"q", question}};
  auto res = client.Get("/search", params, httplib::Headers{});
  if (!res || res->status != 200) {
    std::fprintf(stderr, "[medqa] http source %s: request failed\n", name_.c_str());
    return {};
  }
  std::vector<Candidate> out;
  try {
    const json j = json::parse(res->body);
    for (const auto& rj : j.at("results")) {
      Candidate c;
      const std::string title = rj.value("title", "");
      const std::string snippet = rj.value("snippet", "");
      c.text = title.empty() ? snippet : title + ": " + snippet;
      c.score = 1.0 / double(1 + out.size());
      if (!c.text.empty()) out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    std::fprintf(stderr, "[medqa] http source %s: bad response: %s\n", name_.c_str(), e.what());
    return {};
  }
  return out;
}

}  // namespace medqa::federated
