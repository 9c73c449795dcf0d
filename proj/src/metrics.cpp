#include <fstream>

#include <json.hpp>

#include "medqa/service.hpp"

namespace medqa::service {

using nlohmann::json;

JudgmentSet JudgmentSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open judgment file: " + path);
  JudgmentSet set;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("judgment file line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!header_seen) {
      if (!j.contains("received"))
        throw ParseError("judgment file must start with a {\"received\": N} header");
      set.received = j.at("received").get<int64_t>();
      header_seen = true;
      continue;
    }
    JudgmentRecord rec;
    rec.qid = j.at("qid").get<std::string>();
    rec.answered = j.at("answered").get<bool>();
    if (rec.answered) {
      if (!j.contains("score"))
        throw ParseError("line " + std::to_string(lineno) + ": answered record without score");
      rec.score = j.at("score").get<int>();
    } else if (j.contains("score")) {
      throw ParseError("line " + std::to_string(lineno) + ": unanswered record carries a score");
    }
    set.records.push_back(std::move(rec));
  }
  if (!header_seen) throw ParseError("judgment file is empty: " + path);
  set.validate();
  return set;
}

void JudgmentSet::validate() const {
  if (received < 0) throw ParseError("received must be >= 0");
  int64_t answered = 0;
  for (const auto& rec : records) {
    if (rec.answered) {
      ++answered;
      if (rec.score < 1 || rec.score > 4)
        throw ParseError("score out of range for qid " + rec.qid);
    }
  }
  if (answered > received)
    throw ParseError("more answered records than questions received");
}

Metrics evaluate(const JudgmentSet& judgments) {
  judgments.validate();
  Metrics m;
  m.received = judgments.received;

  int64_t score_sum = 0;
  for (const auto& rec : judgments.records) {
    if (!rec.answered) continue;
    ++m.answered;
    score_sum += rec.score - 1;  // 0-3 shifted scale
    for (int i = 2; i <= 4; ++i)
      if (rec.score >= i) ++m.hits[i];
  }
  for (int i = 2; i <= 4; ++i) m.hits.try_emplace(i, 0);

  m.avg_score = m.received > 0 ? double(score_sum) / double(m.received) : 0.0;
  for (int i = 2; i <= 4; ++i) {
    m.success_at[i] = m.received > 0 ? double(m.hits[i]) / double(m.received) : 0.0;
    if (m.answered > 0) {
      m.precision_at[i] = double(m.hits[i]) / double(m.answered);
    } else {
      m.precision_at[i] = 0.0;
      m.precision_undefined = true;
    }
  }
  return m;
}

}  // namespace medqa::service
