#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "medqa/text.hpp"

using namespace medqa;
using namespace medqa::text;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.surface);
  return out;
}

BackgroundStats tiny_stats() {
  // a: df 1, b: df 2, c: df 1 over 2 docs
  return build_background_stats({
      {Token{"a", true}, Token{"b", true}},
      {Token{"b", true}, Token{"c", true}},
  });
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on punctuation") {
  CHECK(surfaces(tokenize("How do I know if I have diabetes?")) ==
        std::vector<std::string>{"how", "do", "i", "know", "if", "i", "have", "diabetes"});
  CHECK(tokenize("").empty());
  CHECK(surfaces(tokenize("Type-2 Diabetes")) == std::vector<std::string>{"type", "2", "diabetes"});
}

TEST_CASE("tokenize keeps multi-byte sequences intact") {
  const auto toks = tokenize("naïve café!");
  REQUIRE(toks.size() == 2);
  CHECK(toks[0].surface == "naïve");
  CHECK(toks[1].surface == "café");
}

TEST_CASE("background stats count documents, not occurrences") {
  const auto stats = tiny_stats();
  CHECK(stats.doc_count == 2);
  CHECK(stats.df("a") == 1);
  CHECK(stats.df("b") == 2);
  CHECK(stats.df("c") == 1);

  const auto solo = build_background_stats({{Token{"a", true}, Token{"a", true}, Token{"a", true}}});
  CHECK(solo.doc_count == 1);
  CHECK(solo.df("a") == 1);

  CHECK_THROWS_AS(build_background_stats({}), ConfigError);
}

TEST_CASE("background stats match a brute-force recount on a fixture") {
  const auto stats = load_background_corpus("fixtures/background_corpus.txt");
  // independent recount
  std::ifstream in("fixtures/background_corpus.txt");
  REQUIRE(in.good());
  std::string line;
  int64_t docs = 0;
  std::unordered_map<std::string, int64_t> df;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    ++docs;
    std::set<std::string> seen;
    for (const auto& t : toks) seen.insert(t.surface);
    for (const auto& s : seen) df[s] += 1;
  }
  CHECK(stats.doc_count == docs);
  CHECK(stats.doc_freq.size() == df.size());
  for (const auto& [tok, n] : df) CHECK(stats.df(tok) == n);
}

TEST_CASE("tfidf formula") {
  BackgroundStats stats;
  stats.doc_count = 3;

  SUBCASE("token in every doc saturates to 1") {
    stats.doc_freq["x"] = 3;
    CHECK(tfidf("x", 1, stats) == doctest::Approx(1.0));
    CHECK(tfidf("x", 2, stats) == doctest::Approx(1.0 + std::log(2.0)));
  }
  SUBCASE("unseen token") {
    CHECK(tfidf("y", 1, stats) == doctest::Approx(std::log(4.0) + 1.0));
  }
}

TEST_CASE("tfidf is non-increasing in df") {
  std::mt19937_64 rng(7);
  BackgroundStats stats;
  stats.doc_count = 50;
  for (int trial = 0; trial < 200; ++trial) {
    int64_t df1 = int64_t(rng() % 51);
    int64_t df2 = int64_t(rng() % 51);
    if (df1 > df2) std::swap(df1, df2);
    const int64_t count = 1 + int64_t(rng() % 5);
    stats.doc_freq["t"] = df1;
    const double hi = tfidf("t", count, stats);
    stats.doc_freq["t"] = df2;
    const double lo = tfidf("t", count, stats);
    CHECK(hi >= lo);
    CHECK(lo > 0.0);
  }
}

TEST_CASE("focus candidates rank the medical entity first") {
  // know is frequent in the background, diabetes rare
  BackgroundStats stats;
  stats.doc_count = 10;
  stats.doc_freq["know"] = 8;
  stats.doc_freq["diabetes"] = 1;

  const auto cands = extract_focus_candidates(tokenize("How do I know if I have diabetes?"), stats);
  REQUIRE(!cands.empty());
  CHECK(cands.front().joined() == "diabetes");

  const auto focus = select_focus(cands);
  REQUIRE(focus.has_value());
  CHECK(focus->joined() == "diabetes");
}

TEST_CASE("all-stopword question yields no candidates") {
  const auto cands = extract_focus_candidates(tokenize("how do i do it"), tiny_stats());
  CHECK(cands.empty());
  CHECK(!select_focus(cands).has_value());
}

TEST_CASE("ties break by longer phrase then position") {
  // two tokens with identical scores, adjacent: span of 2 shares the same
  // mean, so it must come first
  BackgroundStats stats;
  stats.doc_count = 4;
  stats.doc_freq["alpha"] = 1;
  stats.doc_freq["beta"] = 1;
  const auto cands = extract_focus_candidates(tokenize("alpha beta"), stats);
  REQUIRE(cands.size() == 3);
  CHECK(cands[0].joined() == "alpha beta");
  CHECK(cands[1].joined() == "alpha");
  CHECK(cands[2].joined() == "beta");
}

TEST_CASE("candidate spans are contiguous and match the brute-force enumeration") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> words = {"the",  "a",     "of",     "pain",  "fever",
                                          "rash", "cough", "doctor", "sleep", "water"};
  BackgroundStats stats;
  stats.doc_count = 20;
  for (const auto& w : words) stats.doc_freq[w] = int64_t(rng() % 20);

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Token> question;
    const size_t len = rng() % 21;
    for (size_t i = 0; i < len; ++i) {
      const auto& w = words[rng() % words.size()];
      question.push_back(Token{w, !is_stopword(w)});
    }
    const auto got = extract_focus_candidates(question, stats);

    // oracle: enumerate every content span of length <= 4 and score it
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& t : question) counts[t.surface] += 1;
    struct Span {
      size_t pos, len;
      double score;
    };
    std::vector<Span> expected;
    for (size_t i = 0; i < question.size(); ++i) {
      for (size_t l = 1; l <= 4 && i + l <= question.size(); ++l) {
        bool all_content = true;
        double sum = 0;
        for (size_t k = i; k < i + l; ++k) {
          all_content = all_content && question[k].is_content;
          sum += tfidf(question[k].surface, counts[question[k].surface], stats);
        }
        if (all_content) expected.push_back({i, l, sum / double(l)});
      }
    }
    REQUIRE(got.size() == expected.size());

    // same multiset of (pos, len) and scores; plus ordering is correct
    for (const auto& cand : got) {
      const bool found = std::any_of(expected.begin(), expected.end(), [&](const Span& s) {
        return s.pos == cand.position && s.len == cand.phrase.size() &&
               std::abs(s.score - cand.score) < 1e-12;
      });
      CHECK(found);
      // contiguity in the original question
      for (size_t k = 0; k < cand.phrase.size(); ++k)
        CHECK(cand.phrase[k].surface == question[cand.position + k].surface);
    }
    for (size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].score >= got[i].score - 1e-15);

    // determinism
    const auto again = extract_focus_candidates(question, stats);
    REQUIRE(again.size() == got.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(again[i].position == got[i].position);
      CHECK(again[i].phrase.size() == got[i].phrase.size());
    }
  }
}

TEST_CASE("fixture corpus ranks hypertension over treatment") {
  const auto stats = load_background_corpus("fixtures/background_corpus.txt");
  const auto cands =
      extract_focus_candidates(tokenize("what is the treatment for hypertension"), stats);
  REQUIRE(!cands.empty());
  CHECK(cands.front().joined() == "hypertension");

  // brute-force check: hypertension's tf-idf beats every other span score
  const double top = cands.front().score;
  for (const auto& cand : cands) CHECK(cand.score <= top);
}

TEST_CASE("background corpus accepts a directory of txt files") {
  namespace fs = std::filesystem;
  const fs::path dir = "build/test_corpus_dir";
  fs::create_directories(dir);
  std::ofstream(dir / "a.txt") << "fever and cough in children";
  std::ofstream(dir / "b.txt") << "fever after a flu shot";
  std::ofstream(dir / "ignored.dat") << "not a text file";
  const auto stats = load_background_corpus(dir.string());
  CHECK(stats.doc_count == 2);
  CHECK(stats.df("fever") == 2);
  CHECK(stats.df("cough") == 1);
}
