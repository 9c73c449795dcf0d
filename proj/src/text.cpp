#include "medqa/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

namespace medqa::text {

namespace {

const std::unordered_set<std::string>& stopword_lexicon() {
  // Function words only; domain verbs like "know" or "treat" stay content
  // tokens and are demoted by their background document frequency instead.
  static const std::unordered_set<std::string> words = {
      "a",       "about",   "above",  "after",  "again",   "against", "all",
      "am",      "an",      "and",    "any",    "are",     "aren",    "as",
      "at",      "be",      "because", "been",  "before",  "being",   "below",
      "between", "both",    "but",    "by",     "can",     "cannot",  "could",
      "did",     "do",      "does",   "doing",  "don",     "down",    "during",
      "each",    "few",     "for",    "from",   "further", "had",     "has",
      "have",    "having",  "he",     "her",    "here",    "hers",    "herself",
      "him",     "himself", "his",    "how",    "i",       "if",      "in",
      "into",    "is",      "isn",    "it",     "its",     "itself",  "just",
      "let",     "may",     "me",     "might",  "more",    "most",    "must",
      "my",      "myself",  "no",     "nor",    "not",     "now",     "of",
      "off",     "on",      "once",   "only",   "or",      "other",   "ought",
      "our",     "ours",    "ourselves", "out", "over",    "own",     "s",
      "same",    "shall",   "she",    "should", "so",      "some",    "such",
      "t",       "than",    "that",   "the",    "their",   "theirs",  "them",
      "themselves", "then", "there",  "these",  "they",    "this",    "those",
      "through", "to",      "too",    "under",  "until",   "up",      "very",
      "was",     "we",      "were",   "what",   "when",    "where",   "which",
      "while",   "who",     "whom",   "why",    "will",    "with",    "would",
      "you",     "your",    "yours",  "yourself", "yourselves",
  };
  return words;
}

bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;  // keep multi-byte sequences intact
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

}  // namespace

bool is_stopword(const std::string& surface) {
  return stopword_lexicon().count(surface) > 0;
}

std::vector<Token> tokenize(const std::string& input) {
  std::vector<Token> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    out.push_back(Token{cur, !is_stopword(cur)});
    cur.clear();
  };
  for (unsigned char c : input) {
    if (is_word_byte(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? char(c - 'A' + 'a') : char(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

BackgroundStats build_background_stats(const std::vector<std::vector<Token>>& docs) {
  if (docs.empty()) throw ConfigError("background corpus is empty");
  BackgroundStats stats;
  stats.doc_count = static_cast<int64_t>(docs.size());
  std::unordered_set<std::string> seen;
  for (const auto& doc : docs) {
    seen.clear();
    for (const auto& tok : doc) seen.insert(tok.surface);
    for (const auto& sur : seen) stats.doc_freq[sur] += 1;
  }
  return stats;
}

BackgroundStats load_background_corpus(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::vector<Token>> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt")
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      std::ifstream in(file);
      std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto toks = tokenize(all);
      if (!toks.empty()) docs.push_back(std::move(toks));
    }
  } else {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open background corpus: " + path);
    std::string line;
    while (std::getline(in, line)) {
      auto toks = tokenize(line);
      if (!toks.empty()) docs.push_back(std::move(toks));
    }
  }
  return build_background_stats(docs);
}

double tfidf(const std::string& token, int64_t count_in_question, const BackgroundStats& stats) {
  const double tf = 1.0 + std::log(static_cast<double>(count_in_question));
  const double idf =
      std::log((1.0 + static_cast<double>(stats.doc_count)) / (1.0 + static_cast<double>(stats.df(token)))) + 1.0;
  return tf * idf;
}

std::string FocusCandidate::joined() const {
  std::string s;
  for (const auto& tok : phrase) {
    if (!s.empty()) s.push_back(' ');
    s += tok.surface;
  }
  return s;
}

std::vector<FocusCandidate> extract_focus_candidates(const std::vector<Token>& question,
                                                     const BackgroundStats& stats) {
  constexpr size_t kMaxSpan = 4;

  std::unordered_map<std::string, int64_t> counts;
  for (const auto& tok : question) counts[tok.surface] += 1;

  std::vector<FocusCandidate> candidates;
  const size_t n = question.size();
  for (size_t i = 0; i < n; ++i) {
    if (!question[i].is_content) continue;
    for (size_t len = 1; len <= kMaxSpan && i + len <= n; ++len) {
      if (!question[i + len - 1].is_content) break;
      FocusCandidate cand;
      cand.position = i;
      double sum = 0.0;
      for (size_t k = 0; k < len; ++k) {
        cand.phrase.push_back(question[i + k]);
        sum += tfidf(question[i + k].surface, counts[question[i + k].surface], stats);
      }
      cand.score = sum / static_cast<double>(len);
      candidates.push_back(std::move(cand));
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const FocusCandidate& a, const FocusCandidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.phrase.size() != b.phrase.size()) return a.phrase.size() > b.phrase.size();
                     return a.position < b.position;
                   });
  return candidates;
}

std::optional<FocusCandidate> select_focus(const std::vector<FocusCandidate>& candidates) {
  if (candidates.empty()) return std::nullopt;
  return candidates.front();
}

std::vector<std::string> content_surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& tok : tokens)
    if (tok.is_content) out.push_back(tok.surface);
  return out;
}

}  // namespace medqa::text
