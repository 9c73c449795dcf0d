#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medqa/types.hpp"

namespace medqa::text {

struct Token {
  std::string surface;      // lowercase, no whitespace
  bool is_content = false;  // not in the stopword/function-word lexicon
};

bool is_stopword(const std::string& surface);

// Lowercased word sequence split on non-alphanumeric runs. UTF-8 safe:
// ASCII letters are folded, bytes >= 0x80 pass through as word characters.
std::vector<Token> tokenize(const std::string& input);

// Document-frequency table over a background corpus.
struct BackgroundStats {
  int64_t doc_count = 0;
  std::unordered_map<std::string, int64_t> doc_freq;

  int64_t df(const std::string& token) const {
    auto it = doc_freq.find(token);
    return it == doc_freq.end() ? 0 : it->second;
  }
};

BackgroundStats build_background_stats(const std::vector<std::vector<Token>>& docs);

// Corpus input: a text file with one document per line, or a directory of
// .txt files (one document per file).
BackgroundStats load_background_corpus(const std::string& path);

// Sublinear tf, smoothed idf: (1 + ln(count)) * (ln((1+N)/(1+df)) + 1).
// Unseen tokens score with df = 0.
double tfidf(const std::string& token, int64_t count_in_question, const BackgroundStats& stats);

struct FocusCandidate {
  std::vector<Token> phrase;  // 1..4 content tokens, contiguous in the question
  double score = 0.0;         // mean tf-idf of member tokens
  size_t position = 0;        // index of the first token in the question

  std::string joined() const;
};

// All contiguous content-token spans of length 1..4, scored by mean tf-idf,
// sorted by score desc, then longer phrase, then left-most position.
std::vector<FocusCandidate> extract_focus_candidates(const std::vector<Token>& question,
                                                     const BackgroundStats& stats);

// First candidate, or nullopt when the question has no content token; the
// pipeline then falls back to full-question search.
std::optional<FocusCandidate> select_focus(const std::vector<FocusCandidate>& candidates);

std::vector<std::string> content_surfaces(const std::vector<Token>& tokens);

}  // namespace medqa::text
