#include "medqa/answer.hpp"

namespace medqa::answer {

namespace {
bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }
}  // namespace

size_t u8_length(std::string_view text) {
  size_t n = 0;
  for (unsigned char c : text)
    if (!is_continuation(c)) ++n;
  return n;
}

size_t u8_byte_offset(std::string_view text, size_t n) {
  size_t count = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    if (!is_continuation(static_cast<unsigned char>(text[i]))) {
      if (count == n) return i;
      ++count;
    }
  }
  return text.size();
}

std::string truncate_at_boundary(const std::string& text, size_t limit) {
  if (limit < 1) throw ConfigError("truncate limit must be >= 1");
  if (u8_length(text) <= limit) return text;

  const std::string prefix = text.substr(0, u8_byte_offset(text, limit));
  const size_t term = prefix.find_last_of(".!?");
  if (term != std::string::npos) return prefix.substr(0, term + 1);
  const size_t ws = prefix.find_last_of(" \t\n\r");
  if (ws != std::string::npos) return prefix.substr(0, ws);
  return prefix;
}

Answer compose_answer(const std::vector<Candidate>& ranked, size_t limit,
                      const std::string& fallback) {
  Answer answer;
  size_t used = 0;
  for (const Candidate& cand : ranked) {
    if (cand.text.empty()) continue;
    const size_t sep = answer.text.empty() ? 0 : 2;
    if (used + sep + 1 > limit) break;
    const std::string piece = truncate_at_boundary(cand.text, limit - used - sep);
    if (piece.empty()) continue;
    if (sep) answer.text += "\n\n";
    answer.text += piece;
    used += sep + u8_length(piece);
    answer.provenance.push_back(Provenance{
        cand.source,
        cand.entity.value_or(""),
        cand.type ? to_string(*cand.type) : "",
    });
  }
  if (answer.text.empty()) {
    answer.text = fallback.empty() ? kDefaultFallback : fallback;
    if (u8_length(answer.text) > limit) answer.text = truncate_at_boundary(answer.text, limit);
    if (answer.text.empty())  // pathological fallback, e.g. leading whitespace
      answer.text = fallback.substr(0, u8_byte_offset(fallback, limit));
  }
  return answer;
}

}  // namespace medqa::answer
