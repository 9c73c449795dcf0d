#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "medqa/types.hpp"

namespace medqa::answer {

inline constexpr size_t kMaxAnswerChars = 1000;
inline constexpr const char* kDefaultFallback =
    "No reliable answer was found; please consult a healthcare professional.";

// Characters are Unicode scalar values throughout.
size_t u8_length(std::string_view text);
// Byte offset of the n-th scalar (text.size() when n >= length).
size_t u8_byte_offset(std::string_view text, size_t n);

// Cut at the last sentence terminator (. ! ?) at or before `limit` scalars;
// failing that at the last whitespace; failing that hard-cut at limit.
std::string truncate_at_boundary(const std::string& text, size_t limit);

struct Provenance {
  std::string source;
  std::string entity;
  std::string type;
};

struct Answer {
  std::string text;
  std::vector<Provenance> provenance;
  std::chrono::milliseconds elapsed{0};
};

// Greedy fit of ranked candidates, blank-line separated, each truncated to
// the remaining budget; empty input yields the fallback text.
Answer compose_answer(const std::vector<Candidate>& ranked, size_t limit = kMaxAnswerChars,
                      const std::string& fallback = kDefaultFallback);

}  // namespace medqa::answer
