#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

namespace medqa {

// The 10 condensed question types, in output-layer index order.
enum class QuestionType {
  Treatment,
  Information,
  Susceptibility,
  Prognosis,
  Symptom,
  Diagnosis,
  Cause,
  Organization,
  DrugInformation,
  DrugInteraction,
};

inline constexpr int kNumTypes = 10;

const std::array<std::string, kNumTypes>& type_names();
const std::string& to_string(QuestionType t);
std::optional<QuestionType> parse_type(const std::string& name);

// Fixed priority used when a question carries several types: more specific
// attributes are resolved first.
const std::array<QuestionType, kNumTypes>& type_priority();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A scored answer snippet, either from the knowledge base or an external
// source.
struct Candidate {
  std::string text;
  bool from_kb = false;
  std::string source;  // "kb" or the external source name
  double score = 0.0;
  std::optional<std::string> entity;
  std::optional<QuestionType> type;
};

}  // namespace medqa
