#include "medqa/types.hpp"

#include <algorithm>

namespace medqa {

const std::array<std::string, kNumTypes>& type_names() {
  static const std::array<std::string, kNumTypes> names = {
      "Treatment",    "Information",  "Susceptibility", "Prognosis",       "Symptom",
      "Diagnosis",    "Cause",        "Organization",   "DrugInformation", "DrugInteraction",
  };
  return names;
}

const std::string& to_string(QuestionType t) {
  return type_names()[static_cast<size_t>(t)];
}

std::optional<QuestionType> parse_type(const std::string& name) {
  // Accept the canonical spelling plus the spaced variants.
  std::string folded;
  for (char c : name)
    if (c != ' ' && c != '_' && c != '-') folded.push_back(char(std::tolower((unsigned char)c)));
  const auto& names = type_names();
  for (int i = 0; i < kNumTypes; ++i) {
    std::string canon;
    for (char c : names[i]) canon.push_back(char(std::tolower((unsigned char)c)));
    if (canon == folded) return static_cast<QuestionType>(i);
  }
  return std::nullopt;
}

const std::array<QuestionType, kNumTypes>& type_priority() {
  static const std::array<QuestionType, kNumTypes> order = {
      QuestionType::Treatment,      QuestionType::DrugInteraction, QuestionType::DrugInformation,
      QuestionType::Diagnosis,      QuestionType::Symptom,         QuestionType::Cause,
      QuestionType::Susceptibility, QuestionType::Prognosis,       QuestionType::Information,
      QuestionType::Organization,
  };
  return order;
}

}  // namespace medqa
