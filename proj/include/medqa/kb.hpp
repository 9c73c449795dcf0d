#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "medqa/types.hpp"

namespace medqa::kb {

inline constexpr const char* kUnmappedLabel = "Unmapped";

struct TemplateNode {
  std::string label;
  std::vector<std::string> synonyms;  // lowercase heading forms
  std::vector<TemplateNode> children;
};

struct Template {
  std::string id;
  TemplateNode root;

  // Path (below root) for the slot matching a heading: case-folded exact
  // synonym match first, then substring containment, template declaration
  // order breaking ties. Empty optional when nothing matches.
  std::optional<std::vector<std::string>> match_heading(const std::string& heading) const;
  bool has_path(const std::vector<std::string>& path) const;
};

Template disease_template();
Template drug_template();

struct TreeNode {
  std::string label;
  std::string content;  // empty means unfilled
  std::string source;   // provenance of the newest content
  std::vector<TreeNode> children;

  bool operator==(const TreeNode&) const = default;
};

struct KnowledgeTree {
  std::string entity_name;
  std::string template_id;
  std::vector<std::string> aliases;
  std::string source_uri;
  TreeNode root;  // mirrors the template; an extra "Unmapped" child may exist

  const TreeNode* find(const std::vector<std::string>& path) const;
  TreeNode* find(const std::vector<std::string>& path);
  bool operator==(const KnowledgeTree&) const = default;
};

struct SourceSection {
  std::string heading;
  std::string content;
};

struct SourceDocument {
  std::string entity_name;
  std::string template_id;
  std::string source_uri;
  std::vector<SourceSection> sections;
};

std::string fold_case(const std::string& s);

class KnowledgeBase {
 public:
  KnowledgeBase();  // ships with the disease and drug templates

  void add_template(Template t);
  const Template* find_template(const std::string& id) const;
  const std::map<std::string, Template>& templates() const { return templates_; }

  // Heading-slot ingestion; re-ingesting an entity merges, newest content
  // wins per slot. Returns the inserted or merged tree.
  const KnowledgeTree& ingest_document(const SourceDocument& doc);

  const KnowledgeTree* tree(const std::string& entity_name) const;  // case-folded lookup
  const std::map<std::string, KnowledgeTree>& trees() const { return trees_; }
  void insert_tree(KnowledgeTree tree);  // used by the loader; validates against template

  void set_allow_unmapped(bool allow) { allow_unmapped_ = allow; }

  bool operator==(const KnowledgeBase& other) const {
    return trees_ == other.trees_;
  }

 private:
  std::map<std::string, Template> templates_;
  std::map<std::string, KnowledgeTree> trees_;  // key: case-folded entity name
  bool allow_unmapped_ = true;
};

// Pre-order concatenation: entity name, then every concept label followed by
// its content, single-space separated.
std::string flatten_tree(const KnowledgeTree& tree);

struct AttributeResult {
  enum class Status { Found, Missing, Empty };
  Status status = Status::Missing;
  std::string text;
};

// Concatenated content of the node at path and all descendants, pre-order.
AttributeResult get_attribute(const KnowledgeTree& tree, const std::vector<std::string>& path);

// All paths (below root) with non-empty content, pre-order.
std::vector<std::pair<std::vector<std::string>, std::string>> content_slots(const KnowledgeTree& tree);

void save_kb(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_kb(const std::string& path);

std::vector<SourceDocument> load_source_documents(const std::string& jsonl_path);

}  // namespace medqa::kb
