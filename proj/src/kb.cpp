#include "medqa/kb.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace medqa::kb {

using nlohmann::json;

std::string fold_case(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return out;
}

// --- templates --------------------------------------------------------------

namespace {

void collect_slots(const TemplateNode& node, std::vector<std::string>& path,
                   std::vector<std::pair<std::vector<std::string>, const TemplateNode*>>& out) {
  for (const auto& child : node.children) {
    path.push_back(child.label);
    out.emplace_back(path, &child);
    collect_slots(child, path, out);
    path.pop_back();
  }
}

}  // namespace

std::optional<std::vector<std::string>> Template::match_heading(const std::string& heading) const {
  const std::string folded = fold_case(heading);
  std::vector<std::pair<std::vector<std::string>, const TemplateNode*>> slots;
  std::vector<std::string> path;
  collect_slots(root, path, slots);

  for (const auto& [slot_path, node] : slots)
    for (const auto& syn : node->synonyms)
      if (syn == folded) return slot_path;
  for (const auto& [slot_path, node] : slots)
    for (const auto& syn : node->synonyms)
      if (folded.find(syn) != std::string::npos || syn.find(folded) != std::string::npos)
        return slot_path;
  return std::nullopt;
}

bool Template::has_path(const std::vector<std::string>& path) const {
  const TemplateNode* node = &root;
  for (const auto& label : path) {
    const TemplateNode* next = nullptr;
    for (const auto& child : node->children)
      if (child.label == label) {
        next = &child;
        break;
      }
    if (!next) return false;
    node = next;
  }
  return !path.empty();
}

Template disease_template() {
  Template t;
  t.id = "disease";
  t.root.label = "Disease";
  t.root.children = {
      {"Information", {"information", "overview", "definition", "summary", "what is"}, {}},
      {"Cause", {"cause", "causes", "etiology"}, {}},
      {"Symptom", {"symptom", "symptoms", "signs", "warning signs"}, {}},
      {"Diagnosis", {"diagnosis", "diagnostics", "tests", "exams and tests", "screening"}, {}},
      {"Treatment",
       {"treatment", "treatments", "therapy", "management"},
       {
           {"Medication", {"medication", "medications", "drugs", "medicines"}, {}},
           {"Nonpharmacologic Therapy",
            {"nonpharmacologic therapy", "lifestyle", "lifestyle changes", "home remedies",
             "self-care"},
            {}},
       }},
      {"Prognosis", {"prognosis", "outlook", "course", "complications"}, {}},
      {"Susceptibility", {"susceptibility", "risk factors", "who is at risk", "inheritance"}, {}},
  };
  return t;
}

Template drug_template() {
  Template t;
  t.id = "drug";
  t.root.label = "Drug";
  t.root.children = {
      {"Information", {"information", "overview", "description", "what is"}, {}},
      {"Drug Information",
       {"drug information"},
       {
           {"Dosage", {"dosage", "dose", "dosing", "how to take"}, {}},
           {"Side Effects", {"side effects", "adverse effects", "adverse reactions"}, {}},
       }},
      {"Drug Interaction", {"interactions", "drug interactions", "interaction"}, {}},
      {"Contraindications", {"contraindications", "warnings", "precautions"}, {}},
  };
  return t;
}

// --- trees ------------------------------------------------------------------

namespace {

TreeNode materialize(const TemplateNode& tn) {
  TreeNode node;
  node.label = tn.label;
  for (const auto& child : tn.children) node.children.push_back(materialize(child));
  return node;
}

const TreeNode* find_node(const TreeNode* node, const std::vector<std::string>& path, size_t at) {
  if (at == path.size()) return node;
  for (const auto& child : node->children)
    if (child.label == path[at]) return find_node(&child, path, at + 1);
  return nullptr;
}

void flatten_node(const TreeNode& node, std::string& out) {
  if (!out.empty()) out.push_back(' ');
  out += node.label;
  if (!node.content.empty()) {
    out.push_back(' ');
    out += node.content;
  }
  for (const auto& child : node.children) flatten_node(child, out);
}

void collect_content(const TreeNode& node, std::string& out) {
  if (!node.content.empty()) {
    if (!out.empty()) out.push_back(' ');
    out += node.content;
  }
  for (const auto& child : node.children) collect_content(child, out);
}

void collect_content_slots(const TreeNode& node, std::vector<std::string>& path,
                           std::vector<std::pair<std::vector<std::string>, std::string>>& out) {
  for (const auto& child : node.children) {
    path.push_back(child.label);
    if (!child.content.empty()) out.emplace_back(path, child.content);
    collect_content_slots(child, path, out);
    path.pop_back();
  }
}

bool tree_matches_template(const TreeNode& node, const TemplateNode& tn) {
  for (const auto& child : node.children) {
    if (child.label == kUnmappedLabel) continue;  // reserved, allowed at any level
    const TemplateNode* match = nullptr;
    for (const auto& tc : tn.children)
      if (tc.label == child.label) {
        match = &tc;
        break;
      }
    if (!match) return false;
    if (!tree_matches_template(child, *match)) return false;
  }
  return true;
}

bool has_any_content(const TreeNode& node) {
  if (!node.content.empty()) return true;
  for (const auto& child : node.children)
    if (has_any_content(child)) return true;
  return false;
}

}  // namespace

const TreeNode* KnowledgeTree::find(const std::vector<std::string>& path) const {
  return find_node(&root, path, 0);
}

TreeNode* KnowledgeTree::find(const std::vector<std::string>& path) {
  return const_cast<TreeNode*>(find_node(&root, path, 0));
}

KnowledgeBase::KnowledgeBase() {
  add_template(disease_template());
  add_template(drug_template());
}

void KnowledgeBase::add_template(Template t) {
  templates_[t.id] = std::move(t);
}

const Template* KnowledgeBase::find_template(const std::string& id) const {
  auto it = templates_.find(id);
  return it == templates_.end() ? nullptr : &it->second;
}

const KnowledgeTree* KnowledgeBase::tree(const std::string& entity_name) const {
  auto it = trees_.find(fold_case(entity_name));
  return it == trees_.end() ? nullptr : &it->second;
}

const KnowledgeTree& KnowledgeBase::ingest_document(const SourceDocument& doc) {
  if (doc.entity_name.empty()) throw ConfigError("source document without entity name");
  const Template* tmpl = find_template(doc.template_id);
  if (!tmpl) throw ConfigError("unknown template: " + doc.template_id);

  const std::string key = fold_case(doc.entity_name);
  auto it = trees_.find(key);
  const bool fresh = it == trees_.end();

  // Mutate a copy; the map only sees a fully merged tree.
  KnowledgeTree work;
  if (fresh) {
    work.entity_name = doc.entity_name;
    work.template_id = doc.template_id;
    work.root = materialize(tmpl->root);
  } else {
    if (it->second.template_id != doc.template_id)
      throw ConfigError("entity '" + doc.entity_name + "' already ingested with template '" +
                        it->second.template_id + "'");
    work = it->second;
  }
  work.source_uri = doc.source_uri;

  int matched = 0;
  std::string unmapped;
  for (const auto& section : doc.sections) {
    if (section.heading.empty())
      throw ParseError("section with empty heading for " + doc.entity_name);
    if (section.content.empty()) continue;
    auto path = tmpl->match_heading(section.heading);
    if (path) {
      TreeNode* node = work.find(*path);
      node->content = section.content;  // newest wins
      node->source = doc.source_uri;
      ++matched;
    } else if (allow_unmapped_) {
      if (!unmapped.empty()) unmapped.push_back(' ');
      unmapped += section.heading + " " + section.content;
    }
  }
  if (matched == 0 && !allow_unmapped_)
    throw ConfigError("no section matched any slot for entity " + doc.entity_name);
  if (!unmapped.empty()) {
    TreeNode* slot = work.find({kUnmappedLabel});
    if (!slot) {
      work.root.children.push_back(TreeNode{kUnmappedLabel, "", "", {}});
      slot = &work.root.children.back();
    }
    slot->content = unmapped;
    slot->source = doc.source_uri;
  }
  if (!has_any_content(work.root))
    throw ConfigError("document for '" + doc.entity_name + "' carries no content");

  auto& slot = trees_[key];
  slot = std::move(work);
  return slot;
}

void KnowledgeBase::insert_tree(KnowledgeTree tree) {
  const Template* tmpl = find_template(tree.template_id);
  if (!tmpl) throw ParseError("tree '" + tree.entity_name + "' names unknown template '" +
                              tree.template_id + "'");
  if (!tree_matches_template(tree.root, tmpl->root))
    throw ParseError("tree '" + tree.entity_name + "' does not match template '" +
                     tree.template_id + "'");
  trees_[fold_case(tree.entity_name)] = std::move(tree);
}

std::string flatten_tree(const KnowledgeTree& tree) {
  std::string out = tree.entity_name;
  for (const auto& child : tree.root.children) flatten_node(child, out);
  return out;
}

AttributeResult get_attribute(const KnowledgeTree& tree, const std::vector<std::string>& path) {
  AttributeResult res;
  if (path.empty()) return res;  // Missing
  const TreeNode* node = tree.find(path);
  if (!node) return res;  // Missing
  collect_content(*node, res.text);
  res.status = res.text.empty() ? AttributeResult::Status::Empty : AttributeResult::Status::Found;
  return res;
}

std::vector<std::pair<std::vector<std::string>, std::string>> content_slots(
    const KnowledgeTree& tree) {
  std::vector<std::pair<std::vector<std::string>, std::string>> out;
  std::vector<std::string> path;
  collect_content_slots(tree.root, path, out);
  return out;
}

// --- persistence ------------------------------------------------------------

namespace {

json template_node_to_json(const TemplateNode& node) {
  json j{{"label", node.label}, {"synonyms", node.synonyms}};
  json children = json::array();
  for (const auto& child : node.children) children.push_back(template_node_to_json(child));
  j["children"] = std::move(children);
  return j;
}

TemplateNode template_node_from_json(const json& j) {
  TemplateNode node;
  node.label = j.at("label").get<std::string>();
  node.synonyms = j.value("synonyms", std::vector<std::string>{});
  for (const auto& cj : j.value("children", json::array()))
    node.children.push_back(template_node_from_json(cj));
  return node;
}

std::string join_path(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& p : path) {
    if (!out.empty()) out.push_back('/');
    out += p;
  }
  return out;
}

std::vector<std::string> split_path(const std::string& joined) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : joined) {
    if (c == '/') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void save_kb(const KnowledgeBase& kb, const std::string& path) {
  json j;
  j["format"] = "medqa-kb";
  j["version"] = 1;
  json templates = json::array();
  for (const auto& [id, tmpl] : kb.templates())
    templates.push_back(json{{"id", id}, {"root", template_node_to_json(tmpl.root)}});
  j["templates"] = std::move(templates);

  json trees = json::array();
  for (const auto& [key, tree] : kb.trees()) {
    json leaves = json::object();
    json sources = json::object();
    for (const auto& [slot_path, content] : content_slots(tree)) {
      const std::string joined = join_path(slot_path);
      leaves[joined] = content;
      const TreeNode* node = tree.find(slot_path);
      if (node && !node->source.empty()) sources[joined] = node->source;
    }
    json tj{{"entity", tree.entity_name},
            {"template", tree.template_id},
            {"leaves", std::move(leaves)}};
    if (!tree.aliases.empty()) tj["aliases"] = tree.aliases;
    if (!tree.source_uri.empty()) tj["source"] = tree.source_uri;
    if (!sources.empty()) tj["leaf_sources"] = std::move(sources);
    trees.push_back(std::move(tj));
  }
  j["trees"] = std::move(trees);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write kb file: " + path);
  out << j.dump(2) << "\n";
}

KnowledgeBase load_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open kb file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed kb file: ") + e.what());
  }

  KnowledgeBase kb;
  try {
    if (j.at("format") != "medqa-kb") throw ParseError("not a kb file: " + path);
    for (const auto& tj : j.value("templates", json::array())) {
      Template tmpl;
      tmpl.id = tj.at("id").get<std::string>();
      tmpl.root = template_node_from_json(tj.at("root"));
      kb.add_template(std::move(tmpl));
    }
    for (const auto& tj : j.at("trees")) {
      const std::string entity = tj.at("entity").get<std::string>();
      const std::string template_id = tj.at("template").get<std::string>();
      const Template* tmpl = kb.find_template(template_id);
      if (!tmpl)
        throw ParseError("tree '" + entity + "' names unknown template '" + template_id + "'");

      KnowledgeTree tree;
      tree.entity_name = entity;
      tree.template_id = template_id;
      tree.aliases = tj.value("aliases", std::vector<std::string>{});
      tree.source_uri = tj.value("source", "");
      tree.root = materialize(tmpl->root);

      const json sources = tj.value("leaf_sources", json::object());
      for (const auto& [joined, content] : tj.at("leaves").items()) {
        const auto slot_path = split_path(joined);
        TreeNode* node = tree.find(slot_path);
        if (!node) {
          if (slot_path.size() == 1 && slot_path[0] == kUnmappedLabel) {
            tree.root.children.push_back(TreeNode{kUnmappedLabel, "", "", {}});
            node = &tree.root.children.back();
          } else {
            throw ParseError("tree '" + entity + "': slot '" + joined +
                             "' does not exist in template '" + template_id + "'");
          }
        }
        node->content = content.get<std::string>();
        if (sources.contains(joined)) node->source = sources.at(joined).get<std::string>();
      }
      if (!has_any_content(tree.root))
        throw ParseError("tree '" + entity + "' has no content");
      kb.insert_tree(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed kb file: ") + e.what());
  }
  return kb;
}

std::vector<SourceDocument> load_source_documents(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw ConfigError("cannot open source documents: " + jsonl_path);
  std::vector<SourceDocument> docs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("source documents line " + std::to_string(lineno) + ": " + e.what());
    }
    SourceDocument doc;
    doc.entity_name = j.at("entity").get<std::string>();
    doc.template_id = j.at("template").get<std::string>();
    doc.source_uri = j.value("source", "");
    for (const auto& sj : j.at("sections")) {
      doc.sections.push_back(
          SourceSection{sj.at("heading").get<std::string>(), sj.value("content", "")});
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace medqa::kb
