#include "medqa/searcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "medqa/kernels.hpp"

namespace medqa::searcher {

using nlohmann::json;

namespace {

std::string join_tokens(const std::vector<text::Token>& tokens) {
  std::string out;
  for (const auto& tok : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += tok.surface;
  }
  return out;
}

std::string normalize_phrase(const std::string& raw) {
  return join_tokens(text::tokenize(raw));
}

}  // namespace

// --- entity index -----------------------------------------------------------

EntityIndex EntityIndex::build(const kb::KnowledgeBase& kb) {
  EntityIndex index;
  for (const auto& [key, tree] : kb.trees()) {
    const std::string name = normalize_phrase(tree.entity_name);
    if (name.empty()) throw ConfigError("entity with empty normalized name");
    auto [it, inserted] = index.names_.emplace(name, key);
    if (!inserted && it->second != key)
      throw ConfigError("entity name collision: " + name);
  }
  for (const auto& [key, tree] : kb.trees()) {
    for (const auto& alias : tree.aliases) {
      const std::string name = normalize_phrase(alias);
      if (name.empty()) continue;
      auto [it, inserted] = index.names_.emplace(name, key);
      if (!inserted && it->second != key)
        throw ConfigError("alias '" + alias + "' collides with entity '" + it->second + "'");
    }
  }
  return index;
}

std::optional<std::string> EntityIndex::match(const std::string& phrase) const {
  const std::string folded = normalize_phrase(phrase);
  if (folded.empty()) return std::nullopt;
  auto exact = names_.find(folded);
  if (exact != names_.end()) return exact->second;

  // Token-aligned containment: the name must cover whole tokens of the
  // phrase, which gives the word-boundary anchoring.
  std::vector<std::string> tokens;
  {
    std::string cur;
    for (char c : folded) {
      if (c == ' ') {
        tokens.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    tokens.push_back(cur);
  }
  size_t best_len = 0;
  std::optional<std::string> best;
  bool ambiguous = false;
  for (size_t i = 0; i < tokens.size(); ++i) {
    std::string sub;
    for (size_t j = i; j < tokens.size(); ++j) {
      if (!sub.empty()) sub.push_back(' ');
      sub += tokens[j];
      auto it = names_.find(sub);
      if (it == names_.end()) continue;
      const size_t len = j - i + 1;
      if (len > best_len) {
        best_len = len;
        best = it->second;
        ambiguous = false;
      } else if (len == best_len && best && it->second != *best) {
        ambiguous = true;
      }
    }
  }
  if (ambiguous) return std::nullopt;
  return best;
}

// --- bm25 -------------------------------------------------------------------

Bm25Index Bm25Index::build(const kb::KnowledgeBase& kb, Bm25Params params) {
  if (params.k1 <= 0.0) throw ConfigError("bm25 k1 must be positive");
  if (params.b < 0.0 || params.b > 1.0) throw ConfigError("bm25 b must be in [0,1]");
  Bm25Index index;
  index.params_ = params;
  for (const auto& [key, tree] : kb.trees()) index.entities_.push_back(key);
  std::sort(index.entities_.begin(), index.entities_.end());

  int64_t total_len = 0;
  for (size_t id = 0; id < index.entities_.size(); ++id) {
    index.id_of_[index.entities_[id]] = static_cast<int>(id);
    const kb::KnowledgeTree* tree = kb.tree(index.entities_[id]);
    const auto tokens = text::tokenize(kb::flatten_tree(*tree));
    index.lengths_.push_back(static_cast<int64_t>(tokens.size()));
    total_len += static_cast<int64_t>(tokens.size());
    for (const auto& tok : tokens) index.postings_[tok.surface][static_cast<int>(id)] += 1;
  }
  index.avgdl_ = index.entities_.empty()
                     ? 0.0
                     : static_cast<double>(total_len) / static_cast<double>(index.entities_.size());
  return index;
}

std::optional<int> Bm25Index::tree_id(const std::string& entity_key) const {
  auto it = id_of_.find(entity_key);
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

double Bm25Index::score(const std::vector<std::string>& query, int tree_id) const {
  if (tree_id < 0 || tree_id >= doc_count())
    throw std::out_of_range("bm25: unknown tree id " + std::to_string(tree_id));
  const double n = static_cast<double>(doc_count());
  const double len_norm =
      params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(lengths_[tree_id]) / avgdl_);
  double total = 0.0;
  for (const auto& term : query) {
    auto post = postings_.find(term);
    if (post == postings_.end()) continue;
    auto tf_it = post->second.find(tree_id);
    if (tf_it == post->second.end()) continue;
    const double df = static_cast<double>(post->second.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double tf = static_cast<double>(tf_it->second);
    total += idf * tf * (params_.k1 + 1.0) / (tf + len_norm);
  }
  return total;
}

std::vector<double> Bm25Index::scan_serial(const std::vector<std::string>& query) const {
  std::vector<double> scores(doc_count(), 0.0);
  for (int id = 0; id < doc_count(); ++id) scores[id] = score(query, id);
  return scores;
}

std::vector<double> Bm25Index::scan_parallel(const std::vector<std::string>& query) const {
  std::vector<double> scores(doc_count(), 0.0);
  const int n = doc_count();
#pragma omp parallel for schedule(static)
  for (int id = 0; id < n; ++id) scores[id] = score(query, id);
  return scores;
}

std::vector<double> Bm25Index::scan(const std::vector<std::string>& query) const {
  return kernels::parallel_enabled() ? scan_parallel(query) : scan_serial(query);
}

std::vector<std::pair<std::string, double>> Bm25Index::search(
    const std::vector<std::string>& query, int top_k) const {
  if (top_k < 1) throw ConfigError("bm25 search: top_k must be >= 1");
  const auto scores = scan(query);
  std::vector<std::pair<std::string, double>> hits;
  for (int id = 0; id < doc_count(); ++id)
    if (scores[id] > 0.0) hits.emplace_back(entities_[id], scores[id]);
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(hits.size()) > top_k) hits.resize(top_k);
  return hits;
}

// --- attribute lookup table ---------------------------------------------------

AttributeLookupTable AttributeLookupTable::defaults() {
  using Paths = std::vector<std::vector<std::string>>;
  AttributeLookupTable table;
  auto& disease = table.entries["disease"];
  disease[QuestionType::Treatment] =
      Paths{{"Treatment"}, {"Treatment", "Medication"}, {"Treatment", "Nonpharmacologic Therapy"}};
  disease[QuestionType::Information] = Paths{{"Information"}};
  disease[QuestionType::Susceptibility] = Paths{{"Susceptibility"}};
  disease[QuestionType::Prognosis] = Paths{{"Prognosis"}};
  disease[QuestionType::Symptom] = Paths{{"Symptom"}};
  disease[QuestionType::Diagnosis] = Paths{{"Diagnosis"}, {"Symptom"}};
  disease[QuestionType::Cause] = Paths{{"Cause"}};
  disease[QuestionType::Organization] = Paths{{"Information"}};

  auto& drug = table.entries["drug"];
  drug[QuestionType::Information] = Paths{{"Information"}};
  drug[QuestionType::DrugInformation] =
      Paths{{"Drug Information"}, {"Drug Information", "Dosage"}, {"Drug Information", "Side Effects"}};
  drug[QuestionType::DrugInteraction] = Paths{{"Drug Interaction"}, {"Contraindications"}};
  drug[QuestionType::Treatment] = Paths{{"Drug Information", "Dosage"}};
  drug[QuestionType::Cause] = Paths{{"Drug Information", "Side Effects"}};
  return table;
}

AttributeLookupTable AttributeLookupTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lookup table: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed lookup table: ") + e.what());
  }
  AttributeLookupTable table;
  for (const auto& [template_id, types] : j.items()) {
    for (const auto& [type_name, paths] : types.items()) {
      auto type = parse_type(type_name);
      if (!type) throw ParseError("lookup table: unknown type '" + type_name + "'");
      std::vector<std::vector<std::string>> parsed;
      for (const auto& pj : paths) parsed.push_back(pj.get<std::vector<std::string>>());
      table.entries[template_id][*type] = std::move(parsed);
    }
  }
  return table;
}

void AttributeLookupTable::save(const std::string& path) const {
  json j = json::object();
  for (const auto& [template_id, types] : entries) {
    json tj = json::object();
    for (const auto& [type, paths] : types) tj[to_string(type)] = paths;
    j[template_id] = std::move(tj);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write lookup table: " + path);
  out << j.dump(2) << "\n";
}

void AttributeLookupTable::validate(const kb::KnowledgeBase& kb) const {
  for (const auto& [template_id, types] : entries) {
    const kb::Template* tmpl = kb.find_template(template_id);
    if (!tmpl) throw ConfigError("lookup table names unknown template '" + template_id + "'");
    for (const auto& [type, paths] : types) {
      for (const auto& path : paths) {
        if (!tmpl->has_path(path)) {
          std::string joined;
          for (const auto& p : path) joined += (joined.empty() ? "" : "/") + p;
          throw ConfigError("lookup table path '" + joined + "' not in template '" + template_id +
                            "'");
        }
      }
    }
  }
}

std::vector<ResolvedPath> AttributeLookupTable::resolve(const std::string& template_id,
                                                        const std::set<QuestionType>& types) const {
  std::vector<ResolvedPath> out;
  auto tmpl_it = entries.find(template_id);
  if (tmpl_it == entries.end()) return out;
  std::set<std::vector<std::string>> seen;
  for (QuestionType type : type_priority()) {
    if (!types.count(type)) continue;
    auto it = tmpl_it->second.find(type);
    if (it == tmpl_it->second.end()) continue;
    for (const auto& path : it->second)
      if (seen.insert(path).second) out.push_back(ResolvedPath{path, type});
  }
  return out;
}

// --- retrieval ----------------------------------------------------------------

namespace {

std::string path_key(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& p : path) {
    out += p;
    out.push_back('/');
  }
  return out;
}

// Everything under `prefix` is covered once a candidate emitted `prefix`.
bool is_covered(const std::set<std::string>& covered, const std::string& key) {
  for (const auto& c : covered)
    if (key.size() >= c.size() && key.compare(0, c.size(), c) == 0) return true;
  return false;
}

}  // namespace

std::vector<Candidate> retrieve(const std::optional<text::FocusCandidate>& focus,
                                const std::vector<std::string>& question_content_tokens,
                                const kb::KnowledgeBase& kb, const EntityIndex& entities,
                                const Bm25Index& bm25, const AttributeLookupTable& table,
                                const std::set<QuestionType>& types) {
  const kb::KnowledgeTree* tree = nullptr;
  double confidence = 0.0;

  if (focus) {
    if (auto key = entities.match(focus->joined())) {
      tree = kb.tree(*key);
      confidence = 1.0;
    }
  }
  if (!tree && !question_content_tokens.empty() && bm25.doc_count() > 0) {
    const auto hits = bm25.search(question_content_tokens, 1);
    if (!hits.empty()) {
      tree = kb.tree(hits[0].first);
      confidence = std::min(1.0, hits[0].second / (hits[0].second + 1.0));
    }
  }
  if (!tree) return {};

  std::vector<Candidate> out;
  auto emit = [&](const std::string& text, double score, QuestionType type) {
    Candidate c;
    c.text = text;
    c.from_kb = true;
    c.source = "kb";
    c.score = score;
    c.entity = tree->entity_name;
    c.type = type;
    out.push_back(std::move(c));
  };

  const auto paths = table.resolve(tree->template_id, types);
  if (paths.empty()) {
    // No table entry for any requested type: fall back to the whole tree.
    std::string all;
    for (const auto& [path, content] : kb::content_slots(*tree)) {
      if (!all.empty()) all.push_back(' ');
      all += content;
    }
    if (!all.empty()) {
      QuestionType label = types.empty() ? QuestionType::Information : *types.begin();
      emit(all, confidence, label);
    }
    return out;
  }

  std::set<std::string> covered;
  double discount = 1.0;
  for (size_t rank = 0; rank < paths.size(); ++rank, discount *= 0.9) {
    const auto& rp = paths[rank];
    const auto res = kb::get_attribute(*tree, rp.path);
    if (res.status == kb::AttributeResult::Status::Found) {
      const std::string key = path_key(rp.path);
      if (is_covered(covered, key)) continue;
      emit(res.text, confidence * discount, rp.type);
      covered.insert(key);
      continue;
    }
    // Primary attribute missing or empty: try sibling slots of the same
    // subtree before moving to the next path.
    if (rp.path.size() < 1) continue;
    std::vector<std::string> parent_path(rp.path.begin(), rp.path.end() - 1);
    const kb::TreeNode* parent =
        parent_path.empty() ? &tree->root : tree->find(parent_path);
    if (!parent) continue;
    for (const auto& sibling : parent->children) {
      if (sibling.label == rp.path.back()) continue;
      if (sibling.label == kb::kUnmappedLabel) continue;
      std::vector<std::string> sib_path = parent_path;
      sib_path.push_back(sibling.label);
      const auto sib = kb::get_attribute(*tree, sib_path);
      if (sib.status != kb::AttributeResult::Status::Found) continue;
      const std::string key = path_key(sib_path);
      if (is_covered(covered, key)) continue;
      emit(sib.text, confidence * discount, rp.type);
      covered.insert(key);
    }
  }
  return out;
}

}  // namespace medqa::searcher
