#include <doctest.h>

#include <cmath>
#include <random>

#include "medqa/searcher.hpp"

using namespace medqa;
using namespace medqa::searcher;

namespace {

kb::KnowledgeBase fixture_kb() { return kb::load_kb("fixtures/kb_fixture.json"); }

text::FocusCandidate focus_of(const std::string& phrase) {
  text::FocusCandidate f;
  for (const auto& tok : text::tokenize(phrase)) f.phrase.push_back(tok);
  return f;
}

std::vector<std::string> toks(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& tok : text::tokenize(s)) out.push_back(tok.surface);
  return out;
}

// Naive BM25 re-implementation straight from the raw token lists; no index
// structures shared with the production path.
struct NaiveBm25 {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> docs;
  double k1 = 1.2, b = 0.75;

  explicit NaiveBm25(const kb::KnowledgeBase& base) {
    for (const auto& [key, tree] : base.trees()) {
      names.push_back(key);
      docs.push_back(toks(kb::flatten_tree(tree)));
    }
  }

  double score(const std::vector<std::string>& query, size_t d) const {
    double avgdl = 0;
    for (const auto& doc : docs) avgdl += double(doc.size());
    avgdl /= double(docs.size());
    double total = 0;
    for (const auto& term : query) {
      double tf = 0;
      for (const auto& t : docs[d]) tf += t == term;
      if (tf == 0) continue;
      double df = 0;
      for (const auto& doc : docs) {
        bool has = false;
        for (const auto& t : doc) has = has || t == term;
        df += has;
      }
      const double idf = std::log(1.0 + (double(docs.size()) - df + 0.5) / (df + 0.5));
      total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * double(docs[d].size()) / avgdl));
    }
    return total;
  }
};

}  // namespace

TEST_CASE("entity matching is whole-phrase, case-insensitive, alias-aware") {
  const auto base = fixture_kb();
  const auto index = EntityIndex::build(base);
  CHECK(index.match("hypertension") == "hypertension");
  CHECK(index.match("Hypertension") == "hypertension");
  CHECK(!index.match("hyperten").has_value());  // no partial-word match
  CHECK(index.match("high blood pressure") == "hypertension");
  CHECK(index.match("type 2 diabetes") == "diabetes");
  // containment is token-aligned
  CHECK(index.match("severe migraine attacks") == "migraine");
  CHECK(!index.match("nonexistent condition").has_value());
}

TEST_CASE("alias collisions fail at build time") {
  kb::KnowledgeBase base;
  kb::SourceDocument a;
  a.entity_name = "Alpha";
  a.template_id = "disease";
  a.sections = {{"Treatment", "x"}};
  base.ingest_document(a);
  kb::SourceDocument b = a;
  b.entity_name = "Beta";
  base.ingest_document(b);

  // stitch aliases onto the trees via the load path
  kb::save_kb(base, "build/test_alias_kb.json");
  auto loaded = kb::load_kb("build/test_alias_kb.json");
  auto tree_a = *loaded.tree("Alpha");
  auto tree_b = *loaded.tree("Beta");
  tree_a.aliases = {"shared name"};
  tree_b.aliases = {"Shared Name"};
  loaded.insert_tree(tree_a);
  loaded.insert_tree(tree_b);
  CHECK_THROWS_AS(EntityIndex::build(loaded), ConfigError);
}

TEST_CASE("bm25 single-doc hand calculation") {
  kb::KnowledgeBase base;
  kb::SourceDocument doc;
  doc.entity_name = "x";  // flattened text: "x Treatment x" -> tokens [x, treatment, x]
  doc.template_id = "disease";
  doc.sections = {{"Treatment", "x"}};
  base.ingest_document(doc);
  const auto index = Bm25Index::build(base);

  // tf("x") = 2 here, so check against the formula directly
  const double idf = std::log(1.0 + 0.5 / 1.5);
  const double tf = 2.0;
  const double expect = idf * tf * 2.2 / (tf + 1.2);
  CHECK(index.score({"x"}, 0) == doctest::Approx(expect).epsilon(1e-12));

  SUBCASE("single occurrence matches the worked value") {
    // a one-token doc: tf = 1, len = avgdl -> tf term = 2.2/2.2 = 1
    kb::KnowledgeBase tiny;
    kb::Template plain;
    plain.id = "plain";
    plain.root.label = "Root";
    plain.root.children = {{"Body", {"body"}, {}}};
    tiny.add_template(plain);
    kb::SourceDocument d2;
    d2.entity_name = "q";
    d2.template_id = "plain";
    d2.sections = {{"Body", "q q q"}};  // flatten: "q Body q q q"
    tiny.ingest_document(d2);
    const auto idx2 = Bm25Index::build(tiny);
    const double want = std::log(1.0 + 0.5 / 1.5) * 4.0 * 2.2 / (4.0 + 1.2);
    CHECK(idx2.score({"q"}, 0) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("bm25 score is zero without term overlap and throws on bad ids") {
  const auto index = Bm25Index::build(fixture_kb());
  CHECK(index.score({"qqq", "zzz"}, 0) == 0.0);
  CHECK_THROWS_AS(index.score({"x"}, 999), std::out_of_range);
}

TEST_CASE("bm25 matches the naive oracle on the ten-tree fixture") {
  const auto base = fixture_kb();
  const auto index = Bm25Index::build(base);
  const NaiveBm25 naive(base);
  REQUIRE(index.doc_count() == int(naive.docs.size()));

  std::mt19937_64 rng(77);
  std::vector<std::string> pool = {"blood",    "pressure", "treatment", "symptoms", "medication",
                                   "asthma",   "iron",     "joint",     "virus",    "dose",
                                   "diabetes", "unknownword"};
  for (int q = 0; q < 50; ++q) {
    std::vector<std::string> query;
    const int len = 1 + int(rng() % 5);
    for (int i = 0; i < len; ++i) query.push_back(pool[rng() % pool.size()]);

    for (int d = 0; d < index.doc_count(); ++d) {
      const double got = index.score(query, d);
      // naive index order: names sorted == entities order (both use map order)
      const auto it = std::find(naive.names.begin(), naive.names.end(), index.entity(d));
      REQUIRE(it != naive.names.end());
      const double want = naive.score(query, size_t(it - naive.names.begin()));
      CHECK(std::abs(got - want) <= 1e-9);
    }

    // ranking equals a full-scan sort
    const auto hits = index.search(query, index.doc_count());
    std::vector<std::pair<std::string, double>> expect;
    for (size_t d = 0; d < naive.docs.size(); ++d) {
      const double s = naive.score(query, d);
      if (s > 0) expect.emplace_back(naive.names[d], s);
    }
    std::stable_sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    REQUIRE(hits.size() == expect.size());
    for (size_t i = 0; i < hits.size(); ++i) {
      CHECK(hits[i].first == expect[i].first);
      CHECK(std::abs(hits[i].second - expect[i].second) <= 1e-9);
    }
  }
}

TEST_CASE("bm25 serial and parallel scans agree bitwise") {
  const auto index = Bm25Index::build(fixture_kb());
  const auto q = toks("treatment for high blood pressure medication");
  CHECK(index.scan_serial(q) == index.scan_parallel(q));
}

TEST_CASE("search returns only positive scores, best match first") {
  const auto index = Bm25Index::build(fixture_kb());
  const auto hits = index.search(toks("inhaled corticosteroids wheezing spirometry"), 5);
  REQUIRE(!hits.empty());
  CHECK(hits[0].first == "asthma");
  for (const auto& [name, score] : hits) CHECK(score > 0.0);
  CHECK(index.search(toks("qqqq zzzz"), 3).empty());
}

TEST_CASE("lookup table resolution follows type priority and de-duplicates") {
  const auto table = AttributeLookupTable::defaults();

  const auto paths = table.resolve("disease", {QuestionType::Treatment});
  REQUIRE(paths.size() == 3);
  CHECK(paths[0].path == std::vector<std::string>{"Treatment"});
  CHECK(paths[1].path == std::vector<std::string>{"Treatment", "Medication"});

  const auto single = table.resolve("disease", {QuestionType::Information});
  REQUIRE(single.size() == 1);
  CHECK(single[0].path == std::vector<std::string>{"Information"});

  CHECK(table.resolve("nosuchtemplate", {QuestionType::Information}).empty());
  CHECK(table.resolve("drug", {QuestionType::Prognosis}).empty());

  // Diagnosis shares the Symptom fallback; requesting both keeps one copy
  const auto both = table.resolve("disease", {QuestionType::Diagnosis, QuestionType::Symptom});
  int symptom_paths = 0;
  for (const auto& rp : both)
    symptom_paths += rp.path == std::vector<std::string>{"Symptom"};
  CHECK(symptom_paths == 1);

  // Treatment outranks Symptom in the priority order
  const auto multi = table.resolve("disease", {QuestionType::Symptom, QuestionType::Treatment});
  CHECK(multi[0].type == QuestionType::Treatment);
}

TEST_CASE("lookup table round trips through json and validates paths") {
  const auto table = AttributeLookupTable::defaults();
  table.save("build/test_lookup.json");
  const auto loaded = AttributeLookupTable::load("build/test_lookup.json");
  CHECK(loaded.entries == table.entries);
  loaded.validate(fixture_kb());

  AttributeLookupTable bad;
  bad.entries["disease"][QuestionType::Treatment] = {{"NoSuchNode"}};
  CHECK_THROWS_AS(bad.validate(fixture_kb()), ConfigError);
}

TEST_CASE("retrieve: exact entity with Treatment walks the subtree") {
  const auto base = fixture_kb();
  const auto entities = EntityIndex::build(base);
  const auto bm25 = Bm25Index::build(base);
  const auto table = AttributeLookupTable::defaults();

  const auto cands =
      retrieve(focus_of("hypertension"), toks("what is the treatment for hypertension"), base,
               entities, bm25, table, {QuestionType::Treatment});
  REQUIRE(!cands.empty());
  CHECK(cands[0].score == doctest::Approx(1.0));
  CHECK(cands[0].from_kb);
  CHECK(cands[0].entity == "Hypertension");
  CHECK(cands[0].text.find("thiazide diuretics") != std::string::npos);
  CHECK(cands[0].text.find("Lifestyle changes") != std::string::npos);

  SUBCASE("deterministic across runs") {
    const auto again =
        retrieve(focus_of("hypertension"), toks("what is the treatment for hypertension"), base,
                 entities, bm25, table, {QuestionType::Treatment});
    REQUIRE(again.size() == cands.size());
    for (size_t i = 0; i < cands.size(); ++i) {
      CHECK(again[i].text == cands[i].text);
      CHECK(again[i].score == cands[i].score);
    }
  }
}

TEST_CASE("retrieve: absent focus and no token overlap yields nothing") {
  const auto base = fixture_kb();
  const auto entities = EntityIndex::build(base);
  const auto bm25 = Bm25Index::build(base);
  const auto table = AttributeLookupTable::defaults();
  const auto cands = retrieve(focus_of("zika"), {"zika"}, base, entities, bm25, table,
                              {QuestionType::Information});
  CHECK(cands.empty());
}

TEST_CASE("retrieve: bm25 locates the tree when the entity index misses") {
  const auto base = fixture_kb();
  const auto entities = EntityIndex::build(base);
  const auto bm25 = Bm25Index::build(base);
  const auto table = AttributeLookupTable::defaults();

  // no entity named in the question, but asthma's content words are
  const auto cands = retrieve(std::nullopt, toks("wheezing and inhaled corticosteroids"), base,
                              entities, bm25, table, {QuestionType::Treatment});
  REQUIRE(!cands.empty());
  CHECK(cands[0].entity == "Asthma");
  CHECK(cands[0].score < 1.0);  // bm25 confidence stays below exact-match
}

TEST_CASE("retrieve: empty primary attribute falls back to subtree siblings") {
  kb::KnowledgeBase base;
  kb::SourceDocument doc;
  doc.entity_name = "Sparse";
  doc.template_id = "disease";
  // only the medication slot is filled; [Treatment] itself is empty
  doc.sections = {{"Medications", "Fallback medication text."}};
  base.ingest_document(doc);
  const auto entities = EntityIndex::build(base);
  const auto bm25 = Bm25Index::build(base);

  // a table whose primary path points at the empty sibling
  AttributeLookupTable table;
  table.entries["disease"][QuestionType::Treatment] = {
      {"Treatment", "Nonpharmacologic Therapy"}};
  const auto cands = retrieve(focus_of("sparse"), toks("sparse"), base, entities, bm25, table,
                              {QuestionType::Treatment});
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].text == "Fallback medication text.");
}

TEST_CASE("retrieve: unrelated trees do not change an exact-match result") {
  auto base = fixture_kb();
  const auto table = AttributeLookupTable::defaults();
  const auto before = retrieve(focus_of("hypertension"), toks("hypertension treatment"), base,
                               EntityIndex::build(base), Bm25Index::build(base), table,
                               {QuestionType::Treatment});

  kb::SourceDocument extra;
  extra.entity_name = "Distractor";
  extra.template_id = "disease";
  extra.sections = {{"Treatment", "Totally unrelated content."}};
  base.ingest_document(extra);
  const auto after = retrieve(focus_of("hypertension"), toks("hypertension treatment"), base,
                              EntityIndex::build(base), Bm25Index::build(base), table,
                              {QuestionType::Treatment});

  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].text == after[i].text);
}

TEST_CASE("retrieve: no table entry falls back to whole-tree content") {
  const auto base = fixture_kb();
  const auto entities = EntityIndex::build(base);
  const auto bm25 = Bm25Index::build(base);
  AttributeLookupTable empty_table;  // resolves nothing
  const auto cands = retrieve(focus_of("anemia"), toks("anemia"), base, entities, bm25,
                              empty_table, {QuestionType::Information});
  REQUIRE(cands.size() == 1);
  // all slots end up in one candidate
  CHECK(cands[0].text.find("too few healthy red cells") != std::string::npos);
  CHECK(cands[0].text.find("Iron supplements") != std::string::npos);
}

TEST_CASE("the shipped lookup table fixture matches the built-in defaults") {
  const auto fixture = AttributeLookupTable::load("fixtures/lookup_table.json");
  CHECK(fixture.entries == AttributeLookupTable::defaults().entries);
  fixture.validate(fixture_kb());
}
