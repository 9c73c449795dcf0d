#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "medqa/kb.hpp"

using namespace medqa;
using namespace medqa::kb;

namespace {

SourceDocument hypertension_doc() {
  SourceDocument doc;
  doc.entity_name = "Hypertension";
  doc.template_id = "disease";
  doc.source_uri = "test://v1";
  doc.sections = {
      {"Symptoms", "Often there are no symptoms at all."},
      {"Treatment", "Lower the pressure with medication and lifestyle changes."},
  };
  return doc;
}

}  // namespace

TEST_CASE("headings fill their slots by synonym") {
  KnowledgeBase base;
  const auto& tree = base.ingest_document(hypertension_doc());
  CHECK(tree.entity_name == "Hypertension");
  CHECK(get_attribute(tree, {"Symptom"}).text == "Often there are no symptoms at all.");
  const auto treatment = get_attribute(tree, {"Treatment"});
  CHECK(treatment.status == AttributeResult::Status::Found);
  CHECK(treatment.text == "Lower the pressure with medication and lifestyle changes.");
}

TEST_CASE("substring headings land in the right subtree slot") {
  KnowledgeBase base;
  SourceDocument doc = hypertension_doc();
  doc.sections.push_back({"Nonpharmacologic Therapy", "Exercise and less salt."});
  doc.sections.push_back({"Common Medications Used", "Diuretics and ACE inhibitors."});
  const auto& tree = base.ingest_document(doc);
  CHECK(get_attribute(tree, {"Treatment", "Nonpharmacologic Therapy"}).text ==
        "Exercise and less salt.");
  CHECK(get_attribute(tree, {"Treatment", "Medication"}).text == "Diuretics and ACE inhibitors.");
}

TEST_CASE("unmatched headings are collected under Unmapped") {
  KnowledgeBase base;
  SourceDocument doc = hypertension_doc();
  doc.sections.push_back({"Zzz", "Mystery content."});
  const auto& tree = base.ingest_document(doc);
  const auto res = get_attribute(tree, {kUnmappedLabel});
  CHECK(res.status == AttributeResult::Status::Found);
  CHECK(res.text == "Zzz Mystery content.");

  SUBCASE("flattening still reaches it") {
    CHECK(flatten_tree(tree).find("Mystery content.") != std::string::npos);
  }
}

TEST_CASE("unknown template is rejected") {
  KnowledgeBase base;
  SourceDocument doc = hypertension_doc();
  doc.template_id = "vehicle";
  CHECK_THROWS_AS(base.ingest_document(doc), ConfigError);
}

TEST_CASE("zero matched sections without the unmapped policy is a rejection") {
  KnowledgeBase base;
  base.set_allow_unmapped(false);
  SourceDocument doc;
  doc.entity_name = "Oddity";
  doc.template_id = "disease";
  doc.sections = {{"Zzz", "no slot for this"}};
  CHECK_THROWS_AS(base.ingest_document(doc), ConfigError);
  CHECK(base.tree("Oddity") == nullptr);
}

TEST_CASE("re-ingestion merges with newest content winning per slot") {
  KnowledgeBase base;
  base.ingest_document(hypertension_doc());

  SourceDocument update;
  update.entity_name = "hypertension";  // case-folded to the same entity
  update.template_id = "disease";
  update.source_uri = "test://v2";
  update.sections = {{"Treatment", "Updated treatment text."}};
  const auto& tree = base.ingest_document(update);

  CHECK(base.trees().size() == 1);
  CHECK(get_attribute(tree, {"Treatment"}).text == "Updated treatment text.");
  // untouched slots survive the merge
  CHECK(get_attribute(tree, {"Symptom"}).text == "Often there are no symptoms at all.");
  CHECK(tree.find({"Treatment"})->source == "test://v2");
}

TEST_CASE("ingestion is idempotent") {
  KnowledgeBase once, twice;
  once.ingest_document(hypertension_doc());
  twice.ingest_document(hypertension_doc());
  twice.ingest_document(hypertension_doc());
  CHECK(*once.tree("Hypertension") == *twice.tree("Hypertension"));
}

TEST_CASE("flatten_tree is deterministic and complete") {
  KnowledgeBase base;
  SourceDocument doc = hypertension_doc();
  doc.sections.push_back({"Causes", "Salt and stress."});
  const auto& tree = base.ingest_document(doc);

  const std::string flat = flatten_tree(tree);
  CHECK(flat == flatten_tree(tree));
  CHECK(flat.rfind("Hypertension", 0) == 0);  // entity name first

  // every non-empty slot's content appears exactly once
  for (const auto& [path, content] : content_slots(tree)) {
    const auto first = flat.find(content);
    REQUIRE(first != std::string::npos);
    CHECK(flat.find(content, first + 1) == std::string::npos);
  }
}

TEST_CASE("single-slot tree flattens to entity, label, content") {
  KnowledgeBase base;
  SourceDocument doc;
  doc.entity_name = "Hypertension";
  doc.template_id = "disease";
  doc.sections = {{"Treatment", "X"}};
  const auto& tree = base.ingest_document(doc);
  const std::string flat = flatten_tree(tree);
  CHECK(flat.find("Hypertension") != std::string::npos);
  CHECK(flat.find("Treatment X") != std::string::npos);
}

TEST_CASE("get_attribute distinguishes missing from empty") {
  KnowledgeBase base;
  const auto& tree = base.ingest_document(hypertension_doc());
  CHECK(get_attribute(tree, {"NoSuchConcept"}).status == AttributeResult::Status::Missing);
  CHECK(get_attribute(tree, {"Cause"}).status == AttributeResult::Status::Empty);
  // subtree concatenation is pre-order over descendants
  SourceDocument doc = hypertension_doc();
  doc.sections.push_back({"Medications", "A."});
  doc.sections.push_back({"Lifestyle", "B."});
  const auto& t2 = base.ingest_document(doc);
  CHECK(get_attribute(t2, {"Treatment"}).text ==
        "Lower the pressure with medication and lifestyle changes. A. B.");
}

TEST_CASE("kb persistence round trips") {
  KnowledgeBase base;
  base.ingest_document(hypertension_doc());
  SourceDocument doc2;
  doc2.entity_name = "Ibuprofen";
  doc2.template_id = "drug";
  doc2.source_uri = "test://drug";
  doc2.sections = {{"Dosage", "200 to 400 milligrams."}, {"Warnings", "Not in late pregnancy."}};
  base.ingest_document(doc2);
  SourceDocument doc3 = hypertension_doc();
  doc3.entity_name = "Migraine";
  base.ingest_document(doc3);

  const std::string path = "build/test_kb_roundtrip.json";
  save_kb(base, path);
  const auto loaded = load_kb(path);
  CHECK(loaded == base);
  REQUIRE(loaded.tree("Ibuprofen") != nullptr);
  CHECK(get_attribute(*loaded.tree("Ibuprofen"), {"Drug Information", "Dosage"}).text ==
        "200 to 400 milligrams.");

  SUBCASE("empty KB round trips too") {
    KnowledgeBase empty;
    save_kb(empty, path);
    CHECK(load_kb(path) == empty);
  }
}

TEST_CASE("truncated kb files are rejected without partial state") {
  KnowledgeBase base;
  base.ingest_document(hypertension_doc());
  const std::string path = "build/test_kb_truncated.json";
  save_kb(base, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(load_kb(path), ParseError);
}

TEST_CASE("loader validates template isomorphism and names the entity") {
  const std::string path = "build/test_kb_badslot.json";
  {
    std::ofstream out(path);
    out << R"({"format":"medqa-kb","version":1,"trees":[)"
        << R"({"entity":"Broken","template":"disease","leaves":{"NoSuchSlot":"text"}}]})";
  }
  try {
    load_kb(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("Broken") != std::string::npos);
  }
}

TEST_CASE("fixture kb loads with ten trees") {
  const auto kb = load_kb("fixtures/kb_fixture.json");
  CHECK(kb.trees().size() == 10);
  REQUIRE(kb.tree("Hypertension") != nullptr);
  const auto res = get_attribute(*kb.tree("Hypertension"), {"Treatment"});
  CHECK(res.text.find("thiazide diuretics") != std::string::npos);
  CHECK(res.text.find("Lifestyle changes") != std::string::npos);
}

TEST_CASE("source document fixture ingests end to end") {
  KnowledgeBase base;
  for (const auto& doc : load_source_documents("fixtures/source_docs.jsonl"))
    base.ingest_document(doc);
  CHECK(base.trees().size() == 3);
  REQUIRE(base.tree("Gout") != nullptr);
  CHECK(get_attribute(*base.tree("Gout"), {"Treatment"}).status ==
        AttributeResult::Status::Found);
  // the hotline section has no slot and lands under Unmapped
  CHECK(get_attribute(*base.tree("Hypertension"), {kUnmappedLabel}).text.find("Hotline") !=
        std::string::npos);
}
