#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "medqa/service.hpp"

using namespace medqa;

namespace {

service::PipelineConfig base_config(const std::string& config_path) {
  service::PipelineConfig cfg;
  if (!config_path.empty()) cfg = service::PipelineConfig::from_file(config_path);
  cfg.apply_env_overrides();
  return cfg;
}

int cmd_ingest(const std::string& docs_path, const std::string& kb_out,
               const std::string& kb_in) {
  kb::KnowledgeBase base = kb_in.empty() ? kb::KnowledgeBase() : kb::load_kb(kb_in);
  const auto docs = kb::load_source_documents(docs_path);
  for (const auto& doc : docs) base.ingest_document(doc);
  kb::save_kb(base, kb_out);
  std::printf("ingested %zu documents into %zu trees -> %s\n", docs.size(), base.trees().size(),
              kb_out.c_str());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& model_out,
              const std::string& type_map, const std::string& embeddings, uint64_t seed,
              int epochs, double lr, int hidden, int filters, int dense_units) {
  auto dataset = classifier::load_training_data(data_path, type_map);

  classifier::ModelConfig config;
  config.seed = seed;
  if (epochs > 0) config.epochs = epochs;
  if (lr > 0) config.learning_rate = lr;
  if (hidden > 0) config.embedding_dim = hidden;
  if (filters > 0) config.filters_per_stack = filters;
  if (dense_units > 0) config.dense_units = dense_units;

  auto model = classifier::init_model(dataset.vocab, config);
  if (!embeddings.empty()) {
    const int loaded = classifier::load_pretrained_embeddings(model, embeddings);
    std::printf("loaded %d pretrained embedding rows\n", loaded);
  }

  const auto report = classifier::train(model, dataset.examples);
  for (const auto& warning : report.warnings) std::printf("warning: %s\n", warning.c_str());
  for (size_t e = 0; e < report.epoch_loss.size(); ++e) {
    if (e % 20 == 0 || e + 1 == report.epoch_loss.size())
      std::printf("epoch %3zu  loss %.6f\n", e, report.epoch_loss[e]);
  }
  const double acc = classifier::exact_set_accuracy(model, dataset.examples);
  std::printf("training exact-set accuracy: %.3f\n", acc);

  classifier::save_model(model, model_out);
  std::printf("model saved -> %s\n", model_out.c_str());
  return 0;
}

int cmd_ask(const std::string& question, const std::string& config_path, const std::string& kb_path,
            const std::string& model_path, const std::string& corpus_path,
            const std::vector<std::string>& force_types) {
  auto cfg = base_config(config_path);
  if (!kb_path.empty()) cfg.kb_path = kb_path;
  if (!model_path.empty()) cfg.model_path = model_path;
  if (!corpus_path.empty()) cfg.background_corpus_path = corpus_path;
  if (!force_types.empty()) {
    std::set<QuestionType> forced;
    for (const auto& name : force_types) {
      auto t = parse_type(name);
      if (!t) throw ConfigError("unknown question type: " + name);
      forced.insert(*t);
    }
    cfg.forced_types = std::move(forced);
  }

  const auto pipeline = service::Pipeline::load(cfg);
  service::QuestionRequest req;
  req.qid = "cli";
  req.title = question;
  const auto ans = service::handle_question(req, pipeline);

  std::printf("%s\n", ans.text.c_str());
  std::printf("--\nelapsed: %lld ms\n", static_cast<long long>(ans.elapsed.count()));
  for (const auto& p : ans.provenance)
    std::printf("source: %s%s%s%s%s\n", p.source.c_str(), p.entity.empty() ? "" : "  entity: ",
                p.entity.c_str(), p.type.empty() ? "" : "  type: ", p.type.c_str());
  return 0;
}

int cmd_eval(const std::string& judgments_path) {
  const auto set = service::JudgmentSet::load(judgments_path);
  const auto m = service::evaluate(set);
  std::printf("received  %lld\n", static_cast<long long>(m.received));
  std::printf("answered  %lld\n", static_cast<long long>(m.answered));
  std::printf("avg score %.3f\n", m.avg_score);
  for (int i = 2; i <= 4; ++i)
    std::printf("success@%d   %.3f\n", i, m.success_at.at(i));
  for (int i = 2; i <= 4; ++i)
    std::printf("precision@%d %.3f%s\n", i, m.precision_at.at(i),
                m.precision_undefined ? "  (no answers generated)" : "");
  return 0;
}

int cmd_gradcheck(uint64_t seeds, double tolerance) {
  classifier::ModelConfig config;
  config.embedding_dim = 8;
  config.filters_per_stack = 4;
  config.windows = {2, 3, 4};
  config.dense_units = 8;
  config.max_sequence = 20;
  config.init_scale = 0.5;
  bool ok = true;
  for (uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto report = classifier::gradient_check(config, seed, 3, 1e-4);
    std::printf("seed %llu: worst relative error %.3e\n",
                static_cast<unsigned long long>(seed), report.worst);
    for (const auto& entry : report.tensors)
      std::printf("  %-18s %.3e\n", entry.tensor.c_str(), entry.max_rel_err);
    ok = ok && report.pass(tolerance);
  }
  std::printf("gradient check %s (tolerance %.1e)\n", ok ? "PASSED" : "FAILED", tolerance);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consumer-health question answering engine"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build or extend a knowledge base file");
  std::string docs_path, kb_out, kb_in;
  ingest->add_option("--docs", docs_path, "Source documents (JSON lines)")->required();
  ingest->add_option("--out", kb_out, "Output KB file")->required();
  ingest->add_option("--kb", kb_in, "Existing KB to extend");

  // train
  auto* train = app.add_subcommand("train", "Train the question-type classifier");
  std::string data_path, model_out, type_map, embeddings;
  uint64_t seed = 1;
  int epochs = 0, hidden = 0, filters = 0, dense_units = 0;
  double lr = 0;
  train->add_option("--data", data_path, "Training data (JSON lines)")->required();
  train->add_option("--out", model_out, "Output model file")->required();
  train->add_option("--type-map", type_map, "Original-to-condensed type mapping (JSON)");
  train->add_option("--embeddings", embeddings, "Pretrained embedding file");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--epochs", epochs, "Override epoch count");
  train->add_option("--lr", lr, "Override learning rate");
  train->add_option("--embedding-dim", hidden, "Override embedding dimension");
  train->add_option("--filters", filters, "Override filters per stack");
  train->add_option("--dense-units", dense_units, "Override dense layer width");

  // ask
  auto* ask = app.add_subcommand("ask", "Answer a single question");
  std::string question, config_path, kb_path, model_path, corpus_path;
  std::vector<std::string> force_types;
  ask->add_option("question", question, "The question text")->required();
  ask->add_option("--config", config_path, "Pipeline config file");
  ask->add_option("--kb", kb_path, "KB file (overrides config)");
  ask->add_option("--model", model_path, "Model file (overrides config)");
  ask->add_option("--corpus", corpus_path, "Background corpus: text file or directory of .txt");
  ask->add_option("--force-types", force_types, "Skip the classifier and use these types");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP question endpoint");
  std::string serve_config;
  int port_override = -1;
  serve->add_option("--config", serve_config, "Pipeline config file")->required();
  serve->add_option("--port", port_override, "Port (overrides config)");

  // eval
  auto* eval = app.add_subcommand("eval", "Compute metrics from a judgment file");
  std::string judgments_path;
  eval->add_option("--judgments", judgments_path, "Judgment file (JSON lines)")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  uint64_t gc_seeds = 3;
  double gc_tol = 1e-3;
  gradcheck->add_option("--seeds", gc_seeds, "Number of seeds");
  gradcheck->add_option("--tolerance", gc_tol, "Relative error tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(docs_path, kb_out, kb_in);
    if (*train)
      return cmd_train(data_path, model_out, type_map, embeddings, seed, epochs, lr, hidden,
                       filters, dense_units);
    if (*ask) return cmd_ask(question, config_path, kb_path, model_path, corpus_path, force_types);
    if (*serve) {
      auto cfg = base_config(serve_config);
      if (port_override >= 0) cfg.port = port_override;
      return service::serve(cfg);
    }
    if (*eval) return cmd_eval(judgments_path);
    if (*gradcheck) return cmd_gradcheck(gc_seeds, gc_tol);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
