#include <fstream>
#include <sstream>

#include <json.hpp>

#include "medqa/classifier.hpp"
#include "medqa/text.hpp"

namespace medqa::classifier {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError("malformed matrix for " + what);
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r) {
    if (static_cast<int>(j[r].size()) != m.cols) throw ParseError("ragged matrix for " + what);
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = j[r][c].get<double>();
  }
  return m;
}

json bn_to_json(const BatchNormState& bn) {
  return json{{"gamma", bn.gamma},
              {"beta", bn.beta},
              {"running_mean", bn.running_mean},
              {"running_var", bn.running_var}};
}

BatchNormState bn_from_json(const json& j) {
  BatchNormState bn;
  bn.gamma = j.at("gamma").get<std::vector<double>>();
  bn.beta = j.at("beta").get<std::vector<double>>();
  bn.running_mean = j.at("running_mean").get<std::vector<double>>();
  bn.running_var = j.at("running_var").get<std::vector<double>>();
  return bn;
}

}  // namespace

void save_model(const ClassifierModel& model, const std::string& path) {
  json j;
  j["format"] = "medqa-model";
  j["version"] = 1;
  j["config"] = {{"embedding_dim", model.config.embedding_dim},
                 {"filters_per_stack", model.config.filters_per_stack},
                 {"windows", model.config.windows},
                 {"dense_units", model.config.dense_units},
                 {"max_sequence", model.config.max_sequence},
                 {"dropout", model.config.dropout},
                 {"l2", model.config.l2},
                 {"threshold", model.config.threshold},
                 {"learning_rate", model.config.learning_rate},
                 {"batch_size", model.config.batch_size},
                 {"epochs", model.config.epochs},
                 {"bn_momentum", model.config.bn_momentum},
                 {"bn_eps", model.config.bn_eps},
                 {"init_scale", model.config.init_scale},
                 {"seed", model.config.seed}};
  j["labels"] = type_names();
  j["vocabulary"] = model.vocab.tokens;
  j["embedding"] = matrix_to_json(model.embedding);
  json stacks = json::array();
  for (const auto& stack : model.stacks) {
    stacks.push_back(json{{"window", stack.window},
                          {"weights", matrix_to_json(stack.weights)},
                          {"bias", stack.bias},
                          {"bn", bn_to_json(stack.bn)}});
  }
  j["stacks"] = std::move(stacks);
  j["dense"] = {{"weights", matrix_to_json(model.dense.weights)},
                {"bias", model.dense.bias},
                {"bn", bn_to_json(model.dense.bn)}};
  j["output"] = {{"weights", matrix_to_json(model.output.weights)},
                 {"bias", model.output.bias}};

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file: " + path);
  out << j.dump();
  out << "\n";
}

ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
  try {
    if (j.at("format") != "medqa-model") throw ParseError("not a model file: " + path);
    ClassifierModel model;
    const json& c = j.at("config");
    model.config.embedding_dim = c.at("embedding_dim").get<int>();
    model.config.filters_per_stack = c.at("filters_per_stack").get<int>();
    model.config.windows = c.at("windows").get<std::vector<int>>();
    model.config.dense_units = c.at("dense_units").get<int>();
    model.config.max_sequence = c.at("max_sequence").get<int>();
    model.config.dropout = c.at("dropout").get<double>();
    model.config.l2 = c.at("l2").get<double>();
    model.config.threshold = c.at("threshold").get<double>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.batch_size = c.at("batch_size").get<int>();
    model.config.epochs = c.at("epochs").get<int>();
    model.config.bn_momentum = c.at("bn_momentum").get<double>();
    model.config.bn_eps = c.at("bn_eps").get<double>();
    model.config.init_scale = c.value("init_scale", 0.05);
    model.config.seed = c.at("seed").get<uint64_t>();
    model.config.validate();

    model.vocab.tokens = j.at("vocabulary").get<std::vector<std::string>>();
    if (model.vocab.tokens.size() < 2) throw ParseError("vocabulary too small");
    model.vocab.index.clear();
    for (size_t i = 0; i < model.vocab.tokens.size(); ++i)
      model.vocab.index[model.vocab.tokens[i]] = static_cast<int>(i);

    model.embedding = matrix_from_json(j.at("embedding"), "embedding");
    if (model.embedding.rows != model.vocab.size() ||
        model.embedding.cols != model.config.embedding_dim)
      throw ParseError("embedding shape does not match vocabulary/config");

    for (const auto& js : j.at("stacks")) {
      ConvStack stack;
      stack.window = js.at("window").get<int>();
      stack.weights = matrix_from_json(js.at("weights"), "conv weights");
      stack.bias = js.at("bias").get<std::vector<double>>();
      stack.bn = bn_from_json(js.at("bn"));
      if (stack.weights.rows != model.config.filters_per_stack ||
          stack.weights.cols != stack.window * model.config.embedding_dim)
        throw ParseError("conv stack shape mismatch");
      model.stacks.push_back(std::move(stack));
    }
    if (model.stacks.size() != model.config.windows.size())
      throw ParseError("stack count does not match config windows");

    model.dense.weights = matrix_from_json(j.at("dense").at("weights"), "dense weights");
    model.dense.bias = j.at("dense").at("bias").get<std::vector<double>>();
    model.dense.bn = bn_from_json(j.at("dense").at("bn"));
    if (model.dense.weights.rows != model.config.dense_units ||
        model.dense.weights.cols != model.config.total_filters())
      throw ParseError("dense layer shape mismatch");

    model.output.weights = matrix_from_json(j.at("output").at("weights"), "output weights");
    model.output.bias = j.at("output").at("bias").get<std::vector<double>>();
    if (model.output.weights.rows != kNumTypes ||
        model.output.weights.cols != model.config.dense_units)
      throw ParseError("output layer shape mismatch");
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

Dataset load_training_data(const std::string& jsonl_path, const std::string& type_map_path) {
  std::unordered_map<std::string, std::string> type_map;
  if (!type_map_path.empty()) {
    std::ifstream in(type_map_path);
    if (!in) throw ConfigError("cannot open type map: " + type_map_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed type map: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      type_map[it.key()] = it.value().get<std::string>();
  }

  auto resolve_type = [&](const std::string& name, int line) -> QuestionType {
    if (auto t = parse_type(name)) return *t;
    auto it = type_map.find(name);
    if (it != type_map.end()) {
      if (auto t = parse_type(it->second)) return *t;
      throw ParseError("type map maps '" + name + "' to unknown type '" + it->second + "'");
    }
    throw ParseError("unknown question type '" + name + "' at line " + std::to_string(line));
  };

  std::ifstream in(jsonl_path);
  if (!in) throw ConfigError("cannot open training data: " + jsonl_path);

  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("training data line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string text = j.at("text").get<std::string>();
    TrainingExample ex;
    for (const auto& tj : j.at("types")) {
      const QuestionType t = resolve_type(tj.get<std::string>(), lineno);
      ex.labels[static_cast<size_t>(t)] = 1.0;
    }
    bool any = false;
    for (double v : ex.labels) any = any || v != 0.0;
    if (!any)
      throw ParseError("training data line " + std::to_string(lineno) + ": no labels");

    std::vector<std::string> surfaces;
    for (const auto& tok : text::tokenize(text)) surfaces.push_back(tok.surface);
    for (const auto& sur : surfaces) ex.indices.push_back(ds.vocab.add(sur));
    ds.texts.push_back(std::move(surfaces));
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw ConfigError("training data is empty: " + jsonl_path);
  return ds;
}

int load_pretrained_embeddings(ClassifierModel& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file: " + path);
  int loaded = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (static_cast<int>(values.size()) != model.config.embedding_dim)
      throw ParseError("embedding line " + std::to_string(lineno) + ": expected " +
                       std::to_string(model.config.embedding_dim) + " values, got " +
                       std::to_string(values.size()));
    auto it = model.vocab.index.find(token);
    if (it == model.vocab.index.end()) continue;
    for (int c = 0; c < model.config.embedding_dim; ++c)
      model.embedding.at(it->second, c) = values[c];
    ++loaded;
  }
  return loaded;
}

}  // namespace medqa::classifier
