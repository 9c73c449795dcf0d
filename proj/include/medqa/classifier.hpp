#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "medqa/matrix.hpp"
#include "medqa/types.hpp"

namespace medqa::classifier {

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> tokens = {"<pad>", "<unk>"};
  std::unordered_map<std::string, int> index = {{"<pad>", kPad}, {"<unk>", kUnk}};

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? kUnk : it->second;
  }
  int add(const std::string& tok);
};

struct BatchNormState {
  std::vector<double> gamma, beta;               // learnable
  std::vector<double> running_mean, running_var; // updated from batch stats in sgd_step
};

struct ConvStack {
  int window = 0;
  Matrix weights;            // filters x (window * h)
  std::vector<double> bias;  // per filter
  BatchNormState bn;
};

struct DenseLayer {
  Matrix weights;  // units x total_filters
  std::vector<double> bias;
  BatchNormState bn;
};

struct OutputLayer {
  Matrix weights;  // kNumTypes x units
  std::vector<double> bias;
};

struct ModelConfig {
  int embedding_dim = 64;
  int filters_per_stack = 100;
  std::vector<int> windows = {2, 3, 4};
  int dense_units = 128;
  int max_sequence = 60;  // l_max
  double dropout = 0.5;
  double l2 = 1e-4;
  double threshold = 0.5;
  double learning_rate = 0.01;
  int batch_size = 16;
  int epochs = 200;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  double init_scale = 0.05;  // uniform +/- range for weight init
  uint64_t seed = 1;

  int max_window() const;
  int total_filters() const { return filters_per_stack * static_cast<int>(windows.size()); }
  void validate() const;
};

struct ClassifierModel {
  ModelConfig config;
  Vocabulary vocab;
  Matrix embedding;  // v x h
  std::vector<ConvStack> stacks;
  DenseLayer dense;
  OutputLayer output;
};

ClassifierModel init_model(const Vocabulary& vocab, const ModelConfig& config);

struct TrainingExample {
  std::vector<int> indices;  // <= l_max, padded on use
  std::array<double, kNumTypes> labels{};
};

// Learnable-parameter gradients; shapes mirror the model.
struct Gradients {
  Matrix embedding;
  struct Stack {
    Matrix weights;
    std::vector<double> bias, gamma, beta;
  };
  std::vector<Stack> stacks;
  Matrix dense_weights;
  std::vector<double> dense_bias, dense_gamma, dense_beta;
  Matrix output_weights;
  std::vector<double> output_bias;
};

Gradients zero_gradients(const ClassifierModel& model);

// Named view over every learnable tensor, in a stable order shared between
// ClassifierModel and Gradients.
struct TensorRef {
  std::string name;
  double* data;
  size_t size;
};
std::vector<TensorRef> learnable_tensors(ClassifierModel& model);
std::vector<TensorRef> learnable_tensors(const ClassifierModel& model, Gradients& grads);

// Pad to at least the largest window, truncate at l_max.
std::vector<int> pad_indices(std::vector<int> indices, const ModelConfig& config);

Matrix embed(const std::vector<int>& indices, const Matrix& table);

// Cached intermediates of one train-mode batch forward.
struct ForwardCache {
  std::vector<std::vector<int>> indices;
  std::vector<Matrix> embedded;  // per example: l x h
  struct StackCache {
    std::vector<Matrix> pre, act, xhat, out;  // per example: filters x positions
    std::vector<double> mean, var;            // batch stats per filter
    int64_t group_size = 0;
    std::vector<std::vector<int>> argmax;     // per example, per filter
  };
  std::vector<StackCache> stacks;
  std::vector<std::vector<double>> x;       // pooled representation, pre-dropout
  std::vector<std::vector<double>> mask;    // inverted-dropout mask (0 or 1/keep)
  std::vector<std::vector<double>> x_drop;  // post-dropout
  Matrix dense_pre, dense_xhat, dense_out;  // units x batch
  std::vector<double> dense_mean, dense_var;
  std::vector<std::vector<double>> z;       // relu(dense_out column)
  std::vector<std::array<double, kNumTypes>> p;
};

std::vector<std::vector<double>> make_dropout_masks(const ModelConfig& config, int batch,
                                                    uint64_t seed);

// Train-mode batch forward with explicit dropout masks. Does not touch
// running statistics.
ForwardCache batch_forward_train(const ClassifierModel& model,
                                 const std::vector<std::vector<int>>& batch_indices,
                                 const std::vector<std::vector<double>>& dropout_masks);

// Deterministic eval-mode forward using running statistics, no dropout.
std::array<double, kNumTypes> forward_eval(const ClassifierModel& model,
                                           const std::vector<int>& indices);

// Sigmoid-cross-entropy summed over labels and batch, probabilities clipped
// to [1e-7, 1-1e-7], plus l2 * sum of squared learnable parameters.
double loss(const std::vector<std::array<double, kNumTypes>>& p,
            const std::vector<std::array<double, kNumTypes>>& y, const ClassifierModel& model);

Gradients backward(const ClassifierModel& model, const ForwardCache& cache,
                   const std::vector<std::array<double, kNumTypes>>& y);

struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// theta -= lr * grad for every learnable tensor; when cache is given, BN
// running stats absorb the batch stats with momentum. Throws
// NonFiniteGradient before touching the model if any gradient is not finite.
void sgd_step(ClassifierModel& model, const Gradients& grads, double learning_rate,
              const ForwardCache* cache = nullptr);

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-example loss
  std::vector<std::string> warnings;
};

TrainReport train(ClassifierModel& model, const std::vector<TrainingExample>& dataset);

std::set<QuestionType> predict_types(const ClassifierModel& model,
                                     const std::vector<std::string>& question_tokens);

// Fraction of examples whose predicted set equals the label set exactly.
double exact_set_accuracy(const ClassifierModel& model, const std::vector<TrainingExample>& dataset);

// --- persistence and data loading -----------------------------------------

void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);

struct Dataset {
  Vocabulary vocab;
  std::vector<TrainingExample> examples;
  std::vector<std::vector<std::string>> texts;  // tokenized, aligned with examples
};

// JSON lines {"text": ..., "types": [...]}; optional mapping table file
// {"original type" -> condensed type} applied to unknown type names.
Dataset load_training_data(const std::string& jsonl_path, const std::string& type_map_path = "");

// "token v1 v2 ... vh" per line; rows of tokens present in the vocabulary
// are replaced.
int load_pretrained_embeddings(ClassifierModel& model, const std::string& path);

// --- gradient checking ------------------------------------------------------

struct GradCheckReport {
  struct Entry {
    std::string tensor;
    double max_rel_err = 0.0;
  };
  std::vector<Entry> tensors;
  double worst = 0.0;
  bool pass(double tol) const { return worst < tol; }
};

// Central finite differences over every learnable parameter on a random
// model; step applied to a copy, analytic gradients from backward().
GradCheckReport gradient_check(const ModelConfig& config, uint64_t seed, int batch_size,
                               double step);

}  // namespace medqa::classifier
