#include "medqa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "medqa/kernels.hpp"

namespace medqa::classifier {

namespace {

constexpr double kClipEps = 1e-7;

// Hand-rolled draws so results do not depend on the standard library's
// distribution implementations.
double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

double sigmoid(double v) {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Matrix relu(const Matrix& in) {
  Matrix out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

void fill_uniform(Matrix& m, std::mt19937_64& rng, double scale) {
  for (double& v : m.data) v = uniform(rng, -scale, scale);
}

std::vector<const Matrix*> as_ptrs(const std::vector<Matrix>& ms) {
  std::vector<const Matrix*> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(&m);
  return out;
}

}  // namespace

int Vocabulary::add(const std::string& tok) {
  auto it = index.find(tok);
  if (it != index.end()) return it->second;
  const int id = static_cast<int>(tokens.size());
  tokens.push_back(tok);
  index.emplace(tok, id);
  return id;
}

int ModelConfig::max_window() const {
  int w = 0;
  for (int win : windows) w = std::max(w, win);
  return w;
}

void ModelConfig::validate() const {
  if (embedding_dim < 1 || filters_per_stack < 1 || dense_units < 1)
    throw ConfigError("model dimensions must be positive");
  if (windows.empty()) throw ConfigError("at least one convolution window required");
  for (int w : windows)
    if (w < 1) throw ConfigError("convolution window must be >= 1");
  if (max_sequence < max_window())
    throw ConfigError("max_sequence must be >= the largest window");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("threshold must be in (0,1)");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (l2 < 0.0) throw ConfigError("l2 coefficient must be >= 0");
  if (bn_momentum < 0.0 || bn_momentum > 1.0) throw ConfigError("bn momentum must be in [0,1]");
}

ClassifierModel init_model(const Vocabulary& vocab, const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ClassifierModel model;
  model.config = config;
  model.vocab = vocab;

  model.embedding = Matrix(vocab.size(), config.embedding_dim);
  fill_uniform(model.embedding, rng, config.init_scale);

  for (int win : config.windows) {
    ConvStack stack;
    stack.window = win;
    stack.weights = Matrix(config.filters_per_stack, win * config.embedding_dim);
    fill_uniform(stack.weights, rng, config.init_scale);
    stack.bias.assign(config.filters_per_stack, 0.0);
    stack.bn.gamma.assign(config.filters_per_stack, 1.0);
    stack.bn.beta.assign(config.filters_per_stack, 0.0);
    stack.bn.running_mean.assign(config.filters_per_stack, 0.0);
    stack.bn.running_var.assign(config.filters_per_stack, 1.0);
    model.stacks.push_back(std::move(stack));
  }

  model.dense.weights = Matrix(config.dense_units, config.total_filters());
  fill_uniform(model.dense.weights, rng, config.init_scale);
  model.dense.bias.assign(config.dense_units, 0.0);
  model.dense.bn.gamma.assign(config.dense_units, 1.0);
  model.dense.bn.beta.assign(config.dense_units, 0.0);
  model.dense.bn.running_mean.assign(config.dense_units, 0.0);
  model.dense.bn.running_var.assign(config.dense_units, 1.0);

  model.output.weights = Matrix(kNumTypes, config.dense_units);
  fill_uniform(model.output.weights, rng, config.init_scale);
  model.output.bias.assign(kNumTypes, 0.0);
  return model;
}

Gradients zero_gradients(const ClassifierModel& model) {
  Gradients g;
  g.embedding = Matrix(model.embedding.rows, model.embedding.cols);
  for (const auto& stack : model.stacks) {
    Gradients::Stack gs;
    gs.weights = Matrix(stack.weights.rows, stack.weights.cols);
    gs.bias.assign(stack.bias.size(), 0.0);
    gs.gamma.assign(stack.bn.gamma.size(), 0.0);
    gs.beta.assign(stack.bn.beta.size(), 0.0);
    g.stacks.push_back(std::move(gs));
  }
  g.dense_weights = Matrix(model.dense.weights.rows, model.dense.weights.cols);
  g.dense_bias.assign(model.dense.bias.size(), 0.0);
  g.dense_gamma.assign(model.dense.bn.gamma.size(), 0.0);
  g.dense_beta.assign(model.dense.bn.beta.size(), 0.0);
  g.output_weights = Matrix(model.output.weights.rows, model.output.weights.cols);
  g.output_bias.assign(model.output.bias.size(), 0.0);
  return g;
}

std::vector<TensorRef> learnable_tensors(ClassifierModel& model) {
  std::vector<TensorRef> refs;
  refs.push_back({"embedding", model.embedding.data.data(), model.embedding.data.size()});
  for (auto& stack : model.stacks) {
    const std::string base = "conv" + std::to_string(stack.window);
    refs.push_back({base + ".weights", stack.weights.data.data(), stack.weights.data.size()});
    refs.push_back({base + ".bias", stack.bias.data(), stack.bias.size()});
    refs.push_back({base + ".bn_gamma", stack.bn.gamma.data(), stack.bn.gamma.size()});
    refs.push_back({base + ".bn_beta", stack.bn.beta.data(), stack.bn.beta.size()});
  }
  refs.push_back({"dense.weights", model.dense.weights.data.data(), model.dense.weights.data.size()});
  refs.push_back({"dense.bias", model.dense.bias.data(), model.dense.bias.size()});
  refs.push_back({"dense.bn_gamma", model.dense.bn.gamma.data(), model.dense.bn.gamma.size()});
  refs.push_back({"dense.bn_beta", model.dense.bn.beta.data(), model.dense.bn.beta.size()});
  refs.push_back({"output.weights", model.output.weights.data.data(), model.output.weights.data.size()});
  refs.push_back({"output.bias", model.output.bias.data(), model.output.bias.size()});
  return refs;
}

std::vector<TensorRef> learnable_tensors(const ClassifierModel&, Gradients& g) {
  std::vector<TensorRef> refs;
  refs.push_back({"embedding", g.embedding.data.data(), g.embedding.data.size()});
  for (size_t s = 0; s < g.stacks.size(); ++s) {
    auto& gs = g.stacks[s];
    const std::string base = "stack" + std::to_string(s);
    refs.push_back({base + ".weights", gs.weights.data.data(), gs.weights.data.size()});
    refs.push_back({base + ".bias", gs.bias.data(), gs.bias.size()});
    refs.push_back({base + ".bn_gamma", gs.gamma.data(), gs.gamma.size()});
    refs.push_back({base + ".bn_beta", gs.beta.data(), gs.beta.size()});
  }
  refs.push_back({"dense.weights", g.dense_weights.data.data(), g.dense_weights.data.size()});
  refs.push_back({"dense.bias", g.dense_bias.data(), g.dense_bias.size()});
  refs.push_back({"dense.bn_gamma", g.dense_gamma.data(), g.dense_gamma.size()});
  refs.push_back({"dense.bn_beta", g.dense_beta.data(), g.dense_beta.size()});
  refs.push_back({"output.weights", g.output_weights.data.data(), g.output_weights.data.size()});
  refs.push_back({"output.bias", g.output_bias.data(), g.output_bias.size()});
  return refs;
}

std::vector<int> pad_indices(std::vector<int> indices, const ModelConfig& config) {
  if (static_cast<int>(indices.size()) > config.max_sequence)
    indices.resize(config.max_sequence);
  while (static_cast<int>(indices.size()) < config.max_window())
    indices.push_back(Vocabulary::kPad);
  return indices;
}

Matrix embed(const std::vector<int>& indices, const Matrix& table) {
  Matrix out(static_cast<int>(indices.size()), table.cols);
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= table.rows)
      throw std::out_of_range("embedding index out of range: " + std::to_string(indices[r]));
    const double* src = table.row(indices[r]);
    std::copy(src, src + table.cols, out.row(static_cast<int>(r)));
  }
  return out;
}

std::vector<std::vector<double>> make_dropout_masks(const ModelConfig& config, int batch,
                                                    uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int features = config.total_filters();
  const double keep = 1.0 - config.dropout;
  std::vector<std::vector<double>> masks(batch, std::vector<double>(features, 1.0));
  if (config.dropout == 0.0) return masks;
  for (auto& mask : masks)
    for (double& m : mask) m = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return masks;
}

ForwardCache batch_forward_train(const ClassifierModel& model,
                                 const std::vector<std::vector<int>>& batch_indices,
                                 const std::vector<std::vector<double>>& dropout_masks) {
  const auto& cfg = model.config;
  const int m = static_cast<int>(batch_indices.size());
  ForwardCache cache;
  cache.indices.reserve(m);
  for (const auto& idx : batch_indices) cache.indices.push_back(pad_indices(idx, cfg));
  for (const auto& idx : cache.indices) cache.embedded.push_back(embed(idx, model.embedding));

  cache.x.assign(m, {});
  for (size_t s = 0; s < model.stacks.size(); ++s) {
    const ConvStack& stack = model.stacks[s];
    ForwardCache::StackCache sc;
    sc.pre.resize(m);
    sc.act.resize(m);
    for (int e = 0; e < m; ++e) {
      if (cache.embedded[e].rows < stack.window)
        throw std::logic_error("sequence shorter than window after padding");
      kernels::conv_forward(cache.embedded[e], stack.weights, stack.bias, stack.window, sc.pre[e]);
      sc.act[e] = relu(sc.pre[e]);
      sc.group_size += sc.act[e].cols;
    }
    kernels::bn_stats(as_ptrs(sc.act), sc.mean, sc.var);
    sc.xhat.resize(m);
    sc.out.resize(m);
    sc.argmax.resize(m);
    for (int e = 0; e < m; ++e) {
      kernels::bn_apply(sc.act[e], sc.mean, sc.var, stack.bn.gamma, stack.bn.beta, cfg.bn_eps,
                        sc.xhat[e], sc.out[e]);
      std::vector<double> pooled;
      kernels::maxpool_rows(sc.out[e], pooled, sc.argmax[e]);
      cache.x[e].insert(cache.x[e].end(), pooled.begin(), pooled.end());
    }
    cache.stacks.push_back(std::move(sc));
  }

  cache.mask = dropout_masks;
  cache.x_drop = cache.x;
  for (int e = 0; e < m; ++e)
    for (size_t i = 0; i < cache.x_drop[e].size(); ++i) cache.x_drop[e][i] *= cache.mask[e][i];

  const int units = cfg.dense_units;
  cache.dense_pre = Matrix(units, m);
  for (int e = 0; e < m; ++e) {
    std::vector<double> pre;
    kernels::matvec(model.dense.weights, cache.x_drop[e], model.dense.bias, pre);
    for (int u = 0; u < units; ++u) cache.dense_pre.at(u, e) = pre[u];
  }
  {
    std::vector<const Matrix*> slab = {&cache.dense_pre};
    kernels::bn_stats(slab, cache.dense_mean, cache.dense_var);
  }
  kernels::bn_apply(cache.dense_pre, cache.dense_mean, cache.dense_var, model.dense.bn.gamma,
                    model.dense.bn.beta, cfg.bn_eps, cache.dense_xhat, cache.dense_out);

  cache.z.assign(m, std::vector<double>(units, 0.0));
  cache.p.assign(m, {});
  for (int e = 0; e < m; ++e) {
    for (int u = 0; u < units; ++u) {
      const double t = cache.dense_out.at(u, e);
      cache.z[e][u] = t > 0.0 ? t : 0.0;
    }
    std::vector<double> logits;
    kernels::matvec(model.output.weights, cache.z[e], model.output.bias, logits);
    for (int i = 0; i < kNumTypes; ++i) cache.p[e][i] = sigmoid(logits[i]);
  }
  return cache;
}

std::array<double, kNumTypes> forward_eval(const ClassifierModel& model,
                                           const std::vector<int>& indices) {
  const auto& cfg = model.config;
  const Matrix D = embed(pad_indices(indices, cfg), model.embedding);

  std::vector<double> x;
  x.reserve(cfg.total_filters());
  for (const ConvStack& stack : model.stacks) {
    Matrix pre;
    kernels::conv_forward(D, stack.weights, stack.bias, stack.window, pre);
    Matrix act = relu(pre);
    Matrix xhat, out;
    kernels::bn_apply(act, stack.bn.running_mean, stack.bn.running_var, stack.bn.gamma,
                      stack.bn.beta, cfg.bn_eps, xhat, out);
    std::vector<double> pooled;
    std::vector<int> arg;
    kernels::maxpool_rows(out, pooled, arg);
    x.insert(x.end(), pooled.begin(), pooled.end());
  }

  std::vector<double> pre;
  kernels::matvec(model.dense.weights, x, model.dense.bias, pre);
  std::vector<double> z(cfg.dense_units, 0.0);
  for (int u = 0; u < cfg.dense_units; ++u) {
    const double inv = 1.0 / std::sqrt(model.dense.bn.running_var[u] + cfg.bn_eps);
    const double t =
        model.dense.bn.gamma[u] * (pre[u] - model.dense.bn.running_mean[u]) * inv +
        model.dense.bn.beta[u];
    z[u] = t > 0.0 ? t : 0.0;
  }
  std::vector<double> logits;
  kernels::matvec(model.output.weights, z, model.output.bias, logits);
  std::array<double, kNumTypes> p{};
  for (int i = 0; i < kNumTypes; ++i) p[i] = sigmoid(logits[i]);
  return p;
}

double loss(const std::vector<std::array<double, kNumTypes>>& p,
            const std::vector<std::array<double, kNumTypes>>& y, const ClassifierModel& model) {
  double ce = 0.0;
  for (size_t e = 0; e < p.size(); ++e) {
    for (int i = 0; i < kNumTypes; ++i) {
      const double pi = std::clamp(p[e][i], kClipEps, 1.0 - kClipEps);
      ce -= y[e][i] * std::log(pi) + (1.0 - y[e][i]) * std::log(1.0 - pi);
    }
  }
  double sq = 0.0;
  auto& mutable_model = const_cast<ClassifierModel&>(model);
  for (const auto& ref : learnable_tensors(mutable_model))
    for (size_t i = 0; i < ref.size; ++i) sq += ref.data[i] * ref.data[i];
  return ce + model.config.l2 * sq;
}

Gradients backward(const ClassifierModel& model, const ForwardCache& cache,
                   const std::vector<std::array<double, kNumTypes>>& y) {
  const auto& cfg = model.config;
  const int m = static_cast<int>(cache.indices.size());
  if (m == 0 || cache.p.size() != static_cast<size_t>(m))
    throw std::logic_error("backward requires a cached train-mode forward");
  Gradients g = zero_gradients(model);

  // output layer; the clip in loss() flattens the gradient outside (eps, 1-eps)
  std::vector<std::vector<double>> dz(m);
  for (int e = 0; e < m; ++e) {
    std::vector<double> dlogit(kNumTypes, 0.0);
    for (int i = 0; i < kNumTypes; ++i) {
      const double pi = cache.p[e][i];
      if (pi > kClipEps && pi < 1.0 - kClipEps) dlogit[i] = pi - y[e][i];
    }
    kernels::matvec_backward_params(dlogit, cache.z[e], g.output_weights, g.output_bias);
    kernels::matvec_backward_data(model.output.weights, dlogit, dz[e]);
  }

  // dense relu + batch norm over the batch dimension
  const int units = cfg.dense_units;
  Matrix ddense_out(units, m);
  for (int e = 0; e < m; ++e)
    for (int u = 0; u < units; ++u)
      ddense_out.at(u, e) = cache.dense_out.at(u, e) > 0.0 ? dz[e][u] : 0.0;

  std::vector<double> sum_dy, sum_dy_xhat;
  {
    std::vector<const Matrix*> dys = {&ddense_out};
    std::vector<const Matrix*> xhats = {&cache.dense_xhat};
    kernels::bn_backward_sums(dys, xhats, sum_dy, sum_dy_xhat);
  }
  g.dense_gamma = sum_dy_xhat;
  g.dense_beta = sum_dy;
  Matrix ddense_pre;
  kernels::bn_backward_data(ddense_out, cache.dense_xhat, model.dense.bn.gamma, cache.dense_var,
                            cfg.bn_eps, m, sum_dy, sum_dy_xhat, ddense_pre);

  std::vector<std::vector<double>> dx(m, std::vector<double>(cfg.total_filters(), 0.0));
  for (int e = 0; e < m; ++e) {
    std::vector<double> ds(units);
    for (int u = 0; u < units; ++u) ds[u] = ddense_pre.at(u, e);
    kernels::matvec_backward_params(ds, cache.x_drop[e], g.dense_weights, g.dense_bias);
    std::vector<double> dxd;
    kernels::matvec_backward_data(model.dense.weights, ds, dxd);
    for (int i = 0; i < cfg.total_filters(); ++i) dx[e][i] = dxd[i] * cache.mask[e][i];
  }

  // stacks: unpool, bn backward, relu, conv backward, embedding scatter
  std::vector<Matrix> dD(m);
  for (int e = 0; e < m; ++e) dD[e] = Matrix(cache.embedded[e].rows, cache.embedded[e].cols);

  int offset = 0;
  for (size_t s = 0; s < model.stacks.size(); ++s) {
    const ConvStack& stack = model.stacks[s];
    const auto& sc = cache.stacks[s];
    const int filters = cfg.filters_per_stack;

    std::vector<Matrix> dout(m);
    for (int e = 0; e < m; ++e) {
      dout[e] = Matrix(filters, sc.out[e].cols);
      for (int f = 0; f < filters; ++f) dout[e].at(f, sc.argmax[e][f]) = dx[e][offset + f];
    }

    std::vector<double> s_dy, s_dy_xhat;
    kernels::bn_backward_sums(as_ptrs(dout), as_ptrs(sc.xhat), s_dy, s_dy_xhat);
    auto& gs = g.stacks[s];
    gs.gamma = s_dy_xhat;
    gs.beta = s_dy;

    std::vector<Matrix> dpre(m);
    for (int e = 0; e < m; ++e) {
      Matrix dact;
      kernels::bn_backward_data(dout[e], sc.xhat[e], stack.bn.gamma, sc.var, cfg.bn_eps,
                                sc.group_size, s_dy, s_dy_xhat, dact);
      dpre[e] = Matrix(filters, dact.cols);
      for (int f = 0; f < filters; ++f)
        for (int i = 0; i < dact.cols; ++i)
          dpre[e].at(f, i) = sc.pre[e].at(f, i) > 0.0 ? dact.at(f, i) : 0.0;
    }

    kernels::conv_backward_filters(cache.embedded, dpre, stack.window, gs.weights, gs.bias);
    for (int e = 0; e < m; ++e)
      kernels::conv_backward_data(stack.weights, dpre[e], stack.window, dD[e]);
    offset += filters;
  }

  for (int e = 0; e < m; ++e) kernels::embed_scatter_add(cache.indices[e], dD[e], g.embedding);

  // l2 on every learnable parameter
  if (cfg.l2 > 0.0) {
    auto& mutable_model = const_cast<ClassifierModel&>(model);
    auto params = learnable_tensors(mutable_model);
    auto grads = learnable_tensors(model, g);
    for (size_t t = 0; t < params.size(); ++t)
      for (size_t i = 0; i < params[t].size; ++i)
        grads[t].data[i] += 2.0 * cfg.l2 * params[t].data[i];
  }
  return g;
}

void sgd_step(ClassifierModel& model, const Gradients& grads, double learning_rate,
              const ForwardCache* cache) {
  if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
  auto g = learnable_tensors(model, const_cast<Gradients&>(grads));
  for (const auto& ref : g)
    for (size_t i = 0; i < ref.size; ++i)
      if (!std::isfinite(ref.data[i]))
        throw NonFiniteGradient("non-finite gradient in " + ref.name);

  auto params = learnable_tensors(model);
  for (size_t t = 0; t < params.size(); ++t)
    for (size_t i = 0; i < params[t].size; ++i)
      params[t].data[i] -= learning_rate * g[t].data[i];

  if (cache != nullptr) {
    const double mom = model.config.bn_momentum;
    for (size_t s = 0; s < model.stacks.size(); ++s) {
      auto& bn = model.stacks[s].bn;
      const auto& sc = cache->stacks[s];
      for (size_t f = 0; f < bn.running_mean.size(); ++f) {
        bn.running_mean[f] = mom * bn.running_mean[f] + (1.0 - mom) * sc.mean[f];
        bn.running_var[f] = mom * bn.running_var[f] + (1.0 - mom) * sc.var[f];
      }
    }
    auto& bn = model.dense.bn;
    for (size_t u = 0; u < bn.running_mean.size(); ++u) {
      bn.running_mean[u] = mom * bn.running_mean[u] + (1.0 - mom) * cache->dense_mean[u];
      bn.running_var[u] = mom * bn.running_var[u] + (1.0 - mom) * cache->dense_var[u];
    }
  }
}

TrainReport train(ClassifierModel& model, const std::vector<TrainingExample>& dataset) {
  const auto& cfg = model.config;
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");

  TrainReport report;
  std::array<bool, kNumTypes> seen{};
  for (const auto& ex : dataset) {
    bool any = false;
    for (int i = 0; i < kNumTypes; ++i) {
      if (ex.labels[i] != 0.0) {
        seen[i] = true;
        any = true;
      }
    }
    if (!any) throw ConfigError("training example without a positive label");
  }
  for (int i = 0; i < kNumTypes; ++i) {
    if (!seen[i]) {
      report.warnings.push_back("no training example labeled " +
                                to_string(static_cast<QuestionType>(i)));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with explicit draws keeps the shuffle reproducible.
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    size_t examples_done = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::vector<int>> batch;
      std::vector<std::array<double, kNumTypes>> labels;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(dataset[order[i]].indices);
        labels.push_back(dataset[order[i]].labels);
      }
      auto masks = make_dropout_masks(cfg, static_cast<int>(batch.size()), rng());
      auto cache = batch_forward_train(model, batch, masks);
      loss_sum += loss(cache.p, labels, model);
      examples_done += batch.size();
      auto grads = backward(model, cache, labels);
      try {
        sgd_step(model, grads, cfg.learning_rate, &cache);
      } catch (const NonFiniteGradient& e) {
        report.warnings.push_back("epoch " + std::to_string(epoch) + " aborted: " + e.what());
        std::fprintf(stderr, "[medqa] %s\n", report.warnings.back().c_str());
        break;
      }
    }
    report.epoch_loss.push_back(examples_done ? loss_sum / double(examples_done) : 0.0);
  }
  return report;
}

namespace {

std::set<QuestionType> predict_from_probs(const std::array<double, kNumTypes>& p,
                                          double threshold) {
  std::set<QuestionType> out;
  for (int i = 0; i < kNumTypes; ++i)
    if (p[i] >= threshold) out.insert(static_cast<QuestionType>(i));
  if (out.empty()) {
    int best = 0;
    for (int i = 1; i < kNumTypes; ++i)
      if (p[i] > p[best]) best = i;
    out.insert(static_cast<QuestionType>(best));
  }
  return out;
}

}  // namespace

std::set<QuestionType> predict_types(const ClassifierModel& model,
                                     const std::vector<std::string>& question_tokens) {
  std::vector<int> indices;
  indices.reserve(question_tokens.size());
  for (const auto& tok : question_tokens) indices.push_back(model.vocab.lookup(tok));
  return predict_from_probs(forward_eval(model, indices), model.config.threshold);
}

double exact_set_accuracy(const ClassifierModel& model,
                          const std::vector<TrainingExample>& dataset) {
  if (dataset.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& ex : dataset) {
    auto predicted = predict_from_probs(forward_eval(model, ex.indices), model.config.threshold);
    std::set<QuestionType> truth;
    for (int i = 0; i < kNumTypes; ++i)
      if (ex.labels[i] != 0.0) truth.insert(static_cast<QuestionType>(i));
    if (predicted == truth) ++hits;
  }
  return double(hits) / double(dataset.size());
}

GradCheckReport gradient_check(const ModelConfig& config, uint64_t seed, int batch_size,
                               double step) {
  std::mt19937_64 rng(seed);

  Vocabulary vocab;
  const int v = 50;
  for (int i = vocab.size(); i < v; ++i) vocab.add("t" + std::to_string(i));

  ModelConfig cfg = config;
  cfg.seed = seed;
  ClassifierModel model = init_model(vocab, cfg);

  std::vector<std::vector<int>> batch;
  std::vector<std::array<double, kNumTypes>> labels;
  for (int e = 0; e < batch_size; ++e) {
    const int len = cfg.max_window() + int(rng() % 7);
    std::vector<int> idx;
    for (int i = 0; i < len; ++i) idx.push_back(int(rng() % v));
    batch.push_back(std::move(idx));
    std::array<double, kNumTypes> y{};
    y[rng() % kNumTypes] = 1.0;
    y[rng() % kNumTypes] = 1.0;
    labels.push_back(y);
  }
  const auto masks = make_dropout_masks(cfg, batch_size, rng());

  auto cache = batch_forward_train(model, batch, masks);
  auto analytic = backward(model, cache, labels);

  auto loss_at = [&](ClassifierModel& m) {
    auto c = batch_forward_train(m, batch, masks);
    return loss(c.p, labels, m);
  };

  GradCheckReport report;
  auto params = learnable_tensors(model);
  auto grads = learnable_tensors(model, analytic);
  for (size_t t = 0; t < params.size(); ++t) {
    GradCheckReport::Entry entry;
    entry.tensor = params[t].name;
    for (size_t i = 0; i < params[t].size; ++i) {
      const double saved = params[t].data[i];
      params[t].data[i] = saved + step;
      const double lp = loss_at(model);
      params[t].data[i] = saved - step;
      const double lm = loss_at(model);
      params[t].data[i] = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = grads[t].data[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

}  // namespace medqa::classifier
