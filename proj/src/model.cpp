#include "lesa/model.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lesa {

namespace {

Tensor normal_param(std::vector<int> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (float& v : *t.data) v = static_cast<float>(rng.normal(0.0, 0.02));
  return t;
}

int live_length(const EncodedExample& ex) {
  if (ex.ids.empty() || ex.mask.size() != ex.ids.size() || !ex.mask[0])
    throw std::invalid_argument("forward_logits: malformed encoded example");
  int len = 0;
  while (len < static_cast<int>(ex.mask.size()) &&
         ex.mask[static_cast<std::size_t>(len)])
    ++len;
  for (int i = len; i < static_cast<int>(ex.mask.size()); ++i)
    if (ex.mask[static_cast<std::size_t>(i)])
      throw std::invalid_argument(
          "forward_logits: padding mask is not contiguous");
  return len;
}

}  // namespace

void validate(const ModelConfig& config) {
  if (config.layers < 1)
    throw std::invalid_argument("model config: layers must be >= 1");
  if (config.dim < 2 || config.heads < 1 || config.head_dim < 1 ||
      config.ffn_dim < 1 || config.max_len < 1)
    throw std::invalid_argument("model config: sizes must be positive");
  if (config.dim != config.heads * config.head_dim)
    throw std::invalid_argument(
        "model config: dim (" + std::to_string(config.dim) +
        ") must equal heads * head_dim (" +
        std::to_string(config.heads * config.head_dim) + ")");
  if (config.dropout < 0.0f || config.dropout >= 1.0f)
    throw std::invalid_argument("model config: dropout must be in [0,1)");
}

KeywordMap load_keywords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_keywords: cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_keywords: invalid JSON in " + path + ": " +
                             e.what());
  }
  if (!obj.is_object())
    throw std::runtime_error("load_keywords: " + path +
                             " must hold an object {label: [phrase, ...]}");
  KeywordMap map;
  for (const auto& [label, phrases] : obj.items()) {
    if (!phrases.is_array())
      throw std::runtime_error("load_keywords: value for \"" + label +
                               "\" must be a list of strings");
    for (const auto& p : phrases) {
      if (!p.is_string())
        throw std::runtime_error("load_keywords: value for \"" + label +
                                 "\" must be a list of strings");
      map[label].push_back(p.get<std::string>());
    }
  }
  return map;
}

TriageModel init_model(const ModelConfig& config,
                       const std::vector<std::string>& labels,
                       const Vocab& vocab, const KeywordMap& keywords,
                       Rng& rng) {
  validate(config);
  if (labels.size() < 2)
    throw std::invalid_argument("init_model: need at least 2 labels");
  const int c = static_cast<int>(labels.size());
  const int d_model = config.dim, d = config.head_dim, h = config.heads;

  TriageModel model;
  model.config = config;
  model.labels = labels;
  model.vocab = vocab;
  model.embeddings.token_emb = normal_param({vocab.size(), d_model}, rng);
  model.embeddings.pos_emb = normal_param({config.max_len + 1, d_model}, rng);
  for (int li = 0; li < config.layers; ++li) {
    EncoderLayerParams layer;
    for (int hi = 0; hi < h; ++hi) {
      AttentionHeadParams head;
      head.w_k = normal_param({d_model, d}, rng);
      head.w_q = normal_param({d_model, d}, rng);
      head.w_v = normal_param({d_model, d}, rng);
      layer.heads.push_back(std::move(head));
    }
    layer.w_out = normal_param({h * d, d_model}, rng);
    layer.w1 = normal_param({d_model, config.ffn_dim}, rng);
    layer.b1 = Tensor::zeros({config.ffn_dim}, true);
    layer.w2 = normal_param({config.ffn_dim, d_model}, rng);
    layer.b2 = Tensor::zeros({d_model}, true);
    layer.ln1 = {Tensor::full({d_model}, 1.0f, true),
                 Tensor::zeros({d_model}, true)};
    layer.ln2 = {Tensor::full({d_model}, 1.0f, true),
                 Tensor::zeros({d_model}, true)};
    model.layers.push_back(std::move(layer));
  }
  if (config.mode == AttentionMode::Lesa)
    model.label_embedding = normal_param({c, d_model}, rng);
  model.head_w = normal_param({d_model, c}, rng);
  model.head_b = Tensor::zeros({c}, true);

  for (const auto& [label, phrases] : keywords) {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      std::string known;
      for (std::size_t i = 0; i < labels.size(); ++i)
        known += (i ? ", " : "") + labels[i];
      throw std::invalid_argument("init_model: keyword label \"" + label +
                                  "\" is not a model label (known: " + known +
                                  ")");
    }
    if (config.mode != AttentionMode::Lesa) continue;
    const int row = static_cast<int>(it - labels.begin());
    std::vector<int> ids;
    for (const std::string& phrase : phrases)
      for (const std::string& tok : tokenize(phrase)) {
        const int id = vocab.id_of(tok);
        if (id != Vocab::kUnk) ids.push_back(id);
      }
    if (ids.empty()) continue;  // fully out-of-vocabulary: stay random
    for (int j = 0; j < d_model; ++j) {
      double acc = 0.0;
      for (int id : ids) acc += model.embeddings.token_emb.at(id, j);
      model.label_embedding.at(row, j) =
          static_cast<float>(acc / static_cast<double>(ids.size()));
    }
  }
  return model;
}

std::vector<Parameter> parameters(const TriageModel& model) {
  std::vector<Parameter> params;
  params.push_back({"token_embedding", model.embeddings.token_emb});
  params.push_back({"position_embedding", model.embeddings.pos_emb});
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const EncoderLayerParams& layer = model.layers[li];
    const std::string base = "layers." + std::to_string(li) + ".";
    for (std::size_t hi = 0; hi < layer.heads.size(); ++hi) {
      const std::string hbase = base + "heads." + std::to_string(hi) + ".";
      params.push_back({hbase + "w_k", layer.heads[hi].w_k});
      params.push_back({hbase + "w_q", layer.heads[hi].w_q});
      params.push_back({hbase + "w_v", layer.heads[hi].w_v});
    }
    params.push_back({base + "w_out", layer.w_out});
    params.push_back({base + "ffn.w1", layer.w1});
    params.push_back({base + "ffn.b1", layer.b1});
    params.push_back({base + "ffn.w2", layer.w2});
    params.push_back({base + "ffn.b2", layer.b2});
    params.push_back({base + "ln1.gain", layer.ln1.gain});
    params.push_back({base + "ln1.bias", layer.ln1.bias});
    params.push_back({base + "ln2.gain", layer.ln2.gain});
    params.push_back({base + "ln2.bias", layer.ln2.bias});
  }
  if (model.label_embedding.defined())
    params.push_back({"label_embedding", model.label_embedding});
  params.push_back({"classifier.w", model.head_w});
  params.push_back({"classifier.b", model.head_b});
  return params;
}

long long param_count(const TriageModel& model) {
  long long total = 0;
  for (const Parameter& p : parameters(model))
    total += static_cast<long long>(p.value.numel());
  return total;
}

long long closed_form_param_count(const ModelConfig& config, int vocab_size,
                                  int num_classes) {
  const long long v = vocab_size, d_model = config.dim, d = config.head_dim,
                  h = config.heads, ff = config.ffn_dim, n = config.layers,
                  c = num_classes, cap = config.max_len + 1;
  long long per_layer = 3 * h * d_model * d   // W_K, W_Q, W_V
                        + h * d * d_model     // W_out
                        + 2 * d_model * ff    // W_1, W_2
                        + ff + d_model        // b_1, b_2
                        + 4 * d_model;        // two layer norms
  long long total = v * d_model + cap * d_model + n * per_layer +
                    d_model * c + c;
  if (config.mode == AttentionMode::Lesa) total += c * d_model;
  return total;
}

Tensor forward_logits(const TriageModel& model,
                      const std::vector<EncodedExample>& batch,
                      const ForwardOptions& opt,
                      std::vector<AttentionTrace>* traces) {
  if (batch.empty())
    throw std::invalid_argument("forward_logits: empty batch");
  if (traces) {
    traces->clear();
    traces->resize(batch.size());
  }
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EncodedExample& ex = batch[i];
    const int len = live_length(ex);
    const std::vector<int> ids(ex.ids.begin(), ex.ids.begin() + len);
    const std::vector<std::uint8_t> mask(static_cast<std::size_t>(len), 1);
    const Tensor x = embed(ids, model.embeddings);
    ForwardOptions local = opt;
    local.trace = traces ? &(*traces)[i] : nullptr;
    const Tensor h = encoder_forward(x, model.layers, model.label_embedding,
                                     model.config.mode, mask, local);
    const Tensor h_cls = slice_rows(h, 0, 1);
    rows.push_back(add_bias(matmul(h_cls, model.head_w), model.head_b));
  }
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

std::vector<int> predict(const Tensor& logits) {
  const int b = logits.rows(), c = logits.cols();
  std::vector<int> out(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

TrainLog train_supervised(TriageModel& model,
                          const std::vector<EncodedExample>& train,
                          const std::vector<EncodedExample>* val,
                          const TrainHyper& hyper) {
  if (train.empty())
    throw std::invalid_argument("train_supervised: empty training set");
  std::vector<Parameter> params = parameters(model);
  Adam adam(params, {hyper.lr, 0.9f, 0.999f, 1e-8f, hyper.warmup_steps});
  Rng rng(hyper.seed);
  const Batcher batcher(train, hyper.batch_size);

  std::vector<float> class_weights;
  if (hyper.inverse_freq_weights) {
    const int c = model.num_classes();
    std::vector<long long> counts(static_cast<std::size_t>(c), 0);
    for (const EncodedExample& ex : train)
      ++counts[static_cast<std::size_t>(ex.label)];
    class_weights.resize(static_cast<std::size_t>(c), 0.0f);
    for (int k = 0; k < c; ++k)
      if (counts[static_cast<std::size_t>(k)] > 0)
        class_weights[static_cast<std::size_t>(k)] = static_cast<float>(
            static_cast<double>(train.size()) /
            (static_cast<double>(c) *
             static_cast<double>(counts[static_cast<std::size_t>(k)])));
  }

  TrainLog log;
  double best_f1 = -1.0;
  std::vector<std::vector<float>> best_values;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const std::vector<EncodedExample>& batch : batcher.epoch(rng)) {
      ForwardOptions opt;
      opt.training = true;
      opt.dropout_p = model.config.dropout;
      opt.rng = &rng;
      const Tensor logits = forward_logits(model, batch, opt);
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (const EncodedExample& ex : batch) labels.push_back(ex.label);
      const Tensor loss = softmax_cross_entropy(logits, labels, class_weights);
      adam.zero_grad();
      backward(loss);
      adam.step();
      loss_sum += static_cast<double>(loss.scalar()) *
                  static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochLog el;
    el.train_loss = loss_sum / static_cast<double>(seen);
    if (val) {
      const EvalResult ev = evaluate(model, *val);
      el.val_macro_f1 = ev.metrics.macro_f1;
      if (ev.metrics.macro_f1 > best_f1) {
        best_f1 = ev.metrics.macro_f1;
        log.best_epoch = epoch;
        best_values.clear();
        for (const Parameter& p : params) best_values.push_back(*p.value.data);
      }
    }
    log.epochs.push_back(el);
  }
  if (val && log.best_epoch >= 0)
    for (std::size_t i = 0; i < params.size(); ++i)
      *params[i].value.data = best_values[i];
  return log;
}

EvalResult evaluate(const TriageModel& model,
                    const std::vector<EncodedExample>& examples,
                    int batch_size) {
  if (examples.empty())
    throw std::invalid_argument("evaluate: no examples");
  if (batch_size < 1)
    throw std::invalid_argument("evaluate: batch_size must be >= 1");
  NoGradGuard no_grad;
  std::vector<int> y_true, y_pred;
  y_true.reserve(examples.size());
  y_pred.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(
        examples.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<EncodedExample> batch(examples.begin() + start,
                                            examples.begin() + end);
    const Tensor logits = forward_logits(model, batch);
    const std::vector<int> preds = predict(logits);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      y_true.push_back(batch[i].label);
      y_pred.push_back(preds[i]);
    }
  }
  EvalResult result;
  result.confusion = confusion(y_true, y_pred, model.num_classes());
  result.metrics = macro_metrics(result.confusion);
  return result;
}

}  // namespace lesa
