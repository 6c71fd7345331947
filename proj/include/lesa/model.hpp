#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lesa/adam.hpp"
#include "lesa/encoder.hpp"
#include "lesa/metrics.hpp"
#include "lesa/text.hpp"

namespace lesa {

struct ModelConfig {
  int layers = 4;     // encoder layers N
  int dim = 64;       // hidden size D
  int heads = 4;      // attention heads h
  int head_dim = 16;  // per-head size d
  int ffn_dim = 128;  // FFN hidden size
  int max_len = 64;   // message tokens (sequences carry max_len+1 rows)
  float dropout = 0.1f;
  AttentionMode mode = AttentionMode::Lesa;
};

// Throws unless layers >= 1, dim == heads * head_dim, and all sizes positive.
void validate(const ModelConfig& config);

struct TriageModel {
  ModelConfig config;
  std::vector<std::string> labels;
  Vocab vocab;
  EmbeddingTable embeddings;
  std::vector<EncoderLayerParams> layers;
  Tensor label_embedding;  // C x D, defined iff mode == Lesa
  Tensor head_w;           // D x C
  Tensor head_b;           // C

  int num_classes() const { return static_cast<int>(labels.size()); }
};

using KeywordMap = std::map<std::string, std::vector<std::string>>;

// Keywords file: JSON object {label: [phrase, ...]}.
KeywordMap load_keywords(const std::string& path);

// Normal(0, 0.02) weights, zero biases, unit layer-norm gain. Label rows
// for classes with keywords are the mean of their keyword token embeddings
// ([UNK] excluded); other classes stay random.
TriageModel init_model(const ModelConfig& config,
                       const std::vector<std::string>& labels,
                       const Vocab& vocab, const KeywordMap& keywords,
                       Rng& rng);

// Every trainable tensor under a unique name (checkpoint key order).
std::vector<Parameter> parameters(const TriageModel& model);

long long param_count(const TriageModel& model);
long long closed_form_param_count(const ModelConfig& config, int vocab_size,
                                  int num_classes);

// h_[CLS] * W_cls + b_cls per example, one row each. Sequences are trimmed
// to their live length before the encoder; masked positions carry zero
// attention mass, so trimming never changes row 0.
Tensor forward_logits(const TriageModel& model,
                      const std::vector<EncodedExample>& batch,
                      const ForwardOptions& opt = {},
                      std::vector<AttentionTrace>* traces = nullptr);

// Argmax per row; ties pick the smallest label.
std::vector<int> predict(const Tensor& logits);

struct TrainHyper {
  float lr = 1e-3f;
  int epochs = 10;
  int batch_size = 8;
  int warmup_steps = 0;
  std::uint64_t seed = 1;
  bool inverse_freq_weights = false;
};

struct EpochLog {
  double train_loss = 0.0;
  std::optional<double> val_macro_f1;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;  // set when a validation set drove model selection
};

// Adam on mean cross-entropy. When val is given, the parameters from the
// best-macro-F1 epoch are restored at the end.
TrainLog train_supervised(TriageModel& model,
                          const std::vector<EncodedExample>& train,
                          const std::vector<EncodedExample>* val,
                          const TrainHyper& hyper);

struct EvalResult {
  ConfusionMatrix confusion;
  MacroMetrics metrics;
};
EvalResult evaluate(const TriageModel& model,
                    const std::vector<EncodedExample>& examples,
                    int batch_size = 32);

}  // namespace lesa
