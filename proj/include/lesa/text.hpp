#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lesa/rng.hpp"

namespace lesa {

// Lowercases, splits on whitespace, and breaks punctuation characters out
// as standalone tokens ("Chest pain!" -> chest, pain, !).
std::vector<std::string> tokenize(const std::string& text);

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;

  std::vector<std::string> id_to_token;  // ["[PAD]","[CLS]","[UNK]", ...]
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  // [UNK] for out-of-vocabulary tokens.
  int id_of(const std::string& token) const;

  static Vocab from_tokens(std::vector<std::string> id_to_token);
};

// Tokens with corpus frequency >= min_freq get ids 3.., ordered by
// (frequency desc, token asc). Throws if nothing survives the threshold.
Vocab build_vocab(const std::vector<std::string>& texts, int min_freq);

struct EncodedExample {
  std::vector<int> ids;            // length max_len+1, ids[0] = [CLS]
  std::vector<std::uint8_t> mask;  // 1s then 0s, mask[0] = 1
  int label = -1;
};

EncodedExample encode(const std::string& text, const Vocab& vocab,
                      int max_len);

struct LabeledExample {
  std::string text;
  int label = 0;
};

struct LabeledDataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> label_names;

  int num_classes() const { return static_cast<int>(label_names.size()); }
  std::vector<int> class_counts() const;
};

// JSON-lines file with one {"text": ..., "label": ...} object per line;
// the label string must appear in label_names. Errors carry line numbers.
LabeledDataset load_jsonl(const std::string& path,
                          const std::vector<std::string>& label_names);

// Stratified split: each class contributes floor(count * test_frac)
// examples to the test side, chosen by rng.
struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
};
SplitResult stratified_split(const LabeledDataset& dataset, float test_frac,
                             Rng& rng);

std::vector<EncodedExample> encode_dataset(const LabeledDataset& dataset,
                                           const Vocab& vocab, int max_len);

// Reshuffles the example order each epoch; the final partial batch is kept.
class Batcher {
 public:
  Batcher(std::vector<EncodedExample> examples, int batch_size);

  std::vector<std::vector<EncodedExample>> epoch(Rng& rng) const;
  std::size_t size() const { return examples_.size(); }
  const std::vector<EncodedExample>& examples() const { return examples_; }

 private:
  std::vector<EncodedExample> examples_;
  int batch_size_;
};

}  // namespace lesa
