#include "lesa/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace lesa {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (std::ispunct(ch)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(ch));
    } else {
      current.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return tokens;
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < 4 || id_to_token[0] != "[PAD]" ||
      id_to_token[1] != "[CLS]" || id_to_token[2] != "[UNK]")
    throw std::invalid_argument(
        "vocab: token list must start with [PAD], [CLS], [UNK] and contain at "
        "least one real token");
  Vocab v;
  v.id_to_token = std::move(id_to_token);
  for (int i = 0; i < v.size(); ++i) {
    if (!v.token_to_id.emplace(v.id_to_token[static_cast<std::size_t>(i)], i)
             .second)
      throw std::invalid_argument("vocab: duplicate token '" +
                                  v.id_to_token[static_cast<std::size_t>(i)] +
                                  "'");
  }
  return v;
}

Vocab build_vocab(const std::vector<std::string>& texts, int min_freq) {
  if (min_freq < 1)
    throw std::invalid_argument("build_vocab: min_freq must be >= 1");
  std::map<std::string, long long> freq;  // ordered: lexicographic tiebreak
  for (const std::string& text : texts)
    for (const std::string& tok : tokenize(text)) ++freq[tok];
  if (freq.empty()) throw std::invalid_argument("build_vocab: empty corpus");

  std::vector<std::pair<std::string, long long>> entries;
  for (auto& [tok, n] : freq)
    if (n >= min_freq) entries.emplace_back(tok, n);
  if (entries.empty())
    throw std::invalid_argument(
        "build_vocab: no token reaches min_freq=" + std::to_string(min_freq));
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> id_to_token = {"[PAD]", "[CLS]", "[UNK]"};
  id_to_token.reserve(entries.size() + 3);
  for (auto& [tok, n] : entries) id_to_token.push_back(tok);
  return Vocab::from_tokens(std::move(id_to_token));
}

EncodedExample encode(const std::string& text, const Vocab& vocab,
                      int max_len) {
  if (max_len < 1)
    throw std::invalid_argument("encode: max_len must be >= 1");
  EncodedExample ex;
  ex.ids.assign(static_cast<std::size_t>(max_len) + 1, Vocab::kPad);
  ex.mask.assign(static_cast<std::size_t>(max_len) + 1, 0);
  ex.ids[0] = Vocab::kCls;
  ex.mask[0] = 1;
  const std::vector<std::string> tokens = tokenize(text);
  const int n = std::min<int>(static_cast<int>(tokens.size()), max_len);
  for (int i = 0; i < n; ++i) {
    ex.ids[static_cast<std::size_t>(i) + 1] =
        vocab.id_of(tokens[static_cast<std::size_t>(i)]);
    ex.mask[static_cast<std::size_t>(i) + 1] = 1;
  }
  return ex;
}

std::vector<int> LabeledDataset::class_counts() const {
  std::vector<int> counts(label_names.size(), 0);
  for (const LabeledExample& ex : examples)
    ++counts[static_cast<std::size_t>(ex.label)];
  return counts;
}

LabeledDataset load_jsonl(const std::string& path,
                          const std::vector<std::string>& label_names) {
  if (label_names.size() < 2)
    throw std::invalid_argument("load_jsonl: need at least 2 label names");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);

  std::unordered_map<std::string, int> label_ids;
  for (std::size_t i = 0; i < label_names.size(); ++i)
    label_ids.emplace(label_names[i], static_cast<int>(i));

  auto known = [&label_names] {
    std::string s;
    for (std::size_t i = 0; i < label_names.size(); ++i) {
      if (i) s += ", ";
      s += label_names[i];
    }
    return s;
  };

  LabeledDataset ds;
  ds.label_names = label_names;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("text") ||
        !obj["text"].is_string() || !obj.contains("label") ||
        !obj["label"].is_string())
      throw std::runtime_error(
          path + ":" + std::to_string(line_no) +
          ": expected an object with string keys \"text\" and \"label\"");
    const std::string label = obj["label"].get<std::string>();
    auto it = label_ids.find(label);
    if (it == label_ids.end())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown label \"" + label +
                               "\" (known: " + known() + ")");
    ds.examples.push_back({obj["text"].get<std::string>(), it->second});
  }
  if (ds.examples.empty())
    throw std::runtime_error("load_jsonl: no examples in " + path);
  return ds;
}

SplitResult stratified_split(const LabeledDataset& dataset, float test_frac,
                             Rng& rng) {
  if (!(test_frac > 0.0f && test_frac < 1.0f))
    throw std::invalid_argument("stratified_split: test_frac must be in (0,1)");
  const int c = dataset.num_classes();
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const int y = dataset.examples[i].label;
    if (y < 0 || y >= c)
      throw std::out_of_range("stratified_split: label " + std::to_string(y) +
                              " out of range [0, " + std::to_string(c) + ")");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  SplitResult result;
  result.train.label_names = dataset.label_names;
  result.test.label_names = dataset.label_names;
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    const std::size_t n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(idx.size()) * test_frac));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const LabeledExample& ex = dataset.examples[idx[i]];
      (i < n_test ? result.test : result.train).examples.push_back(ex);
    }
  }
  return result;
}

std::vector<EncodedExample> encode_dataset(const LabeledDataset& dataset,
                                           const Vocab& vocab, int max_len) {
  std::vector<EncodedExample> out;
  out.reserve(dataset.examples.size());
  for (const LabeledExample& ex : dataset.examples) {
    EncodedExample enc = encode(ex.text, vocab, max_len);
    enc.label = ex.label;
    out.push_back(std::move(enc));
  }
  return out;
}

Batcher::Batcher(std::vector<EncodedExample> examples, int batch_size)
    : examples_(std::move(examples)), batch_size_(batch_size) {
  if (batch_size_ < 1)
    throw std::invalid_argument("batcher: batch_size must be >= 1");
  if (examples_.empty())
    throw std::invalid_argument("batcher: empty dataset");
}

std::vector<std::vector<EncodedExample>> Batcher::epoch(Rng& rng) const {
  std::vector<std::size_t> order(examples_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<EncodedExample>> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    std::vector<EncodedExample> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(examples_[order[i]]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace lesa
