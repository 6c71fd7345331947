#include "lesa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace lesa {

namespace {

constexpr char kMagic[5] = {'L', 'E', 'S', 'A', '1'};

constexpr bool kBigEndian = std::endian::native == std::endian::big;

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::uint64_t bswap64(std::uint64_t v) {
  return (static_cast<std::uint64_t>(bswap32(static_cast<std::uint32_t>(v)))
          << 32) |
         bswap32(static_cast<std::uint32_t>(v >> 32));
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  if (kBigEndian) v = bswap64(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64_le(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (kBigEndian) v = bswap64(v);
  return v;
}

void write_f32_le(std::ostream& out, const std::vector<float>& values) {
  if (!kBigEndian) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
    return;
  }
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    bits = bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
}

void read_f32_le(std::istream& in, std::vector<float>& values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (kBigEndian)
    for (float& f : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      bits = bswap32(bits);
      std::memcpy(&f, &bits, sizeof(bits));
    }
}

std::string mode_name(AttentionMode mode) {
  return mode == AttentionMode::Lesa ? "lesa" : "standard";
}

AttentionMode mode_from_name(const std::string& name) {
  if (name == "lesa") return AttentionMode::Lesa;
  if (name == "standard") return AttentionMode::Standard;
  throw std::runtime_error("checkpoint: unknown attention mode \"" + name +
                           "\"");
}

}  // namespace

void save_checkpoint(const TriageModel& model, const std::string& path) {
  const std::vector<Parameter> params = parameters(model);

  nlohmann::json header;
  header["config"] = {{"layers", model.config.layers},
                      {"dim", model.config.dim},
                      {"heads", model.config.heads},
                      {"head_dim", model.config.head_dim},
                      {"ffn_dim", model.config.ffn_dim},
                      {"max_len", model.config.max_len},
                      {"dropout", model.config.dropout},
                      {"mode", mode_name(model.config.mode)}};
  header["labels"] = model.labels;
  header["vocab"] = model.vocab.id_to_token;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter& p : params) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.value.shape},
                        {"offset", offset}});
    offset += p.value.numel() * sizeof(float);
  }
  header["params"] = std::move(manifest);
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64_le(out, header_bytes.size());
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));
  for (const Parameter& p : params) write_f32_le(out, *p.value.data);
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed for " + path);
}

TriageModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not a LESA1 checkpoint");
  const std::uint64_t header_len = read_u64_le(in);
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!in)
    throw std::runtime_error("load_checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header JSON in " + path +
                             ": " + e.what());
  }

  TriageModel model;
  const nlohmann::json& cfg = header.at("config");
  model.config.layers = cfg.at("layers").get<int>();
  model.config.dim = cfg.at("dim").get<int>();
  model.config.heads = cfg.at("heads").get<int>();
  model.config.head_dim = cfg.at("head_dim").get<int>();
  model.config.ffn_dim = cfg.at("ffn_dim").get<int>();
  model.config.max_len = cfg.at("max_len").get<int>();
  model.config.dropout = cfg.at("dropout").get<float>();
  model.config.mode = mode_from_name(cfg.at("mode").get<std::string>());
  validate(model.config);
  model.labels = header.at("labels").get<std::vector<std::string>>();
  if (model.labels.size() < 2)
    throw std::runtime_error("load_checkpoint: fewer than 2 labels in " + path);
  model.vocab =
      Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());

  // Zero-shaped skeleton; every buffer must then be covered by the manifest.
  const int c = model.num_classes();
  const int d_model = model.config.dim, d = model.config.head_dim;
  model.embeddings.token_emb =
      Tensor::zeros({model.vocab.size(), d_model}, true);
  model.embeddings.pos_emb =
      Tensor::zeros({model.config.max_len + 1, d_model}, true);
  for (int li = 0; li < model.config.layers; ++li) {
    EncoderLayerParams layer;
    for (int hi = 0; hi < model.config.heads; ++hi)
      layer.heads.push_back({Tensor::zeros({d_model, d}, true),
                             Tensor::zeros({d_model, d}, true),
                             Tensor::zeros({d_model, d}, true)});
    layer.w_out = Tensor::zeros({model.config.heads * d, d_model}, true);
    layer.w1 = Tensor::zeros({d_model, model.config.ffn_dim}, true);
    layer.b1 = Tensor::zeros({model.config.ffn_dim}, true);
    layer.w2 = Tensor::zeros({model.config.ffn_dim, d_model}, true);
    layer.b2 = Tensor::zeros({d_model}, true);
    layer.ln1 = {Tensor::zeros({d_model}, true), Tensor::zeros({d_model}, true)};
    layer.ln2 = {Tensor::zeros({d_model}, true), Tensor::zeros({d_model}, true)};
    model.layers.push_back(std::move(layer));
  }
  if (model.config.mode == AttentionMode::Lesa)
    model.label_embedding = Tensor::zeros({c, d_model}, true);
  model.head_w = Tensor::zeros({d_model, c}, true);
  model.head_b = Tensor::zeros({c}, true);

  std::unordered_map<std::string, Tensor> by_name;
  for (const Parameter& p : parameters(model)) by_name.emplace(p.name, p.value);

  const nlohmann::json& manifest = header.at("params");
  if (manifest.size() != by_name.size())
    throw std::runtime_error(
        "load_checkpoint: manifest has " + std::to_string(manifest.size()) +
        " parameters, model needs " + std::to_string(by_name.size()));
  const std::streampos payload_start = in.tellg();
  for (const nlohmann::json& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("load_checkpoint: unknown parameter \"" + name +
                               "\" in " + path);
    Tensor& t = it->second;
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape)
      throw std::runtime_error("load_checkpoint: parameter \"" + name +
                               "\" has shape " + shape_str(shape) +
                               ", expected " + shape_str(t.shape));
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    read_f32_le(in, *t.data);
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated payload for \"" +
                               name + "\" in " + path);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("load_checkpoint: parameter \"" +
                             by_name.begin()->first + "\" missing from " +
                             path);
  return model;
}

}  // namespace lesa
