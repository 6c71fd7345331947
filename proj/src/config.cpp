#include "lesa/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lesa {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& message) {
  throw std::runtime_error(origin + ": " + message);
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& origin, const std::string& section) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      fail(origin, "unknown key \"" + key + "\" in \"" + section + "\"");
}

template <typename T>
void read_field(const json& obj, const char* key, T& out,
                const std::string& origin, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(origin, "key \"" + section + "." + key + "\" has the wrong type");
  }
}

AttentionMode parse_mode(const std::string& name, const std::string& origin) {
  if (name == "lesa") return AttentionMode::Lesa;
  if (name == "standard") return AttentionMode::Standard;
  fail(origin, "key \"model.mode\" must be \"lesa\" or \"standard\", got \"" +
                   name + "\"");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(origin, std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) fail(origin, "config must be a JSON object");
  check_keys(root,
             {"labels", "model", "data", "training", "distill", "seeds",
              "output_dir"},
             origin, "config");

  RunConfig cfg;
  if (!root.contains("labels"))
    fail(origin, "missing required key \"labels\"");
  read_field(root, "labels", cfg.labels, origin, "config");
  if (cfg.labels.size() < 2)
    fail(origin, "key \"labels\" needs at least 2 entries");

  if (root.contains("model")) {
    const json& m = root.at("model");
    if (!m.is_object()) fail(origin, "key \"model\" must be an object");
    check_keys(m,
               {"layers", "dim", "heads", "head_dim", "ffn_dim", "max_len",
                "dropout", "mode"},
               origin, "model");
    read_field(m, "layers", cfg.model.layers, origin, "model");
    read_field(m, "dim", cfg.model.dim, origin, "model");
    read_field(m, "heads", cfg.model.heads, origin, "model");
    read_field(m, "head_dim", cfg.model.head_dim, origin, "model");
    read_field(m, "ffn_dim", cfg.model.ffn_dim, origin, "model");
    read_field(m, "max_len", cfg.model.max_len, origin, "model");
    read_field(m, "dropout", cfg.model.dropout, origin, "model");
    if (m.contains("mode")) {
      std::string mode;
      read_field(m, "mode", mode, origin, "model");
      cfg.model.mode = parse_mode(mode, origin);
    }
    try {
      validate(cfg.model);
    } catch (const std::exception& e) {
      fail(origin, e.what());
    }
  }

  if (root.contains("data")) {
    const json& d = root.at("data");
    if (!d.is_object()) fail(origin, "key \"data\" must be an object");
    check_keys(d,
               {"train_path", "test_path", "test_frac", "keywords_path",
                "min_freq", "split_seed", "val_frac"},
               origin, "data");
    read_field(d, "train_path", cfg.data.train_path, origin, "data");
    read_field(d, "test_path", cfg.data.test_path, origin, "data");
    read_field(d, "test_frac", cfg.data.test_frac, origin, "data");
    read_field(d, "keywords_path", cfg.data.keywords_path, origin, "data");
    read_field(d, "min_freq", cfg.data.min_freq, origin, "data");
    read_field(d, "split_seed", cfg.data.split_seed, origin, "data");
    read_field(d, "val_frac", cfg.data.val_frac, origin, "data");
    if (cfg.data.min_freq < 1)
      fail(origin, "key \"data.min_freq\" must be >= 1");
    if (d.contains("test_frac") &&
        !(cfg.data.test_frac > 0.0f && cfg.data.test_frac < 1.0f))
      fail(origin, "key \"data.test_frac\" must be in (0,1)");
    if (cfg.data.val_frac < 0.0f || cfg.data.val_frac >= 1.0f)
      fail(origin, "key \"data.val_frac\" must be in [0,1)");
  }

  if (root.contains("training")) {
    const json& t = root.at("training");
    if (!t.is_object()) fail(origin, "key \"training\" must be an object");
    check_keys(t, {"lr", "epochs", "batch_size", "warmup_steps", "class_weights"},
               origin, "training");
    read_field(t, "lr", cfg.training.lr, origin, "training");
    read_field(t, "epochs", cfg.training.epochs, origin, "training");
    read_field(t, "batch_size", cfg.training.batch_size, origin, "training");
    read_field(t, "warmup_steps", cfg.training.warmup_steps, origin,
               "training");
    read_field(t, "class_weights", cfg.training.class_weights, origin,
               "training");
    if (cfg.training.lr < 0.0f)
      fail(origin, "key \"training.lr\" must be >= 0");
    if (cfg.training.epochs < 1)
      fail(origin, "key \"training.epochs\" must be >= 1");
    if (cfg.training.batch_size < 1)
      fail(origin, "key \"training.batch_size\" must be >= 1");
    if (cfg.training.warmup_steps < 0)
      fail(origin, "key \"training.warmup_steps\" must be >= 0");
  }

  if (root.contains("distill")) {
    const json& s = root.at("distill");
    if (!s.is_object()) fail(origin, "key \"distill\" must be an object");
    check_keys(s,
               {"student_layers", "temperature", "init_from_teacher",
                "hard_label_weight", "lr", "epochs", "batch_size",
                "warmup_steps"},
               origin, "distill");
    read_field(s, "student_layers", cfg.distill.student_layers, origin,
               "distill");
    read_field(s, "temperature", cfg.distill.temperature, origin, "distill");
    read_field(s, "init_from_teacher", cfg.distill.init_from_teacher, origin,
               "distill");
    read_field(s, "hard_label_weight", cfg.distill.hard_label_weight, origin,
               "distill");
    read_field(s, "lr", cfg.distill.lr, origin, "distill");
    read_field(s, "epochs", cfg.distill.epochs, origin, "distill");
    read_field(s, "batch_size", cfg.distill.batch_size, origin, "distill");
    read_field(s, "warmup_steps", cfg.distill.warmup_steps, origin, "distill");
    if (cfg.distill.student_layers < 1)
      fail(origin, "key \"distill.student_layers\" must be >= 1");
    if (!(cfg.distill.temperature > 0.0f))
      fail(origin, "key \"distill.temperature\" must be > 0");
    if (cfg.distill.hard_label_weight < 0.0f ||
        cfg.distill.hard_label_weight > 1.0f)
      fail(origin, "key \"distill.hard_label_weight\" must be in [0,1]");
  }

  read_field(root, "seeds", cfg.seeds, origin, "config");
  if (cfg.seeds.empty()) fail(origin, "key \"seeds\" must not be empty");
  read_field(root, "output_dir", cfg.output_dir, origin, "config");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json root;
  root["labels"] = cfg.labels;
  root["model"] = {
      {"layers", cfg.model.layers},
      {"dim", cfg.model.dim},
      {"heads", cfg.model.heads},
      {"head_dim", cfg.model.head_dim},
      {"ffn_dim", cfg.model.ffn_dim},
      {"max_len", cfg.model.max_len},
      {"dropout", cfg.model.dropout},
      {"mode", cfg.model.mode == AttentionMode::Lesa ? "lesa" : "standard"}};
  json data = {{"test_frac", cfg.data.test_frac},
               {"min_freq", cfg.data.min_freq},
               {"split_seed", cfg.data.split_seed},
               {"val_frac", cfg.data.val_frac}};
  if (!cfg.data.train_path.empty()) data["train_path"] = cfg.data.train_path;
  if (!cfg.data.test_path.empty()) data["test_path"] = cfg.data.test_path;
  if (!cfg.data.keywords_path.empty())
    data["keywords_path"] = cfg.data.keywords_path;
  root["data"] = std::move(data);
  root["training"] = {{"lr", cfg.training.lr},
                      {"epochs", cfg.training.epochs},
                      {"batch_size", cfg.training.batch_size},
                      {"warmup_steps", cfg.training.warmup_steps},
                      {"class_weights", cfg.training.class_weights}};
  root["distill"] = {{"student_layers", cfg.distill.student_layers},
                     {"temperature", cfg.distill.temperature},
                     {"init_from_teacher", cfg.distill.init_from_teacher},
                     {"hard_label_weight", cfg.distill.hard_label_weight},
                     {"lr", cfg.distill.lr},
                     {"epochs", cfg.distill.epochs},
                     {"batch_size", cfg.distill.batch_size},
                     {"warmup_steps", cfg.distill.warmup_steps}};
  root["seeds"] = cfg.seeds;
  root["output_dir"] = cfg.output_dir;
  return root.dump(2);
}

}  // namespace lesa
