#include "lesa/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "lesa/checkpoint.hpp"

namespace lesa {

namespace {

using nlohmann::json;

struct PreparedData {
  Vocab vocab;
  std::vector<EncodedExample> train, val, test;
  KeywordMap keywords;
};

PreparedData prepare_data(const RunConfig& cfg,
                          const std::vector<std::string>& labels,
                          const Vocab* fixed_vocab, int max_len) {
  if (cfg.data.train_path.empty())
    throw std::runtime_error(
        "config: missing required key \"data.train_path\"");
  LabeledDataset train_raw = load_jsonl(cfg.data.train_path, labels);
  LabeledDataset test_raw;
  Rng split_rng(cfg.data.split_seed);
  if (!cfg.data.test_path.empty()) {
    test_raw = load_jsonl(cfg.data.test_path, labels);
  } else {
    SplitResult split =
        stratified_split(train_raw, cfg.data.test_frac, split_rng);
    train_raw = std::move(split.train);
    test_raw = std::move(split.test);
  }
  LabeledDataset val_raw;
  val_raw.label_names = labels;
  if (cfg.data.val_frac > 0.0f) {
    SplitResult split =
        stratified_split(train_raw, cfg.data.val_frac, split_rng);
    train_raw = std::move(split.train);
    val_raw = std::move(split.test);
  }

  PreparedData data;
  if (fixed_vocab) {
    data.vocab = *fixed_vocab;
  } else {
    std::vector<std::string> texts;
    texts.reserve(train_raw.examples.size());
    for (const LabeledExample& ex : train_raw.examples) texts.push_back(ex.text);
    data.vocab = build_vocab(texts, cfg.data.min_freq);
  }
  data.train = encode_dataset(train_raw, data.vocab, max_len);
  data.test = encode_dataset(test_raw, data.vocab, max_len);
  if (!val_raw.examples.empty())
    data.val = encode_dataset(val_raw, data.vocab, max_len);
  if (!cfg.data.keywords_path.empty())
    data.keywords = load_keywords(cfg.data.keywords_path);
  return data;
}

json metrics_to_json(const MacroMetrics& m,
                     const std::vector<std::string>& labels) {
  json per_class = json::array();
  for (std::size_t i = 0; i < m.per_class.size(); ++i)
    per_class.push_back({{"label", labels[i]},
                         {"precision", m.per_class[i].precision},
                         {"recall", m.per_class[i].recall},
                         {"f1", m.per_class[i].f1}});
  return {{"macro_f1", m.macro_f1},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"accuracy", m.accuracy},
          {"per_class", std::move(per_class)}};
}

json confusion_to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (int t = 0; t < cm.num_classes; ++t) {
    json row = json::array();
    for (int p = 0; p < cm.num_classes; ++p) row.push_back(cm.at(t, p));
    rows.push_back(std::move(row));
  }
  return rows;
}

json mean_stderr_to_json(const MeanStderr& v) {
  return {{"mean", v.mean}, {"stderr", v.stderr_}};
}

void write_json_file(const json& obj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << obj.dump(2) << "\n";
}

std::string output_path(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / name).string();
}

std::vector<float> softmax_probabilities(const Tensor& logits_row) {
  NoGradGuard no_grad;
  const Tensor probs = row_softmax(logits_row);
  return {probs.data->begin(), probs.data->end()};
}

}  // namespace

TrainReport cmd_train(const RunConfig& cfg, std::ostream& out) {
  const PreparedData data =
      prepare_data(cfg, cfg.labels, nullptr, cfg.model.max_len);
  TrainReport report;
  std::vector<double> f1s, precisions, recalls;
  for (const std::uint64_t seed : cfg.seeds) {
    Rng rng(seed);
    TriageModel model =
        init_model(cfg.model, cfg.labels, data.vocab, data.keywords, rng);
    TrainHyper hyper;
    hyper.lr = cfg.training.lr;
    hyper.epochs = cfg.training.epochs;
    hyper.batch_size = cfg.training.batch_size;
    hyper.warmup_steps = cfg.training.warmup_steps;
    hyper.seed = seed;
    hyper.inverse_freq_weights = cfg.training.class_weights;

    SeedRunResult run;
    run.seed = seed;
    run.log = train_supervised(model, data.train,
                               data.val.empty() ? nullptr : &data.val, hyper);
    run.test_metrics = evaluate(model, data.test).metrics;
    run.checkpoint_path = output_path(
        cfg.output_dir, "model.seed-" + std::to_string(seed) + ".lesa1");
    save_checkpoint(model, run.checkpoint_path);

    f1s.push_back(run.test_metrics.macro_f1);
    precisions.push_back(run.test_metrics.macro_precision);
    recalls.push_back(run.test_metrics.macro_recall);
    out << "seed " << seed << ": test macro F1 " << std::fixed
        << std::setprecision(4) << run.test_metrics.macro_f1 << " -> "
        << run.checkpoint_path << "\n";
    report.runs.push_back(std::move(run));
  }
  report.macro_f1 = mean_stderr(f1s);
  report.macro_precision = mean_stderr(precisions);
  report.macro_recall = mean_stderr(recalls);

  json per_seed = json::array();
  for (const SeedRunResult& run : report.runs) {
    json epochs = json::array();
    for (const EpochLog& el : run.log.epochs) {
      json e = {{"train_loss", el.train_loss}};
      if (el.val_macro_f1) e["val_macro_f1"] = *el.val_macro_f1;
      epochs.push_back(std::move(e));
    }
    json entry = {{"seed", run.seed},
                  {"checkpoint", run.checkpoint_path},
                  {"test", metrics_to_json(run.test_metrics, cfg.labels)},
                  {"epochs", std::move(epochs)}};
    if (run.log.best_epoch >= 0) entry["best_epoch"] = run.log.best_epoch;
    per_seed.push_back(std::move(entry));
  }
  const json report_json = {
      {"config", json::parse(run_config_to_json(cfg))},
      {"runs", std::move(per_seed)},
      {"aggregate",
       {{"macro_f1", mean_stderr_to_json(report.macro_f1)},
        {"macro_precision", mean_stderr_to_json(report.macro_precision)},
        {"macro_recall", mean_stderr_to_json(report.macro_recall)}}}};
  report.report_path = output_path(cfg.output_dir, "train_report.json");
  write_json_file(report_json, report.report_path);
  out << "macro F1 " << report.macro_f1.mean << " +/- "
      << report.macro_f1.stderr_ << " over " << cfg.seeds.size()
      << " seed(s); report " << report.report_path << "\n";
  return report;
}

DistillReport cmd_distill(const RunConfig& cfg,
                          const std::string& teacher_checkpoint,
                          std::ostream& out) {
  const TriageModel teacher = load_checkpoint(teacher_checkpoint);
  if (cfg.distill.student_layers > teacher.config.layers)
    throw std::invalid_argument(
        "distill: student_layers " + std::to_string(cfg.distill.student_layers) +
        " exceeds teacher layers " + std::to_string(teacher.config.layers));
  const PreparedData data =
      prepare_data(cfg, teacher.labels, &teacher.vocab, teacher.config.max_len);

  DistillReport report;
  report.teacher_metrics = evaluate(teacher, data.test).metrics;
  report.teacher_params = param_count(teacher);

  DistillConfig dcfg;
  dcfg.student_layers = cfg.distill.student_layers;
  dcfg.temperature = cfg.distill.temperature;
  dcfg.init_from_teacher = cfg.distill.init_from_teacher;
  dcfg.hard_label_weight = cfg.distill.hard_label_weight;
  dcfg.hyper.lr = cfg.distill.lr;
  dcfg.hyper.epochs = cfg.distill.epochs;
  dcfg.hyper.batch_size = cfg.distill.batch_size;
  dcfg.hyper.warmup_steps = cfg.distill.warmup_steps;

  std::vector<double> f1s;
  for (const std::uint64_t seed : cfg.seeds) {
    dcfg.hyper.seed = seed;
    Rng rng(seed);
    TriageModel student = make_student(teacher, dcfg, rng);
    DistillSeedResult run;
    run.seed = seed;
    run.log = distill_train(teacher, student, data.train, dcfg);
    run.test_metrics = evaluate(student, data.test).metrics;
    run.checkpoint_path = output_path(
        cfg.output_dir, "student.seed-" + std::to_string(seed) + ".lesa1");
    save_checkpoint(student, run.checkpoint_path);
    if (report.student_params == 0) report.student_params = param_count(student);
    f1s.push_back(run.test_metrics.macro_f1);
    out << "seed " << seed << ": student macro F1 " << std::fixed
        << std::setprecision(4) << run.test_metrics.macro_f1 << " -> "
        << run.checkpoint_path << "\n";
    report.runs.push_back(std::move(run));
  }
  report.student_macro_f1 = mean_stderr(f1s);
  report.param_ratio = static_cast<double>(report.student_params) /
                       static_cast<double>(report.teacher_params);
  report.retention = report.teacher_metrics.macro_f1 > 0.0
                         ? report.student_macro_f1.mean /
                               report.teacher_metrics.macro_f1
                         : 0.0;

  json per_seed = json::array();
  for (const DistillSeedResult& run : report.runs) {
    json epochs = json::array();
    for (const EpochLog& el : run.log.epochs)
      epochs.push_back({{"train_loss", el.train_loss}});
    per_seed.push_back(
        {{"seed", run.seed},
         {"checkpoint", run.checkpoint_path},
         {"initial_loss", run.log.initial_loss},
         {"test", metrics_to_json(run.test_metrics, teacher.labels)},
         {"epochs", std::move(epochs)}});
  }
  const json report_json = {
      {"config", json::parse(run_config_to_json(cfg))},
      {"teacher",
       {{"checkpoint", teacher_checkpoint},
        {"params", report.teacher_params},
        {"test", metrics_to_json(report.teacher_metrics, teacher.labels)}}},
      {"student",
       {{"params", report.student_params},
        {"param_ratio", report.param_ratio},
        {"macro_f1", mean_stderr_to_json(report.student_macro_f1)},
        {"retention", report.retention}}},
      {"runs", std::move(per_seed)}};
  report.report_path = output_path(cfg.output_dir, "distill_report.json");
  write_json_file(report_json, report.report_path);
  out << "student macro F1 " << report.student_macro_f1.mean << " (teacher "
      << report.teacher_metrics.macro_f1 << ", retention "
      << report.retention << ", params x" << report.param_ratio
      << "); report " << report.report_path << "\n";
  return report;
}

EvalReport cmd_eval(const std::string& checkpoint_path,
                    const std::string& data_path,
                    const std::string& output_dir, std::ostream& out) {
  const TriageModel model = load_checkpoint(checkpoint_path);
  const LabeledDataset dataset = load_jsonl(data_path, model.labels);
  const std::vector<EncodedExample> examples =
      encode_dataset(dataset, model.vocab, model.config.max_len);
  EvalReport report;
  report.result = evaluate(model, examples);
  json report_json = metrics_to_json(report.result.metrics, model.labels);
  report_json["confusion"] = confusion_to_json(report.result.confusion);
  report_json["checkpoint"] = checkpoint_path;
  report_json["data"] = data_path;
  report_json["examples"] = dataset.examples.size();
  if (!output_dir.empty()) {
    report.report_path = output_path(output_dir, "eval_report.json");
    write_json_file(report_json, report.report_path);
  }
  out << report_json.dump(2) << "\n";
  return report;
}

Prediction cmd_predict(const std::string& checkpoint_path,
                       const std::string& text, std::ostream& out) {
  const TriageModel model = load_checkpoint(checkpoint_path);
  const EncodedExample ex = encode(text, model.vocab, model.config.max_len);
  NoGradGuard no_grad;
  const Tensor logits = forward_logits(model, {ex});
  Prediction pred;
  pred.label_id = predict(logits)[0];
  pred.label = model.labels[static_cast<std::size_t>(pred.label_id)];
  pred.probabilities = softmax_probabilities(logits);

  json probs = json::object();
  for (std::size_t i = 0; i < model.labels.size(); ++i)
    probs[model.labels[i]] = pred.probabilities[i];
  out << json({{"label", pred.label}, {"probabilities", std::move(probs)}})
             .dump(2)
      << "\n";
  return pred;
}

std::string cmd_export_attention(const std::string& checkpoint_path,
                                 const std::string& text, int layer, int head,
                                 std::ostream& out) {
  const TriageModel model = load_checkpoint(checkpoint_path);
  if (layer == -1) layer = model.config.layers - 1;
  if (layer < 0 || layer >= model.config.layers)
    throw std::out_of_range("export-attention: layer " + std::to_string(layer) +
                            " out of range [0, " +
                            std::to_string(model.config.layers) + ")");
  if (head != -1 && (head < 0 || head >= model.config.heads))
    throw std::out_of_range("export-attention: head " + std::to_string(head) +
                            " out of range [0, " +
                            std::to_string(model.config.heads) + ")");

  std::vector<std::string> tokens = tokenize(text);
  if (static_cast<int>(tokens.size()) > model.config.max_len)
    tokens.resize(static_cast<std::size_t>(model.config.max_len));
  const EncodedExample ex = encode(text, model.vocab, model.config.max_len);

  NoGradGuard no_grad;
  std::vector<AttentionTrace> traces;
  ForwardOptions opt;
  forward_logits(model, {ex}, opt, &traces);
  const LayerTrace& lt = traces[0].layers[static_cast<std::size_t>(layer)];
  const int l = static_cast<int>(tokens.size());
  const int h = model.config.heads;
  const bool lesa = model.config.mode == AttentionMode::Lesa;

  auto sources_of = [&](const HeadTrace& ht) {
    json sources = json::array();
    for (int j = 0; j < l; ++j) {
      const int w = ht.winners[static_cast<std::size_t>(j)];
      sources.push_back(w == 0 ? json("cls")
                               : json(model.labels[static_cast<std::size_t>(
                                     w - 1)]));
    }
    return sources;
  };

  json per_head = json::array();
  std::vector<double> mean_row(static_cast<std::size_t>(l) + 1, 0.0);
  for (int hi = 0; hi < h; ++hi) {
    const HeadTrace& ht = lt.heads[static_cast<std::size_t>(hi)];
    json row = json::array();
    for (int j = 0; j <= l; ++j) {
      mean_row[static_cast<std::size_t>(j)] +=
          ht.cls_row[static_cast<std::size_t>(j)] / h;
      if (j > 0) row.push_back(ht.cls_row[static_cast<std::size_t>(j)]);
    }
    json entry = {{"head", hi},
                  {"attention", std::move(row)},
                  {"cls_weight", ht.cls_row[0]}};
    if (lesa) entry["sources"] = sources_of(ht);
    per_head.push_back(std::move(entry));
  }

  json result = {{"text", text},
                 {"tokens", tokens},
                 {"mode", lesa ? "lesa" : "standard"},
                 {"layer", layer},
                 {"per_head", std::move(per_head)}};
  if (head == -1) {
    result["head"] = "mean";
    json row = json::array();
    for (int j = 1; j <= l; ++j)
      row.push_back(mean_row[static_cast<std::size_t>(j)]);
    result["attention"] = std::move(row);
    result["cls_weight"] = mean_row[0];
  } else {
    const HeadTrace& ht = lt.heads[static_cast<std::size_t>(head)];
    result["head"] = head;
    json row = json::array();
    for (int j = 1; j <= l; ++j)
      row.push_back(ht.cls_row[static_cast<std::size_t>(j)]);
    result["attention"] = std::move(row);
    result["cls_weight"] = ht.cls_row[0];
    if (lesa) result["sources"] = sources_of(ht);
  }
  const std::string dumped = result.dump(2);
  out << dumped << "\n";
  return dumped;
}

InspectReport cmd_inspect(const std::string& checkpoint_path,
                          const std::string& data_path, std::ostream& out) {
  const TriageModel model = load_checkpoint(checkpoint_path);
  InspectReport report;
  report.config = model.config;
  report.labels = model.labels;
  report.vocab_size = model.vocab.size();
  report.params = param_count(model);

  std::vector<std::string> texts;
  if (!data_path.empty()) {
    const LabeledDataset dataset = load_jsonl(data_path, model.labels);
    for (const LabeledExample& ex : dataset.examples) texts.push_back(ex.text);
  } else {
    // Built-in probe: a few mid-length messages from the model's own vocab.
    const int v = model.vocab.size();
    for (int i = 0; i < 16; ++i) {
      std::string text;
      for (int j = 0; j < std::min(16, model.config.max_len); ++j) {
        const int id = 3 + (i * 7 + j * 3) % std::max(1, v - 3);
        text += (j ? " " : "") + model.vocab.id_to_token[static_cast<std::size_t>(id)];
      }
      texts.push_back(std::move(text));
    }
  }

  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  for (const std::string& text : texts) {
    const EncodedExample ex = encode(text, model.vocab, model.config.max_len);
    forward_logits(model, {ex});
  }
  const auto end = std::chrono::steady_clock::now();
  report.timed_examples = static_cast<int>(texts.size());
  report.batch1_seconds = std::chrono::duration<double>(end - start).count();
  report.per_example_ms =
      report.batch1_seconds * 1000.0 / static_cast<double>(texts.size());

  const json summary = {
      {"checkpoint", checkpoint_path},
      {"mode",
       model.config.mode == AttentionMode::Lesa ? "lesa" : "standard"},
      {"layers", model.config.layers},
      {"dim", model.config.dim},
      {"heads", model.config.heads},
      {"head_dim", model.config.head_dim},
      {"ffn_dim", model.config.ffn_dim},
      {"max_len", model.config.max_len},
      {"labels", model.labels},
      {"vocab_size", report.vocab_size},
      {"param_count", report.params},
      {"batch1_pass",
       {{"examples", report.timed_examples},
        {"seconds", report.batch1_seconds},
        {"per_example_ms", report.per_example_ms}}}};
  out << summary.dump(2) << "\n";
  return report;
}

}  // namespace lesa
