#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lesa/config.hpp"
#include "lesa/distill.hpp"
#include "lesa/model.hpp"

namespace lesa {

struct SeedRunResult {
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  MacroMetrics test_metrics;
  TrainLog log;
};

struct TrainReport {
  std::vector<SeedRunResult> runs;
  MeanStderr macro_f1, macro_precision, macro_recall;
  std::string report_path;
};

// Trains one model per seed, writes per-seed checkpoints plus
// train_report.json under config.output_dir.
TrainReport cmd_train(const RunConfig& config, std::ostream& out);

struct DistillSeedResult {
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  MacroMetrics test_metrics;
  DistillLog log;
};

struct DistillReport {
  MacroMetrics teacher_metrics;
  std::vector<DistillSeedResult> runs;
  MeanStderr student_macro_f1;
  long long teacher_params = 0;
  long long student_params = 0;
  double param_ratio = 0.0;  // student / teacher
  double retention = 0.0;    // mean student F1 / teacher F1
  std::string report_path;
};

DistillReport cmd_distill(const RunConfig& config,
                          const std::string& teacher_checkpoint,
                          std::ostream& out);

struct EvalReport {
  EvalResult result;
  std::string report_path;
};

EvalReport cmd_eval(const std::string& checkpoint_path,
                    const std::string& data_path,
                    const std::string& output_dir, std::ostream& out);

struct Prediction {
  int label_id = 0;
  std::string label;
  std::vector<float> probabilities;
};

Prediction cmd_predict(const std::string& checkpoint_path,
                       const std::string& text, std::ostream& out);

// JSON with tokens, the post-softmax [CLS]->token row for the requested
// layer/head (-1: last layer / head-averaged), and per-head rows with the
// LESA max-merge sources.
std::string cmd_export_attention(const std::string& checkpoint_path,
                                 const std::string& text, int layer, int head,
                                 std::ostream& out);

struct InspectReport {
  ModelConfig config;
  std::vector<std::string> labels;
  int vocab_size = 0;
  long long params = 0;
  int timed_examples = 0;
  double batch1_seconds = 0.0;  // encode + forward, batch size 1
  double per_example_ms = 0.0;
};

// data_path may be empty: timing then runs over a small built-in probe.
InspectReport cmd_inspect(const std::string& checkpoint_path,
                          const std::string& data_path, std::ostream& out);

}  // namespace lesa
