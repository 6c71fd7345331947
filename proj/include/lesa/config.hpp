#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lesa/model.hpp"

namespace lesa {

struct DataConfig {
  std::string train_path;
  std::string test_path;      // empty: carve test_frac off train_path
  float test_frac = 0.2f;
  std::string keywords_path;  // optional
  int min_freq = 1;
  std::uint64_t split_seed = 42;  // train/test carving, separate from training seeds
  float val_frac = 0.0f;          // optional validation slice for model selection
};

struct TrainingConfig {
  float lr = 1e-3f;
  int epochs = 10;
  int batch_size = 8;
  int warmup_steps = 0;
  bool class_weights = false;  // inverse-frequency loss weights
};

struct DistillRunConfig {
  int student_layers = 2;
  float temperature = 1.0f;
  bool init_from_teacher = true;
  float hard_label_weight = 0.0f;
  float lr = 1e-3f;
  int epochs = 10;
  int batch_size = 8;
  int warmup_steps = 0;
};

struct RunConfig {
  std::vector<std::string> labels;
  ModelConfig model;
  DataConfig data;
  TrainingConfig training;
  DistillRunConfig distill;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "runs";
};

// Strict parse: unknown or mistyped keys raise errors naming the key.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin);

// Effective config echo for reports; feeding it back reproduces the run.
std::string run_config_to_json(const RunConfig& config);

}  // namespace lesa
