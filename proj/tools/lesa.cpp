#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lesa/commands.hpp"
#include "lesa/config.hpp"

namespace {

lesa::RunConfig load_config_or_die(const std::string& config_path,
                                   std::int64_t seed,
                                   const std::string& output_dir,
                                   const char* command) {
  if (config_path.empty())
    throw std::runtime_error(std::string(command) +
                             ": --config <path> is required");
  lesa::RunConfig cfg = lesa::load_run_config(config_path);
  if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Label-embedding self-attention text classifier: training, "
      "distillation, evaluation, and attention inspection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, output_dir;
  std::int64_t seed = -1;
  app.add_option("--config", config_path, "JSON run config path");
  app.add_option("--seed", seed, "Override the config seed list with one seed");
  app.add_option("--output", output_dir, "Override the output directory");

  CLI::App* train =
      app.add_subcommand("train", "Train one model per configured seed");

  CLI::App* distill = app.add_subcommand(
      "distill", "Distill a trained teacher into a shallower student");
  std::string teacher_path;
  distill->add_option("--teacher", teacher_path, "Teacher checkpoint")
      ->required();

  std::string checkpoint_path, data_path, text;
  int layer = -1, head = -1;

  CLI::App* eval =
      app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL dataset");
  eval->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  eval->add_option("--data", data_path, "JSONL dataset")->required();

  CLI::App* predict =
      app.add_subcommand("predict", "Classify a single message");
  predict->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  predict->add_option("--text", text, "Message text")->required();

  CLI::App* export_attention = app.add_subcommand(
      "export-attention", "Dump the [CLS] attention row for one message");
  export_attention
      ->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  export_attention->add_option("--text", text, "Message text")->required();
  export_attention->add_option("--layer", layer,
                               "Encoder layer (default: last)");
  export_attention->add_option("--head", head,
                               "Attention head (default: mean over heads)");

  CLI::App* inspect = app.add_subcommand(
      "inspect", "Print config, parameter count, and batch-1 timing");
  inspect->add_option("--checkpoint", checkpoint_path, "Model checkpoint")
      ->required();
  inspect->add_option("--data", data_path,
                      "JSONL dataset for the timing pass (optional)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      lesa::cmd_train(
          load_config_or_die(config_path, seed, output_dir, "train"),
          std::cout);
    } else if (*distill) {
      lesa::cmd_distill(
          load_config_or_die(config_path, seed, output_dir, "distill"),
          teacher_path, std::cout);
    } else if (*eval) {
      lesa::cmd_eval(checkpoint_path, data_path, output_dir, std::cout);
    } else if (*predict) {
      lesa::cmd_predict(checkpoint_path, text, std::cout);
    } else if (*export_attention) {
      lesa::cmd_export_attention(checkpoint_path, text, layer, head,
                                 std::cout);
    } else if (*inspect) {
      lesa::cmd_inspect(checkpoint_path, data_path, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
