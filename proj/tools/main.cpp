#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mghft/tensor.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace mghft::cli;
  CLI::App app{"Multi-granularity hierarchical fusion for sticker emotion recognition"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto add_config = [](CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  };

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best-validation checkpoint");
  add_config(train_cmd, train);
  train_cmd->add_option("--out", train.out, "Output directory (overrides output_dir)");
  train_cmd->add_option("--epochs", train.epochs, "Number of epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-steps", train.max_steps, "Stop after this many optimizer steps");
  train_cmd->add_option("--seed", train.seed, "Seed for initialization and shuffling");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_config(eval_cmd, eval);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint archive (default: <output_dir>/checkpoint.marc)");
  eval_cmd->add_option("--split", eval.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--average", eval.average, "F1 averaging")->check(CLI::IsMember({"macro", "weighted"}));
  eval_cmd->add_option("--report", eval.report, "Write the full report as JSON");

  DescribeArgs describe;
  auto* describe_cmd = app.add_subcommand("describe", "Generate four-view descriptions with a multimodal LLM");
  add_config(describe_cmd, describe);
  describe_cmd->add_option("--images", describe.images, "Directory of sticker images")->required();
  describe_cmd->add_option("--endpoint", describe.endpoint, "Chat-completions URL");
  describe_cmd->add_option("--out", describe.out, "Description file (JSON Lines)")->required();
  describe_cmd->add_option("--cache", describe.cache, "Cache directory");
  describe_cmd->add_option("--parallel", describe.parallel, "Images in flight")->check(CLI::PositiveNumber);
  describe_cmd->add_option("--model", describe.model, "Model name sent to the endpoint");
  describe_cmd->add_option("--prompts", describe.prompts, "Prompt templates (JSON)")->check(CLI::ExistingFile);

  EncodeArgs encode;
  auto* encode_cmd = app.add_subcommand("encode", "Encode descriptions into view embeddings");
  add_config(encode_cmd, encode);
  encode_cmd->add_option("--descriptions", encode.descriptions, "Description file (JSON Lines)");
  encode_cmd->add_option("--out", encode.out, "Embedding archive to write")->required();
  encode_cmd->add_option("--provider", encode.provider, "hash, precomputed or remote")
      ->check(CLI::IsMember({"hash", "precomputed", "remote"}));
  encode_cmd->add_option("--dim", encode.dim, "Embedding width")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--seed", encode.seed, "Hash provider seed");
  encode_cmd->add_option("--max-len", encode.max_len, "Maximum sequence length")->check(CLI::PositiveNumber);
  encode_cmd->add_option("--endpoint", encode.endpoint, "Embeddings URL for the remote provider");
  encode_cmd->add_option("--model", encode.model, "Model name for the remote provider");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate a set of fusion variants");
  add_config(ablate_cmd, ablate);
  auto* table_opt = ablate_cmd->add_option("--table", ablate.table, "Preset: 3 (modules), 4 (view order), fig5")
                        ->check(CLI::IsMember({"3", "4", "fig5"}));
  ablate_cmd->add_option("--sweep", ablate.sweep, "Variants such as \"CL+GF,LF\" or \"powerset=CL,GF\"")
      ->excludes(table_opt);
  ablate_cmd->add_option("--out", ablate.out, "Write the table to this file");
  ablate_cmd->add_option("--json", ablate.json, "Write per-variant results as JSON");
  ablate_cmd->add_option("--average", ablate.average, "F1 averaging")->check(CLI::IsMember({"macro", "weighted"}));
  ablate_cmd->add_option("--epochs", ablate.epochs, "Epochs per variant")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--max-steps", ablate.max_steps, "Optimizer steps per variant");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare every gradient with central finite differences");
  add_config(grad_cmd, grad);
  grad_cmd->add_option("--seed", grad.seed, "Seed for the random inputs");
  grad_cmd->add_option("--tolerance", grad.tolerance, "Largest accepted relative error");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-attn", "Write final-stage CLS attention maps");
  add_config(export_cmd, exp);
  export_cmd->add_option("--checkpoint", exp.checkpoint, "Checkpoint archive (default: <output_dir>/checkpoint.marc)");
  export_cmd->add_option("--out", exp.out, "Output directory")->required();
  export_cmd->add_option("--split", exp.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  export_cmd->add_option("--limit", exp.limit, "Export at most this many examples (0 = all)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a class-separable synthetic dataset and a matching config");
  add_config(synth_cmd, synth);
  synth_cmd->add_option("--out", synth.out, "Dataset directory")->required();
  synth_cmd->add_option("--count", synth.count, "Number of examples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")->check(CLI::Range(2, 1000));
  synth_cmd->add_option("--image-size", synth.image_size, "Image side in pixels")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--text-dim", synth.text_dim, "View embedding width")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--image-signal", synth.image_signal, "Class template strength in pixels");
  synth_cmd->add_option("--image-noise", synth.image_noise, "Pixel noise");
  synth_cmd->add_option("--text-signal", synth.text_signal, "Class direction strength in embeddings");
  synth_cmd->add_option("--text-noise", synth.text_noise, "Embedding noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const auto used = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (used.empty() ? app.help() : used.front()->help());
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*describe_cmd) return run_describe(describe);
    if (*encode_cmd) return run_encode(encode);
    if (*ablate_cmd) return run_ablate(ablate);
    if (*grad_cmd) return run_gradcheck(grad);
    if (*export_cmd) return run_export(exp);
    if (*synth_cmd) return run_synth(synth);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mghft::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
