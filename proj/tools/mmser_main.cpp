// Copyright 2026 The mmser Authors
// Command-line front end: toygen | simulate | featurize | train | eval | report.
//
// Licensed under the Apache License, Version 2.0

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmser/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mmser;

int main(int argc, char** argv) {
  CLI::App app{
      "mmser - multi-microphone speech emotion recognition at desk scale.\n"
      "Features are 64-band log-mels from a 1024-sample Hann window with hop 160\n"
      "(frames = floor((N - 1024) / 160) + 1, no centering)."};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string manifest_path;
  uint64_t seed = 0;
  bool seed_given = false;

  // toygen
  auto* toygen = app.add_subcommand("toygen", "Generate the synthetic toy corpus");
  data::ToyConfig toy;
  toygen->add_option("--classes", toy.n_classes, "Number of classes");
  toygen->add_option("--per-class", toy.n_per_class, "Clips per class");
  toygen->add_option("--duration", toy.duration_s, "Clip duration in seconds");
  toygen->add_option("--seed", toy.seed, "Corpus seed");
  toygen->add_option("--out-dir", out_dir, "Output directory")->required();

  auto add_common = [&](CLI::App* cmd, bool need_manifest) {
    cmd->add_option("--config", config_path, "Run config JSON");
    cmd->add_option_function<uint64_t>(
        "--seed",
        [&](const uint64_t& v) {
          seed = v;
          seed_given = true;
        },
        "Override the config seed");
    if (need_manifest)
      cmd->add_option("--manifest", manifest_path, "Corpus manifest CSV")->required();
  };

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "Convolve a corpus with sampled room impulse responses");
  add_common(simulate, true);
  simulate->add_option("--out-dir", out_dir, "Output directory")->required();

  // featurize
  int featurize_mics = 0;
  auto* featurize = app.add_subcommand(
      "featurize", "Fill the log-mel feature cache for a manifest");
  add_common(featurize, true);
  featurize->add_option("--mics", featurize_mics,
                        "Channels to featurize (default: max of train/eval mics)");

  // train
  bool no_timing = false;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune a model on a manifest");
  add_common(train_cmd, true);
  train_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  train_cmd->add_flag("--no-timing", no_timing,
                      "Zero the wall_ms log field for byte-reproducible logs");

  // eval
  std::string checkpoint_path, split = "test", group_by = "none";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  eval_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  eval_cmd->add_option("--split", split, "Manifest split to evaluate");
  eval_cmd->add_option("--group-by", group_by, "Report grouping: none|t60");

  // report
  std::vector<std::string> report_inputs;
  std::string report_prefix = "report";
  int top_k = 1;
  auto* report = app.add_subcommand("report", "Merge eval summaries into a table");
  report->add_option("--inputs", report_inputs, "Eval summary JSON files")->required();
  report->add_option("--out-prefix", report_prefix, "Output path prefix");
  report->add_option("--top-k", top_k, "Models per variant to average");

  CLI11_PARSE(app, argc, argv);

  try {
    pipe::RunConfig config;
    if (!config_path.empty()) config = pipe::RunConfig::from_file(config_path);
    if (seed_given) {
      config.seed = seed;
      config.tcfg.seed = seed;
    }

    if (*toygen) {
      data::Manifest m = data::generate_toy_corpus(toy, out_dir);
      std::cout << "wrote " << m.rows.size() << " clips under " << out_dir << "\n";
    } else if (*simulate) {
      data::Manifest src = data::Manifest::load(manifest_path);
      data::Manifest wet = pipe::cmd_simulate(src, config, out_dir);
      std::cout << "wrote " << wet.rows.size() << " reverberant clips under " << out_dir
                << "\n";
    } else if (*featurize) {
      data::Manifest m = data::Manifest::load(manifest_path);
      const int mics = featurize_mics > 0
                           ? featurize_mics
                           : std::max(config.train_mics, config.eval_mics);
      pipe::cmd_featurize(m, config, mics);
      std::cout << "featurized " << m.rows.size() << " clips (" << mics
                << " channels) into " << config.cache_dir << "\n";
    } else if (*train_cmd) {
      data::Manifest m = data::Manifest::load(manifest_path);
      pipe::TrainOutput out = pipe::cmd_train(m, config, out_dir, !no_timing);
      std::cout << "best val_acc " << out.best_val_acc << " at epoch " << out.best_epoch
                << " (" << out.epochs_run << " epochs)\ncheckpoint: "
                << out.checkpoint_path << "\nlog: " << out.log_path << "\n";
    } else if (*eval_cmd) {
      data::Manifest m = data::Manifest::load(manifest_path);
      pipe::EvalOutput out =
          pipe::cmd_eval(checkpoint_path, m, config, out_dir, split, group_by,
                         /*check_model_config=*/!config_path.empty());
      std::cout << "accuracy " << out.overall_accuracy << " on " << out.n
                << " examples\npredictions: " << out.predictions_path
                << "\nsummary: " << out.summary_path << "\n";
    } else if (*report) {
      std::cout << pipe::cmd_report(report_inputs, report_prefix, top_k);
    }
  } catch (const Error& e) {
    std::cerr << "error:" << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
