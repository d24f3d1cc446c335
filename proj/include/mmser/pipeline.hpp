// Copyright 2026 The mmser Authors
// End-to-end commands behind the CLI: simulation, training, evaluation,
// and the comparison report.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "mmser/augment.hpp"
#include "mmser/dataset.hpp"
#include "mmser/evalh.hpp"
#include "mmser/model.hpp"
#include "mmser/train.hpp"

namespace mmser::pipe {

struct RunConfig {
  uint64_t seed = 0;
  std::string fusion = "single";
  int train_mics = 4;
  int eval_mics = 3;
  nn::ModelConfig model;
  train::TrainConfig tcfg;
  aug::MaskSpec masks;
  double t60_min = 0.2;
  double t60_max = 0.8;
  int sim_augment_factor = 6;
  int sim_retries = 20;
  std::string cache_dir;

  fusion::Mode mode() const { return fusion::mode_from_string(fusion); }
  // Channels consumed per example: 1 in single mode, otherwise M.
  int mics_used(bool training) const {
    return mode() == fusion::Mode::kSingle ? 1 : (training ? train_mics : eval_mics);
  }

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::string& path);
};

// Reverberant corpus: every manifest row is convolved under
// `sim_augment_factor` sampled scenes with train_mics microphones. Emits
// float32 WAVs, per-scene JSON manifests, and the augmented manifest
// (saved to out_dir/manifest.csv).
data::Manifest cmd_simulate(const data::Manifest& source, const RunConfig& config,
                            const std::string& out_dir);

// Fills the feature cache for every row (no-op without cache_dir).
void cmd_featurize(const data::Manifest& manifest, const RunConfig& config,
                   int use_mics);

struct TrainOutput {
  std::string checkpoint_path;
  std::string log_path;
  double best_val_acc = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
};
TrainOutput cmd_train(const data::Manifest& manifest, const RunConfig& config,
                      const std::string& out_dir, bool record_wall_ms = true);

struct EvalOutput {
  std::string predictions_path;
  std::string summary_path;
  std::vector<eval::EvalResult> results;  // one per condition
  double overall_accuracy = 0.0;
  int64_t n = 0;
};
// `group_by` is "none" or "t60" (reads each row's scene manifest).
// When `check_model_config` is set, the provided config's model section
// must match the checkpoint architecture.
EvalOutput cmd_eval(const std::string& checkpoint_path, const data::Manifest& manifest,
                    const RunConfig& config, const std::string& out_dir,
                    const std::string& split = "test",
                    const std::string& group_by = "none",
                    bool check_model_config = false);

// Merges eval summaries into a Table-2-style comparison (text + CSV next
// to `out_prefix`). With several summaries per variant, the top_k models
// by validation accuracy are averaged (default: best model only).
std::string cmd_report(const std::vector<std::string>& summary_paths,
                       const std::string& out_prefix, int top_k = 1);

}  // namespace mmser::pipe
