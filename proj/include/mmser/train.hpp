// Copyright 2026 The mmser Authors
// Epoch loop with shuffled batches, warmup Adam, validation-accuracy early
// stopping, and a JSON-lines log.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "mmser/augment.hpp"
#include "mmser/model.hpp"
#include "mmser/optim.hpp"

namespace mmser::train {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;     // paper value; desk-scale runs override to 16
  int max_epochs = 150;
  int patience = 50;
  int64_t warmup_steps = -1;  // -1: linear over the first 5% of total steps
  uint64_t seed = 0;

  void validate() const {
    if (lr <= 0.0) raise("format", "lr must be positive");
    if (batch_size < 1 || max_epochs < 1) raise("format", "bad batch/epoch count");
    if (patience < 1 || patience > max_epochs)
      raise("format", "patience must lie in [1, max_epochs]");
  }
};

struct Example {
  std::vector<dsp::MelSpectrogram> mels;
  int label = 0;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> val;
  int n_classes = 0;
};

struct EpochLog {
  int epoch;
  double train_loss;
  double val_acc;
  double lr;
  double wall_ms;
};

struct TrainResult {
  std::vector<double> best_params;  // flat snapshot at the best epoch
  double best_val_acc = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

// Augmentation runs on the training path only; the fill defaults to the
// per-channel mean. Returns the checkpoint with the best validation
// accuracy (earliest epoch on ties). `record_wall_ms` off zeroes the
// timing field so the log file is byte-reproducible.
TrainResult train_loop(const Dataset& dataset, nn::Model& model, fusion::Mode mode,
                       const TrainConfig& config, const aug::MaskSpec& masks,
                       bool record_wall_ms = true);

// Per-mode fused images for one example (no augmentation).
std::vector<Tensor> fused_images(const std::vector<dsp::MelSpectrogram>& mels,
                                 fusion::Mode mode);

std::vector<double> predict_logits(const nn::Model& model, fusion::Mode mode,
                                   const std::vector<dsp::MelSpectrogram>& mels);

double dataset_accuracy(const nn::Model& model, fusion::Mode mode,
                        const std::vector<Example>& examples);

void write_log_jsonl(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace mmser::train
