// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mmser/evalh.hpp"

namespace mmser::train {

std::vector<Tensor> fused_images(const std::vector<dsp::MelSpectrogram>& mels,
                                 fusion::Mode mode) {
  if (mels.empty()) raise("format", "no channels to fuse");
  switch (mode) {
    case fusion::Mode::kSingle:
      return {fusion::to_mel_image(mels[0])};
    case fusion::Mode::kAvgMel:
      return {fusion::to_mel_image(fusion::avg_mel(mels))};
    case fusion::Mode::kSumPatchEmbed: {
      std::vector<Tensor> images;
      images.reserve(mels.size());
      for (const auto& m : mels) images.push_back(fusion::to_mel_image(m));
      return images;
    }
  }
  raise("state", "unreachable fusion mode");
}

std::vector<double> predict_logits(const nn::Model& model, fusion::Mode mode,
                                   const std::vector<dsp::MelSpectrogram>& mels) {
  ag::Graph g;
  ag::Value logits = model.forward(g, fused_images(mels, mode), mode, false, nullptr);
  return g.value(logits).data;
}

double dataset_accuracy(const nn::Model& model, fusion::Mode mode,
                        const std::vector<Example>& examples) {
  if (examples.empty()) raise("format", "empty split");
  int64_t correct = 0;
  for (const auto& ex : examples)
    if (eval::argmax(predict_logits(model, mode, ex.mels)) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainResult train_loop(const Dataset& dataset, nn::Model& model, fusion::Mode mode,
                       const TrainConfig& config, const aug::MaskSpec& masks,
                       bool record_wall_ms) {
  config.validate();
  if (dataset.train.empty() || dataset.val.empty()) raise("format", "empty split");
  for (const auto& ex : dataset.train)
    if (ex.label < 0 || ex.label >= dataset.n_classes)
      raise("format", "label out of range");

  const int64_t n_train = static_cast<int64_t>(dataset.train.size());
  const int64_t steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  const int64_t warmup = config.warmup_steps >= 0
                             ? config.warmup_steps
                             : static_cast<int64_t>(std::llround(
                                   0.05 * static_cast<double>(config.max_epochs) *
                                   static_cast<double>(steps_per_epoch)));

  opt::Adam adam(model.params(), {config.lr, 0.9, 0.999, 1e-8});
  TrainResult result;
  result.best_val_acc = -1.0;
  int64_t global_step = 0;

  std::vector<int> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    // epoch-indexed shuffle stream keeps batch assembly reproducible
    Rng shuffle_rng =
        Rng::stream(config.seed, 0x9e370000ULL + static_cast<uint64_t>(epoch));
    for (int64_t i = n_train - 1; i > 0; --i) {
      const int64_t j = static_cast<int64_t>(shuffle_rng.bounded(static_cast<uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double loss_sum = 0.0;
    double last_lr = config.lr;
    for (int64_t start = 0; start < n_train; start += config.batch_size) {
      const int64_t stop = std::min(n_train, start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      model.params().zero_grads();

      for (int64_t bi = start; bi < stop; ++bi) {
        const int idx = order[static_cast<size_t>(bi)];
        const Example& ex = dataset.train[static_cast<size_t>(idx)];
        Rng example_rng = Rng::stream(
            config.seed, (static_cast<uint64_t>(epoch) << 32) | static_cast<uint64_t>(idx));
        const auto augmented = aug::spec_augment(ex.mels, masks, example_rng);

        ag::Graph g;
        ag::Value logits = model.forward(g, fused_images(augmented, mode), mode,
                                         /*train_mode=*/true, &example_rng);
        ag::Value loss = g.cross_entropy(logits, ex.label);
        loss_sum += g.value(loss).data[0];
        g.backward(loss, inv_batch);
      }

      // 1-based step count in the ramp: the first update uses 1/warmup
      // rather than burning a null step at multiplier zero
      const double mult = opt::lr_schedule(global_step + 1, warmup);
      last_lr = config.lr * mult;
      adam.step(mult);
      ++global_step;
    }

    const double val_acc = dataset_accuracy(model, mode, dataset.val);
    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms =
        record_wall_ms
            ? std::chrono::duration<double, std::milli>(t1 - t0).count()
            : 0.0;
    result.log.push_back({epoch, loss_sum / static_cast<double>(n_train), val_acc,
                          last_lr, wall_ms});

    if (val_acc > result.best_val_acc) {
      result.best_val_acc = val_acc;
      result.best_epoch = epoch;
      result.best_params = model.params().snapshot();
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }
  return result;
}

void write_log_jsonl(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) raise("io", "cannot open log for write: " + path);
  for (const auto& e : log) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_acc"] = e.val_acc;
    j["lr"] = e.lr;
    j["wall_ms"] = e.wall_ms;
    out << j.dump() << '\n';
  }
  if (!out) raise("io", "log write failed: " + path);
}

}  // namespace mmser::train
