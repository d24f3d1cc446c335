// Copyright 2026 The mmser Authors
// Loss, Adam, and the warmup schedule.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mmser/params.hpp"

namespace mmser::opt {

// loss = -log softmax(logits)[label]; also returns d loss / d logits.
struct CrossEntropyResult {
  double loss;
  std::vector<double> grad;  // softmax(logits) - one_hot(label)
};
CrossEntropyResult cross_entropy(const std::vector<double>& logits, int label);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over a ParamStore (no weight decay).
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig config);

  // Applies one update from the current gradients; `lr_multiplier` scales
  // the base learning rate (warmup).
  void step(double lr_multiplier = 1.0);

  int64_t steps_taken() const { return t_; }

 private:
  ParamStore& store_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t t_ = 0;
};

// Linear ramp 0 -> 1 over `warmup_steps`, then constant 1.
double lr_schedule(int64_t step, int64_t warmup_steps);

}  // namespace mmser::opt
