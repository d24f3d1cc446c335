// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mmser/common.hpp"

namespace mmser::opt {

CrossEntropyResult cross_entropy(const std::vector<double>& logits, int label) {
  const int c = static_cast<int>(logits.size());
  if (c == 0) raise("format", "empty logits");
  if (label < 0 || label >= c) raise("format", "label out of range");

  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  CrossEntropyResult out;
  out.grad.resize(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j) {
    out.grad[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
    sum += out.grad[static_cast<size_t>(j)];
  }
  for (int j = 0; j < c; ++j) out.grad[static_cast<size_t>(j)] /= sum;
  out.loss = std::log(sum) + mx - logits[static_cast<size_t>(label)];
  out.grad[static_cast<size_t>(label)] -= 1.0;
  return out;
}

Adam::Adam(ParamStore& store, AdamConfig config) : store_(store), config_(config) {
  m_.resize(static_cast<size_t>(store.size()));
  v_.resize(static_cast<size_t>(store.size()));
  for (int i = 0; i < store.size(); ++i) {
    m_[static_cast<size_t>(i)].assign(store.at(i).value.data.size(), 0.0);
    v_[static_cast<size_t>(i)].assign(store.at(i).value.data.size(), 0.0);
  }
}

void Adam::step(double lr_multiplier) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double lr = config_.lr * lr_multiplier;
  for (int i = 0; i < store_.size(); ++i) {
    auto& value = store_.at(i).value.data;
    const auto& grad = store_.at(i).grad.data;
    auto& m = m_[static_cast<size_t>(i)];
    auto& v = v_[static_cast<size_t>(i)];
    for (size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

double lr_schedule(int64_t step, int64_t warmup_steps) {
  if (warmup_steps <= 0) return 1.0;
  if (step >= warmup_steps) return 1.0;
  return static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace mmser::opt
