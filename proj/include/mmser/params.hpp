// Copyright 2026 The mmser Authors
// Named parameter tensors with matching gradient buffers, in a fixed
// iteration order, plus the binary checkpoint format.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmser/tensor.hpp"

namespace mmser {

class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  int add(const std::string& name, Tensor init) {
    if (index_.count(name)) raise("state", "duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.shape);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return index_[name];
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) raise("state", "unknown parameter: " + name);
    return it->second;
  }

  int size() const { return static_cast<int>(entries_.size()); }
  Entry& at(int i) { return entries_[static_cast<size_t>(i)]; }
  const Entry& at(int i) const { return entries_[static_cast<size_t>(i)]; }

  void zero_grads() {
    for (auto& e : entries_)
      std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  std::vector<double> snapshot() const {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(total_parameters()));
    for (const auto& e : entries_)
      flat.insert(flat.end(), e.value.data.begin(), e.value.data.end());
    return flat;
  }

  void restore(const std::vector<double>& flat) {
    size_t pos = 0;
    for (auto& e : entries_) {
      std::copy(flat.begin() + static_cast<long>(pos),
                flat.begin() + static_cast<long>(pos + e.value.data.size()),
                e.value.data.begin());
      pos += e.value.data.size();
    }
    if (pos != flat.size()) raise("shape_mismatch", "snapshot size mismatch");
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Checkpoint: magic "MMCK", u32 version, u64 json length, config/meta JSON,
// u32 tensor count, then named tensors (u64 name length, name, u8 dtype,
// u32 rank, u64 dims, payload). f64 tensors round-trip bit-exactly.
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const ParamStore& params, Dtype dtype = Dtype::f64);

struct Checkpoint {
  std::string meta_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmser
