// Copyright 2026 The mmser Authors
// Dense row-major double tensor plus the MMTN binary tensor file format.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmser/common.hpp"

namespace mmser {

// Storage is always double; files may declare f32 or f64 payloads.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      raise("shape_mismatch", "tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape[i]; }
  size_t rank() const { return shape.size(); }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double& at(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double at(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

enum class Dtype : uint32_t { f32 = 1, f64 = 2 };

// MMTN file: magic "MMTN", u32 version, u32 rank, u32 dtype (1=f32, 2=f64),
// u64 dims[rank], little-endian payload.
void save_tensor(const std::string& path, const Tensor& t, Dtype dtype = Dtype::f64);
Tensor load_tensor(const std::string& path, Dtype* dtype_out = nullptr);

void append_tensor(std::vector<unsigned char>& buf, const std::string& name,
                   const Tensor& t, Dtype dtype);

}  // namespace mmser
