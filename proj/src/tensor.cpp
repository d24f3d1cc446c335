// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/tensor.hpp"

#include <cstring>
#include <fstream>

namespace mmser {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'T', 'N'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& buf, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.insert(buf.end(), b, b + sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) raise("format", "truncated tensor file");
  return v;
}

void write_payload(std::vector<unsigned char>& buf, const Tensor& t, Dtype dtype) {
  if (dtype == Dtype::f64) {
    for (double v : t.data) put(buf, v);
  } else {
    for (double v : t.data) put(buf, static_cast<float>(v));
  }
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t, Dtype dtype) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put(buf, kVersion);
  put(buf, static_cast<uint32_t>(t.rank()));
  put(buf, static_cast<uint32_t>(dtype));
  for (int64_t d : t.shape) put(buf, static_cast<uint64_t>(d));
  write_payload(buf, t, dtype);

  std::ofstream out(path, std::ios::binary);
  if (!out) raise("io", "cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) raise("io", "write failed: " + path);
}

Tensor load_tensor(const std::string& path, Dtype* dtype_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise("io", "cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    raise("format", "bad tensor file magic: " + path);
  uint32_t version = take<uint32_t>(in);
  if (version != kVersion) raise("format", "unsupported tensor file version");
  uint32_t rank = take<uint32_t>(in);
  if (rank > 8) raise("format", "tensor rank out of range");
  auto dtype = static_cast<Dtype>(take<uint32_t>(in));
  if (dtype != Dtype::f32 && dtype != Dtype::f64) raise("format", "unknown tensor dtype");

  std::vector<int64_t> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(take<uint64_t>(in));
  Tensor t(shape);
  for (auto& v : t.data) {
    if (dtype == Dtype::f64) {
      v = take<double>(in);
    } else {
      v = static_cast<double>(take<float>(in));
    }
  }
  if (dtype_out) *dtype_out = dtype;
  return t;
}

void append_tensor(std::vector<unsigned char>& buf, const std::string& name,
                   const Tensor& t, Dtype dtype) {
  put(buf, static_cast<uint64_t>(name.size()));
  buf.insert(buf.end(), name.begin(), name.end());
  put(buf, static_cast<uint8_t>(dtype == Dtype::f64 ? 2 : 1));
  put(buf, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape) put(buf, static_cast<uint64_t>(d));
  write_payload(buf, t, dtype);
}

}  // namespace mmser
