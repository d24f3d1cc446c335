// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/params.hpp"

#include <cstring>
#include <fstream>

namespace mmser {

namespace {
constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) raise("format", "truncated checkpoint");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const ParamStore& params, Dtype dtype) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  auto put32 = [&](uint32_t v) {
    unsigned char b[4];
    std::memcpy(b, &v, 4);
    buf.insert(buf.end(), b, b + 4);
  };
  auto put64 = [&](uint64_t v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    buf.insert(buf.end(), b, b + 8);
  };
  put32(kVersion);
  put64(meta_json.size());
  buf.insert(buf.end(), meta_json.begin(), meta_json.end());
  put32(static_cast<uint32_t>(params.size()));
  for (int i = 0; i < params.size(); ++i)
    append_tensor(buf, params.at(i).name, params.at(i).value, dtype);

  std::ofstream out(path, std::ios::binary);
  if (!out) raise("io", "cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) raise("io", "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise("io", "cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    raise("format", "bad checkpoint magic: " + path);
  if (take<uint32_t>(in) != kVersion) raise("format", "unsupported checkpoint version");

  Checkpoint ck;
  const uint64_t json_len = take<uint64_t>(in);
  ck.meta_json.resize(json_len);
  in.read(ck.meta_json.data(), static_cast<std::streamsize>(json_len));
  if (!in) raise("format", "truncated checkpoint meta");

  const uint32_t count = take<uint32_t>(in);
  ck.tensors.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    const uint64_t name_len = take<uint64_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint8_t dtype = take<uint8_t>(in);
    if (dtype != 1 && dtype != 2) raise("format", "unknown checkpoint dtype");
    const uint32_t rank = take<uint32_t>(in);
    if (rank > 8) raise("format", "checkpoint tensor rank out of range");
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(take<uint64_t>(in));
    Tensor tensor(shape);
    for (auto& v : tensor.data)
      v = dtype == 2 ? take<double>(in) : static_cast<double>(take<float>(in));
    ck.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ck;
}

}  // namespace mmser
