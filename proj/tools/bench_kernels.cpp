// Copyright 2026 The mmser Authors
// Times the OpenMP kernels against their serial references and checks the
// outputs agree bit-for-bit.
//
// Licensed under the Apache License, Version 2.0

#include <chrono>
#include <cstdio>
#include <vector>

#include "mmser/common.hpp"
#include "mmser/kernels.hpp"
#include "mmser/room.hpp"

using namespace mmser;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void bench_matmul(int64_t m, int64_t k, int64_t n, int reps) {
  Rng rng(7);
  const auto a = random_vec(static_cast<size_t>(m * k), rng);
  const auto b = random_vec(static_cast<size_t>(k * n), rng);
  std::vector<double> c_par(static_cast<size_t>(m * n));
  std::vector<double> c_ser(static_cast<size_t>(m * n));

  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n, false, false);
  const double ts = seconds_since(t0) / reps;

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    kernels::matmul(a.data(), b.data(), c_par.data(), m, k, n, false, false);
  const double tp = seconds_since(t0) / reps;

  const double gflop = 2.0 * static_cast<double>(m * k * n) * 1e-9;
  std::printf("matmul %5ldx%4ldx%4ld  serial %7.2f ms (%5.2f GF/s)  omp %7.2f ms (%5.2f GF/s)  x%.2f  %s\n",
              static_cast<long>(m), static_cast<long>(k), static_cast<long>(n),
              ts * 1e3, gflop / ts, tp * 1e3, gflop / tp, ts / tp,
              bit_equal(c_par, c_ser) ? "bit-equal" : "MISMATCH");
}

void bench_conv(int64_t n, int64_t l) {
  Rng rng(11);
  const auto x = random_vec(static_cast<size_t>(n), rng);
  const auto h = random_vec(static_cast<size_t>(l), rng);

  auto t0 = Clock::now();
  const auto direct = kernels::serial::conv_full_direct(x, h);
  const double td = seconds_since(t0);

  t0 = Clock::now();
  const auto fft = kernels::conv_full_fft(x, h);
  const double tf = seconds_since(t0);

  double max_err = 0.0;
  for (size_t i = 0; i < direct.size(); ++i)
    max_err = std::max(max_err, std::abs(direct[i] - fft[i]));
  std::printf("conv   N=%6ld L=%5ld  direct %7.2f ms  fft %7.2f ms  x%.1f  max|d|=%.2e\n",
              static_cast<long>(n), static_cast<long>(l), td * 1e3, tf * 1e3, td / tf,
              max_err);
}

void bench_rir() {
  room::RoomScene scene;
  scene.dims = {5.0, 4.0, 2.9};
  scene.source = {1.5, 2.0, 1.75};
  scene.mics = {{3.5, 1.5, 1.6}, {2.5, 2.5, 1.6}, {4.0, 3.0, 1.6}, {1.0, 1.0, 1.6}};
  scene.t60_target = 0.5;

  auto t0 = Clock::now();
  const auto rirs = room::image_source_rir(scene);
  const double t = seconds_since(t0);
  std::printf("image_source_rir 4 mics t60=0.5s: %7.2f ms (%ld taps each)\n", t * 1e3,
              static_cast<long>(rirs.length()));
}

}  // namespace

int main() {
  bench_matmul(4096, 96, 288, 5);
  bench_matmul(4096, 24, 96, 10);
  bench_matmul(1024, 192, 384, 5);
  bench_matmul(256, 768, 3072, 3);
  bench_conv(16000, 12800);
  bench_conv(2000, 500);
  bench_rir();
  return 0;
}
