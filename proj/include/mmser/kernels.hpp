// Copyright 2026 The mmser Authors
// Numeric kernels. Each OpenMP kernel parallelizes over disjoint output
// slices only, so results are bit-identical to the serial reference for
// any thread count. The serial variants live in kernels::serial and are
// kept for tests and the bench_kernels comparison target.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace mmser::kernels {

// C[m,n] = op(A) * op(B), op controlled by trans flags.
//   trans_a == false: A is m x k, else A is k x m
//   trans_b == false: B is k x n, else B is n x k
// C is overwritten.
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n, bool trans_a, bool trans_b);

// Batched matmul over `batch` independent (m,k,n) problems laid out
// contiguously. Parallel across batch items and rows.
void bmm(const double* a, const double* b, double* c, int64_t batch, int64_t m,
         int64_t k, int64_t n, bool trans_a, bool trans_b);

// Full linear convolution y = x * h, length n + l - 1, via FFT.
std::vector<double> conv_full_fft(const std::vector<double>& x,
                                  const std::vector<double>& h);

// In-place iterative radix-2 complex FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n, bool trans_a, bool trans_b);

void bmm(const double* a, const double* b, double* c, int64_t batch, int64_t m,
         int64_t k, int64_t n, bool trans_a, bool trans_b);

// Direct O(n*l) convolution; reference route for the FFT path.
std::vector<double> conv_full_direct(const std::vector<double>& x,
                                     const std::vector<double>& h);

}  // namespace serial

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace mmser::kernels
