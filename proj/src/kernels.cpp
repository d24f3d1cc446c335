// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmser::kernels {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Row-major transpose: in is r x c, out is c x r.
void transpose(const double* in, double* out, int64_t r, int64_t c) {
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
}

// One output row of C = A * B with A m x k, B k x n. The k-outer loop keeps
// the inner update vectorizable and fixes the accumulation order, so the
// OpenMP and serial drivers produce identical bits.
inline void matmul_row(const double* a, const double* b, double* c, int64_t i,
                       int64_t k, int64_t n) {
  double* crow = c + i * n;
  for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
  const double* arow = a + i * k;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double av = arow[kk];
    if (av == 0.0) continue;
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

struct TransBuf {
  std::vector<double> storage;
  const double* resolve(const double* p, bool trans, int64_t rows, int64_t cols) {
    if (!trans) return p;
    storage.resize(static_cast<size_t>(rows * cols));
    transpose(p, storage.data(), cols, rows);  // stored as cols x rows on input
    return storage.data();
  }
};

}  // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n, bool trans_a, bool trans_b) {
  TransBuf ta, tb;
  const double* ap = ta.resolve(a, trans_a, m, k);
  const double* bp = tb.resolve(b, trans_b, k, n);
  for (int64_t i = 0; i < m; ++i) matmul_row(ap, bp, c, i, k, n);
}

void bmm(const double* a, const double* b, double* c, int64_t batch, int64_t m,
         int64_t k, int64_t n, bool trans_a, bool trans_b) {
  for (int64_t t = 0; t < batch; ++t)
    matmul(a + t * m * k, b + t * k * n, c + t * m * n, m, k, n, trans_a, trans_b);
}

std::vector<double> conv_full_direct(const std::vector<double>& x,
                                     const std::vector<double>& h) {
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t l = static_cast<int64_t>(h.size());
  std::vector<double> y(static_cast<size_t>(n + l - 1), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < l; ++j) y[static_cast<size_t>(i + j)] += x[i] * h[j];
  return y;
}

}  // namespace serial

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n, bool trans_a, bool trans_b) {
  TransBuf ta, tb;
  const double* ap = ta.resolve(a, trans_a, m, k);
  const double* bp = tb.resolve(b, trans_b, k, n);
  if (m * k * n < (1 << 14)) {
    for (int64_t i = 0; i < m; ++i) matmul_row(ap, bp, c, i, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) matmul_row(ap, bp, c, i, k, n);
}

void bmm(const double* a, const double* b, double* c, int64_t batch, int64_t m,
         int64_t k, int64_t n, bool trans_a, bool trans_b) {
  if (batch * m * k * n < (1 << 14)) {
    serial::bmm(a, b, c, batch, m, k, n, trans_a, trans_b);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < batch; ++t)
    serial::matmul(a + t * m * k, b + t * k * n, c + t * m * n, m, k, n, trans_a,
                   trans_b);
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) return;
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

std::vector<double> conv_full_fft(const std::vector<double>& x,
                                  const std::vector<double>& h) {
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t l = static_cast<int64_t>(h.size());
  const int64_t out_len = n + l - 1;
  const int64_t size = next_pow2(out_len);
  std::vector<std::complex<double>> fx(static_cast<size_t>(size));
  std::vector<std::complex<double>> fh(static_cast<size_t>(size));
  for (int64_t i = 0; i < n; ++i) fx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)];
  for (int64_t i = 0; i < l; ++i) fh[static_cast<size_t>(i)] = h[static_cast<size_t>(i)];
  fft(fx, false);
  fft(fh, false);
  for (int64_t i = 0; i < size; ++i) fx[static_cast<size_t>(i)] *= fh[static_cast<size_t>(i)];
  fft(fx, true);
  std::vector<double> y(static_cast<size_t>(out_len));
  for (int64_t i = 0; i < out_len; ++i) y[static_cast<size_t>(i)] = fx[static_cast<size_t>(i)].real();
  return y;
}

}  // namespace mmser::kernels
