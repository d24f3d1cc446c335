// Copyright 2026 The mmser Authors
// Log-mel front-end: fixed 16 kHz analysis with a 1024-sample Hann window,
// 160-sample hop, and a 64-band HTK-mel triangular filterbank.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "mmser/tensor.hpp"

namespace mmser::dsp {

constexpr int kSampleRate = 16000;
constexpr int kWindowSize = 1024;
constexpr int kHopSize = 160;
constexpr int kNumBins = kWindowSize / 2 + 1;  // one-sided
constexpr int kNumMels = 64;
constexpr double kEpsFloor = 1e-10;

// Multi-channel waveform at 16 kHz. All channels the same length.
struct AudioClip {
  std::vector<std::vector<double>> channels;
  int sample_rate = kSampleRate;

  int num_channels() const { return static_cast<int>(channels.size()); }
  int64_t num_samples() const {
    return channels.empty() ? 0 : static_cast<int64_t>(channels[0].size());
  }
  void validate() const;
};

// frames x 513 complex spectrogram of one channel.
struct Stft {
  int64_t frames = 0;
  std::vector<std::complex<double>> data;  // row-major frames x kNumBins

  std::complex<double>& at(int64_t t, int64_t k) { return data[t * kNumBins + k]; }
  std::complex<double> at(int64_t t, int64_t k) const { return data[t * kNumBins + k]; }
};

// frames x 64 natural-log mel energies; every entry >= log(kEpsFloor).
using MelSpectrogram = Tensor;

// floor((n - 1024) / 160) + 1; requires n >= 1024.
int64_t num_frames(int64_t num_samples);

std::vector<double> hann_window(int size);

// No centering: frame t covers samples [t*160, t*160 + 1024).
// Raises "input_too_short" for signals shorter than one window.
Stft stft(const std::vector<double>& signal);

// 64 x 513 triangular filters, centers equally spaced on the HTK mel scale
// m = 2595*log10(1 + f/700), spanning 0 Hz to Nyquist. Peak weight 1.
Tensor mel_filterbank();

// Per channel: log(max(filterbank * |stft|, 1e-10)). Channel order preserved.
std::vector<MelSpectrogram> log_mel(const AudioClip& clip);
MelSpectrogram log_mel_channel(const std::vector<double>& signal);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// WAV I/O. Reads 16-bit PCM and 32-bit float, little-endian; rejects any
// sample rate other than 16000 (no resampling).
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip, bool float32 = true);

}  // namespace mmser::dsp
