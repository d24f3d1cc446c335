// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mmser/common.hpp"
#include "mmser/kernels.hpp"

namespace mmser::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void AudioClip::validate() const {
  if (channels.empty()) raise("format", "clip has no channels");
  if (sample_rate != kSampleRate)
    raise("format", "sample rate must be 16000, got " + std::to_string(sample_rate));
  for (const auto& ch : channels)
    if (ch.size() != channels[0].size())
      raise("shape_mismatch", "clip channels differ in length");
}

int64_t num_frames(int64_t num_samples) {
  return (num_samples - kWindowSize) / kHopSize + 1;
}

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<size_t>(size));
  for (int i = 0; i < size; ++i)
    w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / size));
  return w;
}

Stft stft(const std::vector<double>& signal) {
  const int64_t n = static_cast<int64_t>(signal.size());
  if (n < kWindowSize) raise("input_too_short", "input too short");
  static const std::vector<double> window = hann_window(kWindowSize);

  Stft out;
  out.frames = num_frames(n);
  out.data.resize(static_cast<size_t>(out.frames * kNumBins));

#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < out.frames; ++t) {
    std::vector<std::complex<double>> buf(kWindowSize);
    const double* seg = signal.data() + t * kHopSize;
    for (int i = 0; i < kWindowSize; ++i)
      buf[static_cast<size_t>(i)] = seg[i] * window[static_cast<size_t>(i)];
    kernels::fft(buf, false);
    for (int k = 0; k < kNumBins; ++k) out.at(t, k) = buf[static_cast<size_t>(k)];
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank() {
  const double f_min = 0.0;
  const double f_max = kSampleRate / 2.0;
  const double mel_min = hz_to_mel(f_min);
  const double mel_max = hz_to_mel(f_max);

  std::vector<double> centers(kNumMels + 2);
  for (int i = 0; i < kNumMels + 2; ++i)
    centers[static_cast<size_t>(i)] =
        mel_to_hz(mel_min + (mel_max - mel_min) * i / (kNumMels + 1));

  Tensor fb({kNumMels, kNumBins});
  for (int m = 0; m < kNumMels; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m + 1)];
    const double hi = centers[static_cast<size_t>(m + 2)];
    for (int k = 0; k < kNumBins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kWindowSize;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb.at(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

MelSpectrogram log_mel_channel(const std::vector<double>& signal) {
  static const Tensor fb = mel_filterbank();
  const Stft spec = stft(signal);

  MelSpectrogram mel({spec.frames, kNumMels});
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < spec.frames; ++t) {
    double mag[kNumBins];
    for (int k = 0; k < kNumBins; ++k) mag[k] = std::abs(spec.at(t, k));
    for (int m = 0; m < kNumMels; ++m) {
      double acc = 0.0;
      const double* w = fb.data.data() + static_cast<size_t>(m) * kNumBins;
      for (int k = 0; k < kNumBins; ++k) acc += w[k] * mag[k];
      mel.at(t, m) = std::log(std::max(acc, kEpsFloor));
    }
  }
  return mel;
}

std::vector<MelSpectrogram> log_mel(const AudioClip& clip) {
  clip.validate();
  std::vector<MelSpectrogram> out;
  out.reserve(clip.channels.size());
  for (const auto& ch : clip.channels) out.push_back(log_mel_channel(ch));
  return out;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) raise("format", "truncated WAV file");
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise("io", "cannot open: " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) raise("format", "not a RIFF file: " + path);
  read_le<uint32_t>(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) raise("format", "not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;

  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_le<uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      rate = read_le<uint32_t>(in);
      read_le<uint32_t>(in);  // byte rate
      read_le<uint16_t>(in);  // block align
      bits = read_le<uint16_t>(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(chunk_size);
      in.read(payload.data(), chunk_size);
      if (!in) raise("format", "truncated data chunk: " + path);
      have_data = true;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) raise("format", "missing fmt/data chunk: " + path);
  if (rate != kSampleRate)
    raise("format", "sample rate must be 16000, got " + std::to_string(rate) +
                        " in " + path);
  if (channels == 0) raise("format", "zero channels: " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.channels.resize(channels);

  if (format == 1 && bits == 16) {
    const size_t n = payload.size() / 2 / channels;
    const auto* s = reinterpret_cast<const int16_t*>(payload.data());
    for (auto& ch : clip.channels) ch.resize(n);
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c)
        clip.channels[c][i] = static_cast<double>(s[i * channels + c]) / 32768.0;
  } else if (format == 3 && bits == 32) {
    const size_t n = payload.size() / 4 / channels;
    const auto* s = reinterpret_cast<const float*>(payload.data());
    for (auto& ch : clip.channels) ch.resize(n);
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c)
        clip.channels[c][i] = static_cast<double>(s[i * channels + c]);
  } else {
    raise("format", "unsupported WAV encoding (want PCM16 or float32): " + path);
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip, bool float32) {
  clip.validate();
  const uint16_t channels = static_cast<uint16_t>(clip.num_channels());
  const uint32_t n = static_cast<uint32_t>(clip.num_samples());
  const uint16_t bytes_per = float32 ? 4 : 2;
  const uint32_t data_size = n * channels * bytes_per;

  std::ofstream out(path, std::ios::binary);
  if (!out) raise("io", "cannot open for write: " + path);

  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, float32 ? 3 : 1);
  write_le<uint16_t>(out, channels);
  write_le<uint32_t>(out, kSampleRate);
  write_le<uint32_t>(out, kSampleRate * channels * bytes_per);
  write_le<uint16_t>(out, static_cast<uint16_t>(channels * bytes_per));
  write_le<uint16_t>(out, static_cast<uint16_t>(bytes_per * 8));
  out.write("data", 4);
  write_le<uint32_t>(out, data_size);

  for (uint32_t i = 0; i < n; ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      const double v = clip.channels[c][i];
      if (float32) {
        write_le<float>(out, static_cast<float>(v));
      } else {
        const double clamped = std::clamp(v, -1.0, 32767.0 / 32768.0);
        write_le<int16_t>(out, static_cast<int16_t>(std::lround(clamped * 32768.0)));
      }
    }
  }
  if (!out) raise("io", "write failed: " + path);
}

}  // namespace mmser::dsp
