// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/augment.hpp"

#include <algorithm>

namespace mmser::aug {

std::vector<MaskRect> draw_masks(int64_t frames, int64_t bins, const MaskSpec& spec,
                                 Rng& rng) {
  std::vector<MaskRect> rects;
  for (int i = 0; i < spec.n_time_masks; ++i) {
    const int64_t width = std::min<int64_t>(
        static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(spec.max_time_width) + 1)),
        frames);
    const int64_t start =
        width < frames ? static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(frames - width) + 1)) : 0;
    rects.push_back({start, start + width, 0, bins});
  }
  for (int i = 0; i < spec.n_freq_masks; ++i) {
    const int64_t width = std::min<int64_t>(
        static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(spec.max_freq_width) + 1)),
        bins);
    const int64_t start =
        width < bins ? static_cast<int64_t>(rng.bounded(static_cast<uint64_t>(bins - width) + 1)) : 0;
    rects.push_back({0, frames, start, start + width});
  }
  return rects;
}

std::vector<dsp::MelSpectrogram> spec_augment(
    const std::vector<dsp::MelSpectrogram>& mels, const MaskSpec& spec, Rng& rng) {
  if (mels.empty()) return {};
  for (const auto& m : mels)
    if (!m.same_shape(mels[0])) raise("shape_mismatch", "channel shapes differ");

  const int64_t frames = mels[0].shape[0];
  const int64_t bins = mels[0].shape[1];
  const auto rects = draw_masks(frames, bins, spec, rng);

  std::vector<dsp::MelSpectrogram> out = mels;
  for (auto& mel : out) {
    double fill;
    if (spec.fill.has_value()) {
      fill = *spec.fill;
    } else {
      double sum = 0.0;
      for (double v : mel.data) sum += v;
      fill = mel.numel() > 0 ? sum / static_cast<double>(mel.numel()) : 0.0;
    }
    for (const auto& r : rects)
      for (int64_t t = r.t0; t < r.t1; ++t)
        for (int64_t f = r.f0; f < r.f1; ++f) mel.at(t, f) = fill;
  }
  return out;
}

}  // namespace mmser::aug
