// Copyright 2026 The mmser Authors
// SpecAugment-style masking. Mask rectangles are drawn once per example and
// applied with identical coordinates to every channel.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <optional>
#include <vector>

#include "mmser/common.hpp"
#include "mmser/dsp.hpp"

namespace mmser::aug {

struct MaskSpec {
  int n_time_masks = 2;
  int max_time_width = 32;  // frames
  int n_freq_masks = 2;
  int max_freq_width = 8;  // bins
  // Fixed fill value; unset means each channel is filled with its own
  // pre-mask mean.
  std::optional<double> fill;
};

struct MaskRect {
  int64_t t0 = 0, t1 = 0;  // [t0, t1) frames
  int64_t f0 = 0, f1 = 0;  // [f0, f1) bins
};

// The rectangles a given draw would mask (shared across channels).
std::vector<MaskRect> draw_masks(int64_t frames, int64_t bins, const MaskSpec& spec,
                                 Rng& rng);

// Applies one shared draw to all channels. Channels must share a shape.
std::vector<dsp::MelSpectrogram> spec_augment(
    const std::vector<dsp::MelSpectrogram>& mels, const MaskSpec& spec, Rng& rng);

}  // namespace mmser::aug
