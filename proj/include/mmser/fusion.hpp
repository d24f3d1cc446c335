// Copyright 2026 The mmser Authors
// Multi-channel front-end strategies: averaging mel-spectrograms versus
// summing patch-embedded channel tokens. Both collapse to the plain
// single-channel path at M=1.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "mmser/autograd.hpp"
#include "mmser/dsp.hpp"

namespace mmser::nn {
class Model;
}

namespace mmser::fusion {

constexpr int kImageSide = 256;
constexpr int kImageFrames = 1024;  // frames consumed per image
constexpr int kSegments = kImageFrames / kImageSide;

enum class Mode { kSingle, kAvgMel, kSumPatchEmbed };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

// Crop/zero-pad the time axis to 1024 frames, then stack the four
// consecutive 256-frame segments along frequency: segment s of the
// 1024 x 64 map fills image columns [64*s, 64*s + 64).
Tensor to_mel_image(const dsp::MelSpectrogram& mel);

// Element-wise mean across channels; shapes must match.
dsp::MelSpectrogram avg_mel(const std::vector<dsp::MelSpectrogram>& mels);

// Shared patch embedding applied per channel, summed token-wise.
ag::Value sum_patch_embed(ag::Graph& g, const std::vector<Tensor>& images,
                          const nn::Model& model);

}  // namespace mmser::fusion
