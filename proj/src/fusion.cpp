// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/fusion.hpp"

#include "mmser/model.hpp"

namespace mmser::fusion {

Mode mode_from_string(const std::string& s) {
  if (s == "single") return Mode::kSingle;
  if (s == "avg_mel") return Mode::kAvgMel;
  if (s == "sum_pe") return Mode::kSumPatchEmbed;
  raise("format", "unknown fusion mode: " + s + " (want single|avg_mel|sum_pe)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kSingle: return "single";
    case Mode::kAvgMel: return "avg_mel";
    case Mode::kSumPatchEmbed: return "sum_pe";
  }
  return "single";
}

Tensor to_mel_image(const dsp::MelSpectrogram& mel) {
  if (mel.rank() != 2 || mel.shape[1] != dsp::kNumMels)
    raise("shape_mismatch", "mel must be frames x 64");
  const int64_t frames = mel.shape[0];

  Tensor image({kImageSide, kImageSide});
  for (int s = 0; s < kSegments; ++s) {
    for (int64_t r = 0; r < kImageSide; ++r) {
      const int64_t t = static_cast<int64_t>(s) * kImageSide + r;
      if (t >= frames) continue;  // zero pad
      for (int64_t f = 0; f < dsp::kNumMels; ++f)
        image.at(r, static_cast<int64_t>(s) * dsp::kNumMels + f) = mel.at(t, f);
    }
  }
  return image;
}

dsp::MelSpectrogram avg_mel(const std::vector<dsp::MelSpectrogram>& mels) {
  if (mels.empty()) raise("format", "avg_mel needs at least one channel");
  for (const auto& m : mels)
    if (!m.same_shape(mels[0])) raise("shape_mismatch", "avg_mel channel shapes differ");

  dsp::MelSpectrogram out(mels[0].shape);
  const double inv = 1.0 / static_cast<double>(mels.size());
  for (int64_t i = 0; i < out.numel(); ++i) {
    double sum = 0.0;
    for (const auto& m : mels) sum += m.data[static_cast<size_t>(i)];
    out.data[static_cast<size_t>(i)] = sum * inv;
  }
  return out;
}

ag::Value sum_patch_embed(ag::Graph& g, const std::vector<Tensor>& images,
                          const nn::Model& model) {
  if (images.empty()) raise("format", "sum_patch_embed needs at least one channel");
  ag::Value tokens = model.patch_embed(g, images[0]);
  for (size_t i = 1; i < images.size(); ++i)
    tokens = g.add(tokens, model.patch_embed(g, images[i]));
  return tokens;
}

}  // namespace mmser::fusion
