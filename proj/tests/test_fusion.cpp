// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmser/common.hpp"
#include "mmser/model.hpp"
#include "mmser/train.hpp"

using namespace mmser;
using namespace mmser::fusion;

namespace {

nn::ModelConfig fusion_config() {
  nn::ModelConfig c;
  c.base_dim = 8;
  c.depths = {1, 1, 1, 1};
  c.heads = {1, 2, 4, 8};
  c.n_classes = 4;
  return c;  // input_size 256
}

dsp::MelSpectrogram random_mel(int64_t frames, uint64_t seed) {
  Rng rng(seed);
  dsp::MelSpectrogram m({frames, dsp::kNumMels});
  for (auto& v : m.data) v = rng.uniform(-23.0, 3.0);
  return m;
}

std::vector<dsp::MelSpectrogram> random_channels(int m, int64_t frames, uint64_t seed) {
  std::vector<dsp::MelSpectrogram> mels;
  for (int c = 0; c < m; ++c) mels.push_back(random_mel(frames, seed + static_cast<uint64_t>(c)));
  return mels;
}

}  // namespace

TEST_CASE("to_mel_image preserves values for 1024-frame inputs") {
  const auto mel = random_mel(1024, 1);
  const Tensor image = to_mel_image(mel);
  REQUIRE(image.shape == std::vector<int64_t>({256, 256}));

  // segment s occupies columns [64 s, 64 s + 64)
  for (int s = 0; s < 4; ++s)
    for (int64_t r = 0; r < 256; ++r)
      for (int64_t f = 0; f < 64; ++f)
        CHECK(image.at(r, s * 64 + f) == mel.at(s * 256 + r, f));

  // rearrangement preserves the multiset of values
  auto a = mel.data;
  auto b = image.data;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("to_mel_image: constant input stays constant; short input zero-pads") {
  dsp::MelSpectrogram constant({1024, 64});
  std::fill(constant.data.begin(), constant.data.end(), 3.25);
  const Tensor image = to_mel_image(constant);
  for (double v : image.data) CHECK(v == 3.25);

  const auto short_mel = random_mel(500, 2);
  const Tensor padded = to_mel_image(short_mel);
  for (int s = 0; s < 4; ++s)
    for (int64_t r = 0; r < 256; ++r) {
      const int64_t t = s * 256 + r;
      for (int64_t f = 0; f < 64; ++f) {
        if (t >= 500)
          CHECK(padded.at(r, s * 64 + f) == 0.0);
        else
          CHECK(padded.at(r, s * 64 + f) == short_mel.at(t, f));
      }
    }

  // long inputs crop at 1024 frames
  const auto long_mel = random_mel(1500, 3);
  const Tensor cropped = to_mel_image(long_mel);
  CHECK(cropped.at(0, 0) == long_mel.at(0, 0));
  CHECK(cropped.at(255, 3 * 64) == long_mel.at(1023, 0));
}

TEST_CASE("avg_mel: mean of equals, permutation invariance, elementwise oracle") {
  const auto mel = random_mel(300, 4);
  const std::vector<dsp::MelSpectrogram> same = {mel, mel, mel};
  const auto mean3 = avg_mel(same);
  for (int64_t i = 0; i < mel.numel(); ++i)  // up to 1 ulp from the 3-term sum
    CHECK(mean3.data[static_cast<size_t>(i)] ==
          doctest::Approx(mel.data[static_cast<size_t>(i)]).epsilon(1e-15));
  const std::vector<dsp::MelSpectrogram> pair = {mel, mel};
  CHECK(avg_mel(pair).data == mel.data);  // power-of-two mean is exact

  auto two = random_channels(2, 300, 5);
  const auto ab = avg_mel(two);
  for (int64_t i = 0; i < ab.numel(); ++i)
    CHECK(ab.data[static_cast<size_t>(i)] ==
          doctest::Approx((two[0].data[static_cast<size_t>(i)] + two[1].data[static_cast<size_t>(i)]) / 2.0)
              .epsilon(1e-15));

  std::vector<dsp::MelSpectrogram> swapped = {two[1], two[0]};
  CHECK(avg_mel(swapped).data == ab.data);

  std::vector<dsp::MelSpectrogram> bad = {random_mel(300, 6), random_mel(200, 7)};
  CHECK_THROWS_AS(avg_mel(bad), Error);
}

TEST_CASE("sum_patch_embed: M=1 equals plain embed; permutation-stable; affine identity") {
  nn::Model model(fusion_config(), 8);
  const auto mels = random_channels(3, 400, 9);
  std::vector<Tensor> images;
  for (const auto& m : mels) images.push_back(to_mel_image(m));

  // M=1 reduces to the plain patch embed bit-exactly
  ag::Graph g1, g2;
  const Tensor& sum1 = g1.value(sum_patch_embed(g1, {images[0]}, model));
  const Tensor& plain = g2.value(model.patch_embed(g2, images[0]));
  CHECK(sum1.data == plain.data);

  // channel permutation changes nothing beyond float reassociation
  ag::Graph g3, g4;
  std::vector<Tensor> perm = {images[2], images[0], images[1]};
  const Tensor& fwd = g3.value(sum_patch_embed(g3, images, model));
  const Tensor& back = g4.value(sum_patch_embed(g4, perm, model));
  REQUIRE(fwd.shape == std::vector<int64_t>({4096, 8}));
  for (int64_t i = 0; i < fwd.numel(); ++i)
    CHECK(std::abs(fwd.data[static_cast<size_t>(i)] - back.data[static_cast<size_t>(i)]) < 1e-12);

  // sum_i E(x_i) == E(sum_i x_i) + (M-1) * E(0)
  Tensor summed({256, 256});
  for (const auto& img : images)
    for (int64_t i = 0; i < summed.numel(); ++i) summed.data[static_cast<size_t>(i)] += img.data[static_cast<size_t>(i)];
  ag::Graph g5;
  const Tensor& lhs = g5.value(sum_patch_embed(g5, images, model));
  const Tensor& rhs_sum = g5.value(model.patch_embed(g5, summed));
  const Tensor& rhs_zero = g5.value(model.patch_embed(g5, Tensor({256, 256})));
  for (int64_t i = 0; i < lhs.numel(); ++i) {
    const double rhs = rhs_sum.data[static_cast<size_t>(i)] + 2.0 * rhs_zero.data[static_cast<size_t>(i)];
    CHECK(std::abs(lhs.data[static_cast<size_t>(i)] - rhs) < 1e-9);
  }
}

TEST_CASE("both fusion modes collapse to the single-channel path at M=1") {
  nn::Model model(fusion_config(), 10);
  const auto mels = random_channels(1, 600, 11);

  const auto single = train::predict_logits(model, Mode::kSingle, mels);
  const auto avg = train::predict_logits(model, Mode::kAvgMel, mels);
  const auto sum = train::predict_logits(model, Mode::kSumPatchEmbed, mels);
  CHECK(single == avg);
  CHECK(single == sum);  // bit-identical
}

TEST_CASE("channel permutation leaves logits unchanged within 1e-12") {
  nn::Model model(fusion_config(), 12);
  const auto mels = random_channels(3, 500, 13);
  std::vector<dsp::MelSpectrogram> perm = {mels[1], mels[2], mels[0]};

  for (Mode mode : {Mode::kAvgMel, Mode::kSumPatchEmbed}) {
    const auto a = train::predict_logits(model, mode, mels);
    const auto b = train::predict_logits(model, mode, perm);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("avg_mel and sum_pe are genuinely different models") {
  nn::Model model(fusion_config(), 14);
  const auto mels = random_channels(3, 500, 15);
  const auto avg = train::predict_logits(model, Mode::kAvgMel, mels);
  const auto sum = train::predict_logits(model, Mode::kSumPatchEmbed, mels);
  double max_diff = 0.0;
  for (size_t i = 0; i < avg.size(); ++i)
    max_diff = std::max(max_diff, std::abs(avg[i] - sum[i]));
  CHECK(max_diff > 1e-6);
}

TEST_CASE("downstream parameter shapes are independent of M and fusion mode") {
  nn::Model model(fusion_config(), 16);
  const int64_t params_before = model.params().total_parameters();
  for (int m : {1, 2, 4}) {
    const auto mels = random_channels(m, 300, 20 + static_cast<uint64_t>(m));
    for (Mode mode : {Mode::kSingle, Mode::kAvgMel, Mode::kSumPatchEmbed}) {
      const auto logits = train::predict_logits(model, mode, mels);
      CHECK(logits.size() == 4);
    }
  }
  CHECK(model.params().total_parameters() == params_before);
}
