// Copyright 2026 The mmser Authors
// Shoebox-room scene sampling and image-source RIR synthesis, plus the
// FFT convolution that turns dry clips into multi-channel reverberant ones.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmser/common.hpp"
#include "mmser/dsp.hpp"

namespace mmser::room {

constexpr double kSpeedOfSound = 343.0;  // m/s
constexpr double kSourceHeight = 1.75;
constexpr double kMicHeight = 1.6;
constexpr double kRoomHeight = 2.9;
constexpr double kWallClearance = 0.5;
constexpr int kSincHalfTaps = 40;    // 81-tap Hann-windowed sinc
constexpr int kDcBlockWindow = 161;  // DC-buildup removal (~100 Hz at 16 kHz)

using Vec3 = std::array<double, 3>;

struct RoomScene {
  Vec3 dims{};                // (Lx, Ly, 2.9)
  Vec3 source{};              // z fixed at 1.75
  std::vector<Vec3> mics;     // z fixed at 1.6
  double t60_target = 0.0;    // seconds, in [0.2, 0.8]
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static RoomScene from_json(const std::string& text);
};

struct RIRSet {
  std::vector<std::vector<double>> rirs;  // one per mic, equal length
  int64_t length() const { return rirs.empty() ? 0 : static_cast<int64_t>(rirs[0].size()); }
};

// Geometry per the sampling protocol: Lx ~ U[3,8], aspect ratio ~ U[1,1.6]
// with a random long axis (redraw if the second dim leaves [3,8]); source and
// mic x,y uniform over the interior at least 0.5 m from every wall; t60
// uniform over the given range.
RoomScene sample_room(Rng& rng, double t60_lo, double t60_hi, int n_mics);

// Uniform Sabine absorption alpha = 0.161*V/(S*t60); reflection coefficient
// beta = sqrt(1-alpha). Raises "infeasible" when alpha >= 1. Image lattice
// sized so image distances cover 343*t60 meters; RIR truncated at
// ceil(t60*16000) samples. Fractional delays land on the grid through an
// 81-tap Hann-windowed sinc, and the DC buildup of the all-positive image
// sum is removed with a zero-phase ~100 Hz high-pass.
RIRSet image_source_rir(const RoomScene& scene);

// Same synthesis with the reflection coefficient pinned (test hook; beta=0
// keeps only the direct path).
RIRSet image_source_rir_with_beta(const RoomScene& scene, double beta);

double sabine_absorption(const RoomScene& scene);

// Full convolution x * h_i per mic; output length N + L - 1.
dsp::AudioClip convolve_multichannel(const std::vector<double>& x, const RIRSet& rirs);

}  // namespace mmser::room
