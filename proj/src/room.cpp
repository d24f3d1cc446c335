// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/room.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mmser/kernels.hpp"

namespace mmser::room {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMinDim = 3.0;
constexpr double kMaxDim = 8.0;
constexpr double kMaxAspect = 1.6;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}
}  // namespace

void RoomScene::validate() const {
  auto in_range = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in_range(dims[0], kMinDim, kMaxDim) || !in_range(dims[1], kMinDim, kMaxDim))
    raise("format", "room dims outside [3, 8] m");
  const double ratio = dims[0] / dims[1];
  if (ratio < 1.0 / kMaxAspect - 1e-12 || ratio > kMaxAspect + 1e-12)
    raise("format", "room aspect ratio outside [1/1.6, 1.6]");
  if (dims[2] != kRoomHeight) raise("format", "room height must be 2.9 m");
  auto check_point = [&](const Vec3& p, double z) {
    if (p[2] != z) raise("format", "source/mic height constraint violated");
    for (int a = 0; a < 3; ++a)
      if (p[a] < kWallClearance - 1e-12 || p[a] > dims[a] - kWallClearance + 1e-12)
        raise("format", "source/mic closer than 0.5 m to a wall");
  };
  check_point(source, kSourceHeight);
  if (mics.empty()) raise("format", "scene needs at least one mic");
  for (const auto& m : mics) check_point(m, kMicHeight);
  if (t60_target < 0.2 || t60_target > 0.8)
    raise("format", "t60 target outside [0.2, 0.8] s");
}

RoomScene sample_room(Rng& rng, double t60_lo, double t60_hi, int n_mics) {
  if (n_mics < 1) raise("format", "need at least one microphone");
  RoomScene scene;
  for (;;) {
    const double lx = rng.uniform(kMinDim, kMaxDim);
    const double ratio = rng.uniform(1.0, kMaxAspect);
    const bool x_is_long = rng.next_u64() & 1;
    const double other = x_is_long ? lx / ratio : lx * ratio;
    if (other < kMinDim || other > kMaxDim) continue;
    scene.dims = {lx, other, kRoomHeight};
    break;
  }
  auto draw_xy = [&](double z) -> Vec3 {
    return {rng.uniform(kWallClearance, scene.dims[0] - kWallClearance),
            rng.uniform(kWallClearance, scene.dims[1] - kWallClearance), z};
  };
  scene.source = draw_xy(kSourceHeight);
  scene.mics.resize(static_cast<size_t>(n_mics));
  for (auto& m : scene.mics) m = draw_xy(kMicHeight);
  scene.t60_target = rng.uniform(t60_lo, t60_hi);
  return scene;
}

double sabine_absorption(const RoomScene& scene) {
  const double v = scene.dims[0] * scene.dims[1] * scene.dims[2];
  const double s = 2.0 * (scene.dims[0] * scene.dims[1] + scene.dims[0] * scene.dims[2] +
                          scene.dims[1] * scene.dims[2]);
  return 0.161 * v / (s * scene.t60_target);
}

namespace {

// All image amplitudes are positive, so the dense late field piles up a DC
// offset that inflates the measured decay time. Subtracting a centered
// moving average removes it (zero-phase FIR high-pass, ~100 Hz at 16 kHz),
// the same artifact the classic image-method implementation filters out.
void remove_dc_buildup(std::vector<double>& h) {
  const int64_t n = static_cast<int64_t>(h.size());
  const int64_t half = kDcBlockWindow / 2;
  std::vector<double> prefix(static_cast<size_t>(n + 1), 0.0);
  for (int64_t i = 0; i < n; ++i) prefix[static_cast<size_t>(i + 1)] = prefix[static_cast<size_t>(i)] + h[static_cast<size_t>(i)];
  std::vector<double> out(h.size());
  for (int64_t i = 0; i < n; ++i) {
    const int64_t lo = std::max<int64_t>(0, i - half);
    const int64_t hi = std::min<int64_t>(n, i + half + 1);
    const double avg = (prefix[static_cast<size_t>(hi)] - prefix[static_cast<size_t>(lo)]) /
                       static_cast<double>(kDcBlockWindow);
    out[static_cast<size_t>(i)] = h[static_cast<size_t>(i)] - avg;
  }
  h = std::move(out);
}

// Accumulates every image source for one microphone. Pure function of the
// scene geometry, so the per-mic OpenMP fan-out stays bit-deterministic.
void rir_for_mic(const RoomScene& scene, const Vec3& mic, double beta,
                 int64_t length, std::vector<double>& h) {
  const double fs = dsp::kSampleRate;
  const double d_max = kSpeedOfSound * scene.t60_target;
  const double lx = scene.dims[0], ly = scene.dims[1], lz = scene.dims[2];
  const int nx = static_cast<int>(std::ceil(d_max / (2.0 * lx)));
  const int ny = static_cast<int>(std::ceil(d_max / (2.0 * ly)));
  const int nz = static_cast<int>(std::ceil(d_max / (2.0 * lz)));

  h.assign(static_cast<size_t>(length), 0.0);

  for (int mx = -nx; mx <= nx; ++mx) {
    for (int my = -ny; my <= ny; ++my) {
      for (int mz = -nz; mz <= nz; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          const double ix = (1 - 2 * q) * scene.source[0] + 2.0 * mx * lx;
          const int rx = std::abs(mx - q) + std::abs(mx);
          for (int j = 0; j <= 1; ++j) {
            const double iy = (1 - 2 * j) * scene.source[1] + 2.0 * my * ly;
            const int ry = std::abs(my - j) + std::abs(my);
            for (int kk = 0; kk <= 1; ++kk) {
              const double iz = (1 - 2 * kk) * scene.source[2] + 2.0 * mz * lz;
              const int rz = std::abs(mz - kk) + std::abs(mz);

              const double dx = ix - mic[0];
              const double dy = iy - mic[1];
              const double dz = iz - mic[2];
              const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              const int order = rx + ry + rz;
              const double amp = std::pow(beta, order) / (4.0 * kPi * std::max(dist, 1e-2));
              if (amp == 0.0) continue;

              const double delay = dist * fs / kSpeedOfSound;
              const int64_t t0 = static_cast<int64_t>(std::floor(delay)) - kSincHalfTaps;
              if (t0 >= length) continue;
              for (int i = 0; i <= 2 * kSincHalfTaps; ++i) {
                const int64_t t = t0 + i;
                if (t < 0 || t >= length) continue;
                const double u = static_cast<double>(t) - delay;
                const double w = 0.5 * (1.0 + std::cos(kPi * u / (kSincHalfTaps + 1)));
                h[static_cast<size_t>(t)] += amp * w * sinc(u);
              }
            }
          }
        }
      }
    }
  }
  remove_dc_buildup(h);
}

}  // namespace

RIRSet image_source_rir_with_beta(const RoomScene& scene, double beta) {
  const int64_t length =
      static_cast<int64_t>(std::ceil(scene.t60_target * dsp::kSampleRate));
  RIRSet out;
  out.rirs.resize(scene.mics.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < scene.mics.size(); ++i)
    rir_for_mic(scene, scene.mics[i], beta, length, out.rirs[i]);
  return out;
}

RIRSet image_source_rir(const RoomScene& scene) {
  const double alpha = sabine_absorption(scene);
  if (alpha >= 1.0) raise("infeasible", "t60 infeasible for geometry");
  return image_source_rir_with_beta(scene, std::sqrt(1.0 - alpha));
}

dsp::AudioClip convolve_multichannel(const std::vector<double>& x, const RIRSet& rirs) {
  if (x.empty()) raise("format", "empty input signal");
  dsp::AudioClip clip;
  clip.sample_rate = dsp::kSampleRate;
  clip.channels.resize(rirs.rirs.size());
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < rirs.rirs.size(); ++i)
    clip.channels[i] = kernels::conv_full_fft(x, rirs.rirs[i]);
  return clip;
}

std::string RoomScene::to_json() const {
  nlohmann::json j;
  j["dims"] = dims;
  j["source"] = source;
  j["mics"] = mics;
  j["t60"] = t60_target;
  j["seed"] = seed;
  return j.dump(2);
}

RoomScene RoomScene::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RoomScene s;
  s.dims = j.at("dims").get<Vec3>();
  s.source = j.at("source").get<Vec3>();
  s.mics = j.at("mics").get<std::vector<Vec3>>();
  s.t60_target = j.at("t60").get<double>();
  s.seed = j.value("seed", 0ULL);
  return s;
}

}  // namespace mmser::room
