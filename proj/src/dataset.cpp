// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace mmser::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}
}  // namespace

std::vector<std::string> Manifest::class_names() const {
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.label);
  return {names.begin(), names.end()};
}

std::vector<int> Manifest::rows_of_split(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

void Manifest::validate(bool check_paths) const {
  std::map<std::string, std::string> split_of;
  for (const auto& r : rows) {
    if (r.split != "train" && r.split != "val" && r.split != "test")
      raise("format", "unknown split '" + r.split + "' for " + r.clip_path);
    auto [it, inserted] = split_of.emplace(r.clip_path, r.split);
    if (!inserted && it->second != r.split)
      raise("format", "clip appears in multiple splits: " + r.clip_path);
    if (check_paths && !fs::exists(r.clip_path))
      raise("io", "manifest references missing file: " + r.clip_path);
  }
}

Manifest Manifest::load(const std::string& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) raise("io", "cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  Manifest m;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (header) {
      header = false;
      if (!fields.empty() && fields[0] == "clip_path") continue;  // header row
    }
    if (fields.size() < 3) raise("format", "manifest row needs >= 3 fields: " + line);
    ManifestRow row;
    row.clip_path = fields[0];
    row.label = fields[1];
    row.split = fields[2];
    if (fields.size() > 3) row.scene_ref = fields[3];
    auto resolve = [&](std::string& p) {
      if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
    };
    resolve(row.clip_path);
    resolve(row.scene_ref);
    m.rows.push_back(std::move(row));
  }
  m.validate(check_paths);
  return m;
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) raise("io", "cannot open manifest for write: " + path);
  const fs::path base = fs::path(path).parent_path();
  out << "clip_path,label,split,scene_ref\n";
  for (const auto& r : rows) {
    auto rel = [&](const std::string& p) -> std::string {
      if (p.empty()) return p;
      std::error_code ec;
      const fs::path relp = fs::relative(p, base, ec);
      return ec ? p : relp.string();
    };
    out << rel(r.clip_path) << ',' << r.label << ',' << r.split << ',' << rel(r.scene_ref)
        << '\n';
  }
  if (!out) raise("io", "manifest write failed: " + path);
}

Manifest generate_toy_corpus(const ToyConfig& config, const std::string& out_dir) {
  if (config.n_classes < 2) raise("format", "toy corpus needs at least 2 classes");
  if (config.n_per_class < 1 || config.duration_s <= 0.0)
    raise("format", "bad toy corpus size");

  fs::create_directories(fs::path(out_dir) / "clips");
  const int64_t n = static_cast<int64_t>(std::llround(config.duration_s * dsp::kSampleRate));
  constexpr int kHarmonics = 6;

  Manifest manifest;
  for (int k = 0; k < config.n_classes; ++k) {
    const double f0_base =
        110.0 * std::pow(2.0, static_cast<double>(k) / config.n_classes);
    const double am_rate = 2.0 + 1.5 * k;  // class-specific modulation
    for (int i = 0; i < config.n_per_class; ++i) {
      Rng rng = Rng::stream(config.seed,
                            (static_cast<uint64_t>(k) << 32) | static_cast<uint64_t>(i));
      const double f0 = f0_base * (1.0 + 0.004 * (2.0 * rng.uniform() - 1.0));
      double phases[kHarmonics];
      for (double& p : phases) p = rng.uniform(0.0, 2.0 * kPi);
      const double am_phase = rng.uniform(0.0, 2.0 * kPi);

      std::vector<double> x(static_cast<size_t>(n));
      double energy = 0.0;
      for (int64_t t = 0; t < n; ++t) {
        const double time = static_cast<double>(t) / dsp::kSampleRate;
        double v = 0.0;
        for (int h = 1; h <= kHarmonics; ++h)
          v += std::sin(2.0 * kPi * h * f0 * time + phases[h - 1]) / h;
        v *= 1.0 + 0.5 * std::sin(2.0 * kPi * am_rate * time + am_phase);
        x[static_cast<size_t>(t)] = v;
        energy += v * v;
      }
      const double rms = std::sqrt(energy / static_cast<double>(n));
      const double noise_sigma = 0.1 * rms;  // -20 dB
      double peak = 0.0;
      for (auto& v : x) {
        v += noise_sigma * rng.normal();
        peak = std::max(peak, std::abs(v));
      }
      if (peak > 0.0)
        for (auto& v : x) v *= 0.7 / peak;

      const std::string name = "toy_c" + std::to_string(k) + "_" + std::to_string(i) + ".wav";
      const std::string path = (fs::path(out_dir) / "clips" / name).string();
      dsp::AudioClip clip;
      clip.channels = {std::move(x)};
      dsp::write_wav(path, clip);

      const int train_cut = (config.n_per_class * 8) / 10;
      const int val_cut = (config.n_per_class * 9) / 10;
      const std::string split = i < train_cut ? "train" : (i < val_cut ? "val" : "test");
      manifest.rows.push_back({path, "c" + std::to_string(k), split, ""});
    }
  }
  manifest.save((fs::path(out_dir) / "manifest.csv").string());
  return manifest;
}

uint64_t file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise("io", "cannot open: " + path);
  char buf[1 << 16];
  uint64_t h = 0xcbf29ce484222325ULL;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

Tensor featurize_clip(const std::string& wav_path, int use_mics,
                      const std::string& cache_dir) {
  std::string cache_path;
  if (!cache_dir.empty()) {
    const uint64_t content = file_content_hash(wav_path);
    const uint64_t key =
        fnv1a64("logmel-v1:mics=" + std::to_string(use_mics),
                content);
    std::ostringstream name;
    name << std::hex << key << ".mmtn";
    cache_path = (fs::path(cache_dir) / name.str()).string();
    if (fs::exists(cache_path)) return load_tensor(cache_path);
  }

  const dsp::AudioClip clip = dsp::read_wav(wav_path);
  if (clip.num_channels() < use_mics)
    raise("format", "clip has " + std::to_string(clip.num_channels()) +
                        " channels, need " + std::to_string(use_mics) + ": " + wav_path);
  std::vector<dsp::MelSpectrogram> mels;
  mels.reserve(static_cast<size_t>(use_mics));
  for (int c = 0; c < use_mics; ++c)
    mels.push_back(dsp::log_mel_channel(clip.channels[static_cast<size_t>(c)]));

  Tensor out({use_mics, mels[0].shape[0], dsp::kNumMels});
  for (int c = 0; c < use_mics; ++c)
    std::copy(mels[static_cast<size_t>(c)].data.begin(), mels[static_cast<size_t>(c)].data.end(),
              out.data.begin() + static_cast<int64_t>(c) * mels[0].numel());

  if (!cache_path.empty()) {
    fs::create_directories(cache_dir);
    save_tensor(cache_path, out, Dtype::f64);
  }
  return out;
}

}  // namespace mmser::data
