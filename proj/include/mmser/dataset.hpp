// Copyright 2026 The mmser Authors
// Corpus manifest, synthetic toy corpus generation, and the content-hash
// feature cache.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmser/common.hpp"
#include "mmser/dsp.hpp"

namespace mmser::data {

struct ManifestRow {
  std::string clip_path;
  std::string label;
  std::string split;      // train | val | test
  std::string scene_ref;  // optional scene JSON path
};

struct Manifest {
  std::vector<ManifestRow> rows;

  // Sorted unique labels.
  std::vector<std::string> class_names() const;
  std::vector<int> rows_of_split(const std::string& split) const;

  // No clip path may appear in more than one split; optionally verifies
  // the referenced files exist.
  void validate(bool check_paths) const;

  // CSV with header clip_path,label,split,scene_ref. Relative paths are
  // resolved against the manifest's directory on load.
  static Manifest load(const std::string& path, bool check_paths = true);
  void save(const std::string& path) const;
};

struct ToyConfig {
  int n_classes = 4;
  int n_per_class = 50;
  // 10.3 s fills the 1024-frame analysis window; shorter clips leave a
  // zero-padded image region.
  double duration_s = 10.3;
  uint64_t seed = 0;
};

// Class k is a harmonic stack at f0 = 110 * 2^(k/K) Hz with a
// class-specific amplitude-modulation rate plus white noise 20 dB down.
// Splits follow 80/10/10 per class. Returns the manifest it wrote.
Manifest generate_toy_corpus(const ToyConfig& config, const std::string& out_dir);

// Per-channel log-mel features of the first `use_mics` channels, shaped
// (use_mics, frames, 64). When `cache_dir` is nonempty the result is
// cached keyed by the WAV content hash and the channel count.
Tensor featurize_clip(const std::string& wav_path, int use_mics,
                      const std::string& cache_dir);

uint64_t file_content_hash(const std::string& path);

}  // namespace mmser::data
